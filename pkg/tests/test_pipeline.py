import io
import json
import zipfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwb_nlos.cir import ChannelDiagnostics, PropagationClass, RangingRecord, Waveform
from uwb_nlos.errors import ConfigError, DegenerateLabelsError, ModelFormatError, NlosError, SplitError
from uwb_nlos.features import FeatureConfig, FeatureVector, feature_matrix
from uwb_nlos.pipeline import (
    LabelingThresholds,
    TwoStepClassifier,
    classify,
    label_from_bias,
    load_bundle,
    record_label,
    save_bundle,
    split_by_pair,
    train_two_step,
)
from uwb_nlos.svm import KernelSpec, Standardizer, SvmModel
from uwb_nlos.synth import benchmark_records

LOS, DP, NDP = PropagationClass.LOS, PropagationClass.DP_NLOS, PropagationClass.NDP_NLOS
_W = Waveform(np.linspace(0, 1, 40), 1e-9, 20)
_D = ChannelDiagnostics(1.0, 128, (1, 1, 1), 113.77)


def rec(pair, label=None, bias=None):
    return RangingRecord(_W, _D, pair, bias, label)


# ----------------------------------------------------------------- labeling

@pytest.mark.parametrize(
    "bias, label",
    [(0.02, LOS), (0.30, DP), (2.0, NDP), (0.05, DP), (0.70, DP), (0.7000001, NDP),
     (0.0, LOS), (-0.03, LOS), (-0.05, LOS), (0.0499999, LOS)],
)
def test_label_from_bias(bias, label):
    assert label_from_bias(bias) is label


@pytest.mark.parametrize("bias", [-0.0500001, -1.0, float("nan"), float("inf")])
def test_implausible_bias(bias):
    with pytest.raises(NlosError):
        label_from_bias(bias)


def test_thresholds_invariant():
    with pytest.raises(ConfigError):
        LabelingThresholds(0.7, 0.05)
    with pytest.raises(ConfigError):
        LabelingThresholds(0.0, 0.5)


def test_custom_thresholds():
    th = LabelingThresholds(0.1, 1.0)
    assert label_from_bias(0.08, th) is LOS
    assert label_from_bias(1.0, th) is DP


def test_record_label_prefers_explicit_label():
    assert record_label(rec("a", label=NDP, bias=0.0)) is NDP
    assert record_label(rec("a", bias=0.3)) is DP
    with pytest.raises(NlosError, match="neither label nor bias"):
        record_label(rec("a"))


@settings(max_examples=1000, deadline=None)
@given(b1=st.floats(-0.05, 1e3), b2=st.floats(-0.05, 1e3))
def test_labeling_partition_and_monotonicity(b1, b2):
    c1, c2 = label_from_bias(b1), label_from_bias(b2)
    for b, c in ((b1, c1), (b2, c2)):
        member = [b < 0.05, 0.05 <= b <= 0.70, b > 0.70]
        assert sum(member) == 1
        assert member[c.order]
    if b1 <= b2:
        assert c1.order <= c2.order


# ----------------------------------------------------------------- splitting

def pair_records(n_pairs, per_pair=3):
    out = []
    for p in range(n_pairs):
        label = (LOS, DP, NDP)[p % 3]
        out += [rec(f"p{p:02d}", label) for _ in range(per_pair)]
    return out


def test_split_57_pairs():
    records = pair_records(57)
    train, test = split_by_pair(records, 24, seed=0)
    tr, te = {r.pair_id for r in train}, {r.pair_id for r in test}
    assert len(tr) == 24 and len(te) == 33
    assert not tr & te
    assert len(train) + len(test) == len(records)


@pytest.mark.parametrize("count", [0, 57, -1])
def test_split_count_precondition(count):
    with pytest.raises(SplitError):
        split_by_pair(pair_records(57), count, seed=0)


def test_split_pigeonhole():
    with pytest.raises(SplitError, match="split lacks class on .*test side: .*retry"):
        split_by_pair(pair_records(3), 2, seed=0)


def test_split_deterministic_and_seeded():
    records = pair_records(30)
    a = split_by_pair(records, 12, 5)
    b = split_by_pair(records, 12, 5)
    assert [r.pair_id for r in a[0]] == [r.pair_id for r in b[0]]
    c = split_by_pair(records, 12, 6)
    assert {r.pair_id for r in a[0]} != {r.pair_id for r in c[0]}


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), count=st.integers(3, 27))
def test_split_never_leaks(seed, count):
    try:
        train, test = split_by_pair(pair_records(30, 1), count, seed)
    except SplitError:
        return
    assert not {r.pair_id for r in train} & {r.pair_id for r in test}


# ------------------------------------------------------------------ training

@pytest.fixture(scope="module")
def small_set():
    records = benchmark_records(100, 5, seed=3)
    return feature_matrix(records), [r.label for r in records]


def test_train_two_step_defaults(small_set):
    X, y = small_set
    clf = train_two_step(X, y)
    assert clf.step1_features == (2, 4, 5)
    assert clf.step2_features == (3, 4, 10)
    s1, _ = clf.step1.predict_many(X)
    truth = np.array([1 if lab.is_nlos else -1 for lab in y])
    assert np.mean(s1 == truth) >= 0.95
    # step 2 only saw the 200 true-NLOS rows
    assert max(clf.step2.support_indices) < 200


def test_train_missing_ndp(small_set):
    X, y = small_set
    keep = [k for k, lab in enumerate(y) if lab is not NDP]
    with pytest.raises(DegenerateLabelsError):
        train_two_step(X[keep], [y[k] for k in keep])


@pytest.mark.parametrize("subset", [(), (0,), (11,), (2, 2)])
def test_train_rejects_bad_subsets(small_set, subset):
    X, y = small_set
    with pytest.raises(ConfigError):
        train_two_step(X, y, step1_features=subset)


def test_bundle_round_trip(small_set):
    X, y = small_set
    cfg = FeatureConfig(tau_s=15e-9, integration_rule="left_riemann")
    clf = train_two_step(X, y, kernel=KernelSpec("linear"), feature_config=cfg,
                         thresholds=LabelingThresholds(0.04, 0.8))
    blob = save_bundle(clf)
    assert save_bundle(clf) == blob
    back = load_bundle(blob)
    assert back.classify_many(X) == clf.classify_many(X)
    assert back.feature_config == cfg and back.thresholds == clf.thresholds
    s_old = clf.step2.decision_function(X)
    assert back.step2.decision_function(X).tobytes() == s_old.tobytes()


def test_bundle_errors(small_set):
    X, y = small_set
    blob = save_bundle(train_two_step(X, y))
    with pytest.raises(ModelFormatError):
        load_bundle(blob[:100])
    buf = io.BytesIO()
    with zipfile.ZipFile(io.BytesIO(blob)) as src, zipfile.ZipFile(buf, "w") as dst:
        for name in src.namelist():
            data = src.read(name)
            if name == "manifest.json":
                doc = json.loads(data)
                doc["version"] = 2
                data = json.dumps(doc).encode()
            dst.writestr(name, data)
    with pytest.raises(ModelFormatError, match="unsupported model version"):
        load_bundle(buf.getvalue())


# ------------------------------------------------------------------ workflow

def constant_model(bias, features):
    d = len(features)
    return SvmModel(np.empty((0, d)), [], bias, KernelSpec("linear"), Standardizer.identity(d), 1.0, features)


class ExplodingModel(SvmModel):
    def predict_many(self, rows):
        raise AssertionError("step 2 must not run")


def test_los_short_circuits():
    boom = ExplodingModel(np.empty((0, 1)), [], 0.0, KernelSpec("linear"), Standardizer.identity(1), 1.0, (3,))
    clf = TwoStepClassifier(constant_model(-0.5, (2,)), boom)
    assert classify(clf, np.zeros(10)) is LOS


def test_nlos_then_dp():
    clf = TwoStepClassifier(constant_model(0.5, (2,)), constant_model(-0.5, (3,)))
    assert classify(clf, np.zeros(10)) is DP


def test_ties_fail_safe_to_ndp():
    clf = TwoStepClassifier(constant_model(0.0, (2,)), constant_model(0.0, (3,)))
    assert classify(clf, FeatureVector.from_array(np.zeros(10))) is NDP


def test_models_need_feature_indices():
    bare = SvmModel(np.empty((0, 1)), [], 0.0, KernelSpec("linear"), Standardizer.identity(1), 1.0)
    with pytest.raises(ConfigError):
        TwoStepClassifier(bare, constant_model(0.0, (3,)))


@st.composite
def random_classifier(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))

    def model():
        d = int(rng.integers(1, 4))
        idx = tuple(int(i) for i in rng.choice(np.arange(1, 11), d, replace=False))
        m = int(rng.integers(1, 6))
        st_ = Standardizer(tuple(rng.normal(size=d)), tuple(rng.uniform(0.5, 2, d)))
        kernel = KernelSpec("rbf", float(rng.uniform(0.1, 2)))
        return SvmModel(rng.normal(size=(m, d)), rng.uniform(-1, 1, m), float(rng.normal()), kernel, st_, 1.0, idx)

    return TwoStepClassifier(model(), model()), rng.normal(size=10) * 2


@settings(max_examples=1000, deadline=None)
@given(case=random_classifier())
def test_workflow_property(case):
    clf, row = case
    s1 = clf.step1.predict_many(row)[0][0]
    s2 = clf.step2.predict_many(row)[0][0]
    got = classify(clf, row)
    assert (got is LOS) == (s1 == -1)
    if s1 == 1:
        assert got is (NDP if s2 == 1 else DP)


def _with_bias(model, bias):
    return SvmModel(model.support_vectors, model.dual_coefs, bias, model.kernel,
                    model.standardizer, model.C, model.feature_indices)


def _tied(model, row):
    raw = _with_bias(model, 0.0).decision_function(row)[0]
    return _with_bias(model, -raw)


@settings(max_examples=1000, deadline=None)
@given(case=random_classifier())
def test_double_tie_property(case):
    clf, row = case
    tied = TwoStepClassifier(_tied(clf.step1, row), _tied(clf.step2, row))
    assert tied.step1.decision_function(row)[0] == 0.0
    assert classify(tied, row) is NDP


def test_batch_equals_single(small_set):
    X, y = small_set
    clf = train_two_step(X, y)
    assert clf.classify_many(X[:30]) == [classify(clf, row) for row in X[:30]]
