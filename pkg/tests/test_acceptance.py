"""Exit criteria, one marker label per criterion (summarized at session end)."""

import math
import time

import mpmath
import numpy as np
import pytest

import oracles
import test_features
import test_pipeline
import test_svm
from conftest import KKT_AUDIT, kkt_violations
from uwb_nlos import features as F
from uwb_nlos.cir import ChannelDiagnostics, PropagationClass, RangingRecord, Waveform
from uwb_nlos.cli import main
from uwb_nlos.evaluation import STEP1, STEP2_PREDICTED, STEP2_TRUE, evaluate
from uwb_nlos.features import FeatureConfig, extract_features
from uwb_nlos.pipeline import train_two_step
from uwb_nlos.svm import KernelSpec, TrainConfig, dual_objective, train

AC1 = "AC1 feature oracle suite (1e-12 relative, < 5 s)"
AC2 = "AC2 SVM dual optimum and KKT (1e-4 / tol 1e-3, < 10 s)"
AC3 = "AC3 synthetic end-to-end benchmark (step1 >= 0.90, step2 >= 0.80, < 60 s)"
AC4 = "AC4 pre-FP variance separation (NDP >= 2x LOS, LOS~DP < 25%)"
AC5 = "AC5 kurtosis sanity (Gaussian 3 +- 0.1, two-level 1 +- 1e-12)"
AC6 = "AC6 CLI determinism (byte-identical outputs)"
AC7 = "AC7 invariance property suites (>= 1000 cases each)"

LOS, DP, NDP = PropagationClass.LOS, PropagationClass.DP_NLOS, PropagationClass.NDP_NLOS
DT = 1e-9


def rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a)


# ---------------------------------------------------------------- AC1

def _mp_level(power, N, A):
    return mpmath.mpf(10) * mpmath.log10(power / mpmath.mpf(N) ** 2) - mpmath.mpf(A)


@pytest.mark.acceptance(AC1)
@pytest.mark.parametrize("rule", ["left_riemann", "trapezoid"])
def test_feature_oracle_suite(rule):
    mpmath.mp.dps = 50
    cfg = FeatureConfig(integration_rule=rule)
    rng = np.random.default_rng(20180101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(200, 1001))
        fp = int(rng.integers(2, n - 1))
        x = rng.uniform(0, 1, n) * rng.uniform(0.01, 10)
        w = Waveform(x, DT, fp)
        C = float(rng.uniform(1.0, 1e6))
        N = float(rng.integers(64, 1025))
        amps = tuple(float(v) for v in rng.uniform(1.0, 2e4, 3))
        A = float(rng.choice([113.77, 121.74]))
        fv = extract_features(RangingRecord(w, ChannelDiagnostics(C, N, amps, A), "p"), cfg)

        xs = list(x)
        lo, hi = max(fp - 20, 0), min(fp + 100, n)
        win, pre = xs[lo:hi], xs[max(fp - 20, 0):fp]
        want = {
            "energy": oracles.energy(win, DT, rule),
            "mean_excess_delay_s": oracles.mean_excess_delay(win, DT, rule, lo * DT),
            "rms_delay_spread": oracles.rms_delay_spread(win, DT, rule, lo * DT),
            "mean_magnitude": oracles.mean(win, DT, rule),
            "variance_magnitude": oracles.variance(win, DT, rule),
            "kurtosis": oracles.kurtosis(win, DT, rule),
            "pre_fp_variance": oracles.variance(pre, DT, rule),
        }
        rsl = _mp_level(mpmath.mpf(C) * 2**17, N, A)
        fsl = _mp_level(sum(mpmath.mpf(a) ** 2 for a in amps), N, A)
        want["rsl_dbm"] = float(rsl)
        want["rfpr_db"] = float(rsl - fsl)
        for name, value in want.items():
            err = rel(getattr(fv, name), value)
            worst = max(worst, err)
            assert err < 1e-12, (name, getattr(fv, name), value)
        assert F.compute_fsl(ChannelDiagnostics(C, N, amps, A)) == pytest.approx(float(fsl), rel=1e-12)
    elapsed = time.perf_counter() - t0
    print(f"AC1[{rule}]: worst relative error {worst:.2e}, {elapsed:.2f} s")
    assert elapsed < 5.0


# ---------------------------------------------------------------- AC2

@pytest.mark.acceptance(AC2)
def test_svm_dual_and_kkt():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    checked = 0
    linear = lambda a, b: float(a @ b)
    for k in range(30):
        n = int(rng.integers(2, 7))
        X, y = test_svm.separable_set(rng, n)
        cfg = TrainConfig(C=1000.0, seed=k)
        m = train(X, y, KernelSpec("linear"), cfg)
        best, _ = oracles.dual_optimum(X, y, 1000.0, linear)
        gap = abs(dual_objective(m) - best)
        worst = max(worst, gap)
        assert gap <= 1e-4
        assert m.converged and not kkt_violations(m, X, y, 1e-3)
        checked += 1
    # larger soft-margin problems: KKT only (no brute force possible)
    for k in range(6):
        X, y = test_svm.blobs(rng, 400, shift=0.6)
        for kernel in (KernelSpec("linear"), KernelSpec()):
            m = train(X, y, kernel, TrainConfig(C=float(10 ** (k % 3 - 1)), seed=k))
            assert m.converged and not kkt_violations(m, X, y, 1e-3)
            checked += 1
    elapsed = time.perf_counter() - t0
    print(f"AC2: worst dual gap {worst:.2e}, {checked} models KKT-checked, {elapsed:.2f} s "
          f"(suite-wide audit so far: {KKT_AUDIT['checked']})")
    assert elapsed < 10.0


# ---------------------------------------------------------------- AC3

@pytest.fixture(scope="module")
def trained(benchmark):
    t0 = time.perf_counter()
    clf = train_two_step(benchmark.X_train, benchmark.y_train)
    return clf, time.perf_counter() - t0


@pytest.mark.acceptance(AC3)
def test_end_to_end_benchmark(benchmark, trained):
    clf, train_seconds = trained
    t0 = time.perf_counter()
    s1 = evaluate(clf, benchmark.X_test, benchmark.y_test, STEP1)
    s2 = evaluate(clf, benchmark.X_test, benchmark.y_test, STEP2_PREDICTED)
    s2_true = evaluate(clf, benchmark.X_test, benchmark.y_test, STEP2_TRUE)
    total = benchmark.build_seconds + train_seconds + time.perf_counter() - t0
    assert len(benchmark.records) == 3000
    assert len({r.pair_id for r in benchmark.records}) == 30
    assert len({r.pair_id for r in benchmark.train}) == 12
    print(
        f"AC3: step1 P_LOS {s1.p_los:.4f} P_NLOS {s1.p_nlos:.4f} P_avg {s1.p_avg:.4f}; "
        f"step2 (predicted NLOS) P_DP {s2.p_dp:.4f} P_NDP {s2.p_ndp:.4f} P_avg {s2.p_avg:.4f}; "
        f"step2 (true NLOS) P_avg {s2_true.p_avg:.4f}; {total:.1f} s"
    )
    assert s1.p_avg >= 0.90
    assert s2.p_avg >= 0.80
    assert s2_true.p_avg >= 0.80
    assert total < 60.0


# ---------------------------------------------------------------- AC4

@pytest.mark.acceptance(AC4)
def test_pre_fp_variance_separation(benchmark):
    groups = {LOS: [], DP: [], NDP: []}
    X = np.vstack([benchmark.X_train, benchmark.X_test])
    labels = benchmark.y_train + benchmark.y_test
    for rec, label, row in zip(benchmark.train + benchmark.test, labels, X):
        w = rec.waveform
        fp = w.first_path_index
        value = oracles.variance(list(w.samples[max(fp - 20, 0):fp]), DT, "trapezoid")
        assert rel(row[9], value) < 1e-12
        groups[label].append(value)
    mean = {c: float(np.mean(v)) for c, v in groups.items()}
    median = {c: float(np.median(v)) for c, v in groups.items()}
    print(f"AC4: mean ratio NDP/LOS {mean[NDP] / mean[LOS]:.3f}, median ratio {median[NDP] / median[LOS]:.3f}, "
          f"DP/LOS mean {mean[DP] / mean[LOS]:.3f}")
    assert mean[NDP] >= 2 * mean[LOS]
    assert median[NDP] >= 2 * median[LOS]
    assert abs(mean[DP] - mean[LOS]) / mean[LOS] < 0.25


# ---------------------------------------------------------------- AC5

@pytest.mark.acceptance(AC5)
def test_kurtosis_sanity():
    g = np.random.default_rng(5).normal(size=100_000)
    k = F.kurtosis(g, 1.0, "left_riemann")
    assert abs(k - 3.0) <= 0.1
    for rule in ("left_riemann", "trapezoid"):
        for mu, a, n in ((0.0, 1.0, 2), (5.0, 0.25, 1000), (1e-3, 1e-4, 64)):
            two_level = np.tile([mu + a, mu - a], n // 2)
            assert abs(F.kurtosis(two_level, DT, rule) - 1.0) <= 1e-12
    w = Waveform(np.tile([0.8, 0.2], 100), DT, 50)
    assert abs(F.compute_kurtosis(w) - 1.0) <= 1e-12


# ---------------------------------------------------------------- AC6

def _cli_chain(d):
    d.mkdir()
    s = str(d)
    spec = d / "sweep.json"
    spec.write_text('{"rows": [{"step": 1, "features": [2, 4, 5]}, {"step": 2, "features": [3, 4, 10]}], "seed": 1}\n')
    commands = [
        ["synth", "--preset", "los", "--count", "10", "--seed", "1", "--out", f"{s}/los.jsonl"],
        ["synth", "--preset", "all", "--count", "200", "--pairs", "6", "--seed", "4", "--out", f"{s}/data.jsonl"],
        ["featurize", "--in", f"{s}/data.jsonl", "--with-meta", "--out", f"{s}/features.csv"],
        ["train", "--in", f"{s}/data.jsonl", "--seed", "3", "--model-out", f"{s}/model.zip"],
        ["classify", "--model", f"{s}/model.zip", "--in", f"{s}/data.jsonl", "--out", f"{s}/pred.csv"],
        ["evaluate", "--model", f"{s}/model.zip", "--in", f"{s}/data.jsonl", "--out", f"{s}/rates.json"],
        ["sweep", "--spec", str(spec), "--in", f"{s}/data.jsonl", "--report-out", f"{s}/report.txt", "--seed", "2"],
        ["histogram", "--in", f"{s}/data.jsonl", "--feature", "10", "--bins", "25", "--out", f"{s}/hist.tsv"],
    ]
    for cmd in commands:
        assert main(cmd) == 0, cmd
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.acceptance(AC6)
def test_cli_outputs_are_byte_identical(tmp_path):
    first = _cli_chain(tmp_path / "a")
    second = _cli_chain(tmp_path / "b")
    assert sorted(first) == sorted(second)
    assert {"los.jsonl", "data.jsonl", "features.csv", "model.zip", "pred.csv", "rates.json",
            "report.txt", "report.txt.json", "hist.tsv"} <= set(first)
    for name in first:
        assert first[name] == second[name], name


# ---------------------------------------------------------------- AC7

PROPERTY_SUITES = {
    "feature scale covariance": test_features.test_scale_covariance,
    "feature time-shift covariance": test_features.test_time_shift_covariance,
    "rfpr independent of A": test_features.test_rfpr_invariant_to_prf_constant,
    "svm zero score -> +1": test_svm.test_zero_score_maps_to_positive,
    "svm label = sign(score)": test_svm.test_label_is_sign_of_score,
    "pipeline workflow": test_pipeline.test_workflow_property,
    "pipeline double tie -> NDP": test_pipeline.test_double_tie_property,
    "labeling partition/monotonicity": test_pipeline.test_labeling_partition_and_monotonicity,
}


@pytest.mark.acceptance(AC7)
@pytest.mark.parametrize("name", list(PROPERTY_SUITES))
def test_invariance_suite(name):
    prop = PROPERTY_SUITES[name]
    inner = prop.hypothesis.inner_test
    calls = []

    def counted(*args, **kwargs):
        calls.append(1)
        return inner(*args, **kwargs)

    prop.hypothesis.inner_test = counted
    try:
        prop()
    finally:
        prop.hypothesis.inner_test = inner
    print(f"AC7[{name}]: {len(calls)} cases")
    assert len(calls) >= 1000
