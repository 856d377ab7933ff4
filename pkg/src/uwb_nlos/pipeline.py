"""Labeling, pair-wise splitting and the two-step LOS / DP / NDP classifier."""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .cir import CLASSES, PropagationClass, RangingRecord
from .errors import ConfigError, ModelFormatError, NlosError, SplitError
from .features import DEFAULT_CONFIG, N_FEATURES, FeatureConfig, FeatureVector
from .svm import KernelSpec, SvmModel, TrainConfig, fit, model_from_dict, model_to_dict

BUNDLE_FORMAT = "uwb-nlos-two-step"
BUNDLE_VERSION = 1

DEFAULT_STEP1_FEATURES = (2, 4, 5)
DEFAULT_STEP2_FEATURES = (3, 4, 10)

# fixed timestamp so bundle archives are byte-reproducible
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class LabelingThresholds:
    los_max_bias_m: float = 0.05
    dp_max_bias_m: float = 0.70

    def __post_init__(self):
        if not 0 < self.los_max_bias_m < self.dp_max_bias_m:
            raise ConfigError("thresholds must satisfy 0 < los_max < dp_max")


def label_from_bias(bias_m: float, th: LabelingThresholds = LabelingThresholds()) -> PropagationClass:
    """Class from ranging bias: LOS below ``los_max``, DP-NLOS up to and
    including ``dp_max``, NDP-NLOS above.

    Small negative biases (down to ``-los_max``) are estimation noise and
    count as LOS.
    """
    if not math.isfinite(bias_m):
        raise NlosError("bias must be finite")
    if bias_m < -th.los_max_bias_m:
        raise NlosError(f"implausible bias {bias_m} m")
    if bias_m < th.los_max_bias_m:
        return PropagationClass.LOS
    if bias_m <= th.dp_max_bias_m:
        return PropagationClass.DP_NLOS
    return PropagationClass.NDP_NLOS


def record_label(rec: RangingRecord, th: LabelingThresholds = LabelingThresholds()) -> PropagationClass:
    """Explicit label if present, otherwise derived from the bias."""
    if rec.label is not None:
        return rec.label
    if rec.bias_m is None:
        raise NlosError(f"record of pair {rec.pair_id!r} has neither label nor bias")
    return label_from_bias(rec.bias_m, th)


def split_by_pair(records: Sequence, train_pair_count: int, seed: int, labels=None):
    """Assign whole point pairs to the train or test side.

    ``labels`` (one per record) defaults to :func:`record_label`.  Both
    sides must contain all three classes.
    """
    pair_ids = sorted({r.pair_id for r in records})
    if not 0 < train_pair_count < len(pair_ids):
        raise SplitError(
            f"train_pair_count must be in [1, {len(pair_ids) - 1}], got {train_pair_count}"
        )
    labels = [record_label(r) for r in records] if labels is None else list(labels)
    rng = np.random.default_rng(seed)
    chosen = set(rng.permutation(pair_ids)[:train_pair_count].tolist())
    train = [r for r in records if r.pair_id in chosen]
    test = [r for r in records if r.pair_id not in chosen]
    gaps = []
    for side, name in ((True, "train"), (False, "test")):
        present = {lab for r, lab in zip(records, labels) if (r.pair_id in chosen) == side}
        missing = [c.value for c in CLASSES if c not in present]
        if missing:
            gaps.append(f"{name} side: {', '.join(missing)}")
    if gaps:
        raise SplitError(
            f"split lacks class on {'; '.join(gaps)}; retry with another seed "
            f"or a different train_pair_count"
        )
    return train, test


def _check_subset(indices) -> Tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    if not idx:
        raise ConfigError("feature subset must be non-empty")
    if any(not 1 <= i <= N_FEATURES for i in idx):
        raise ConfigError(f"feature indices must lie in 1..{N_FEATURES}")
    if len(set(idx)) != len(idx):
        raise ConfigError("feature subset has duplicates")
    return idx


def _rows(features) -> np.ndarray:
    """Feature rows as a 2-D array from vectors, arrays or sequences."""
    if isinstance(features, FeatureVector):
        return features.as_array()[None, :]
    if isinstance(features, np.ndarray):
        return np.atleast_2d(features.astype(float))
    return np.atleast_2d(np.array(
        [f.as_array() if isinstance(f, FeatureVector) else f for f in features], dtype=float
    ))


@dataclass(frozen=True)
class TwoStepClassifier:
    step1: SvmModel
    step2: SvmModel
    thresholds: LabelingThresholds = LabelingThresholds()
    feature_config: FeatureConfig = DEFAULT_CONFIG

    def __post_init__(self):
        for model in (self.step1, self.step2):
            if model.feature_indices is None:
                raise ConfigError("two-step models must carry feature indices")
            _check_subset(model.feature_indices)

    @property
    def step1_features(self) -> Tuple[int, ...]:
        return self.step1.feature_indices

    @property
    def step2_features(self) -> Tuple[int, ...]:
        return self.step2.feature_indices

    def classify_many(self, features) -> List[PropagationClass]:
        rows = _rows(features)
        s1, _ = self.step1.predict_many(rows)
        out = [PropagationClass.LOS] * rows.shape[0]
        nlos = np.flatnonzero(s1 > 0)
        if nlos.size:
            s2, _ = self.step2.predict_many(rows[nlos])
            for k, lab in zip(nlos, s2):
                out[k] = PropagationClass.NDP_NLOS if lab > 0 else PropagationClass.DP_NLOS
        return out


def classify(c: TwoStepClassifier, fv) -> PropagationClass:
    """LOS if step 1 lands on the LOS side, otherwise step 2 decides DP vs NDP."""
    return c.classify_many(_rows(fv))[0]


def train_two_step(
    features,
    labels: Sequence[PropagationClass],
    step1_features: Sequence[int] = DEFAULT_STEP1_FEATURES,
    step2_features: Sequence[int] = DEFAULT_STEP2_FEATURES,
    kernel: KernelSpec = KernelSpec(),
    cfg: TrainConfig = TrainConfig(),
    thresholds: LabelingThresholds = LabelingThresholds(),
    feature_config: FeatureConfig = DEFAULT_CONFIG,
) -> TwoStepClassifier:
    """Step 1: LOS (-1) vs NLOS (+1).  Step 2, on true-NLOS rows only:
    DP-NLOS (-1) vs NDP-NLOS (+1)."""
    rows = _rows(features)
    labels = list(labels)
    if rows.shape[0] != len(labels):
        raise ConfigError("one label per feature row required")
    f1 = _check_subset(step1_features)
    f2 = _check_subset(step2_features)
    y1 = np.array([1 if lab.is_nlos else -1 for lab in labels])
    step1 = fit(rows[:, [i - 1 for i in f1]], y1, kernel, cfg, f1)
    nlos = np.flatnonzero(y1 > 0)
    y2 = np.array([1 if labels[k] is PropagationClass.NDP_NLOS else -1 for k in nlos])
    step2 = fit(rows[np.ix_(nlos, [i - 1 for i in f2])], y2, kernel, cfg, f2)
    return TwoStepClassifier(step1, step2, thresholds, feature_config)


# ---------------------------------------------------------------- bundle file

def _zip_write(zf: zipfile.ZipFile, name: str, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False).encode("utf-8")


def save_bundle(c: TwoStepClassifier) -> bytes:
    """Zip archive: manifest.json + step1.json + step2.json."""
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "step1_features": list(c.step1_features),
        "step2_features": list(c.step2_features),
        "thresholds": {
            "los_max_bias_m": c.thresholds.los_max_bias_m,
            "dp_max_bias_m": c.thresholds.dp_max_bias_m,
        },
        "feature_config": {
            "tau_s": c.feature_config.tau_s,
            "analysis_window": list(c.feature_config.analysis_window),
            "integration_rule": c.feature_config.integration_rule,
        },
        "models": {"step1": "step1.json", "step2": "step2.json"},
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _zip_write(zf, "manifest.json", _dump(manifest))
        _zip_write(zf, "step1.json", _dump(model_to_dict(c.step1)))
        _zip_write(zf, "step2.json", _dump(model_to_dict(c.step2)))
    return buf.getvalue()


def load_bundle(blob: bytes) -> TwoStepClassifier:
    try:
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format") != BUNDLE_FORMAT:
                raise ModelFormatError("not a two-step classifier bundle")
            if manifest.get("version") != BUNDLE_VERSION:
                raise ModelFormatError(f"unsupported model version {manifest.get('version')!r}")
            step1 = model_from_dict(json.loads(zf.read(manifest["models"]["step1"])))
            step2 = model_from_dict(json.loads(zf.read(manifest["models"]["step2"])))
            th = LabelingThresholds(**manifest["thresholds"])
            fc = manifest.get("feature_config")
            fcfg = (
                FeatureConfig(fc["tau_s"], tuple(fc["analysis_window"]), fc["integration_rule"])
                if fc is not None else DEFAULT_CONFIG
            )
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, TypeError) as exc:
        raise ModelFormatError(f"malformed classifier bundle: {exc}") from exc
    if tuple(manifest["step1_features"]) != step1.feature_indices or tuple(
        manifest["step2_features"]
    ) != step2.feature_indices:
        raise ModelFormatError("bundle manifest disagrees with its models")
    return TwoStepClassifier(step1, step2, th, fcfg)
