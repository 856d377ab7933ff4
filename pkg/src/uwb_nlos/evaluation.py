"""Success-rate metrics, feature-subset sweeps and histogram export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cir import CLASSES, PropagationClass
from .errors import ConfigError, NlosError
from .features import FeatureConfig, feature_matrix
from .pipeline import (
    DEFAULT_STEP1_FEATURES,
    LabelingThresholds,
    TwoStepClassifier,
    _check_subset,
    record_label,
    split_by_pair,
)
from .svm import KernelSpec, SvmModel, TrainConfig, fit

STEP1 = "step1"
STEP2_TRUE = "step2_true_nlos"
STEP2_PREDICTED = "step2_predicted_nlos"
FULL = "full_3class"
MODES = (STEP1, STEP2_TRUE, STEP2_PREDICTED, FULL)

LOS, DP, NDP = CLASSES


def _rate(correct: int, total: int) -> Optional[float]:
    return correct / total if total else None


def _mean2(a, b):
    return (a + b) / 2 if a is not None and b is not None else None


@dataclass(frozen=True)
class SuccessRates:
    """Per-class success rates for one evaluation mode.

    ``confusion[i][j]`` counts samples of true class ``classes[i]`` predicted
    as ``classes[j]``.  Rates for classes absent from the test set are
    ``None``.  ``macro_3class`` (full mode only) is the unweighted mean of the
    three per-class rates, an addition beyond the pairwise averages.
    """

    mode: str
    classes: Tuple[str, ...]
    confusion: Tuple[Tuple[int, ...], ...]
    p_los: Optional[float] = None
    p_nlos: Optional[float] = None
    p_dp: Optional[float] = None
    p_ndp: Optional[float] = None
    p_avg: Optional[float] = None
    macro_3class: Optional[float] = None
    excluded: int = 0

    @property
    def per_class(self) -> Dict[str, Optional[float]]:
        return {
            name: _rate(row[k], sum(row)) for k, (name, row) in enumerate(zip(self.classes, self.confusion))
        }

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "classes": list(self.classes),
            "confusion": [list(r) for r in self.confusion],
            "per_class": self.per_class,
            "p_los": self.p_los,
            "p_nlos": self.p_nlos,
            "p_dp": self.p_dp,
            "p_ndp": self.p_ndp,
            "p_avg": self.p_avg,
            "macro_3class": self.macro_3class,
            "excluded": self.excluded,
        }


def _confusion(truth: Sequence[int], pred: Sequence[int], k: int) -> Tuple[Tuple[int, ...], ...]:
    m = np.zeros((k, k), dtype=int)
    np.add.at(m, (np.asarray(truth, dtype=int), np.asarray(pred, dtype=int)), 1)
    return tuple(tuple(int(v) for v in row) for row in m)


def rates_from_predictions(mode: str, truth: Sequence[PropagationClass], pred: Sequence[PropagationClass], excluded: int = 0) -> SuccessRates:
    """Tally predictions into :class:`SuccessRates`.

    For ``step1`` predictions are compared on the LOS / NLOS axis; for the
    step-2 modes only DP and NDP samples may appear.
    """
    if len(truth) != len(pred):
        raise ConfigError("truth and predictions differ in length")
    if mode == STEP1:
        t = [int(c.is_nlos) for c in truth]
        p = [int(c.is_nlos) for c in pred]
        conf = _confusion(t, p, 2)
        p_los = _rate(conf[0][0], sum(conf[0]))
        p_nlos = _rate(conf[1][1], sum(conf[1]))
        return SuccessRates(mode, ("LOS", "NLOS"), conf, p_los=p_los, p_nlos=p_nlos,
                            p_avg=_mean2(p_los, p_nlos), excluded=excluded)
    if mode in (STEP2_TRUE, STEP2_PREDICTED):
        if any(c is LOS for c in truth) or any(c is LOS for c in pred):
            raise ConfigError("step-2 evaluation takes DP/NDP samples only")
        t = [int(c is NDP) for c in truth]
        p = [int(c is NDP) for c in pred]
        conf = _confusion(t, p, 2)
        p_dp = _rate(conf[0][0], sum(conf[0]))
        p_ndp = _rate(conf[1][1], sum(conf[1]))
        return SuccessRates(mode, (DP.value, NDP.value), conf, p_dp=p_dp, p_ndp=p_ndp,
                            p_avg=_mean2(p_dp, p_ndp), excluded=excluded)
    if mode == FULL:
        conf = _confusion([c.order for c in truth], [c.order for c in pred], 3)
        per = [_rate(conf[k][k], sum(conf[k])) for k in range(3)]
        n_nlos = sum(conf[1]) + sum(conf[2])
        nlos_ok = conf[1][1] + conf[1][2] + conf[2][1] + conf[2][2]
        p_los, p_nlos = per[0], _rate(nlos_ok, n_nlos)
        present = [r for r in per if r is not None]
        return SuccessRates(
            mode, tuple(c.value for c in CLASSES), conf,
            p_los=p_los, p_nlos=p_nlos, p_dp=per[1], p_ndp=per[2],
            p_avg=_mean2(p_los, p_nlos),
            macro_3class=sum(present) / len(present) if present else None,
        )
    raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")


def _binary(model: SvmModel, rows, positive, negative) -> List[PropagationClass]:
    labels, _ = model.predict_many(rows)
    return [positive if v > 0 else negative for v in labels]


def evaluate(
    target: Union[TwoStepClassifier, SvmModel],
    features,
    labels: Sequence[PropagationClass],
    mode: str = FULL,
    step1: Optional[SvmModel] = None,
) -> SuccessRates:
    """Success rates of a classifier (or a single binary model) on labeled rows.

    A bare :class:`SvmModel` is taken as the step-1 model in ``step1`` mode
    and as the step-2 model otherwise; ``step2_predicted_nlos`` then needs
    ``step1`` for the population.  In that mode true-LOS samples that step 1
    calls NLOS have no DP/NDP ground truth and are only counted in
    ``excluded``.
    """
    rows = np.atleast_2d(np.asarray(features, dtype=float))
    labels = list(labels)
    if rows.shape[0] != len(labels) or not labels:
        raise ConfigError("need one label per (non-empty) feature row")
    two_step = isinstance(target, TwoStepClassifier)
    if mode == STEP1:
        model = target.step1 if two_step else target
        return rates_from_predictions(mode, labels, _binary(model, rows, NDP, LOS))
    if mode in (STEP2_TRUE, STEP2_PREDICTED):
        model2 = target.step2 if two_step else target
        idx = [k for k, c in enumerate(labels) if c.is_nlos]
        excluded = 0
        if mode == STEP2_PREDICTED:
            model1 = target.step1 if two_step else step1
            if model1 is None:
                raise ConfigError("step2_predicted_nlos needs a step-1 model")
            s1, _ = model1.predict_many(rows)
            excluded = int(sum(1 for k, c in enumerate(labels) if c is LOS and s1[k] > 0))
            idx = [k for k in idx if s1[k] > 0]
        if not idx:
            return rates_from_predictions(mode, [], [], excluded)
        pred = _binary(model2, rows[idx], NDP, DP)
        return rates_from_predictions(mode, [labels[k] for k in idx], pred, excluded)
    if mode == FULL:
        if not two_step:
            raise ConfigError("full_3class evaluation needs a two-step classifier")
        return rates_from_predictions(mode, labels, target.classify_many(rows))
    raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")


# -------------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepRow:
    step: int
    features: Tuple[int, ...]

    def __post_init__(self):
        if self.step not in (1, 2):
            raise ConfigError("sweep step must be 1 or 2")
        object.__setattr__(self, "features", _check_subset(self.features))


@dataclass(frozen=True)
class SweepSpec:
    """Feature subsets to train and evaluate, with shared training settings.

    The split is drawn once from ``seed``; each row trains with its own
    seed derived from ``seed`` and the row's content.  ``train_pairs``
    takes precedence over ``train_fraction``.
    """

    rows: Tuple[SweepRow, ...]
    kernel: KernelSpec = KernelSpec()
    train: TrainConfig = TrainConfig()
    seed: int = 0
    train_pairs: Optional[int] = None
    train_fraction: float = 0.4
    step2_mode: str = STEP2_PREDICTED
    step1_features: Tuple[int, ...] = DEFAULT_STEP1_FEATURES

    def __post_init__(self):
        if not self.rows:
            raise ConfigError("sweep needs at least one row")
        if self.step2_mode not in (STEP2_TRUE, STEP2_PREDICTED):
            raise ConfigError(f"step2_mode must be {STEP2_TRUE} or {STEP2_PREDICTED}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        object.__setattr__(self, "step1_features", _check_subset(self.step1_features))

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        try:
            rows = []
            for entry in data["rows"]:
                rows.append(SweepRow(int(entry["step"]), tuple(entry["features"])))
            kernel = KernelSpec(data.get("kernel", "rbf"), data.get("gamma"))
            train = TrainConfig(
                C=float(data.get("C", 1.0)),
                tol=float(data.get("tol", 1e-3)),
                max_passes=int(data.get("max_passes", 100)),
            )
            return cls(
                tuple(rows), kernel, train,
                seed=int(data.get("seed", 0)),
                train_pairs=data.get("train_pairs"),
                train_fraction=float(data.get("train_fraction", 0.4)),
                step2_mode=data.get("step2_mode", STEP2_PREDICTED),
                step1_features=tuple(data.get("step1_features", DEFAULT_STEP1_FEATURES)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, NlosError):
                raise
            raise ConfigError(f"malformed sweep spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SweepSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep spec is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def row_seed(global_seed: int, step: int, features: Sequence[int]) -> int:
    """Training seed determined by the row content, not its list position."""
    key = f"{global_seed}|{step}|{','.join(str(i) for i in sorted(features))}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class SweepResult:
    row: SweepRow
    rates: Optional[SuccessRates] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _train_binary(rows, y, features, spec: SweepSpec, step: int) -> SvmModel:
    cfg = TrainConfig(spec.train.C, spec.train.tol, spec.train.max_passes,
                      row_seed(spec.seed, step, features))
    return fit(rows[:, [i - 1 for i in features]], y, spec.kernel, cfg, features)


def sweep_features(spec: SweepSpec, X_train, y_train, X_test, y_test) -> List[SweepResult]:
    """Run a sweep on pre-extracted feature matrices and class labels."""
    y_train = list(y_train)
    y_test = list(y_test)
    b1 = np.array([1 if c.is_nlos else -1 for c in y_train])
    nlos_train = [k for k, c in enumerate(y_train) if c.is_nlos]
    b2 = np.array([1 if y_train[k] is NDP else -1 for k in nlos_train])
    cache: Dict[Tuple[int, ...], SvmModel] = {}

    def step1_model(features):
        features = tuple(sorted(features))
        if features not in cache:
            cache[features] = _train_binary(X_train, b1, features, spec, 1)
        return cache[features]

    results = []
    for row in spec.rows:
        try:
            if row.step == 1:
                rates = evaluate(step1_model(row.features), X_test, y_test, STEP1)
            else:
                features = tuple(sorted(row.features))
                model2 = _train_binary(X_train[nlos_train], b2, features, spec, 2)
                gate = step1_model(spec.step1_features) if spec.step2_mode == STEP2_PREDICTED else None
                rates = evaluate(model2, X_test, y_test, spec.step2_mode, step1=gate)
            results.append(SweepResult(row, rates))
        except NlosError as exc:
            results.append(SweepResult(row, error=f"{type(exc).__name__}: {exc}"))
    return results


def sweep(spec: SweepSpec, records, feature_cfg: Optional[FeatureConfig] = None,
          thresholds: LabelingThresholds = LabelingThresholds()) -> List[SweepResult]:
    """Split ``records`` by pair, extract features once and evaluate every row."""
    labels = [record_label(r, thresholds) for r in records]
    n_pairs = len({r.pair_id for r in records})
    train_pairs = spec.train_pairs if spec.train_pairs is not None else max(1, round(spec.train_fraction * n_pairs))
    train, test = split_by_pair(records, train_pairs, spec.seed, labels)
    X_train = feature_matrix(train, feature_cfg)
    X_test = feature_matrix(test, feature_cfg)
    y_train = [record_label(r, thresholds) for r in train]
    y_test = [record_label(r, thresholds) for r in test]
    return sweep_features(spec, X_train, y_train, X_test, y_test)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def format_table(results: Sequence[SweepResult]) -> str:
    """Aligned text table, rates to four decimals."""
    header = ("step", "features", "P_a", "P_b", "P_avg", "n_test", "status")
    lines = [header]
    for res in results:
        feats = ",".join(str(i) for i in res.row.features)
        if res.failed:
            lines.append((str(res.row.step), feats, "-", "-", "-", "-", "failed: " + res.error))
            continue
        r = res.rates
        a, b = (r.p_los, r.p_nlos) if res.row.step == 1 else (r.p_dp, r.p_ndp)
        lines.append((str(res.row.step), feats, _fmt(a), _fmt(b), _fmt(r.p_avg), str(r.total), "ok"))
    widths = [max(len(row[k]) for row in lines) for k in range(len(header) - 1)]
    out = []
    for row in lines:
        cells = [row[k].ljust(widths[k]) for k in range(len(widths))] + [row[-1]]
        out.append("  ".join(cells).rstrip())
    legend = "# step 1: P_a = P_LOS, P_b = P_NLOS; step 2: P_a = P_DP, P_b = P_NDP"
    return legend + "\n" + "\n".join(out) + "\n"


def results_to_json(results: Sequence[SweepResult]) -> str:
    payload = [
        {
            "step": r.row.step,
            "features": list(r.row.features),
            "status": "failed" if r.failed else "ok",
            "error": r.error,
            "rates": r.rates.as_dict() if r.rates else None,
        }
        for r in results
    ]
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------- histograms

@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def export_histogram(values, bin_count: int, value_range: Optional[Tuple[float, float]] = None) -> Histogram:
    """Equal-width histogram; bins are half-open except the last, which is closed.

    Values outside ``value_range`` are not counted.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ConfigError("histogram of empty input")
    if bin_count < 1:
        raise ConfigError("bin_count must be >= 1")
    if not np.all(np.isfinite(values)):
        raise ConfigError("histogram values must be finite")
    counts, edges = np.histogram(values, bins=bin_count, range=value_range)
    return Histogram(edges, counts)


def histogram_table(groups: Dict[str, Sequence[float]], bin_count: int,
                    value_range: Optional[Tuple[float, float]] = None) -> str:
    """Tab-separated columns ``bin_left bin_right <group counts...>`` on common bins.

    Empty groups are dropped.
    """
    groups = {k: v for k, v in groups.items() if len(v)}
    if not groups:
        raise ConfigError("histogram of empty input")
    if value_range is None:
        allv = np.concatenate([np.asarray(v, dtype=float).ravel() for v in groups.values()])
        value_range = (float(allv.min()), float(allv.max()))
    hists = {name: export_histogram(v, bin_count, value_range) for name, v in groups.items()}
    edges = next(iter(hists.values())).edges
    lines = ["\t".join(["bin_left", "bin_right"] + list(hists))]
    for k in range(bin_count):
        cells = [repr(float(edges[k])), repr(float(edges[k + 1]))]
        cells += [str(int(h.counts[k])) for h in hists.values()]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
