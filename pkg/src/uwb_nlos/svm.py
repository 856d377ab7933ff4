"""Binary soft-margin SVM trained by sequential minimal optimization.

The dual problem

    min_a  0.5 * a^T Q a - sum(a)   s.t.  y^T a = 0,  0 <= a_i <= C,

with ``Q_ij = y_i y_j K(x_i, x_j)`` is solved by pairwise updates.  Each
step picks the maximal violating index ``i`` and a partner ``j`` by
second-order gain (Fan, Chen & Lin, JMLR 2005), then solves the
two-variable subproblem analytically.  The gradient is kept up to date so
the stopping test ``m(a) - M(a) <= tol`` is exact, and that gap bounds
every KKT residual ``|y_i f(x_i) - 1|`` of the returned model by ``tol``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateLabelsError, ModelFormatError, NlosError

LINEAR = "linear"
RBF = "rbf"

MODEL_FORMAT = "uwb-nlos-svm"
MODEL_VERSION = 1

_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = RBF
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (LINEAR, RBF):
            raise ConfigError(f"unknown kernel {self.kind!r}")
        if self.kind == RBF and self.gamma is not None and not self.gamma > 0:
            raise ConfigError("rbf gamma must be > 0")

    def resolved(self, n_features: int) -> "KernelSpec":
        """Fill in the default gamma = 1 / n_features for rbf."""
        if self.kind == RBF and self.gamma is None:
            return KernelSpec(RBF, 1.0 / n_features)
        return self

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Kernel matrix between rows of ``a`` and rows of ``b``."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        if self.kind == LINEAR:
            return a @ b.T
        if self.gamma is None:
            raise ConfigError("rbf kernel needs a resolved gamma")
        sq = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError("C must be > 0")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.max_passes < 1:
            raise ConfigError("max_passes must be >= 1")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map ``(x - mean) / std``."""

    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(m) for m in self.mean)
        std = tuple(float(s) for s in self.std)
        if len(mean) != len(std):
            raise ConfigError("standardizer mean/std length mismatch")
        if any(not s > 0 for s in std):
            raise ConfigError("standardizer stds must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        return cls((0.0,) * n_features, (1.0,) * n_features)

    def __len__(self):
        return len(self.mean)

    def apply(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        return (rows - np.asarray(self.mean)) / np.asarray(self.std)


def fit_standardizer(rows, names: Optional[Sequence] = None) -> Standardizer:
    """Column means and population standard deviations of ``rows``.

    ``names`` labels the columns in the zero-variance error (defaults to
    0-based column numbers).
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ConfigError("need at least 2 rows to fit a standardizer")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    for j, s in enumerate(std):
        # relative test: feature scales range from ~1e-17 (s^2) to ~1e2 (dB)
        if not s > 1e-12 * abs(mean[j]) or s == 0:
            label = names[j] if names is not None else j
            raise ConfigError(f"zero-variance feature {label}")
    return Standardizer(tuple(mean), tuple(std))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained binary classifier.

    ``feature_indices`` (1-based, into the 10-feature vector) is optional;
    without it the model consumes rows of exactly ``len(standardizer)``
    values.
    """

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelSpec
    standardizer: Standardizer
    C: float
    feature_indices: Optional[Tuple[int, ...]] = None
    support_indices: Tuple[int, ...] = ()
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        sv = np.array(self.support_vectors, dtype=float).reshape(-1, len(self.standardizer))
        coef = np.array(self.dual_coefs, dtype=float).reshape(-1)
        if sv.shape[0] != coef.size:
            raise ConfigError("support vector / coefficient count mismatch")
        sv.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefs", coef)
        object.__setattr__(self, "bias", float(self.bias))
        if self.feature_indices is not None:
            idx = tuple(int(i) for i in self.feature_indices)
            if len(idx) != len(self.standardizer):
                raise ConfigError("feature_indices length must match the standardizer")
            object.__setattr__(self, "feature_indices", idx)
        object.__setattr__(self, "support_indices", tuple(int(i) for i in self.support_indices))

    @property
    def n_features(self) -> int:
        return len(self.standardizer)

    def select(self, rows) -> np.ndarray:
        """Pick the model's columns out of raw rows (2-D)."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.feature_indices is None:
            if rows.shape[1] != self.n_features:
                raise NlosError(
                    f"missing features: model expects {self.n_features} values, got {rows.shape[1]}"
                )
            return rows
        if rows.shape[1] < max(self.feature_indices):
            raise NlosError(
                f"missing features: row has {rows.shape[1]} values, model needs index {max(self.feature_indices)}"
            )
        return rows[:, [i - 1 for i in self.feature_indices]]

    def decision_function(self, rows) -> np.ndarray:
        z = self.standardizer.apply(self.select(rows))
        if self.dual_coefs.size == 0:
            return np.full(z.shape[0], self.bias)
        return self.kernel(z, self.support_vectors) @ self.dual_coefs + self.bias

    def predict_many(self, rows) -> Tuple[np.ndarray, np.ndarray]:
        scores = self.decision_function(rows)
        return np.where(scores >= 0, 1, -1), scores


def predict(model: SvmModel, row) -> Tuple[int, float]:
    """Label and score for one raw row; a score of exactly 0 maps to +1."""
    score = float(model.decision_function(np.asarray(row, dtype=float).reshape(1, -1))[0])
    return (1 if score >= 0 else -1), score


class _KernelRows:
    """Lazily evaluated, cached rows of the training kernel matrix."""

    def __init__(self, kernel: KernelSpec, X: np.ndarray, cache_rows: int = 4096):
        self.kernel = kernel
        self.X = X
        self.cache = {}
        self.cache_rows = cache_rows
        if kernel.kind == RBF:
            self.diag = np.ones(X.shape[0])
        else:
            self.diag = np.einsum("ij,ij->i", X, X)

    def __getitem__(self, i: int) -> np.ndarray:
        row = self.cache.get(i)
        if row is None:
            row = self.kernel(self.X[i : i + 1], self.X)[0]
            if len(self.cache) >= self.cache_rows:
                self.cache.pop(next(iter(self.cache)))
            self.cache[i] = row
        return row


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    converged: bool
    n_iter: int
    gap: float


def solve_dual(K: _KernelRows, y: np.ndarray, C: float, tol: float, max_iter: int) -> SmoResult:
    """SMO on the dual with second-order working-set selection."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = K.diag
    pos = y > 0
    it = 0
    converged = False
    gap = math.inf
    while it < max_iter:
        v = -y * grad
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        m = v_up[i]
        M = float(np.min(np.where(low, v, np.inf)))
        gap = m - M
        if gap <= tol:
            converged = True
            break
        Ki = K[i]
        # second-order choice of j among low indices with v_j < m
        b = m - v
        a = diag[i] + diag - 2.0 * Ki
        a = np.where(a > 0, a, _TAU)
        gain = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        Kj = K[j]
        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(diag[i] + diag[j] - 2.0 * Ki[j], _TAU)
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += y * (Ki * (yi * (ai - ai_old)) + Kj * (yj * (aj - aj_old)))
        it += 1

    v = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        m = float(np.max(np.where(up, v, -np.inf)))
        M = float(np.min(np.where(low, v, np.inf)))
        bias = 0.5 * (m + M) if math.isfinite(m) and math.isfinite(M) else (m if math.isfinite(m) else M)
    return SmoResult(alpha, bias, converged, it, gap)


def train(
    samples,
    labels,
    kernel: KernelSpec = KernelSpec(),
    cfg: TrainConfig = TrainConfig(),
    standardizer: Optional[Standardizer] = None,
    feature_indices: Optional[Sequence[int]] = None,
) -> SvmModel:
    """Train on already standardized ``samples`` with labels in {-1, +1}.

    ``standardizer`` (identity if omitted) is stored in the model so that
    :func:`predict` can take raw rows.  ``cfg.seed`` permutes the sample
    order seen by the solver, which decides how ties between equally good
    working pairs are broken.  When the pair-update budget
    (``max_passes * max(n, 10)``) runs out the model is still returned,
    with ``converged=False``.
    """
    X = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ConfigError("samples must be a 2-D array with one label per row")
    if not np.all(np.isfinite(X)):
        raise ConfigError("samples must be finite")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ConfigError("labels must be -1 or +1")
    if np.all(y > 0) or np.all(y < 0):
        raise DegenerateLabelsError("degenerate labels: both classes are required")
    n, d = X.shape
    standardizer = standardizer or Standardizer.identity(d)
    kernel = kernel.resolved(d)

    order = np.random.default_rng(cfg.seed).permutation(n)
    K = _KernelRows(kernel, X[order])
    res = solve_dual(K, y[order], cfg.C, cfg.tol, cfg.max_passes * max(n, 10))
    alpha = np.empty(n)
    alpha[order] = res.alpha
    support = np.flatnonzero(alpha > 0)
    return SvmModel(
        support_vectors=X[support],
        dual_coefs=alpha[support] * y[support],
        bias=res.bias,
        kernel=kernel,
        standardizer=standardizer,
        C=cfg.C,
        feature_indices=tuple(feature_indices) if feature_indices is not None else None,
        support_indices=tuple(support),
        converged=res.converged,
        n_iter=res.n_iter,
    )


def fit(
    rows,
    labels,
    kernel: KernelSpec = KernelSpec(),
    cfg: TrainConfig = TrainConfig(),
    feature_indices: Optional[Sequence[int]] = None,
) -> SvmModel:
    """Standardize raw ``rows`` (already restricted to the model's columns) and train."""
    st = fit_standardizer(rows, feature_indices)
    return train(st.apply(rows), labels, kernel, cfg, st, feature_indices)


def dual_objective(model: SvmModel) -> float:
    """``sum(a) - 0.5 * a^T Q a`` evaluated on the model's support vectors."""
    coef = model.dual_coefs
    K = model.kernel(model.support_vectors, model.support_vectors)
    return float(np.sum(np.abs(coef)) - 0.5 * coef @ K @ coef)


# ---------------------------------------------------------------- persistence

def model_to_dict(model: SvmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma},
        "C": model.C,
        "standardizer": {"mean": list(model.standardizer.mean), "std": list(model.standardizer.std)},
        "feature_indices": list(model.feature_indices) if model.feature_indices is not None else None,
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefs": model.dual_coefs.tolist(),
        "support_indices": list(model.support_indices),
        "bias": model.bias,
        "converged": model.converged,
        "n_iter": model.n_iter,
    }


def model_from_dict(data) -> SvmModel:
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not an svm model document")
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    try:
        kernel = KernelSpec(data["kernel"]["kind"], data["kernel"]["gamma"])
        st = Standardizer(tuple(data["standardizer"]["mean"]), tuple(data["standardizer"]["std"]))
        idx = data["feature_indices"]
        return SvmModel(
            support_vectors=np.array(data["support_vectors"], dtype=float).reshape(-1, len(st)),
            dual_coefs=np.array(data["dual_coefs"], dtype=float),
            bias=data["bias"],
            kernel=kernel,
            standardizer=st,
            C=data["C"],
            feature_indices=tuple(idx) if idx is not None else None,
            support_indices=tuple(data.get("support_indices", ())),
            converged=bool(data["converged"]),
            n_iter=int(data.get("n_iter", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model: {exc}") from exc


def save_model(model: SvmModel) -> bytes:
    return json.dumps(model_to_dict(model), sort_keys=True, allow_nan=False).encode("utf-8")


def load_model(blob: bytes) -> SvmModel:
    try:
        data = json.loads(blob.decode("utf-8") if isinstance(blob, (bytes, bytearray)) else blob)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot parse model: {exc}") from exc
    return model_from_dict(data)
