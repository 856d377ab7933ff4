"""The ten signal features used for propagation-condition classification.

Features 1-2 come from radio diagnostics; features 3-10 are integrals over
the CIR magnitude ``|r(t)|``, evaluated on the sample grid with an explicit
integration rule.  Array-level functions (``energy``, ``kurtosis``, ...)
accept any 1-D sequence; the ``compute_*`` wrappers apply the configured
analysis window to a :class:`Waveform`.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Callable, Optional, Tuple

import numpy as np

from .cir import ChannelDiagnostics, RangingRecord, Waveform, window_indices
from .errors import (
    ConfigError,
    DegenerateSignalError,
    DiagnosticsError,
    EmptyWindowError,
    FeatureError,
    NlosError,
)

LEFT_RIEMANN = "left_riemann"
TRAPEZOID = "trapezoid"
RULES = (LEFT_RIEMANN, TRAPEZOID)

FEATURE_NAMES = (
    "rsl_dbm",
    "rfpr_db",
    "energy",
    "mean_excess_delay_s",
    "rms_delay_spread",
    "mean_magnitude",
    "variance_magnitude",
    "kurtosis",
    "amplitude",
    "pre_fp_variance",
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureConfig:
    """Windowing and integration settings for features 3-10.

    ``analysis_window`` is (start, end) in seconds relative to the first
    path; the default spans 20 ns before to 100 ns after it.
    """

    tau_s: float = 20e-9
    analysis_window: Tuple[float, float] = (-20e-9, 100e-9)
    integration_rule: str = TRAPEZOID

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ConfigError("tau_s must be > 0")
        start, end = self.analysis_window
        if not end > start:
            raise ConfigError("analysis window end must exceed start")
        if self.integration_rule not in RULES:
            raise ConfigError(f"integration_rule must be one of {RULES}")
        object.__setattr__(self, "analysis_window", (float(start), float(end)))


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True)
class FeatureVector:
    """Features 1..10 in fixed order.

    ``rms_delay_spread`` is the second central moment of the power delay
    profile (units s^2); :attr:`rms_delay_spread_s` gives its square root.
    """

    rsl_dbm: float
    rfpr_db: float
    energy: float
    mean_excess_delay_s: float
    rms_delay_spread: float
    mean_magnitude: float
    variance_magnitude: float
    kurtosis: float
    amplitude: float
    pre_fp_variance: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise NlosError(f"feature {f.name} is not finite")
            object.__setattr__(self, f.name, value)

    @property
    def rms_delay_spread_s(self) -> float:
        return math.sqrt(self.rms_delay_spread)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def select(self, indices) -> np.ndarray:
        """Values of the given 1-based feature indices."""
        values = astuple(self)
        return np.array([values[i - 1] for i in indices], dtype=float)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != N_FEATURES:
            raise NlosError(f"expected {N_FEATURES} feature values, got {len(values)}")
        return cls(*values)


# ---------------------------------------------------------------- diagnostics

def compute_rsl(d: ChannelDiagnostics) -> float:
    """Received signal level in dBm from CIR power and preamble count."""
    if d.cir_power_C <= 0 or d.preamble_count_N <= 0:
        raise DiagnosticsError("invalid diagnostics: C and N must be > 0")
    return 10.0 * math.log10(d.cir_power_C * 2.0**17 / d.preamble_count_N**2) - d.prf_constant_A


def _first_path_power(d: ChannelDiagnostics) -> float:
    power = sum(f * f for f in d.first_path_amps_F)
    if power <= 0:
        raise DiagnosticsError("no first path amplitude")
    return power


def compute_fsl(d: ChannelDiagnostics) -> float:
    """First-path signal level in dBm from the three first-path amplitudes."""
    if d.preamble_count_N <= 0:
        raise DiagnosticsError("invalid diagnostics: N must be > 0")
    return 10.0 * math.log10(_first_path_power(d) / d.preamble_count_N**2) - d.prf_constant_A


def compute_rfpr(d: ChannelDiagnostics) -> float:
    """Received-to-first-path level ratio in dB.

    Evaluated in the form where N and A cancel analytically, so the result
    does not depend on the PRF constant at all.
    """
    if d.cir_power_C <= 0 or d.preamble_count_N <= 0:
        raise DiagnosticsError("invalid diagnostics: C and N must be > 0")
    return 10.0 * math.log10(d.cir_power_C * 2.0**17 / _first_path_power(d))


# ------------------------------------------------------------ array integrals

def integration_weights(n: int, dt: float, rule: str = TRAPEZOID) -> np.ndarray:
    """Quadrature weights for ``n`` equally spaced samples."""
    if n < 1:
        raise EmptyWindowError()
    if rule == LEFT_RIEMANN:
        return np.full(n, dt)
    if rule == TRAPEZOID:
        if n < 2:
            raise EmptyWindowError("window too short for trapezoid rule")
        w = np.full(n, dt)
        w[0] = w[-1] = 0.5 * dt
        return w
    raise ConfigError(f"unknown integration rule {rule!r}")


def span(n: int, dt: float, rule: str = TRAPEZOID) -> float:
    """Length of the integration domain covered by ``n`` samples."""
    return n * dt if rule == LEFT_RIEMANN else (n - 1) * dt


def _prepare(x, dt, rule):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise EmptyWindowError()
    w = integration_weights(x.size, dt, rule)
    return x, w


def energy(x, dt: float, rule: str = TRAPEZOID) -> float:
    x, w = _prepare(x, dt, rule)
    return float(np.dot(w, x * x))


def mean_excess_delay(x, dt: float, rule: str = TRAPEZOID, t0: float = 0.0) -> float:
    """Power-weighted mean time; sample ``k`` sits at ``t0 + k*dt``."""
    x, w = _prepare(x, dt, rule)
    p = w * x * x
    eps = p.sum()
    if not eps > 0:
        raise DegenerateSignalError("degenerate signal: zero energy")
    t = t0 + np.arange(x.size) * dt
    return float(np.dot(t, p) / eps)


def rms_delay_spread(x, dt: float, rule: str = TRAPEZOID, t0: float = 0.0) -> float:
    """Power-weighted second central moment of time (no square root)."""
    x, w = _prepare(x, dt, rule)
    p = w * x * x
    eps = p.sum()
    if not eps > 0:
        raise DegenerateSignalError("degenerate signal: zero energy")
    t = t0 + np.arange(x.size) * dt
    tau = np.dot(t, p) / eps
    return float(np.dot((t - tau) ** 2, p) / eps)


def mean_magnitude(x, dt: float, rule: str = TRAPEZOID) -> float:
    x, w = _prepare(x, dt, rule)
    return float(np.dot(w, x) / span(x.size, dt, rule))


def variance_magnitude(x, dt: float, rule: str = TRAPEZOID) -> float:
    x, w = _prepare(x, dt, rule)
    T = span(x.size, dt, rule)
    mu = np.dot(w, x) / T
    return float(np.dot(w, (x - mu) ** 2) / T)


def kurtosis(x, dt: float = 1.0, rule: str = TRAPEZOID) -> float:
    """Non-excess kurtosis (Gaussian -> 3) of the sequence ``x``."""
    x, w = _prepare(x, dt, rule)
    T = span(x.size, dt, rule)
    mu = np.dot(w, x) / T
    dev = x - mu
    var = np.dot(w, dev * dev) / T
    scale = float(np.max(np.abs(x)))
    if not var > (1e-12 * scale) ** 2:
        raise DegenerateSignalError("degenerate signal (zero variance)")
    return float(np.dot(w, dev**4) / (var * var * T))


def amplitude(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyWindowError()
    return float(np.max(x))


# ------------------------------------------------------------ waveform level

def analysis_slice(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> slice:
    """Index range of the analysis window, tracking the first path."""
    start, end = cfg.analysis_window
    t_fp = w.first_path_time
    lo, hi = window_indices(len(w), w.sample_period, t_fp + start, t_fp + end)
    if hi - lo < (2 if cfg.integration_rule == TRAPEZOID else 1):
        raise EmptyWindowError()
    return slice(lo, hi)


def _windowed(w: Waveform, cfg: FeatureConfig):
    sl = analysis_slice(w, cfg)
    return w.samples[sl], sl.start * w.sample_period


def compute_energy(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, _ = _windowed(w, cfg)
    return energy(x, w.sample_period, cfg.integration_rule)


def compute_mean_excess_delay(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    """Mean excess delay in seconds, measured from the waveform time origin."""
    x, t0 = _windowed(w, cfg)
    return mean_excess_delay(x, w.sample_period, cfg.integration_rule, t0)


def compute_rms_delay_spread(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, t0 = _windowed(w, cfg)
    return rms_delay_spread(x, w.sample_period, cfg.integration_rule, t0)


def compute_mean_magnitude(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, _ = _windowed(w, cfg)
    return mean_magnitude(x, w.sample_period, cfg.integration_rule)


def compute_variance_magnitude(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, _ = _windowed(w, cfg)
    return variance_magnitude(x, w.sample_period, cfg.integration_rule)


def compute_kurtosis(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, _ = _windowed(w, cfg)
    return kurtosis(x, w.sample_period, cfg.integration_rule)


def compute_amplitude(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    x, _ = _windowed(w, cfg)
    return amplitude(x)


def pre_fp_slice(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> slice:
    """Samples in ``[T_FP - tau_s, T_FP)``, clipped at the record start."""
    lo, hi = window_indices(len(w), w.sample_period, w.first_path_time - cfg.tau_s, w.first_path_time)
    if hi - lo < 2:
        raise DegenerateSignalError("insufficient pre-FP samples")
    return slice(lo, hi)


def compute_pre_fp_variance(w: Waveform, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    """Variance of ``|r|`` over the ``tau_s`` span preceding the first path.

    A clipped span (first path close to the record start) is normalized by
    its actual length.
    """
    x = w.samples[pre_fp_slice(w, cfg)]
    return variance_magnitude(x, w.sample_period, cfg.integration_rule)


_EXTRACTORS: Tuple[Tuple[str, Callable], ...] = (
    ("rsl_dbm", lambda rec, cfg: compute_rsl(rec.diagnostics)),
    ("rfpr_db", lambda rec, cfg: compute_rfpr(rec.diagnostics)),
    ("energy", lambda rec, cfg: compute_energy(rec.waveform, cfg)),
    ("mean_excess_delay_s", lambda rec, cfg: compute_mean_excess_delay(rec.waveform, cfg)),
    ("rms_delay_spread", lambda rec, cfg: compute_rms_delay_spread(rec.waveform, cfg)),
    ("mean_magnitude", lambda rec, cfg: compute_mean_magnitude(rec.waveform, cfg)),
    ("variance_magnitude", lambda rec, cfg: compute_variance_magnitude(rec.waveform, cfg)),
    ("kurtosis", lambda rec, cfg: compute_kurtosis(rec.waveform, cfg)),
    ("amplitude", lambda rec, cfg: compute_amplitude(rec.waveform, cfg)),
    ("pre_fp_variance", lambda rec, cfg: compute_pre_fp_variance(rec.waveform, cfg)),
)


def extract_features(rec: RangingRecord, cfg: Optional[FeatureConfig] = None) -> FeatureVector:
    """Compute features 1..10 for one record.

    Raises :class:`FeatureError` naming the failing feature's index.
    """
    cfg = cfg or DEFAULT_CONFIG
    values = []
    for index, (name, fn) in enumerate(_EXTRACTORS, start=1):
        try:
            values.append(fn(rec, cfg))
        except NlosError as exc:
            raise FeatureError(index, name, exc) from exc
    return FeatureVector(*values)


def feature_matrix(records, cfg: Optional[FeatureConfig] = None) -> np.ndarray:
    """Stack feature vectors of many records into an ``(n, 10)`` array."""
    rows = [extract_features(rec, cfg).as_array() for rec in records]
    return np.array(rows, dtype=float).reshape(len(rows), N_FEATURES)
