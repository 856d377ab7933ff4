"""Data model for channel impulse responses, radio diagnostics and labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import DiagnosticsError, EmptyWindowError, InvalidWaveformError, NlosError

# slack used when converting window edges in seconds to sample indices
_INDEX_EPS = 1e-9


class PropagationClass(Enum):
    LOS = "LOS"
    DP_NLOS = "DP_NLOS"
    NDP_NLOS = "NDP_NLOS"

    @property
    def order(self) -> int:
        """0, 1, 2 for LOS, DP_NLOS, NDP_NLOS (increasing severity)."""
        return _CLASS_ORDER[self]

    @property
    def is_nlos(self) -> bool:
        return self is not PropagationClass.LOS

    @classmethod
    def parse(cls, text: str) -> "PropagationClass":
        try:
            return cls(text)
        except ValueError:
            raise NlosError(
                f"bad label {text!r}; expected one of LOS, DP_NLOS, NDP_NLOS"
            ) from None


_CLASS_ORDER = {
    PropagationClass.LOS: 0,
    PropagationClass.DP_NLOS: 1,
    PropagationClass.NDP_NLOS: 2,
}
CLASSES = tuple(PropagationClass)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled CIR magnitude with a detected first-path index.

    Time origin is sample 0 (start of the recorded window); the first path
    arrives at ``first_path_index * sample_period``.
    """

    samples: np.ndarray
    sample_period: float
    first_path_index: int

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidWaveformError("waveform needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidWaveformError("waveform samples must be finite")
        if np.any(samples < 0):
            raise InvalidWaveformError("waveform samples are magnitudes and must be >= 0")
        period = float(self.sample_period)
        if not (math.isfinite(period) and period > 0):
            raise InvalidWaveformError("sample_period must be > 0")
        fp = self.first_path_index
        if isinstance(fp, (bool, np.bool_)) or int(fp) != fp:
            raise InvalidWaveformError("first_path_index must be an integer")
        fp = int(fp)
        if not 0 <= fp < samples.size:
            raise InvalidWaveformError(
                f"first_path_index {fp} outside [0, {samples.size})"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_period", period)
        object.__setattr__(self, "first_path_index", fp)

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (
            self.sample_period == other.sample_period
            and self.first_path_index == other.first_path_index
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def duration(self) -> float:
        return self.samples.size * self.sample_period

    @property
    def first_path_time(self) -> float:
        return self.first_path_index * self.sample_period

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.sample_period

    @classmethod
    def from_complex_taps(cls, real, imag, sample_period, first_path_index):
        """Build a magnitude waveform from complex accumulator taps."""
        mag = np.hypot(np.asarray(real, dtype=float), np.asarray(imag, dtype=float))
        return cls(mag, sample_period, first_path_index)


@dataclass(frozen=True)
class ChannelDiagnostics:
    """Register-level power quantities reported alongside a CIR.

    ``cir_power_C`` and ``preamble_count_N`` feed the received level,
    ``first_path_amps_F`` the first-path level and ``prf_constant_A`` is the
    PRF dependent offset in dB.
    """

    cir_power_C: float
    preamble_count_N: float
    first_path_amps_F: Tuple[float, float, float]
    prf_constant_A: float

    def __post_init__(self):
        amps = tuple(float(f) for f in self.first_path_amps_F)
        if len(amps) != 3:
            raise DiagnosticsError("invalid diagnostics: exactly three first-path amplitudes needed")
        values = (self.cir_power_C, self.preamble_count_N, self.prf_constant_A) + amps
        if not all(math.isfinite(float(v)) for v in values):
            raise DiagnosticsError("invalid diagnostics: non-finite value")
        if self.preamble_count_N <= 0:
            raise DiagnosticsError("invalid diagnostics: preamble count N must be > 0")
        if self.cir_power_C < 0 or any(f < 0 for f in amps):
            raise DiagnosticsError("invalid diagnostics: C and F must be >= 0")
        object.__setattr__(self, "first_path_amps_F", amps)


@dataclass(frozen=True)
class RangingRecord:
    waveform: Waveform
    diagnostics: ChannelDiagnostics
    pair_id: str
    bias_m: Optional[float] = None
    label: Optional[PropagationClass] = None

    def __post_init__(self):
        if not isinstance(self.pair_id, str) or not self.pair_id:
            raise NlosError("pair_id must be a non-empty string")
        if self.bias_m is not None and not math.isfinite(self.bias_m):
            raise NlosError("bias_m must be finite")


def window_indices(n: int, period: float, start_s: float, end_s: float) -> Tuple[int, int]:
    """Half-open index range of samples with ``start_s <= k*period < end_s``, clipped."""
    if not start_s < end_s:
        raise NlosError("window start must precede window end")
    lo = math.ceil(start_s / period - _INDEX_EPS)
    hi = math.ceil(end_s / period - _INDEX_EPS)
    return max(lo, 0), min(hi, n)


def magnitude_window(w: Waveform, start_s: float, end_s: float) -> np.ndarray:
    """Samples whose time ``k * sample_period`` lies in ``[start_s, end_s)``."""
    lo, hi = window_indices(len(w), w.sample_period, start_s, end_s)
    if hi <= lo:
        raise EmptyWindowError()
    return w.samples[lo:hi]
