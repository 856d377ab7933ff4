"""Synthetic CIR generation from a multipath-plus-noise signal model.

A record is ``|sum_i a_i p(t - tau_i) + n(t)|`` sampled on a uniform grid,
with the first path located by a leading-edge threshold detector.  Scenario
presets mimic the three propagation regimes: a dominant direct path (LOS),
an attenuated but detectable direct path (DP-NLOS), and a direct path too
weak to detect so the receiver locks onto a reflection (NDP-NLOS).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .cir import ChannelDiagnostics, PropagationClass, RangingRecord, Waveform
from .errors import ConfigError, InvalidWaveformError, NoPathDetectedError

SPEED_OF_LIGHT = 299_792_458.0

GAUSSIAN_MONOCYCLE = "gaussian_monocycle"
RAISED_COSINE = "raised_cosine_envelope"

DEFAULT_NOISE_WINDOW = 16
DEFAULT_K_THRESHOLD = 6.0
STD_FLOOR = 1e-12

# diagnostics synthesis: accumulator magnitude = gain * N * sample value
ACCUMULATOR_GAIN = 100.0
DEFAULT_PRF_CONSTANT = 121.74

# gaussian tails beyond this many sigmas are dropped so far pulses never overlap
_MONOCYCLE_SUPPORT = 12.0


@dataclass(frozen=True)
class PulseSpec:
    """Transmitted pulse ``p``.

    For the monocycle ``width_s`` is the spacing of its two lobes; the
    positive lobe peaks (value 1) at the component delay.  For the raised
    cosine it is the full width at half maximum of the envelope.
    """

    shape: str = GAUSSIAN_MONOCYCLE
    width_s: float = 1e-9

    def __post_init__(self):
        if self.shape not in (GAUSSIAN_MONOCYCLE, RAISED_COSINE):
            raise ConfigError(f"unknown pulse shape {self.shape!r}")
        if not self.width_s > 0:
            raise ConfigError("pulse width must be > 0")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape == GAUSSIAN_MONOCYCLE:
            sigma = 0.5 * self.width_s
            u = (t - sigma) / sigma
            out = -u * np.exp(0.5 - 0.5 * u * u)
            out[np.abs(u) > _MONOCYCLE_SUPPORT] = 0.0
            return out
        w = self.width_s
        out = 0.5 * (1.0 + np.cos(np.pi * t / w))
        out[np.abs(t) >= w] = 0.0
        return out

    def energy(self) -> float:
        """Closed-form integral of ``p(t)**2``."""
        if self.shape == GAUSSIAN_MONOCYCLE:
            sigma = 0.5 * self.width_s
            return math.e * math.sqrt(math.pi) * sigma / 2.0
        return 0.75 * self.width_s


@dataclass(frozen=True)
class MultipathSpec:
    """Components ``(amplitude, delay)`` of the multipath sum plus noise.

    Noise is circular complex Gaussian, ``noise_sigma`` per quadrature
    component, as in the complex accumulator taps of a coherent receiver.
    """

    components: Tuple[Tuple[float, float], ...]
    pulse: PulseSpec = PulseSpec()
    noise_sigma: float = 0.0
    duration_s: float = 180e-9
    sample_period_s: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        comps = tuple((float(a), float(tau)) for a, tau in self.components)
        if not comps:
            raise ConfigError("at least one multipath component required")
        for _, tau in comps:
            if not 0 <= tau < self.duration_s:
                raise ConfigError(f"component delay {tau} outside [0, duration)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not self.sample_period_s > 0:
            raise ConfigError("sample_period_s must be > 0")
        object.__setattr__(self, "components", comps)

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration_s / self.sample_period_s + 1e-9))


def detect_first_path(
    samples,
    noise_floor_window: int = DEFAULT_NOISE_WINDOW,
    k_threshold: float = DEFAULT_K_THRESHOLD,
) -> int:
    """Leading-edge detector: first index above ``mean + k * std`` of the noise floor.

    The noise floor statistics come from the leading ``noise_floor_window``
    samples.  A weak direct path that stays under the threshold is skipped,
    which is exactly how a real receiver ends up locking onto a reflection.
    """
    x = np.asarray(samples, dtype=float)
    if not 2 <= noise_floor_window < x.size:
        raise ConfigError("noise_floor_window must be >= 2 and shorter than the record")
    head = x[:noise_floor_window]
    std = max(float(np.std(head)), STD_FLOOR)
    threshold = float(np.mean(head)) + k_threshold * std
    above = np.flatnonzero(x[noise_floor_window:] > threshold)
    if above.size == 0:
        raise NoPathDetectedError()
    return int(above[0]) + noise_floor_window


def render_samples(spec: MultipathSpec) -> np.ndarray:
    n = spec.n_samples
    if n < 2:
        raise InvalidWaveformError("duration/period yields fewer than 2 samples")
    t = np.arange(n) * spec.sample_period_s
    signal = np.zeros(n, dtype=complex)
    for a, tau in spec.components:
        signal += a * spec.pulse(t - tau)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(0.0, spec.noise_sigma, (2, n))
        signal += noise[0] + 1j * noise[1]
    return np.abs(signal)


def render_cir(
    spec: MultipathSpec,
    noise_floor_window: int = DEFAULT_NOISE_WINDOW,
    k_threshold: float = DEFAULT_K_THRESHOLD,
) -> Waveform:
    """Render the magnitude CIR and locate its first path.

    Records too short for the detector, or whose leading window already
    holds the signal (nothing crosses the threshold), fall back to the
    index of the strongest sample.
    """
    samples = render_samples(spec)
    try:
        fp = detect_first_path(samples, noise_floor_window, k_threshold)
    except (NoPathDetectedError, ConfigError):
        fp = int(np.argmax(samples))
    return Waveform(samples, spec.sample_period_s, fp)


def synthesize_diagnostics(
    w: Waveform,
    preamble_count: int = 1024,
    prf_constant: float = DEFAULT_PRF_CONSTANT,
    gain: float = ACCUMULATOR_GAIN,
) -> ChannelDiagnostics:
    """Register values consistent with a rendered waveform.

    The accumulator is modelled as ``gain * N * |r|``; CIR power sums its
    square over the whole record (scaled by 2**-17) and the first-path
    amplitudes are the three taps starting at the first path.
    """
    acc = gain * preamble_count * w.samples
    c = float(np.sum(acc * acc)) / 2.0**17
    fp = w.first_path_index
    taps = [float(acc[i]) if i < acc.size else 0.0 for i in range(fp, fp + 3)]
    return ChannelDiagnostics(c, float(preamble_count), tuple(taps), prf_constant)


Range = Tuple[float, float]
Seed = Union[int, Sequence[int]]


def _check_range(name, r):
    lo, hi = r
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"preset range {name} is invalid: {r}")


@dataclass(frozen=True)
class ScenarioPreset:
    """Parameter ranges for one propagation regime.

    The first strong component (the direct path when ``direct_detectable``,
    otherwise the first reflection) arrives at ``lead_delay_s`` with
    amplitude ``lead_amplitude``.  Levels in dB are relative to that
    component.  ``excess_delay_s`` is extra propagation delay of the direct
    path, which only enters the ranging bias.
    """

    label: PropagationClass
    direct_detectable: bool
    lead_amplitude: Range
    lead_delay_s: Range = (44e-9, 50e-9)
    direct_level_db: Range = (0.0, 0.0)
    excess_delay_s: Range = (0.0, 0.0)
    gap_s: Range = (2e-9, 6e-9)
    reflection_level_db: Range = (-12.0, -6.0)
    reflection_count: Tuple[int, int] = (6, 12)
    reflection_span_s: Range = (30e-9, 70e-9)
    decay_s: Range = (10e-9, 25e-9)
    early_count: Tuple[int, int] = (0, 0)
    early_snr_db: Range = (3.0, 8.0)
    noise_sigma: Range = (0.004, 0.006)
    los_bias_m: Range = (-0.03, 0.04)
    preamble_count: Tuple[int, int] = (900, 1024)
    pulse: PulseSpec = PulseSpec()
    duration_s: float = 180e-9
    sample_period_s: float = 1e-9

    def __post_init__(self):
        for name in (
            "lead_amplitude", "lead_delay_s", "direct_level_db", "excess_delay_s",
            "gap_s", "reflection_level_db", "reflection_count", "reflection_span_s",
            "decay_s", "early_count", "early_snr_db", "noise_sigma", "los_bias_m",
            "preamble_count",
        ):
            _check_range(name, getattr(self, name))
        if self.lead_amplitude[0] <= 0 or self.noise_sigma[0] < 0:
            raise ConfigError("amplitudes must be > 0 and noise >= 0")
        if self.lead_delay_s[0] - (0 if self.direct_detectable else self.gap_s[1]) < 0:
            raise ConfigError("direct path would arrive before the record start")
        if self.lead_delay_s[1] >= self.duration_s:
            raise ConfigError("lead component must lie inside the record")


PRESETS = {
    "los": ScenarioPreset(
        label=PropagationClass.LOS,
        direct_detectable=True,
        lead_amplitude=(0.6, 1.0),
        lead_delay_s=(37e-9, 42e-9),
        gap_s=(3e-9, 8e-9),
        reflection_level_db=(-15.0, -6.0),
    ),
    "dp_nlos": ScenarioPreset(
        label=PropagationClass.DP_NLOS,
        direct_detectable=True,
        lead_amplitude=(0.2, 0.45),
        lead_delay_s=(37e-9, 42e-9),
        excess_delay_s=(0.3e-9, 2.0e-9),
        gap_s=(1e-9, 4e-9),
        reflection_level_db=(2.0, 8.0),
    ),
    "ndp_nlos": ScenarioPreset(
        label=PropagationClass.NDP_NLOS,
        direct_detectable=False,
        lead_amplitude=(0.15, 0.25),
        direct_level_db=(-28.0, -24.0),
        excess_delay_s=(0.3e-9, 2.0e-9),
        gap_s=(12e-9, 19e-9),
        reflection_level_db=(0.0, 0.0),
        early_count=(4, 6),
        early_snr_db=(9.0, 11.0),
    ),
}

PRESET_BY_CLASS = {p.label: p for p in PRESETS.values()}


@dataclass(frozen=True)
class SyntheticCase:
    """One generated record with its ground truth."""

    waveform: Waveform
    label: PropagationClass
    spec: MultipathSpec
    direct_delay_s: float
    bias_m: float
    diagnostics: ChannelDiagnostics

    @property
    def direct_index(self) -> int:
        return int(round(self.direct_delay_s / self.spec.sample_period_s))

    def to_record(self, pair_id: str) -> RangingRecord:
        return RangingRecord(self.waveform, self.diagnostics, pair_id, self.bias_m, self.label)


def _uniform(rng, r):
    return float(rng.uniform(r[0], r[1])) if r[1] > r[0] else float(r[0])


def _integer(rng, r):
    return int(rng.integers(r[0], r[1] + 1))


def _db(level):
    return 10.0 ** (level / 20.0)


def draw_case(preset: ScenarioPreset, rng: np.random.Generator) -> SyntheticCase:
    """Draw one record's parameters from ``preset`` and render it."""
    lead_amp = _uniform(rng, preset.lead_amplitude)
    lead_delay = _uniform(rng, preset.lead_delay_s)
    gap = _uniform(rng, preset.gap_s)
    excess = _uniform(rng, preset.excess_delay_s)
    components: List[Tuple[float, float]] = []
    if preset.direct_detectable:
        direct_delay = lead_delay
        direct_amp = lead_amp
        first_reflection = lead_delay + gap
        lock_delay = 0.0
    else:
        direct_delay = lead_delay - gap
        direct_amp = lead_amp * _db(_uniform(rng, preset.direct_level_db))
        first_reflection = lead_delay
        lock_delay = gap
    components.append((direct_amp, direct_delay))

    reflection_amp = lead_amp * _db(_uniform(rng, preset.reflection_level_db))
    decay = _uniform(rng, preset.decay_s)
    spread = _uniform(rng, preset.reflection_span_s)
    count = _integer(rng, preset.reflection_count)
    offsets = np.sort(rng.uniform(0.0, spread, count - 1)) if count > 1 else np.empty(0)
    components.append((reflection_amp, first_reflection))
    for off in offsets:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        jitter = rng.uniform(0.5, 1.0)
        components.append((sign * reflection_amp * jitter * math.exp(-off / decay), first_reflection + off))

    noise = _uniform(rng, preset.noise_sigma)
    n_early = _integer(rng, preset.early_count)
    if n_early:
        # spread over the gap on a jittered grid so the precursors rarely pile up
        lo, hi = direct_delay + 2.5e-9, first_reflection - 1.5e-9
        step = (hi - lo) / n_early
        for k in range(n_early):
            delay = lo + step * (k + rng.uniform(0.2, 0.8))
            sign = 1.0 if rng.random() < 0.5 else -1.0
            components.append((sign * noise * _db(_uniform(rng, preset.early_snr_db)), delay))

    components = [(a, tau) for a, tau in components if tau < preset.duration_s]
    seed = int(rng.integers(0, 2**63 - 1))
    spec = MultipathSpec(
        tuple(components), preset.pulse, noise, preset.duration_s, preset.sample_period_s, seed
    )
    waveform = render_cir(spec)
    if preset.label is PropagationClass.LOS:
        bias = _uniform(rng, preset.los_bias_m)
    else:
        bias = SPEED_OF_LIGHT * (excess + lock_delay)
    diagnostics = synthesize_diagnostics(waveform, _integer(rng, preset.preamble_count))
    return SyntheticCase(waveform, preset.label, spec, direct_delay, bias, diagnostics)


def sample_cases(preset: ScenarioPreset, n: int, seed: Seed) -> List[SyntheticCase]:
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return [draw_case(preset, rng) for _ in range(n)]


def sample_scenario(preset: ScenarioPreset, n: int, seed: Seed) -> List[Tuple[Waveform, PropagationClass]]:
    """``n`` labeled waveforms drawn from ``preset``; deterministic given ``seed``."""
    return [(c.waveform, c.label) for c in sample_cases(preset, n, seed)]


def sample_records(
    preset: ScenarioPreset,
    n: int,
    seed: Seed,
    pairs: int = 1,
    pair_prefix: Optional[str] = None,
) -> List[RangingRecord]:
    """Labeled records split into ``pairs`` consecutive groups of pair ids."""
    if pairs < 1 or pairs > n:
        raise ConfigError("pairs must be between 1 and n")
    prefix = pair_prefix or preset.label.value.lower()
    cases = sample_cases(preset, n, seed)
    bounds = np.linspace(0, n, pairs + 1).round().astype(int)
    records = []
    for p in range(pairs):
        for case in cases[bounds[p]:bounds[p + 1]]:
            records.append(case.to_record(f"{prefix}-{p:03d}"))
    return records


def benchmark_records(per_class: int = 1000, pairs_per_class: int = 10, seed: int = 0) -> List[RangingRecord]:
    """The three presets, ``per_class`` records each, grouped into pairs.

    Same records as ``synth --preset all`` with matching count, pairs and seed.
    """
    records = []
    for offset, name in enumerate(PRESETS):
        records += sample_records(PRESETS[name], per_class, [seed, offset], pairs_per_class)
    return records
