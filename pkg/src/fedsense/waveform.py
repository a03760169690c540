"""Radar baseband waveforms: CW, FMCW, pulse, chirp, phase-coded.

Parameter ranges (uniform draws, relative to the sampling rate fs and the
window length M):

* CW / pulse / phase-coded carrier offset in [-fs/4, fs/4]
* chirp and FMCW sweep bandwidth in [fs/20, fs/4]; FMCW period in [M/8, M/2]
* pulse period in [M/10, M/2] with duty cycle in [0.5, 1); the duty floor
  keeps per-window energy comparable across kinds
* phase codes: Barker-13 or a random +-1 code of length 13, chip length in
  [10, 100] samples

Every synthesized window is normalized to unit average power.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

BARKER13 = (1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1)
CODE_LENGTH = 13


class WaveformKind(enum.Enum):
    CW = "cw"
    FMCW = "fmcw"
    PULSE = "pulse"
    CHIRP = "chirp"
    PHASE_CODED = "phase_coded"


@dataclass(frozen=True)
class WaveformSpec:
    """Fully determines one baseband window; synthesis adds no randomness."""

    kind: WaveformKind
    offset_hz: float = 0.0       # carrier offset
    bandwidth_hz: float = 0.0    # sweep bandwidth (chirp, FMCW)
    period_samples: int = 1      # sweep/pulse repetition period
    duty: float = 1.0            # pulse on-fraction
    chip_samples: int = 1        # phase-code chip length
    code: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.period_samples < 1:
            raise ValueError("period_samples must be >= 1")
        if not 0.0 < self.duty <= 1.0:
            raise ValueError("duty must be in (0, 1]")
        if self.chip_samples < 1:
            raise ValueError("chip_samples must be >= 1")
        if self.kind is WaveformKind.PHASE_CODED and not self.code:
            raise ValueError("phase-coded spec needs a code")

    def validate_band(self, fs_hz: float) -> None:
        """Check every instantaneous frequency stays inside (-fs/2, fs/2)."""
        half = fs_hz / 2.0
        lo = self.offset_hz - self.bandwidth_hz / 2.0
        hi = self.offset_hz + self.bandwidth_hz / 2.0
        if not (-half < lo and hi < half):
            raise ValueError(
                f"spec occupies [{lo:.3g}, {hi:.3g}] Hz outside (+-{half:.3g})"
            )


def random_spec(rng: np.random.Generator, m: int, fs_hz: float) -> WaveformSpec:
    """Draw a waveform kind uniformly and its parameters from the ranges above."""
    kind = list(WaveformKind)[rng.integers(0, len(WaveformKind))]
    if kind is WaveformKind.CW:
        return WaveformSpec(kind, offset_hz=rng.uniform(-fs_hz / 4, fs_hz / 4))
    if kind is WaveformKind.CHIRP:
        return WaveformSpec(kind, bandwidth_hz=rng.uniform(fs_hz / 20, fs_hz / 4))
    if kind is WaveformKind.FMCW:
        return WaveformSpec(
            kind,
            bandwidth_hz=rng.uniform(fs_hz / 20, fs_hz / 4),
            period_samples=int(rng.integers(max(1, m // 8), max(2, m // 2) + 1)),
        )
    if kind is WaveformKind.PULSE:
        return WaveformSpec(
            kind,
            offset_hz=rng.uniform(-fs_hz / 4, fs_hz / 4),
            period_samples=int(rng.integers(max(1, m // 10), max(2, m // 2) + 1)),
            duty=float(rng.uniform(0.5, 1.0)),
        )
    code = BARKER13 if rng.random() < 0.5 else tuple(
        int(c) for c in rng.choice([-1, 1], size=CODE_LENGTH)
    )
    return WaveformSpec(
        kind,
        offset_hz=rng.uniform(-fs_hz / 4, fs_hz / 4),
        chip_samples=int(rng.integers(10, 101)),
        code=code,
    )


def synthesize(spec: WaveformSpec, m: int, fs_hz: float) -> np.ndarray:
    """Produce the length-``m`` complex window for ``spec``, unit average power."""
    if m < 1:
        raise ValueError("need m >= 1")
    spec.validate_band(fs_hz)
    n = np.arange(m)
    if spec.kind is WaveformKind.CW:
        s = np.exp(2j * np.pi * spec.offset_hz * n / fs_hz)
    elif spec.kind is WaveformKind.CHIRP:
        # single sweep across the window, centered on the carrier offset
        t = n / fs_hz
        t_window = m / fs_hz
        f_start = spec.offset_hz - spec.bandwidth_hz / 2.0
        phase = 2.0 * np.pi * (
            f_start * t + spec.bandwidth_hz * t**2 / (2.0 * t_window)
        )
        s = np.exp(1j * phase)
    elif spec.kind is WaveformKind.FMCW:
        # sawtooth instantaneous frequency, phase kept continuous
        tau = n % spec.period_samples
        freq = spec.offset_hz - spec.bandwidth_hz / 2.0 + (
            spec.bandwidth_hz * tau / spec.period_samples
        )
        phase = np.concatenate(([0.0], 2.0 * np.pi * np.cumsum(freq[:-1]) / fs_hz))
        s = np.exp(1j * phase)
    elif spec.kind is WaveformKind.PULSE:
        carrier = np.exp(2j * np.pi * spec.offset_hz * n / fs_hz)
        gate = (n % spec.period_samples) < spec.duty * spec.period_samples
        s = carrier * gate
    else:  # phase-coded
        carrier = np.exp(2j * np.pi * spec.offset_hz * n / fs_hz)
        chips = (n // spec.chip_samples) % len(spec.code)
        s = carrier * np.asarray(spec.code, dtype=float)[chips]
    power = np.mean(np.abs(s) ** 2)
    return s / np.sqrt(power)
