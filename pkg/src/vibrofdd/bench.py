"""Seeded synthetic vibration for the three fault classes.

Signatures follow common vibration-diagnostics conventions:

* misalignment: strong 2x shaft harmonic (1.0) with a weaker 1x (0.4);
* structural looseness: harmonics 1x..6x decaying as 0.8 * 0.7**(k-1),
  plus a 0.5x subharmonic (0.3);
* bearing problem: impulses at 3.57x shaft rate, each exciting a ring at
  ``ring_hz`` that decays at ``ring_decay`` 1/s.

All three axes carry the same waveform scaled by (1.0, 0.8, 0.6) plus
independent white Gaussian noise.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with
``(seed, stream...)`` entropy, so any window can be regenerated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadSpec
from .ingest import DEFAULT_RATE_HZ, DEFAULT_WINDOW_LEN, FaultClass, VibrationWindow
from .parallel import pmap

DEFAULT_SHAFT_HZ = 1750.0 / 60.0
AXIS_GAINS = (1.0, 0.8, 0.6)
BEARING_ORDER = 3.57
DEFAULT_COUNTS = (42, 118, 80)
SHAFT_JITTER = 0.02


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


@dataclass(frozen=True)
class SynthSpec:
    fault: FaultClass
    shaft_hz: float = DEFAULT_SHAFT_HZ
    rate_hz: float = DEFAULT_RATE_HZ
    duration_s: float = DEFAULT_WINDOW_LEN / DEFAULT_RATE_HZ
    noise_sigma: float = 0.1
    seed: int = 0
    window_len: int = DEFAULT_WINDOW_LEN
    ring_hz: float = 800.0
    ring_decay: float = 200.0

    def validate(self) -> None:
        if not self.shaft_hz > 0 or not self.rate_hz > 0 or not self.duration_s > 0:
            raise BadSpec("shaft_hz, rate_hz and duration_s must be positive")
        if not self.rate_hz > 4 * self.shaft_hz:
            raise BadSpec(f"rate {self.rate_hz} Hz must exceed 4x shaft {self.shaft_hz} Hz")
        if self.n_samples < self.window_len:
            raise BadSpec(f"{self.n_samples} samples is shorter than one {self.window_len}-sample window")
        if self.noise_sigma < 0:
            raise BadSpec("noise_sigma must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.rate_hz))


def _harmonics(t, f0, orders_amps, rng):
    out = np.zeros_like(t)
    for order, amp in orders_amps:
        out += amp * np.sin(2 * np.pi * order * f0 * t + rng.uniform(0, 2 * np.pi))
    return out


def _bearing(n, spec: SynthSpec, rng) -> np.ndarray:
    rate = spec.rate_hz
    period = rate / (BEARING_ORDER * spec.shaft_hz)  # samples between impulses
    tail = int(math.ceil(rate * 10.0 / spec.ring_decay))
    tau = np.arange(tail) / rate
    # time measured from the sample where each impulse lands, so a ring at
    # exactly Nyquist still samples as an alternating sequence
    ring = np.exp(-spec.ring_decay * tau) * np.cos(2 * np.pi * spec.ring_hz * tau)
    out = np.zeros(n + tail)
    start = rng.uniform(0, period)
    for k in range(int(math.ceil(n / period)) + 1):
        i = int(round(start + k * period))
        if i >= n:
            break
        out[i:i + tail] += ring
    return out[:n]


def clean_signal(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_samples
    t = np.arange(n) / spec.rate_hz
    f0 = spec.shaft_hz
    if spec.fault is FaultClass.MISALIGNMENT:
        return _harmonics(t, f0, [(2, 1.0), (1, 0.4)], rng)
    if spec.fault is FaultClass.STRUCTURAL_LOOSENESS:
        series = [(k, 0.8 * 0.7 ** (k - 1)) for k in range(1, 7)] + [(0.5, 0.3)]
        return _harmonics(t, f0, series, rng)
    return _bearing(n, spec, rng)


def synthesize_axes(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-length x, y, z signals for ``spec``."""
    spec.validate()
    rng = rng_for(spec.seed, int(spec.fault))
    base = clean_signal(spec, rng)
    axes = []
    for gain in AXIS_GAINS:
        noise = rng.normal(0.0, spec.noise_sigma, size=len(base)) if spec.noise_sigma > 0 else 0.0
        axes.append(gain * base + noise)
    return tuple(axes)


def synthesize(spec: SynthSpec) -> list[VibrationWindow]:
    x, y, z = synthesize_axes(spec)
    w = spec.window_len
    return [
        VibrationWindow(x[i:i + w], y[i:i + w], z[i:i + w], spec.rate_hz, spec.fault)
        for i in range(0, len(x) - w + 1, w)
    ]


def window_spec(base: SynthSpec, fault: FaultClass, index: int, seed: int,
                jitter: float = SHAFT_JITTER) -> SynthSpec:
    """Spec for one dataset window: jittered shaft speed, its own noise stream."""
    rng = rng_for(seed, 1000 + int(fault), index)
    factor = 1.0 + rng.uniform(-jitter, jitter)
    child = int(rng.integers(0, 2**63 - 1))
    return replace(
        base,
        fault=fault,
        shaft_hz=base.shaft_hz * factor,
        duration_s=base.window_len / base.rate_hz,
        seed=child,
    )


def make_dataset(counts=DEFAULT_COUNTS, base: SynthSpec | None = None, seed: int = 0,
                 jitter: float = SHAFT_JITTER) -> list[VibrationWindow]:
    """Labeled windows, ``counts[c]`` per class in class-code order.

    Each window gets its shaft speed scaled by a uniform factor in
    ``1 +- jitter`` and an independent noise stream keyed by
    ``(seed, class, index)``.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != len(FaultClass) or any(c < 1 for c in counts):
        raise BadSpec(f"need one positive count per class, got {counts}")
    base = base or SynthSpec(FaultClass.MISALIGNMENT)
    jobs = [window_spec(base, fault, i, seed, jitter) for fault, n in zip(FaultClass, counts) for i in range(n)]
    for j in jobs:
        j.validate()
    return [w[0] for w in pmap(synthesize, jobs)]
