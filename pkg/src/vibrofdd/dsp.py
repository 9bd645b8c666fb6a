"""Spectra, differential features, wavelet denoising and Welch PSD."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadLength, BadSegment, ShapeMismatch, TooFewBins
from .ingest import VibrationWindow, is_power_of_two

PSD_FLOOR_DB = -300.0


@dataclass(frozen=True)
class Spectrum:
    """Magnitudes on a uniform normalized-frequency grid."""

    freqs: np.ndarray
    values: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def __len__(self) -> int:
        return len(self.values)


class WaveletFamily(enum.Enum):
    HAAR = "haar"
    DB4 = "db4"


class Shrinkage(enum.Enum):
    SOFT = "soft"
    HARD = "hard"


class ThresholdRule(enum.Enum):
    UNIVERSAL = "universal"


_SQRT_HALF = math.sqrt(0.5)

# Scaling (low-pass) filters; the high-pass partner is derived by the
# quadrature-mirror relation in _filters().
_LOWPASS = {
    WaveletFamily.HAAR: np.array([_SQRT_HALF, _SQRT_HALF]),
    WaveletFamily.DB4: np.array([
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ]),
}


def _filters(family: WaveletFamily) -> tuple[np.ndarray, np.ndarray]:
    h = _LOWPASS[family]
    g = h[::-1] * (-1.0) ** np.arange(len(h))
    return h, g


@dataclass(frozen=True)
class WaveletConfig:
    family: WaveletFamily = WaveletFamily.DB4
    levels: int = 3
    threshold_rule: ThresholdRule = ThresholdRule.UNIVERSAL
    shrinkage: Shrinkage = Shrinkage.SOFT

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be positive")


@dataclass
class Pyramid:
    """DWT coefficients: deepest approximation plus details, finest first."""

    approx: np.ndarray
    details: list[np.ndarray] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def signal_length(self) -> int:
        return len(self.approx) << self.levels

    def energy(self) -> float:
        return float(np.sum(self.approx**2) + sum(np.sum(d**2) for d in self.details))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    provenance: str = "denoised"

    def __len__(self) -> int:
        return len(self.values)


# -- spectra ------------------------------------------------------------------


def fft_magnitude(signal, rate_hz: float = 1600.0) -> Spectrum:
    """One-sided ``|DFT| / N`` on normalized frequency ``[0, 0.5]``.

    ``rate_hz`` converts back to Hz via ``freqs * rate_hz``; the grid itself
    is always normalized.
    """
    x = np.asarray(signal, dtype=float)
    n = len(x)
    if not is_power_of_two(n) or n < 2:
        raise BadLength(f"signal length {n} is not a power of two")
    mag = np.abs(np.fft.rfft(x)) / n
    freqs = np.arange(n // 2 + 1) / n
    return Spectrum(freqs, mag)


def axis_mean_spectrum(window: VibrationWindow) -> Spectrum:
    specs = [fft_magnitude(a, window.rate_hz) for a in (window.x, window.y, window.z)]
    return Spectrum(specs[0].freqs, (specs[0].values + specs[1].values + specs[2].values) / 3.0)


def spectral_gradient(spec: Spectrum) -> FeatureVector:
    """Derivative of the spectrum with respect to frequency.

    Central differences inside, first-order one-sided at both ends.
    """
    if len(spec) < 3:
        raise TooFewBins(f"need at least 3 bins, got {len(spec)}")
    return FeatureVector(np.gradient(spec.values, spec.spacing), "raw-differential")


# -- wavelets -----------------------------------------------------------------


def _analysis_step(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(h))[None, :]) % n
    taps = x[idx]
    return taps @ h, taps @ g


def _synthesis_step(a: np.ndarray, d: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = 2 * len(a)
    idx = (2 * np.arange(len(a))[:, None] + np.arange(len(h))[None, :]) % n
    out = np.zeros(n)
    np.add.at(out, idx, a[:, None] * h[None, :] + d[:, None] * g[None, :])
    return out


def dwt(signal, cfg: WaveletConfig = WaveletConfig()) -> Pyramid:
    """Periodized orthonormal DWT to ``cfg.levels`` levels."""
    x = np.asarray(signal, dtype=float)
    n = len(x)
    if n == 0 or n % (1 << cfg.levels) != 0:
        raise BadLength(f"length {n} is not divisible by 2**{cfg.levels}")
    h, g = _filters(cfg.family)
    details = []
    a = x
    for _ in range(cfg.levels):
        a, d = _analysis_step(a, h, g)
        details.append(d)
    return Pyramid(a, details)


def idwt(pyramid: Pyramid, cfg: WaveletConfig = WaveletConfig()) -> np.ndarray:
    if pyramid.levels != cfg.levels:
        raise ShapeMismatch(f"pyramid has {pyramid.levels} levels, config expects {cfg.levels}")
    h, g = _filters(cfg.family)
    a = np.asarray(pyramid.approx, dtype=float)
    for d in reversed(pyramid.details):
        d = np.asarray(d, dtype=float)
        if len(d) != len(a):
            raise ShapeMismatch(f"detail band of length {len(d)} does not match approximation {len(a)}")
        a = _synthesis_step(a, d, h, g)
    return a


def universal_threshold(finest_details: np.ndarray, n: int) -> float:
    sigma = float(np.median(np.abs(finest_details))) / 0.6745
    return sigma * math.sqrt(2.0 * math.log(n))


def shrink(coefs: np.ndarray, tau: float, mode: Shrinkage) -> np.ndarray:
    if mode is Shrinkage.SOFT:
        return np.sign(coefs) * np.maximum(np.abs(coefs) - tau, 0.0)
    return np.where(np.abs(coefs) > tau, coefs, 0.0)


def wavelet_denoise(values, cfg: WaveletConfig = WaveletConfig(), threshold: float | None = None) -> np.ndarray:
    """Threshold the detail bands and reconstruct.

    Input is zero-padded to the next multiple of ``2**levels`` and the
    output truncated back. ``threshold`` overrides the universal rule.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    block = 1 << cfg.levels
    padded_len = -(-n // block) * block
    padded = np.zeros(padded_len)
    padded[:n] = x
    pyr = dwt(padded, cfg)
    tau = universal_threshold(pyr.details[0], padded_len) if threshold is None else float(threshold)
    pyr = Pyramid(pyr.approx, [shrink(d, tau, cfg.shrinkage) for d in pyr.details])
    return idwt(pyr, cfg)[:n]


def extract_features(
    window: VibrationWindow, cfg: WaveletConfig = WaveletConfig(), denoise_raw: bool = False
) -> FeatureVector:
    """Axis-mean spectrum -> frequency derivative -> wavelet denoising.

    With ``denoise_raw`` the three axes are denoised before the spectrum
    is taken and the gradient is left as is.
    """
    if denoise_raw:
        window = VibrationWindow(
            wavelet_denoise(window.x, cfg),
            wavelet_denoise(window.y, cfg),
            wavelet_denoise(window.z, cfg),
            window.rate_hz,
            window.label,
        )
        return spectral_gradient(axis_mean_spectrum(window))
    grad = spectral_gradient(axis_mean_spectrum(window))
    return FeatureVector(wavelet_denoise(grad.values, cfg), "denoised")


# -- Welch PSD ----------------------------------------------------------------


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(signal, segment_len: int = 256, overlap_fraction: float = 0.5) -> Spectrum:
    """One-sided Welch PSD (density scaling, unit sample rate), linear power."""
    x = np.asarray(signal, dtype=float)
    if not is_power_of_two(segment_len) or segment_len < 2 or segment_len > len(x):
        raise BadSegment(f"segment length {segment_len} must be a power of two <= {len(x)}")
    if not 0.0 <= overlap_fraction <= 0.9:
        raise BadSegment(f"overlap fraction {overlap_fraction} outside [0, 0.9]")
    step = max(1, segment_len - int(round(overlap_fraction * segment_len)))
    starts = np.arange(0, len(x) - segment_len + 1, step)
    w = hann(segment_len)
    segs = x[starts[:, None] + np.arange(segment_len)[None, :]] * w
    power = np.abs(np.fft.rfft(segs, axis=1)) ** 2 / np.sum(w**2)
    power = power.mean(axis=0)
    power[1:-1] *= 2.0
    return Spectrum(np.arange(segment_len // 2 + 1) / segment_len, power)


def to_db(power: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    return np.maximum(db, PSD_FLOOR_DB)


def welch_psd_db(signal, segment_len: int = 256, overlap_fraction: float = 0.5) -> Spectrum:
    psd = welch_psd(signal, segment_len, overlap_fraction)
    return Spectrum(psd.freqs, to_db(psd.values))


def envelope_psd_db(signal, segment_len: int | None = None) -> Spectrum:
    """PSD of the full-wave rectified, mean-removed signal."""
    x = np.abs(np.asarray(signal, dtype=float))
    x = x - x.mean()
    if segment_len is None:
        segment_len = 1 << int(math.floor(math.log2(len(x))))
    return welch_psd_db(x, segment_len, 0.5)
