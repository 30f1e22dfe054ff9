"""Classical audio augmentations: SpecAugment-style feature masking plus
waveform-domain pitch shift, additive noise at a target SNR, and room
impulse response convolution.

All operations are label-preserving and deterministic under a fixed seed;
per-utterance seeds should be derived with :func:`dialectvc.seeding.derive_seed`
so parallel application stays order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .core import ToolkitError
from .features import FeatureSequence, Waveform


class AugmentError(ToolkitError):
    """Invalid augmentation input or parameters."""


@dataclass(frozen=True)
class SpecAugmentParams:
    """Masking/stretch settings for feature-matrix augmentation.

    ``fill`` chooses what masked cells become: "zero", or "per_band_mean"
    (the band's own time average, conservative for log-domain features).
    """

    time_mask_max: int = 40
    time_mask_count: int = 2
    freq_mask_max: int = 12
    freq_mask_count: int = 2
    stretch_range: tuple[float, float] = (0.9, 1.1)
    fill: str = "per_band_mean"

    def __post_init__(self) -> None:
        if self.time_mask_max < 0 or self.freq_mask_max < 0:
            raise AugmentError("mask widths must be nonnegative")
        if self.time_mask_count < 0 or self.freq_mask_count < 0:
            raise AugmentError("mask counts must be nonnegative")
        lo, hi = self.stretch_range
        if not (0 < lo <= hi):
            raise AugmentError("stretch bounds must be positive with low <= high")
        if self.fill not in ("zero", "per_band_mean"):
            raise AugmentError(f"unknown fill {self.fill!r}")


@dataclass
class NoiseSpec:
    """Noise source plus target SNR; snr_db=None draws from [0, 20] dB."""

    noise: Waveform
    snr_db: float | None = None

    def __post_init__(self) -> None:
        if float(np.mean(self.noise.samples**2)) <= 0.0:
            raise AugmentError("noise source is silent")


def spec_augment(
    feat: FeatureSequence, params: SpecAugmentParams = SpecAugmentParams(), seed: int = 0
) -> FeatureSequence:
    """Time-stretch, then time-mask, then frequency-mask a feature matrix.

    The stretch factor is drawn from ``stretch_range`` and applied by linear
    interpolation along time; a factor of exactly 1 is a bit-identical
    pass-through. Mask widths are drawn uniformly in [0, max]; masked cells
    take the fill value. Draw order is fixed: stretch, time masks (width
    then start, per mask), frequency masks.
    """
    rng = np.random.default_rng(seed)
    cells = feat.frames

    lo, hi = params.stretch_range
    factor = float(rng.uniform(lo, hi))
    if factor != 1.0:
        n_in = cells.shape[0]
        n_out = max(1, int(round(n_in * factor)))
        positions = np.linspace(0.0, n_in - 1.0, n_out)
        base = np.arange(n_in, dtype=np.float64)
        cells = np.stack([np.interp(positions, base, cells[:, d]) for d in range(cells.shape[1])], axis=1)
    else:
        cells = cells.copy()

    n_frames, n_bands = cells.shape
    if params.time_mask_count > 0 and params.time_mask_max > n_frames:
        raise AugmentError(
            f"time mask up to {params.time_mask_max} frames is wider than the "
            f"{n_frames}-frame sequence after stretch"
        )
    if params.freq_mask_count > 0 and params.freq_mask_max > n_bands:
        raise AugmentError(
            f"frequency mask up to {params.freq_mask_max} bands is wider than {n_bands} bands"
        )

    if params.fill == "per_band_mean":
        fill = cells.mean(axis=0)
    else:
        fill = np.zeros(n_bands)

    for _ in range(params.time_mask_count):
        width = int(rng.integers(0, params.time_mask_max + 1))
        start = int(rng.integers(0, n_frames - width + 1))
        cells[start : start + width, :] = fill
    for _ in range(params.freq_mask_count):
        width = int(rng.integers(0, params.freq_mask_max + 1))
        start = int(rng.integers(0, n_bands - width + 1))
        cells[:, start : start + width] = fill[start : start + width]

    return FeatureSequence(cells, feat.frame_rate, feat.config_id)


def pitch_shift(wave: Waveform, semitones: float) -> Waveform:
    """Shift dominant spectral components by 2^(semitones/12).

    Resamples by 2^(-s/12) (changing pitch and duration together), then
    time-stretches back to the original length with waveform-similarity
    overlap-add, so duration is preserved exactly. semitones=0 is an exact
    pass-through.
    """
    if abs(semitones) > 12:
        raise AugmentError(f"semitones must be within [-12, 12], got {semitones}")
    if semitones == 0:
        return Waveform(wave.samples.copy())
    ratio = 2.0 ** (semitones / 12.0)
    x = wave.samples
    n_in = x.size
    n_res = int(np.floor((n_in - 1) / ratio)) + 1
    positions = np.minimum(np.arange(n_res, dtype=np.float64) * ratio, n_in - 1.0)
    resampled = np.interp(positions, np.arange(n_in, dtype=np.float64), x)
    stretched = _wsola_stretch(resampled, n_in)
    peak = float(np.max(np.abs(stretched)))
    if peak > 1.0:
        stretched = stretched / peak
    return Waveform(stretched)


def _wsola_stretch(x: np.ndarray, target_len: int, window: int = 1024, seek: int = 256) -> np.ndarray:
    """Time-stretch to target_len without changing pitch.

    Hann-windowed segments at 50% overlap are pasted at the output rate;
    each segment is picked near its ideal input position by maximizing
    cross-correlation with the natural continuation of the previous one,
    which keeps periodic signals phase-coherent. Inputs shorter than two
    windows fall back to plain linear interpolation.
    """
    n_in = x.size
    if target_len < 1:
        raise AugmentError("target length must be positive")
    if n_in == target_len:
        return x.copy()
    if n_in < 2 * window:
        return np.interp(
            np.linspace(0.0, n_in - 1.0, target_len), np.arange(n_in, dtype=np.float64), x
        )
    hop = window // 2
    win = np.hanning(window)
    speed = n_in / target_len
    out = np.zeros(target_len + window)
    weight = np.zeros(target_len + window)
    max_pos = n_in - window
    prev_pos = 0
    n_frames = target_len // hop + 1
    for i in range(n_frames):
        out_pos = i * hop
        ideal = int(round(out_pos * speed))
        if i == 0:
            pos = 0
        else:
            template_start = min(prev_pos + hop, max_pos)
            template = x[template_start : template_start + window]
            lo = max(0, min(ideal - seek, max_pos))
            hi = max(lo, min(ideal + seek, max_pos))
            region = x[lo : hi + window]
            scores = np.correlate(region, template, mode="valid")
            pos = lo + int(np.argmax(scores))
        out[out_pos : out_pos + window] += x[pos : pos + window] * win
        weight[out_pos : out_pos + window] += win
        prev_pos = pos
    return out[:target_len] / np.maximum(weight[:target_len], 1e-8)


def add_noise(wave: Waveform, spec: NoiseSpec, seed: int = 0) -> Waveform:
    """Mix noise into the signal at a target SNR.

    The noise is looped/cropped to the signal length starting at a seeded
    random offset (cyclic), scaled by g = sqrt(P_signal / (P_noise *
    10^(snr/10))), and added. The mix is peak-normalized only if it would
    leave full scale, which preserves the achieved SNR. Draw order: SNR (if
    unset), then offset.
    """
    signal = wave.samples
    p_signal = float(np.mean(signal**2))
    if p_signal <= 0.0:
        raise AugmentError("cannot set an SNR against a silent signal")
    rng = np.random.default_rng(seed)
    snr_db = spec.snr_db if spec.snr_db is not None else float(rng.uniform(0.0, 20.0))
    noise = spec.noise.samples
    offset = int(rng.integers(0, noise.size))
    idx = (offset + np.arange(signal.size)) % noise.size
    segment = noise[idx]
    p_segment = float(np.mean(segment**2))
    if p_segment <= 0.0:
        raise AugmentError(f"noise segment at offset {offset} is silent")
    gain = float(np.sqrt(p_signal / (p_segment * 10.0 ** (snr_db / 10.0))))
    mixed = signal + gain * segment
    peak = float(np.max(np.abs(mixed)))
    if peak > 1.0:
        mixed = mixed / peak
    return Waveform(mixed)


def rir_convolve(wave: Waveform, rir: Waveform) -> Waveform:
    """Convolve with a room impulse response.

    Full linear convolution truncated to the input length, then rescaled so
    the peak magnitude matches the input's peak.
    """
    if rir.samples.size >= wave.samples.size:
        raise AugmentError(
            f"impulse response ({rir.samples.size} samples) must be shorter than "
            f"the signal ({wave.samples.size})"
        )
    wet = fftconvolve(wave.samples, rir.samples, mode="full")[: wave.samples.size]
    peak_wet = float(np.max(np.abs(wet)))
    if peak_wet <= 0.0:
        raise AugmentError("impulse response produced a silent output")
    scaled = wet * (float(np.max(np.abs(wave.samples))) / peak_wet)
    return Waveform(scaled)
