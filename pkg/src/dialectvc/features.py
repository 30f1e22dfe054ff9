"""Waveform I/O, log-mel extraction, and the binary feature-file format.

The built-in feature space is an 80-band log-mel filterbank computed from
full analysis windows only (no padding), so the frame count is exactly
``1 + floor((len - window) / hop)``. Externally computed frame-level
features of any width can be imported through the same file format, which
keeps everything downstream feature-agnostic.

Feature file layout ("FT01", little-endian throughout):
    magic "FT01" | u32 n_frames | u32 n_dims | u16 frame_rate |
    u16 config-id length | UTF-8 config id | n_frames*n_dims float32,
    row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ToolkitError

SAMPLE_RATE = 16000

FT_MAGIC = b"FT01"


class WavError(ToolkitError):
    """Unreadable or unsupported RIFF/WAVE file."""


class WavSampleRateError(WavError):
    pass


class WavChannelsError(WavError):
    pass


class WavBitDepthError(WavError):
    pass


class WavEncodingError(WavError):
    pass


class WavTruncatedError(WavError):
    pass


class FeatureError(ToolkitError):
    """Invalid feature extraction input."""


class FeatureFormatError(ToolkitError):
    """Corrupt or out-of-range feature file."""


@dataclass
class Waveform:
    """Mono PCM audio in [-1, 1] at the fixed 16 kHz project rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise WavError("waveform must be a nonempty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise WavError("waveform contains non-finite samples")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0 + 1e-6:
            raise WavError(f"waveform exceeds full scale (peak {peak:.6f})")
        if self.sample_rate != SAMPLE_RATE:
            raise WavSampleRateError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FeatureSequence:
    """Frames-by-dims real matrix plus the extractor identity that made it."""

    frames: np.ndarray
    frame_rate: float
    config_id: str

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise FeatureError("feature matrix must be 2-D with at least one frame and one dim")
        if not np.all(np.isfinite(self.frames)):
            raise FeatureError("feature matrix contains non-finite values")
        if self.frame_rate <= 0:
            raise FeatureError("frame rate must be positive")

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class FeatureConfig:
    """Log-mel extractor settings. The floor is applied before the log."""

    window_ms: int = 25
    hop_ms: int = 10
    n_fft: int = 512
    n_mels: int = 80
    floor: float = 1e-10

    def __post_init__(self) -> None:
        if self.hop_ms <= 0 or self.window_ms < self.hop_ms:
            raise FeatureError("require window_ms >= hop_ms > 0")
        if self.n_mels > self.n_fft // 2 + 1:
            raise FeatureError("n_mels must not exceed n_fft/2 + 1")
        if self.floor <= 0:
            raise FeatureError("floor must be positive")

    @property
    def window_samples(self) -> int:
        return self.window_ms * SAMPLE_RATE // 1000

    @property
    def hop_samples(self) -> int:
        return self.hop_ms * SAMPLE_RATE // 1000

    @property
    def frame_rate(self) -> float:
        return 1000.0 / self.hop_ms

    def config_id(self) -> str:
        return f"logmel-w{self.window_ms}-h{self.hop_ms}-fft{self.n_fft}-mel{self.n_mels}"


def read_wav(path: str | Path) -> Waveform:
    """Read a 16-bit PCM mono 16 kHz RIFF/WAVE file; never resamples.

    Samples are scaled by 1/32768, so -32768 maps to exactly -1.0.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavTruncatedError(f"{path}: chunk {chunk_id!r} declares {size} bytes, file ends early")
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavTruncatedError(f"{path}: missing data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise WavEncodingError(f"{path}: only PCM encoding supported, got format tag {audio_format}")
    if channels != 1:
        raise WavChannelsError(f"{path}: only mono supported, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise WavSampleRateError(f"{path}: unsupported sample rate {rate} Hz (requires {SAMPLE_RATE})")
    if bits != 16:
        raise WavBitDepthError(f"{path}: only 16-bit samples supported, got {bits}")
    if len(data) % 2 != 0:
        raise WavTruncatedError(f"{path}: data chunk is not a whole number of 16-bit samples")
    if len(data) == 0:
        raise WavError(f"{path}: data chunk is empty")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples)


def write_wav(wave: Waveform, path: str | Path) -> None:
    """Write 16-bit PCM mono 16 kHz; values are rounded to the nearest step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.rint(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        SAMPLE_RATE,
        SAMPLE_RATE * 2,
        2,
        16,
        b"data",
        len(data),
    )
    path.write_bytes(header + data)


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triangular mel filterbank over rfft bins.

    Returns (filters, centers_hz) with filters of shape (n_mels, n_fft/2+1).
    Band m rises from edge m to its center and falls to edge m+2; responses
    peak at 1.
    """
    fmin, fmax = 0.0, SAMPLE_RATE / 2.0
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), cfg.n_mels + 2))
    bins = np.fft.rfftfreq(cfg.n_fft, d=1.0 / SAMPLE_RATE)
    filters = np.zeros((cfg.n_mels, bins.size))
    for m in range(cfg.n_mels):
        lo, center, hi = points[m], points[m + 1], points[m + 2]
        rising = (bins - lo) / (center - lo)
        falling = (hi - bins) / (hi - center)
        filters[m] = np.maximum(0.0, np.minimum(rising, falling))
    return filters, points[1:-1]


def logmel(wave: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FeatureSequence:
    """Log mel-filterbank energies from full Hann-windowed frames.

    The mel energies come from the one-sided power spectrum, so scaling the
    waveform by g adds exactly 2*log(g) to every cell above the floor.
    """
    window = cfg.window_samples
    hop = cfg.hop_samples
    if len(wave) < window:
        raise FeatureError(
            f"waveform of {len(wave)} samples is shorter than one {window}-sample window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(wave.samples, window)[::hop]
    windowed = frames * np.hanning(window)
    power = np.abs(np.fft.rfft(windowed, n=cfg.n_fft, axis=1)) ** 2
    filters, _ = mel_filterbank(cfg)
    mel_energy = power @ filters.T
    cells = np.log(np.maximum(mel_energy, cfg.floor))
    return FeatureSequence(cells, cfg.frame_rate, cfg.config_id())


def save_features(feat: FeatureSequence, path: str | Path) -> None:
    """Write a feature sequence in the "FT01" format (float32 payload)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_frames, n_dims = feat.frames.shape
    if n_frames > 0xFFFFFFFF or n_dims > 0xFFFFFFFF:
        raise FeatureFormatError("dimension overflow: frame/dim count exceeds u32")
    rate = feat.frame_rate
    if abs(rate - round(rate)) > 1e-9 or not (1 <= round(rate) <= 0xFFFF):
        raise FeatureFormatError(f"dimension overflow: frame rate {rate} not representable as u16")
    cid = feat.config_id.encode("utf-8")
    if len(cid) > 0xFFFF:
        raise FeatureFormatError("dimension overflow: config id longer than u16")
    header = struct.pack("<4sIIHH", FT_MAGIC, n_frames, n_dims, int(round(rate)), len(cid))
    payload = feat.frames.astype("<f4").tobytes()
    path.write_bytes(header + cid + payload)


def load_features(path: str | Path) -> FeatureSequence:
    """Read an "FT01" feature file; strict about every declared length."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise FeatureFormatError(f"{path}: truncated payload (header incomplete)")
    magic, n_frames, n_dims, rate, cid_len = struct.unpack("<4sIIHH", raw[:16])
    if magic != FT_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    offset = 16 + cid_len
    if len(raw) < offset:
        raise FeatureFormatError(f"{path}: truncated payload (config id incomplete)")
    config_id = raw[16:offset].decode("utf-8")
    expected = n_frames * n_dims * 4
    payload = raw[offset:]
    if len(payload) < expected:
        raise FeatureFormatError(
            f"{path}: truncated payload ({len(payload)} bytes, header declares {expected})"
        )
    if len(payload) > expected:
        raise FeatureFormatError(f"{path}: trailing bytes after declared payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_dims).astype(np.float64)
    return FeatureSequence(frames, float(rate), config_id)
