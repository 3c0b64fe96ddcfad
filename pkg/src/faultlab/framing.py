"""Frame construction: sliding windows, RPM channel, per-channel standardization.

Raw 7-channel runs become 8-channel, fixed-length, standardized instances.
Statistics are always fitted on training frames and reused verbatim for
validation, test, and inference data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .faults import FaultClass
from .synth import SignalRun

FRAME_CACHE_MAGIC = b"FLFRAMES"
FRAME_CACHE_VERSION = 1


@dataclass(frozen=True)
class FramingConfig:
    """Sliding-window geometry and standardization constants."""

    frame_len: int = 1000       # samples per frame (20 ms at 50 kHz)
    overlap: int = 200          # samples shared by adjacent frames
    n_max: float = 2700.0       # rpm normalization scale
    eps: float = 1e-8           # guard added to sigma in standardization

    def __post_init__(self):
        if not 0 <= self.overlap < self.frame_len:
            raise ConfigError(
                f"overlap must be in [0, frame_len), got {self.overlap}")
        if self.hop < 1:
            raise ConfigError("hop must be >= 1")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")

    @property
    def hop(self) -> int:
        return self.frame_len - self.overlap


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population standard deviation of training frames."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ConfigError("mean/std must be matching 1-D vectors")
        if np.any(self.std < 0):
            raise ConfigError("std must be non-negative")

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]


@dataclass
class FrameTensor:
    """One standardized 8 x frame_len instance with its label and speed."""

    values: np.ndarray          # (channels, frame_len), channels-first
    label: FaultClass
    rpm: float


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    """Number of full windows: floor((n - frame_len) / hop) + 1, min 0."""
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def segment_frames(run, cfg: FramingConfig) -> list[np.ndarray]:
    """Cut a run into overlapping 7-channel windows; trailing partial
    windows are dropped, never padded."""
    channels = run.channels if hasattr(run, "channels") else np.asarray(run)
    count = frame_count(channels.shape[1], cfg.frame_len, cfg.hop)
    return [
        channels[:, k * cfg.hop: k * cfg.hop + cfg.frame_len].copy()
        for k in range(count)
    ]


def append_rpm_channel(frame: np.ndarray, rpm: float, n_max: float) -> np.ndarray:
    """Append the normalized signed speed rpm/n_max as a constant channel."""
    if n_max <= 0:
        raise ConfigError(f"n_max must be > 0, got {n_max}")
    frame = np.asarray(frame)
    row = np.full((1, frame.shape[1]), rpm / n_max, dtype=frame.dtype)
    return np.concatenate([frame, row], axis=0)


def fit_stats(train_frames) -> ChannelStats:
    """Pool mean/std per channel over all training frames and time steps.

    Uses the population (divide-by-N) standard deviation, accumulated in
    float64 regardless of the frame dtype.
    """
    stacked = _as_stack(train_frames)
    if stacked.shape[0] == 0:
        raise ConfigError("cannot fit statistics on an empty training set")
    mean = stacked.mean(axis=(0, 2), dtype=np.float64)
    var = np.zeros_like(mean)
    # Two-pass variance, chunked to avoid materializing (x - mean)^2 at once.
    n_total = stacked.shape[0] * stacked.shape[2]
    for start in range(0, stacked.shape[0], 256):
        block = stacked[start:start + 256].astype(np.float64)
        centered = block - mean[None, :, None]
        var += (centered**2).sum(axis=(0, 2))
    var /= n_total
    return ChannelStats(mean=mean, std=np.sqrt(var))


def standardize(frame: np.ndarray, stats: ChannelStats, eps: float,
                label: FaultClass | None = None, rpm: float = 0.0) -> FrameTensor:
    """Per-channel affine map (x - mean) / (std + eps), channels-first."""
    frame = np.asarray(frame)
    if frame.shape[0] != stats.n_channels:
        raise ConfigError(
            f"frame has {frame.shape[0]} channels, stats expect {stats.n_channels}")
    scale = 1.0 / (stats.std + eps)
    values = (frame - stats.mean[:, None]) * scale[:, None]
    return FrameTensor(values=values.astype(np.float32),
                       label=FaultClass.NONE if label is None else label,
                       rpm=rpm)


@dataclass
class FrameSet:
    """Batch container: values (n, channels, frame_len), labels, rpms."""

    values: np.ndarray
    labels: np.ndarray
    rpms: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "FrameSet":
        return FrameSet(self.values[idx], self.labels[idx], self.rpms[idx])


def frame_runs(runs, cfg: FramingConfig) -> FrameSet:
    """Segment runs, append the RPM channel, and stack into one FrameSet."""
    values, labels, rpms = [], [], []
    for run in runs:
        for frame in segment_frames(run, cfg):
            values.append(append_rpm_channel(frame, run.rpm, cfg.n_max))
            labels.append(int(run.fault))
            rpms.append(run.rpm)
    if not values:
        return FrameSet(np.zeros((0, 8, cfg.frame_len), dtype=np.float32),
                        np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))
    return FrameSet(np.stack(values).astype(np.float32),
                    np.asarray(labels, dtype=np.int64),
                    np.asarray(rpms, dtype=np.float64))


def standardize_set(frames: FrameSet, stats: ChannelStats, eps: float) -> FrameSet:
    """Vectorized standardization of a whole FrameSet."""
    scale = (1.0 / (stats.std + eps)).astype(np.float32)
    mean = stats.mean.astype(np.float32)
    values = (frames.values - mean[None, :, None]) * scale[None, :, None]
    return FrameSet(values.astype(np.float32), frames.labels, frames.rpms)


def _as_stack(frames) -> np.ndarray:
    if isinstance(frames, FrameSet):
        return frames.values
    if isinstance(frames, np.ndarray):
        return frames
    arrays = [f.values if isinstance(f, FrameTensor) else np.asarray(f) for f in frames]
    if not arrays:
        raise ConfigError("cannot fit statistics on an empty training set")
    return np.stack(arrays)


def save_frame_cache(path, frames: FrameSet, stats: ChannelStats) -> None:
    """Binary frame cache: little-endian header, stats, labels, rpm, FP32 data."""
    n, channels, frame_len = frames.values.shape
    with open(path, "wb") as fh:
        fh.write(FRAME_CACHE_MAGIC)
        fh.write(struct.pack("<IIII", FRAME_CACHE_VERSION, n, channels, frame_len))
        fh.write(stats.mean.astype("<f8").tobytes())
        fh.write(stats.std.astype("<f8").tobytes())
        fh.write(frames.labels.astype("<i8").tobytes())
        fh.write(frames.rpms.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(frames.values, dtype="<f4").tobytes())


def load_frame_cache(path) -> tuple[FrameSet, ChannelStats]:
    """Load a frame cache written by :func:`save_frame_cache`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(FRAME_CACHE_MAGIC))
        if magic != FRAME_CACHE_MAGIC:
            raise DataError(f"{path}: not a frame cache (bad magic {magic!r})")
        version, n, channels, frame_len = struct.unpack("<IIII", fh.read(16))
        if version != FRAME_CACHE_VERSION:
            raise DataError(f"{path}: unsupported cache version {version}")
        mean = np.frombuffer(fh.read(8 * channels), dtype="<f8")
        std = np.frombuffer(fh.read(8 * channels), dtype="<f8")
        labels = np.frombuffer(fh.read(8 * n), dtype="<i8")
        rpms = np.frombuffer(fh.read(8 * n), dtype="<f8")
        payload = fh.read(4 * n * channels * frame_len)
        if len(payload) != 4 * n * channels * frame_len:
            raise DataError(f"{path}: truncated frame cache")
        values = np.frombuffer(payload, dtype="<f4").reshape(n, channels, frame_len)
    return (FrameSet(values.copy(), labels.copy(), rpms.copy()),
            ChannelStats(mean=mean.copy(), std=std.copy()))
