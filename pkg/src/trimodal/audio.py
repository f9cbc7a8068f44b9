"""Acoustic descriptor extraction: 30 Hz framing with 100 ms windows over
mono audio, per-frame pitch / intensity / zero-crossing rate, an intensity
threshold separating voiced from unvoiced frames, voiced-frame
z-standardization, and statistical functionals collapsing each descriptor
trajectory into a fixed-order feature vector.

File ingestion is 16-bit PCM WAV only. Externally precomputed vectors of any
length can bypass this module through the dataset manifest.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_FRAME_RATE = 30.0
DEFAULT_WINDOW = 0.1
DEFAULT_VOICED_THRESHOLD = 0.01
PITCH_BAND_HZ = (50.0, 500.0)

LLD_NAMES = ("pitch", "intensity", "zcr")


@dataclass
class AudioClip:
    """Mono samples in [-1, 1] at a fixed rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono WAV file."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise DataError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise DataError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        raw = w.readframes(w.getnframes())
        rate = w.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip) -> None:
    quantized = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(quantized.tobytes())


def frame_clip(
    clip: AudioClip,
    frame_rate: float = DEFAULT_FRAME_RATE,
    window: float = DEFAULT_WINDOW,
) -> list[np.ndarray]:
    """Slice the clip into windows starting at multiples of 1/frame_rate.

    Yields floor((duration - window) * frame_rate) + 1 windows of
    round(window * sample_rate) samples each.
    """
    if frame_rate <= 0 or window <= 0:
        raise ConfigError(f"frame_rate and window must be positive, got {frame_rate}, {window}")
    wlen = int(round(window * clip.sample_rate))
    n = clip.samples.size
    if n < wlen or wlen < 1:
        raise DataError(
            f"clip of {n} samples shorter than one {wlen}-sample window"
        )
    hop = clip.sample_rate / frame_rate
    count = int(np.floor((n - wlen) / hop + 1e-9)) + 1
    frames = []
    for i in range(count):
        start = int(round(i * hop))
        frames.append(clip.samples[start : start + wlen])
    return frames


@dataclass
class LldFrameSeries:
    """Per-frame descriptor trajectories plus the voiced mask.

    channels maps each descriptor name to a float array over frames;
    voiced_mask is True where intensity met the threshold. warnings collects
    channel names zeroed out by degenerate standardization.
    """

    frame_rate: float
    window: float
    channels: dict[str, np.ndarray]
    voiced_mask: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return int(self.voiced_mask.size)


def _frame_pitch(window: np.ndarray, sample_rate: int,
                 band: tuple[float, float] = PITCH_BAND_HZ) -> float:
    """Autocorrelation peak frequency within the search band, 0 if flat."""
    lag_min = max(1, int(np.ceil(sample_rate / band[1])))
    lag_max = min(window.size - 1, int(np.floor(sample_rate / band[0])))
    if lag_max < lag_min:
        return 0.0
    x = window - window.mean()
    denom = float(np.dot(x, x))
    if denom <= 0.0:
        return 0.0
    full = np.correlate(x, x, mode="full")[x.size - 1 :]
    lags = full[lag_min : lag_max + 1]
    best = int(np.argmax(lags))
    if lags[best] <= 0.0:
        return 0.0
    return sample_rate / (lag_min + best)


def compute_llds(
    windows: Sequence[np.ndarray],
    sample_rate: int,
    frame_rate: float = DEFAULT_FRAME_RATE,
    window: float = DEFAULT_WINDOW,
    voiced_threshold: float = DEFAULT_VOICED_THRESHOLD,
) -> LldFrameSeries:
    """Per-window descriptors: intensity is the RMS, pitch the
    autocorrelation peak in the voiced band (0 for unvoiced frames), and
    zero-crossing rate the sign-change count over the window duration."""
    if not len(windows):
        raise DataError("no analysis windows")
    n = len(windows)
    intensity = np.empty(n)
    pitch = np.empty(n)
    zcr = np.empty(n)
    for i, w in enumerate(windows):
        w = np.asarray(w, dtype=np.float64)
        intensity[i] = np.sqrt(np.mean(w * w))
        seconds = w.size / sample_rate
        signs = np.sign(w)
        zcr[i] = np.count_nonzero(np.diff(signs)) / seconds
        voiced = intensity[i] >= voiced_threshold
        pitch[i] = _frame_pitch(w, sample_rate) if voiced else 0.0
    mask = intensity >= voiced_threshold
    return LldFrameSeries(
        frame_rate=frame_rate,
        window=window,
        channels={"pitch": pitch, "intensity": intensity, "zcr": zcr},
        voiced_mask=mask,
    )


def z_standardize(series: LldFrameSeries) -> LldFrameSeries:
    """Standardize each channel over voiced frames to mean 0 and unit
    population std; unvoiced frames pass through untouched. A zero-variance
    channel is zeroed and recorded in warnings."""
    mask = series.voiced_mask
    if int(mask.sum()) < 2:
        raise DataError(f"need at least 2 voiced frames, got {int(mask.sum())}")
    out: dict[str, np.ndarray] = {}
    warnings = list(series.warnings)
    for name, values in series.channels.items():
        values = values.copy()
        voiced = values[mask]
        std = float(voiced.std())
        if std == 0.0:
            values[mask] = 0.0
            warnings.append(name)
        else:
            values[mask] = (voiced - voiced.mean()) / std
        out[name] = values
    return LldFrameSeries(
        frame_rate=series.frame_rate,
        window=series.window,
        channels=out,
        voiced_mask=mask.copy(),
        warnings=warnings,
    )


_FUNCTIONALS = {
    "amp_mean": lambda v: float(np.mean(np.abs(v))),
    "mean": lambda v: float(np.mean(v)),
    "rms": lambda v: float(np.sqrt(np.mean(v * v))),
    "std": lambda v: float(np.std(v)),
    "min": lambda v: float(np.min(v)),
    "max": lambda v: float(np.max(v)),
    "range": lambda v: float(np.max(v) - np.min(v)),
}

DEFAULT_FUNCTIONALS = ("amp_mean", "mean", "rms", "std", "min", "max", "range")


@dataclass(frozen=True)
class FunctionalCatalog:
    """Fixed, versioned (descriptor x statistic) ordering.

    The vector layout depends only on this catalog, never on clip content,
    so corpora processed under the same catalog fuse compatibly.
    """

    llds: tuple[str, ...] = LLD_NAMES
    functionals: tuple[str, ...] = DEFAULT_FUNCTIONALS
    version: int = 1

    def __post_init__(self):
        unknown = [f for f in self.functionals if f not in _FUNCTIONALS]
        if unknown:
            raise ConfigError(f"unknown functionals {unknown}; have {sorted(_FUNCTIONALS)}")
        if not self.llds or not self.functionals:
            raise ConfigError("catalog needs at least one descriptor and one functional")

    @property
    def size(self) -> int:
        return len(self.llds) * len(self.functionals)

    def names(self) -> list[str]:
        return [f"{lld}.{fn}" for lld in self.llds for fn in self.functionals]


@dataclass
class FunctionalVector:
    names: list[str]
    values: np.ndarray
    catalog_version: int


def apply_functionals(series: LldFrameSeries,
                      catalog: FunctionalCatalog = FunctionalCatalog()) -> FunctionalVector:
    """Collapse each descriptor trajectory to its catalog statistics; the
    output order is the catalog order."""
    if series.n_frames == 0:
        raise DataError("empty frame series")
    values = []
    for lld in catalog.llds:
        if lld not in series.channels:
            raise ConfigError(f"series lacks descriptor {lld!r}")
        channel = series.channels[lld]
        for fn in catalog.functionals:
            values.append(_FUNCTIONALS[fn](channel))
    return FunctionalVector(catalog.names(), np.array(values), catalog.version)


def extract_audio_features(
    clip: AudioClip,
    catalog: FunctionalCatalog = FunctionalCatalog(),
    frame_rate: float = DEFAULT_FRAME_RATE,
    window: float = DEFAULT_WINDOW,
    voiced_threshold: float = DEFAULT_VOICED_THRESHOLD,
    standardize: bool = True,
) -> np.ndarray:
    """Full clip-to-vector path: frame, compute descriptors, standardize
    voiced frames (skipped when fewer than 2 are voiced), apply functionals."""
    windows = frame_clip(clip, frame_rate, window)
    series = compute_llds(windows, clip.sample_rate, frame_rate, window, voiced_threshold)
    if standardize and int(series.voiced_mask.sum()) >= 2:
        series = z_standardize(series)
    return apply_functionals(series, catalog).values
