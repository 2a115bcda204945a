"""Session -> window pipeline: outlier repair, Y = 2A - B separation,
block-mean down-sampling and min-max normalization.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .signal_model import SESSION_LENGTH, ProcessedWindow, RawSession, encode_one_hot


@dataclass(frozen=True)
class PreprocessConfig:
    """Parameters for :func:`preprocess_session`.

    ``scale_range`` selects the normalization mode. ``None`` rescales each
    series by its own min and max. A ``(lo, hi)`` pair maps the separated
    signal from a fixed score scale onto [0, 1] with clipping, which keeps
    the absolute level (the only cue separating relaxed from focused
    plateaus) visible to the network.
    """

    outlier_z_threshold: float = 3.0
    baseline_window: int = 180
    downsample_factor: int = 6
    normalization_epsilon: float = 1e-9
    scale_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.outlier_z_threshold <= 0:
            raise DataError("outlier_z_threshold must be positive")
        if self.baseline_window < 1:
            raise DataError("baseline_window must be >= 1")
        if self.downsample_factor < 1 or SESSION_LENGTH % self.downsample_factor:
            raise DataError(
                f"downsample_factor {self.downsample_factor} must divide {SESSION_LENGTH}"
            )
        if self.scale_range is not None:
            lo, hi = (float(v) for v in self.scale_range)
            if not hi > lo:
                raise DataError("scale_range must satisfy hi > lo")
            object.__setattr__(self, "scale_range", (lo, hi))

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.scale_range is not None:
            d["scale_range"] = list(self.scale_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        if d.get("scale_range") is not None:
            d["scale_range"] = tuple(d["scale_range"])
        return cls(**d)


# Training default: the separated score keeps its 0-100 device scale.
TRAINING_PREPROCESS = PreprocessConfig(scale_range=(0.0, 100.0))


def detect_outliers(series, z_threshold: float) -> set[int]:
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 3:
        raise DataError("outlier detection needs a 1-D series of length >= 3")
    if not np.all(np.isfinite(x)):
        raise DataError("series must be finite")
    std = x.std()
    if std == 0.0:
        return set()
    return {int(i) for i in np.flatnonzero(np.abs(x - x.mean()) > z_threshold * std)}


def replace_outliers(series, outliers) -> np.ndarray:
    """Replace flagged samples by the mean of their original neighbours."""
    x = np.asarray(series, dtype=np.float64)
    out = x.copy()
    n = x.shape[0]
    for i in sorted(outliers):
        if not 0 <= i < n:
            raise DataError(f"outlier index {i} out of range for length {n}")
        if n == 1:
            continue
        if i == 0:
            out[i] = x[1]
        elif i == n - 1:
            out[i] = x[n - 2]
        else:
            out[i] = 0.5 * (x[i - 1] + x[i + 1])
    return out


def trailing_median(series, window: int) -> np.ndarray:
    """Median of the ``window`` samples ending at each index (shorter at the start)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    w = min(window, n)
    padded = np.concatenate([np.full(w - 1, np.nan), x])
    frames = np.lib.stride_tricks.sliding_window_view(padded, w)
    return np.nanmedian(frames, axis=1)


def separate_features(series, config: PreprocessConfig) -> np.ndarray:
    """Y = 2A - B with B the trailing-window median of the same series."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise DataError("series must be non-empty")
    return 2.0 * x - trailing_median(x, config.baseline_window)


def downsample(series, factor: int) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    if factor < 1 or x.shape[0] % factor:
        raise DataError(f"factor {factor} does not divide length {x.shape[0]}")
    return x.reshape(-1, factor).mean(axis=1)


def minmax_normalize(series, epsilon: float) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise DataError("series must be non-empty")
    lo, hi = x.min(), x.max()
    if hi - lo <= epsilon:
        return np.full_like(x, 0.5)
    # clip guards against the last ulp of rounding
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def scale_normalize(series, lo: float, hi: float) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def preprocess_values(values, config: PreprocessConfig) -> np.ndarray:
    """Run the numeric part of the pipeline on a raw 180-sample series."""
    x = np.asarray(values, dtype=np.float64)
    if x.shape != (SESSION_LENGTH,):
        raise DataError(f"expected {SESSION_LENGTH} samples, got shape {x.shape}")
    x = replace_outliers(x, detect_outliers(x, config.outlier_z_threshold))
    y = separate_features(x, config)
    y = downsample(y, config.downsample_factor)
    if config.scale_range is None:
        return minmax_normalize(y, config.normalization_epsilon)
    return scale_normalize(y, *config.scale_range)


def preprocess_session(session: RawSession, config: PreprocessConfig) -> ProcessedWindow:
    feats = preprocess_values(session.values, config)
    return ProcessedWindow(features=feats, one_hot=encode_one_hot(session.label), source=session)
