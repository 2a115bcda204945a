"""Core domain types: labels, sessions, processed windows and datasets."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataError, ShapeError

SESSION_LENGTH = 180
WINDOW_LENGTH = 30
CLASS_COUNT = 4


class LabelClass(enum.IntEnum):
    """Four mental states; the integer value is the canonical index."""

    RELAXED = 0
    RELAXED_TO_FOCUSED = 1
    FOCUSED_TO_RELAXED = 2
    FOCUSED = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "LabelClass":
        try:
            return cls[key.upper()]
        except KeyError:
            raise DataError(f"unknown label {key!r}") from None


class Gender(enum.Enum):
    MALE = "M"
    FEMALE = "F"


def _frozen_array(values, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D sequence, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DataError(f"expected {length} values, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("values must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RawSession:
    """One 180-sample brain-score recording with its metadata."""

    values: np.ndarray
    label: LabelClass
    subject_id: str
    gender: Gender
    noisy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, SESSION_LENGTH))
        object.__setattr__(self, "label", LabelClass(self.label))
        object.__setattr__(self, "gender", Gender(self.gender))

    def to_json(self) -> dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "gender": self.gender.value,
            "label": self.label.key,
            "noisy": bool(self.noisy),
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RawSession":
        try:
            return cls(
                values=obj["values"],
                label=LabelClass.from_key(obj["label"]),
                subject_id=str(obj["subject_id"]),
                gender=Gender(obj["gender"]),
                noisy=bool(obj["noisy"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed session record: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ProcessedWindow:
    """Normalized length-30 feature sequence plus its one-hot label."""

    features: np.ndarray
    one_hot: np.ndarray
    source: RawSession | None = None

    def __post_init__(self):
        feats = _frozen_array(self.features, WINDOW_LENGTH)
        if np.any(feats < 0.0) or np.any(feats > 1.0):
            raise DataError("features must lie in [0, 1]")
        oh = _frozen_array(self.one_hot, CLASS_COUNT)
        if np.count_nonzero(oh == 1.0) != 1 or np.count_nonzero(oh == 0.0) != CLASS_COUNT - 1:
            raise DataError(f"one_hot must be a unit basis vector, got {oh.tolist()}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "one_hot", oh)

    @property
    def label(self) -> LabelClass:
        return LabelClass(int(np.argmax(self.one_hot)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of sessions or windows."""

    items: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, idx):
        return self.items[idx]

    def labels(self) -> list[LabelClass]:
        return [it.label for it in self.items]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack windows into ``X`` of shape [n, 30, 1] and ``Y`` of shape [n, 4]."""
        if not self.items:
            raise DataError("dataset is empty")
        X = np.stack([w.features for w in self.items])[:, :, None]
        Y = np.stack([w.one_hot for w in self.items])
        return X, Y


def encode_one_hot(cls: LabelClass) -> np.ndarray:
    vec = np.zeros(CLASS_COUNT)
    vec[LabelClass(cls).value] = 1.0
    return vec


def decode_class(probs: Sequence[float]) -> LabelClass:
    """Argmax class; ``np.argmax`` already returns the lowest index on ties."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.shape != (CLASS_COUNT,):
        raise ShapeError(f"expected {CLASS_COUNT} probabilities, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("probabilities must be finite")
    return LabelClass(int(np.argmax(arr)))


def split_dataset(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle deterministically under ``seed`` and cut into train/test parts.

    The train part holds ``round(train_fraction * N)`` items.
    """
    if len(data) == 0:
        raise DataError("cannot split an empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    order = np.random.default_rng(seed).permutation(len(data))
    n_train = int(round(train_fraction * len(data)))
    meta = dict(data.metadata, split_seed=seed, train_fraction=train_fraction)
    train = Dataset(tuple(data.items[i] for i in order[:n_train]), dict(meta, part="train"))
    test = Dataset(tuple(data.items[i] for i in order[n_train:]), dict(meta, part="test"))
    return train, test


def write_sessions_jsonl(sessions: Iterable[RawSession], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_json(), separators=(", ", ": ")) + "\n")


def read_sessions_jsonl(path) -> list[RawSession]:
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            sessions.append(RawSession.from_json(obj))
    return sessions
