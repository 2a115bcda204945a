"""Sliding-window classification of a live score stream, mapped to robot commands."""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .checkpoint import Checkpoint
from .errors import DataError
from .network import model_forward
from .preprocess import preprocess_values
from .signal_model import SESSION_LENGTH, LabelClass, decode_class

DEFAULT_COMMANDS = {
    LabelClass.RELAXED: "stop",
    LabelClass.FOCUSED: "forward",
    LabelClass.RELAXED_TO_FOCUSED: "start_task",
    LabelClass.FOCUSED_TO_RELAXED: "end_task",
}


@dataclass(frozen=True)
class StreamConfig:
    stride: int = 30
    smoothing: int = 3
    commands: dict = field(default_factory=lambda: dict(DEFAULT_COMMANDS))

    def __post_init__(self):
        if self.stride < 1:
            raise DataError("stride must be >= 1")
        if self.smoothing < 1 or self.smoothing % 2 == 0:
            raise DataError("smoothing window must be a positive odd integer")
        cmds = {LabelClass(k): str(v) for k, v in self.commands.items()}
        if set(cmds) != set(LabelClass):
            raise DataError("command map must cover all four classes")
        object.__setattr__(self, "commands", cmds)


def classify_window(checkpoint: Checkpoint, raw_window) -> tuple[LabelClass, np.ndarray]:
    """Preprocess a 180-sample window with the checkpoint's config and classify it."""
    x = np.asarray(raw_window, dtype=np.float64)
    if x.shape != (SESSION_LENGTH,):
        raise DataError(f"window must have {SESSION_LENGTH} samples, got shape {x.shape}")
    feats = preprocess_values(x, checkpoint.preprocess_config)
    probs, _ = model_forward(checkpoint.model_config, checkpoint.params, feats[None, :, None])
    return decode_class(probs[0]), probs[0]


def inference_count(n_samples: int, stride: int) -> int:
    return max(0, (n_samples - SESSION_LENGTH) // stride + 1)


def majority(decisions) -> LabelClass:
    """Most frequent class; ties go to the tied class decided most recently."""
    counts = Counter(decisions)
    top = max(counts.values())
    for cls in reversed(decisions):
        if counts[cls] == top:
            return cls
    raise AssertionError("unreachable")


@dataclass
class StreamLog:
    entries: list[dict] = field(default_factory=list)
    windows: int = 0
    malformed: int = 0
    commands: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return f"windows processed: {self.windows}; malformed lines skipped: {self.malformed}"


def log_line(entry: dict) -> str:
    return json.dumps(entry, separators=(",", ":"))


def run_stream(source: Iterable, checkpoint: Checkpoint, cfg: StreamConfig = StreamConfig(),
               sink: Callable[[str], None] | None = None,
               on_entry: Callable[[dict], None] | None = None) -> StreamLog:
    """Consume samples (numbers or text lines), classify every ``stride`` samples.

    ``sink`` receives each emitted command; a command is emitted only when the
    majority-vote class over the last ``cfg.smoothing`` decisions changes.
    ``on_entry`` receives every log entry as soon as it is produced.
    """
    buffer: deque[float] = deque(maxlen=SESSION_LENGTH)
    recent: deque[LabelClass] = deque(maxlen=cfg.smoothing)
    log = StreamLog()
    current = None
    count = 0
    for item in source:
        try:
            value = float(item.strip() if isinstance(item, str) else item)
        except (TypeError, ValueError):
            value = math.nan
        if not math.isfinite(value):
            if not (isinstance(item, str) and not item.strip()):
                log.malformed += 1
            continue
        buffer.append(value)
        count += 1
        if count < SESSION_LENGTH or (count - SESSION_LENGTH) % cfg.stride:
            continue
        cls, probs = classify_window(checkpoint, np.fromiter(buffer, dtype=np.float64))
        log.windows += 1
        recent.append(cls)
        smoothed = majority(list(recent))
        command = None
        if smoothed != current:
            current = smoothed
            command = cfg.commands[smoothed]
            log.commands.append(command)
            if sink is not None:
                sink(command)
        entry = {"i": count, "class": cls.key, "probs": [float(p) for p in probs],
                 "command": command}
        log.entries.append(entry)
        if on_entry is not None:
            on_entry(entry)
    return log
