"""Synthetic benchmark: train and score model kinds on quiet and noisy data."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .evaluation import MetricsReport, classification_metrics
from .network import ModelConfig, ModelKind, predict_proba
from .preprocess import TRAINING_PREPROCESS, PreprocessConfig, preprocess_session
from .signal_model import Dataset, split_dataset
from .synthgen import GenSpec, generate_dataset
from .training import EpochRecord, TrainConfig, train_model

log = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["method", "accuracy", "precision", "recall", "f1", "auc"]
METHOD_NAMES = {
    ModelKind.MLP: "MLP",
    ModelKind.PLAIN_LSTM: "LSTM",
    ModelKind.STACKED_LSTM: "Stacked LSTM",
    ModelKind.DEEPBRAIN: "DeepBrain",
}


@dataclass(frozen=True)
class BenchmarkSettings:
    """Defaults for the full-size synthetic benchmark (800 sessions per condition)."""

    sessions_per_class: int = 200
    dataset_seed: int = 7
    train_fraction: float = 0.8
    # share of the training part held back for best-epoch selection
    valid_fraction: float = 0.125
    epochs: int = 150
    batch_size: int = 64
    lr: float = 1e-4

    def to_dict(self) -> dict:
        return asdict(self)


def preprocess_dataset(sessions: Dataset, config: PreprocessConfig = TRAINING_PREPROCESS) -> Dataset:
    windows = tuple(preprocess_session(s, config) for s in sessions)
    return Dataset(windows, dict(sessions.metadata, preprocess=config.to_dict()))


def benchmark_datasets(settings: BenchmarkSettings = BenchmarkSettings()) -> dict[str, Dataset]:
    spec = GenSpec(sessions_per_class=settings.sessions_per_class)
    return {
        "quiet": generate_dataset(spec, noisy=False, seed=settings.dataset_seed),
        "noisy": generate_dataset(spec, noisy=True, seed=settings.dataset_seed),
    }


@dataclass
class TrialResult:
    kind: ModelKind
    condition: str
    seed: int
    report: MetricsReport
    checkpoint: Checkpoint
    history: list[EpochRecord]


def run_trial(kind, sessions: Dataset, seed: int, settings: BenchmarkSettings = BenchmarkSettings(),
              condition: str = "", preprocess_config: PreprocessConfig = TRAINING_PREPROCESS,
              ) -> TrialResult:
    """Split 80/20 under ``seed``, train one model and score it on the held-out part."""
    kind = ModelKind(kind)
    windows = preprocess_dataset(sessions, preprocess_config)
    train, test = split_dataset(windows, settings.train_fraction, seed)
    fit, valid = split_dataset(train, 1.0 - settings.valid_fraction, seed)
    tcfg = TrainConfig(epochs=settings.epochs, batch_size=settings.batch_size, seed=seed,
                       lr=settings.lr)
    ckpt, history = train_model(ModelConfig.for_kind(kind), tcfg, fit, valid, preprocess_config)
    X, Y = test.arrays()
    probs = predict_proba(ckpt.model_config, ckpt.params, X)
    report = classification_metrics(probs.argmax(axis=1), Y.argmax(axis=1), probs)
    log.info("%s/%s seed %d: test accuracy %.4f", condition, kind.value, seed, report.accuracy)
    return TrialResult(kind, condition, seed, report, ckpt, history)


@dataclass
class ComparisonTable:
    """Per-condition rows of mean metrics over seeds, plus every per-seed value."""

    seeds: list[int]
    rows: dict[str, list[dict]] = field(default_factory=dict)
    per_seed: dict[str, list[dict]] = field(default_factory=dict)

    def mean_accuracy(self, condition: str, kind) -> float:
        name = METHOD_NAMES[ModelKind(kind)]
        return next(r["accuracy"] for r in self.rows[condition] if r["method"] == name)

    def to_json(self) -> dict:
        return {"seeds": self.seeds, "columns": COMPARISON_COLUMNS,
                "conditions": self.rows, "per_seed": self.per_seed}


def compare_models(kinds, datasets: dict[str, Dataset], seeds,
                   settings: BenchmarkSettings = BenchmarkSettings(),
                   trials: dict | None = None) -> ComparisonTable:
    """Train every kind on every condition for every seed; average the headline metrics.

    ``trials`` (optional) receives each :class:`TrialResult` keyed by
    ``(condition, kind, seed)``.
    """
    kinds = [ModelKind(k) for k in kinds]
    seeds = [int(s) for s in seeds]
    table = ComparisonTable(seeds=seeds)
    for condition, sessions in datasets.items():
        table.rows[condition] = []
        table.per_seed[condition] = []
        for kind in kinds:
            heads = []
            for seed in seeds:
                result = run_trial(kind, sessions, seed, settings, condition)
                if trials is not None:
                    trials[(condition, kind, seed)] = result
                head = result.report.headline()
                heads.append(head)
                table.per_seed[condition].append(
                    {"method": METHOD_NAMES[kind], "seed": seed, **head})
            row = {"method": METHOD_NAMES[kind]}
            for col in COMPARISON_COLUMNS[1:]:
                row[col] = float(np.mean([h[col] for h in heads]))
            table.rows[condition].append(row)
    return table
