import numpy as np
import pytest

from deepbrain.benchmark import preprocess_dataset
from deepbrain.network import ModelConfig
from deepbrain.preprocess import TRAINING_PREPROCESS
from deepbrain.signal_model import split_dataset
from deepbrain.synthgen import GenSpec, generate_dataset
from deepbrain.training import TrainConfig, train_model

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_sessions():
    return generate_dataset(GenSpec(sessions_per_class=30), noisy=False, seed=3)


@pytest.fixture(scope="session")
def small_checkpoint(small_sessions):
    """DeepBrain trained briefly with a raised learning rate; a fast stand-in model."""
    train, valid = split_dataset(preprocess_dataset(small_sessions), 0.8, 0)
    ckpt, _ = train_model(ModelConfig(), TrainConfig(epochs=40, batch_size=32, seed=0, lr=3e-3),
                          train, valid, preprocess_config=TRAINING_PREPROCESS)
    return ckpt


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
