from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from nnvp.models import Dataset
from nnvp.schemas import MLPConfig
from scripts.synth import make_blobs, make_separable, to_csv


# --- DATASETS ---

@pytest.fixture
def blobs() -> Dataset:
    """Three well separated classes, 60 examples, 4 attributes."""
    return make_blobs(num_examples=60, num_attributes=4, num_classes=3, spread=0.5, seed=3)


@pytest.fixture
def small_blobs() -> Dataset:
    """Tiny 3-class set for transductive tests (every step retrains c networks)."""
    return make_blobs(num_examples=20, num_attributes=2, num_classes=3, spread=0.7, seed=11)


@pytest.fixture
def separable() -> Dataset:
    return make_separable(num_examples=60, margin=1.0, seed=5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


# --- CONFIGS ---

@pytest.fixture
def fast_config() -> MLPConfig:
    """Small network and short training; enough for plumbing tests."""
    return MLPConfig(hidden_units=3, num_restarts=1, max_epochs=15, patience=5, init_seed=7)


# --- FILES ---

@pytest.fixture
def write_csv(tmp_path: Path) -> Callable[[str, str], Path]:
    """Writes raw text to a file under tmp_path and returns its path."""
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def blobs_csv(tmp_path: Path) -> Path:
    return to_csv(make_blobs(num_examples=24, num_attributes=2, num_classes=3, spread=0.5, seed=1),
                  tmp_path / "blobs.csv")
