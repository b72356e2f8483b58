from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
CONFIGS = Path(__file__).parent.parent / "configs"
SEED = 20211013


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture
def small() -> np.ndarray:
    return np.array([[1.0, 2.0], [3.0, 4.0]])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)
