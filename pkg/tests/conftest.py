import numpy as np
import pandas as pd
import pytest

from nvo.mechanism import action_set
from nvo.preprocess import RawDataset, from_bins


@pytest.fixture
def four_instances():
    """Bins {10, 10, 50, 90} of K=101, scales {2, 1, 0.33} at eps=1."""
    return from_bins([10, 10, 50, 90], k=101), action_set(1.0, 1.0, (2.0, 1.0, 0.33)), 1.0


def bimodal_values(n: int = 1000, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    half = n // 2
    return np.concatenate([rng.normal(180.0, 6.0, half), rng.normal(205.0, 5.0, n - half)])


@pytest.fixture
def bimodal():
    return RawDataset(values=bimodal_values().tolist(), label="height")


@pytest.fixture
def bimodal_csv(tmp_path):
    path = tmp_path / "heights.csv"
    values = bimodal_values(n=200, seed=11)
    pd.DataFrame({"player": [f"p{i}" for i in range(values.size)], "height": values}).to_csv(
        path, index=False
    )
    return str(path)
