import pathlib
import sys

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
PIMA_PATH = REPO_ROOT / "data" / "pima.csv"

PIMA_MISSING_REASON = (
    "data/pima.csv not present: the benchmark dataset cannot be fetched in "
    "this offline environment; see data/README.md for how to drop it in"
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def load_pima():
    """Load data/pima.csv in either of the two common layouts: a header
    with a 'type' Yes/No column, or headerless with a trailing 0/1 label."""
    from gibbsauc.data import load_dataset

    with open(PIMA_PATH, encoding="utf-8") as fh:
        first = fh.readline()
    if "type" in first:
        return load_dataset(PIMA_PATH, label_column="type", positive_label="Yes")
    return load_dataset(PIMA_PATH, label_column=-1, positive_label="1")


@pytest.fixture
def pima_dataset():
    if not PIMA_PATH.exists():
        pytest.skip(PIMA_MISSING_REASON)
    return load_pima()
