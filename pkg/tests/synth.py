"""Seeded synthetic datasets shared across the test suite."""

import numpy as np

from gibbsauc.data import LabeledDataset, standardize


def linear_dataset(n, d, theta=None, noise=0.0, seed=0, standardized=False):
    """Labels from the sign of a linear score plus optional Gaussian noise.

    noise = 0 gives a noiseless margin task. Regenerates until both
    classes are present.
    """
    rng = np.random.default_rng(seed)
    if theta is None:
        theta = np.zeros(d)
        theta[0] = 2.0
        if d > 1:
            theta[1] = -1.0
    theta = np.asarray(theta, dtype=float)
    for _ in range(100):
        X = rng.standard_normal((n, d))
        margin = X @ theta + noise * rng.standard_normal(n)
        y = np.where(margin > 0, 1, -1)
        if 0 < (y == 1).sum() < n:
            ds = LabeledDataset(X, y)
            return standardize(ds)[0] if standardized else ds
    raise RuntimeError("could not generate a two-class dataset")


def d1_dataset(n=20, seed=3):
    """One-dimensional toy with overlapping classes."""
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    x = np.concatenate(
        [rng.normal(0.8, 1.0, size=n_pos), rng.normal(-0.8, 1.0, size=n - n_pos)]
    )
    y = np.concatenate([np.ones(n_pos, dtype=int), -np.ones(n - n_pos, dtype=int)])
    return LabeledDataset(x[:, None], y)


def xor_dataset(n, seed=0, margin=0.3):
    """Two-dimensional XOR-style task: the label is the sign of x1 * x2.

    Linearly unrankable by construction; a stationary kernel method
    separates it easily.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    keep = np.abs(X[:, 0] * X[:, 1]) > margin * 0.1
    X = X[keep]
    y = np.where(X[:, 0] * X[:, 1] > 0, 1, -1)
    if 0 < (y == 1).sum() < len(y):
        return LabeledDataset(X, y)
    return xor_dataset(n, seed + 1000, margin)


def sparse_dataset(n=200, d=50, k_active=5, seed=0, coef=1.5, noise=0.5):
    """Sparse linear task: k_active coordinates carry all the signal."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(d)
    active = rng.choice(d, size=k_active, replace=False)
    theta[active] = coef * rng.choice([-1.0, 1.0], size=k_active)
    X = rng.standard_normal((n, d))
    y = np.where(X @ theta + noise * rng.standard_normal(n) > 0, 1, -1)
    if not 0 < (y == 1).sum() < n:
        return sparse_dataset(n, d, k_active, seed + 1000, coef, noise)
    return LabeledDataset(X, y), np.sort(active)
