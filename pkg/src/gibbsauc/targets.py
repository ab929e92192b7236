"""Priors, the tilted pseudo-posterior target, and default hyperparameters.

The target density is  prior(theta) * exp(-gamma * L(theta))  where L is
the pair-normalized misranking loss of the linear scores X @ theta. Both
inference backends work on exactly this unnormalized density, so their
evidence estimates are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import DataError
from .risk import misrank_loss

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianPrior:
    """Product of d independent N(0, var) coordinates."""

    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DataError(f"prior variance must be positive, got {self.var}")

    def log_density(self, theta: np.ndarray) -> np.ndarray | float:
        theta = np.asarray(theta, dtype=float)
        d = theta.shape[-1]
        sq = np.sum(theta * theta, axis=-1)
        return -0.5 * d * (LOG_2PI + np.log(self.var)) - 0.5 * sq / self.var

    def sample(self, size: int, d: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(scale=np.sqrt(self.var), size=(size, d))


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Per-coordinate two-component scale mixture: slab N(0, v1) with
    probability p, spike N(0, v0) otherwise. v0 = 0 means a point mass at
    zero; that case has no Lebesgue density and is usable only by the EP
    backend."""

    p: float
    v0: float
    v1: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DataError(f"inclusion probability must be in [0,1], got {self.p}")
        if self.v0 < 0 or not self.v1 > 0 or not self.v0 < self.v1:
            raise DataError(
                f"need 0 <= v0 < v1, got v0={self.v0}, v1={self.v1}"
            )

    def log_density(self, theta: np.ndarray) -> np.ndarray | float:
        if self.v0 == 0.0:
            raise DataError(
                "spike variance 0 has no pointwise density; use the EP backend"
            )
        theta = np.asarray(theta, dtype=float)
        t2 = theta * theta
        l1 = np.log(self.p) - 0.5 * (LOG_2PI + np.log(self.v1)) - 0.5 * t2 / self.v1
        l0 = (
            np.log1p(-self.p)
            - 0.5 * (LOG_2PI + np.log(self.v0))
            - 0.5 * t2 / self.v0
        )
        return np.logaddexp(l1, l0).sum(axis=-1)

    def sample(self, size: int, d: int, rng: np.random.Generator) -> np.ndarray:
        slab = rng.random((size, d)) < self.p
        sd = np.where(slab, np.sqrt(self.v1), np.sqrt(self.v0))
        return rng.normal(size=(size, d)) * sd


@dataclass(frozen=True)
class GibbsTarget:
    """Unnormalized pseudo-posterior over linear score directions."""

    prior: GaussianPrior | SpikeSlabPrior
    gamma: float
    ds: LabeledDataset

    def __post_init__(self):
        if self.gamma < 0:
            raise DataError(f"temperature must be >= 0, got {self.gamma}")
        self.ds.require_both_classes()

    @property
    def dim(self) -> int:
        return self.ds.d

    def loss(self, theta: np.ndarray) -> np.ndarray | float:
        """Misranking loss of the scores X @ theta; theta (d,) or (N, d)."""
        theta = np.asarray(theta, dtype=float)
        scores = theta @ self.ds.X.T
        return misrank_loss(scores, self.ds)

    def log_prior(self, theta: np.ndarray) -> np.ndarray | float:
        return self.prior.log_density(theta)

    def sample_prior(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.prior.sample(size, self.dim, rng)

    def log_unnorm(self, theta: np.ndarray) -> np.ndarray | float:
        """log prior + the exponential AUC-risk tilt, up to the evidence."""
        return self.log_prior(theta) - self.gamma * self.loss(theta)


def log_pseudo_posterior_unnorm(target: GibbsTarget, theta: np.ndarray):
    """Functional alias for GibbsTarget.log_unnorm."""
    return target.log_unnorm(theta)


@dataclass(frozen=True)
class DefaultHyperRecipe:
    """Margin-constant knob for the default hyperparameter formulas.

    mode 'MA1' gives the low-noise temperature (n-1)/(8C); 'MAinf' the
    conservative C*sqrt(d n log n).
    """

    C: float = 1.0
    mode: str = "MA1"

    def __post_init__(self):
        if self.C < 1.0:
            raise DataError(f"margin constant must be >= 1, got {self.C}")
        if self.mode not in ("MA1", "MAinf"):
            raise DataError(f"mode must be 'MA1' or 'MAinf', got {self.mode!r}")


@dataclass(frozen=True)
class HyperDefaults:
    theta_var: float
    gamma: float
    p: float
    v0_max: float


def default_hyperparameters(
    n: int, d: int, recipe: DefaultHyperRecipe = DefaultHyperRecipe()
) -> HyperDefaults:
    """Default prior scale, temperature, inclusion probability and spike
    variance bound as functions of (n, d).

    theta_var = (2/d)(1 + 1/(n^2 d)); gamma = (n-1)/(8C) in MA1 mode or
    C sqrt(d n log n) in MAinf mode; p = 1 - exp(-1/d); and
    v0_max = 1 / (2 n d max(log d, 1)), the log floored at 1 so the bound
    stays finite for d <= 2.
    """
    if n < 2 or d < 1:
        raise DataError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    theta_var = (2.0 / d) * (1.0 + 1.0 / (n * n * d))
    if recipe.mode == "MA1":
        gamma = (n - 1) / (8.0 * recipe.C)
    else:
        gamma = recipe.C * np.sqrt(d * n * np.log(n))
    p = -np.expm1(-1.0 / d)
    v0_max = 1.0 / (2.0 * n * d * max(np.log(d), 1.0))
    return HyperDefaults(theta_var, float(gamma), float(p), float(v0_max))
