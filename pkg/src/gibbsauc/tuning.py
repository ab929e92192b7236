"""Hyperparameter selection: evidence maximization over prior parameters
and cross-validated choice of the temperature.

Grids only, no gradients: the argmax is always a grid member. The SMC
backend prices a whole ascending temperature grid from a single run per
fold (reweighted snapshots along the ladder), which is its main practical
advantage here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import LabeledDataset, stratified_folds
from .ep_gaussian import EpConfig, ep_fit
from .errors import DataError, NumericalError, ToolkitError
from .gp import SqExpKernel, gp_ep_fit, gp_predict
from .risk import roc_auc
from .smc import SmcConfig, run_tempering_smc
from .targets import GaussianPrior, GibbsTarget, SpikeSlabPrior, default_hyperparameters


def default_gamma_grid(n: int, size: int = 8) -> np.ndarray:
    """Ascending logarithmic temperature grid spanning [n/100, 10n]."""
    return np.geomspace(n / 100.0, 10.0 * n, size)


def default_theta_var_grid(n: int, d: int) -> np.ndarray:
    """Prior variances bracketing the default recipe value by factors
    1/8 .. 8."""
    center = default_hyperparameters(n, d).theta_var
    return center * 2.0 ** np.arange(-3.0, 4.0)


@dataclass
class EvidenceResult:
    best: object
    table: list[tuple[object, float]]  # (grid value, log evidence)
    failures: list[tuple[object, str]] = field(default_factory=list)


def maximize_evidence(
    ds: LabeledDataset,
    evaluate: Callable[[LabeledDataset, object], float],
    grid,
) -> EvidenceResult:
    """Empirical-Bayes selection: argmax of log evidence over the grid.

    `evaluate(ds, value)` returns the backend's log evidence for one grid
    value; failing grid points are skipped and reported. Everything
    failing is an error.
    """
    grid = list(grid)
    if not grid:
        raise DataError("empty hyperparameter grid")
    table: list[tuple[object, float]] = []
    failures: list[tuple[object, str]] = []
    for value in grid:
        try:
            table.append((value, float(evaluate(ds, value))))
        except (NumericalError, np.linalg.LinAlgError, DataError) as exc:
            failures.append((value, str(exc)))
    if not table:
        raise ToolkitError(
            "evidence evaluation failed on every grid point: "
            + "; ".join(f"{v}: {msg}" for v, msg in failures)
        )
    best = max(table, key=lambda kv: kv[1])[0]
    return EvidenceResult(best=best, table=table, failures=failures)


def gaussian_ep_evidence(gamma: float, **cfg_kwargs) -> Callable:
    def evaluate(ds: LabeledDataset, theta_var: float) -> float:
        return ep_fit(ds, GaussianPrior(theta_var), EpConfig(gamma=gamma, **cfg_kwargs)).log_evidence

    return evaluate


def smc_evidence(gamma: float, cfg: SmcConfig) -> Callable:
    def evaluate(ds: LabeledDataset, theta_var: float) -> float:
        target = GibbsTarget(GaussianPrior(theta_var), gamma, ds)
        return run_tempering_smc(target, cfg).log_evidence

    return evaluate


def gp_ep_evidence(gamma: float, **cfg_kwargs) -> Callable:
    def evaluate(ds: LabeledDataset, kernel: SqExpKernel) -> float:
        return gp_ep_fit(ds, kernel, EpConfig(gamma=gamma, **cfg_kwargs)).log_evidence

    return evaluate


@dataclass
class CvResult:
    gamma: float
    table: list[tuple[float, float]]  # (gamma, mean validation AUC)
    fold_auc: np.ndarray  # (k, len(grid)) with NaN for dropped cells
    dropped: list[tuple[int, float, str]] = field(default_factory=list)


ScorerFactory = Callable[[LabeledDataset, np.ndarray], dict]


def ep_gaussian_scorers(prior: GaussianPrior, **cfg_kwargs) -> ScorerFactory:
    """One EP fit per temperature; scorers are linear in the features."""

    def factory(train: LabeledDataset, grid: np.ndarray) -> dict:
        out = {}
        for g in grid:
            fit = ep_fit(train, prior, EpConfig(gamma=float(g), **cfg_kwargs))
            out[float(g)] = lambda X, w=fit.mean: X @ w
        return out

    return factory


def smc_scorers(prior: GaussianPrior, cfg: SmcConfig) -> ScorerFactory:
    """One tempering run per fold serves every temperature at or below the
    top of the grid via reweighted ladder snapshots."""

    def factory(train: LabeledDataset, grid: np.ndarray) -> dict:
        gamma_top = float(np.max(grid))
        target = GibbsTarget(prior, gamma_top, train)
        run = run_tempering_smc(target, cfg, collect_at=[float(g) for g in grid])
        out = {}
        for g in grid:
            g = float(g)
            w = run.collected[g]["mean"] if g in run.collected else run.posterior_mean()
            out[g] = lambda X, w=w: X @ w
        return out

    return factory


def gp_scorers(kernel: SqExpKernel, **cfg_kwargs) -> ScorerFactory:
    def factory(train: LabeledDataset, grid: np.ndarray) -> dict:
        out = {}
        for g in grid:
            post = gp_ep_fit(train, kernel, EpConfig(gamma=float(g), **cfg_kwargs))
            out[float(g)] = lambda X, p=post: gp_predict(p, X)
        return out

    return factory


def cross_validate_gamma(
    ds: LabeledDataset,
    scorer_factory: ScorerFactory,
    gamma_grid,
    k: int = 5,
    seed: int = 0,
) -> CvResult:
    """Stratified k-fold selection of the temperature by mean validation
    AUC (half-credit ties). Ties in the mean break toward the smaller
    temperature; failed (fold, gamma) cells are dropped and reported.
    """
    grid = np.asarray(sorted(float(g) for g in gamma_grid))
    if grid.size == 0:
        raise DataError("empty temperature grid")
    folds = stratified_folds(ds, k, seed)
    fold_auc = np.full((k, grid.size), np.nan)
    dropped: list[tuple[int, float, str]] = []
    for fi, (tr_idx, va_idx) in enumerate(folds):
        train = ds.subset(tr_idx)
        val = ds.subset(va_idx)
        try:
            scorers = scorer_factory(train, grid)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            dropped.extend((fi, float(g), str(exc)) for g in grid)
            continue
        for gi, g in enumerate(grid):
            try:
                scores = scorers[float(g)](val.X)
                _, auc = roc_auc(scores, val.y)
                fold_auc[fi, gi] = auc
            except (NumericalError, np.linalg.LinAlgError, DataError) as exc:
                dropped.append((fi, float(g), str(exc)))
    if np.all(np.isnan(fold_auc)):
        raise ToolkitError("cross-validation failed on every (fold, gamma) cell")
    mean_auc = np.nanmean(fold_auc, axis=0)
    best_idx = int(np.nanargmax(mean_auc))  # first max = smallest gamma
    table = [(float(g), float(a)) for g, a in zip(grid, mean_auc)]
    return CvResult(
        gamma=float(grid[best_idx]), table=table, fold_auc=fold_auc, dropped=dropped
    )
