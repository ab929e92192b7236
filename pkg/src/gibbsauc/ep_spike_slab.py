"""EP under the spike-and-slab prior, with exact Dirac spikes allowed.

A binary indicator per coordinate picks slab N(0, v1) (probability p) or
spike N(0, v0). The indicator prior stays an exact factor of the
approximation; everything else is approximated by sites:

* the usual pair sites along x_i - x_j directions (reused from the
  Gaussian-prior engine), and
* one coordinate site per dimension, a Bernoulli-logit times an
  unnormalized 1-d Gaussian, exp(z*ell - u*theta^2/2 + v*theta),
  refreshed by matching the mixture-tilted cavity moments.

The Gaussian block is assembled as V = (diag(u) + sum K a a^T)^{-1},
m = V (v + sum h a), so the coordinate sites act as a data-adapted
diagonal replacement for the fixed prior precision of the Gaussian case.

The assembly is initialized at the moment-matched mixture prior
(u = 1/(p v1 + (1-p) v0)); with gamma = 0 that is already the fixed
point and the fit converges in one sweep with inclusions equal to p.
v0 = 0 is fully supported: the spike component contributes a point mass
at zero whose convolution formulas are the v0 -> 0 limits, and excluded
coordinates have their posterior variance absorbed toward zero (site
precisions are capped at 1e12 to keep the assembly finite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import LabeledDataset
from .ep_gaussian import EpConfig, _assemble, _PairSites, pair_differences
from .errors import DataError, NumericalError
from .targets import SpikeSlabPrior

LOG_2PI = float(np.log(2.0 * np.pi))
PRECISION_CAP = 1e12
MIN_DAMPING = 1e-3
_PCLIP = 1e-15


def _component_log_integral(lam, r, v):
    """log of integral exp(-lam t^2/2 + r t) N(t; 0, v) dt, with v = 0 read
    as a point mass at zero (giving 0). Requires 1 + lam*v > 0."""
    denom = 1.0 + lam * v
    return -0.5 * np.log(denom) + 0.5 * r * r * v / denom


def _mixture_tilted_nat(p, lam, r, v0, v1):
    """Moments of exp(-lam t^2/2 + r t) tilted by the spike/slab mixture,
    in cavity natural parameters so flat cavities (lam = 0) are exact.

    Returns (log_z_rel, inclusion, mean, var); log_z_rel is relative to
    the unnormalized cavity factor.
    """
    lw1 = np.log(p) + _component_log_integral(lam, r, v1)
    lw0 = np.log1p(-p) + _component_log_integral(lam, r, v0)
    log_z = np.logaddexp(lw1, lw0)
    w1 = np.exp(lw1 - log_z)
    w0 = 1.0 - w1
    d1 = 1.0 + lam * v1
    mean1 = r * v1 / d1
    var1 = v1 / d1
    d0 = 1.0 + lam * v0
    mean0 = r * v0 / d0
    var0 = v0 / d0
    mean = w1 * mean1 + w0 * mean0
    var = w1 * (var1 + mean1**2) + w0 * (var0 + mean0**2) - mean**2
    return log_z, w1, mean, var


def mixture_tilted_moments(p_cav, m_cav, v_cav, v0, v1):
    """(Z, inclusion, mean, var) of N(m_cav, v_cav) multiplied by the
    two-component prior mixture and renormalized. v0 may be 0."""
    p_cav = np.asarray(p_cav, dtype=float)
    v_cav = np.asarray(v_cav, dtype=float)
    m_cav = np.asarray(m_cav, dtype=float)
    if np.any(v_cav <= 0):
        raise DataError("cavity variance must be positive")
    lam = 1.0 / v_cav
    r = m_cav / v_cav
    log_z_rel, w1, mean, var = _mixture_tilted_nat(p_cav, lam, r, v0, v1)
    log_z = log_z_rel - 0.5 * m_cav**2 / v_cav - 0.5 * np.log(2 * np.pi * v_cav)
    return np.exp(log_z), w1, mean, var


class _CoordinateSites:
    """Per-coordinate Bernoulli x Gaussian site state."""

    def __init__(self, prior: SpikeSlabPrior, d: int):
        self.p = float(np.clip(prior.p, _PCLIP, 1.0 - _PCLIP))
        self.logit_p = logit(self.p)
        self.v0 = prior.v0
        self.v1 = prior.v1
        mix_var = self.p * prior.v1 + (1.0 - self.p) * prior.v0
        self.u = np.full(d, 1.0 / mix_var)
        self.v = np.zeros(d)
        self.ell = np.zeros(d)

    def propose(self, V, m, eta):
        """Damped parallel refresh of (ell, u, v) from the global Gaussian;
        returns proposals and the max parameter change."""
        v_kk = np.diag(V)
        lam_t = 1.0 / v_kk
        r_t = m / v_kk
        lam_c = lam_t - self.u
        r_c = r_t - self.v
        # flat cavities are legitimate (e.g. at gamma = 0); sites whose
        # cavity precision is genuinely negative are skipped for the sweep
        lam_c = np.where((lam_c < 0) & (lam_c > -1e-9 * lam_t), 0.0, lam_c)
        valid = lam_c >= 0

        u_prop, v_prop, ell_prop = self.u.copy(), self.v.copy(), self.ell.copy()
        if np.any(valid):
            _, w1, mean, var = _mixture_tilted_nat(
                self.p, lam_c[valid], r_c[valid], self.v0, self.v1
            )
            var = np.maximum(var, 1.0 / PRECISION_CAP)
            u_new = np.minimum(1.0 / var - lam_c[valid], PRECISION_CAP)
            v_new = mean / var - r_c[valid]
            ell_new = logit(np.clip(w1, _PCLIP, 1.0 - _PCLIP)) - self.logit_p
            u_prop[valid] = eta * u_new + (1.0 - eta) * self.u[valid]
            v_prop[valid] = eta * v_new + (1.0 - eta) * self.v[valid]
            ell_prop[valid] = eta * ell_new + (1.0 - eta) * self.ell[valid]
        delta = max(
            np.max(np.abs(u_prop - self.u), initial=0.0),
            np.max(np.abs(v_prop - self.v), initial=0.0),
            np.max(np.abs(ell_prop - self.ell), initial=0.0),
        )
        return u_prop, v_prop, ell_prop, delta

    def inclusion(self) -> np.ndarray:
        return expit(self.logit_p + self.ell)

    def log_norms(self, V, m):
        """Site constants matching the zeroth-order moment, relative to the
        unnormalized cavity; lam_t > 0 always so this never skips."""
        v_kk = np.diag(V)
        lam_t = 1.0 / v_kk
        r_t = m / v_kk
        lam_c = lam_t - self.u
        r_c = r_t - self.v
        lw1 = np.log(self.p) + _component_log_integral(lam_c, r_c, self.v1)
        lw0 = np.log1p(-self.p) + _component_log_integral(lam_c, r_c, self.v0)
        log_z = np.logaddexp(lw1, lw0)
        log_bern = np.logaddexp(np.log(self.p) + self.ell, np.log1p(-self.p))
        log_gauss_int = 0.5 * (LOG_2PI - np.log(lam_t)) + 0.5 * (r_c + self.v) ** 2 / lam_t
        return log_z - (log_bern + log_gauss_int)


@dataclass
class SpikeSlabResult:
    mean: np.ndarray
    cov: np.ndarray
    inclusion: np.ndarray
    log_evidence: float
    converged: bool
    n_sweeps: int
    damping_final: float
    warning: str | None = None
    # site state, reusable as a warm start
    site_K: np.ndarray | None = None
    site_h: np.ndarray | None = None
    coord_u: np.ndarray | None = None
    coord_v: np.ndarray | None = None
    coord_ell: np.ndarray | None = None

    def selected(self, threshold: float = 0.5) -> np.ndarray:
        return np.flatnonzero(self.inclusion >= threshold)


def ep_fit_spike_slab(
    ds: LabeledDataset,
    prior: SpikeSlabPrior,
    cfg: EpConfig,
    warm_start: SpikeSlabResult | None = None,
) -> SpikeSlabResult:
    """Fit the spike-and-slab EP approximation.

    Alternates a parallel pair-site sweep and a parallel coordinate-site
    sweep, reassembling the global Gaussian after each half-sweep. SPD
    failures halve the damping and redo the half-sweep, as in the
    Gaussian-prior fit.
    """
    ds.require_both_classes()
    if not 0.0 < prior.p < 1.0:
        raise DataError("EP spike-and-slab fit needs inclusion probability in (0,1)")
    A, pair_pos, pair_neg = pair_differences(ds)
    pairs = _PairSites(A, cfg.gamma)
    coords = _CoordinateSites(prior, ds.d)
    if warm_start is not None and warm_start.site_K is not None:
        pairs.K = warm_start.site_K.copy()
        pairs.h = warm_start.site_h.copy()
        coords.u = warm_start.coord_u.copy()
        coords.v = warm_start.coord_v.copy()
        coords.ell = warm_start.coord_ell.copy()

    eta = cfg.damping
    V, m, _ = _assemble(coords.u, coords.v, A, pairs.K, pairs.h)
    converged = False
    n_sweeps = 0
    while n_sweeps < cfg.max_sweeps:
        n_sweeps += 1
        # pair half-sweep
        K_prop, h_prop, delta_pair, _ = pairs.propose(V, m, eta)
        try:
            V, m, _ = _assemble(coords.u, coords.v, A, K_prop, h_prop)
        except np.linalg.LinAlgError:
            eta = _backoff(eta)
            n_sweeps -= 1
            continue
        pairs.K, pairs.h = K_prop, h_prop
        # coordinate half-sweep
        u_prop, v_prop, ell_prop, delta_coord = coords.propose(V, m, eta)
        try:
            V, m, _ = _assemble(u_prop, v_prop, A, pairs.K, pairs.h)
        except np.linalg.LinAlgError:
            eta = _backoff(eta)
            n_sweeps -= 1
            continue
        coords.u, coords.v, coords.ell = u_prop, v_prop, ell_prop
        if max(delta_pair, delta_coord) < cfg.tol:
            converged = True
            break

    warning = None if converged else (
        f"spike-and-slab EP did not converge within {cfg.max_sweeps} sweeps"
    )
    log_evidence = _spike_slab_log_evidence(A, pairs, coords, V, m)
    return SpikeSlabResult(
        mean=m,
        cov=V,
        inclusion=coords.inclusion(),
        log_evidence=log_evidence,
        converged=converged,
        n_sweeps=n_sweeps,
        damping_final=eta,
        warning=warning,
        site_K=pairs.K.copy(),
        site_h=pairs.h.copy(),
        coord_u=coords.u.copy(),
        coord_v=coords.v.copy(),
        coord_ell=coords.ell.copy(),
    )


def _backoff(eta: float) -> float:
    eta *= 0.5
    if eta < MIN_DAMPING:
        raise NumericalError(
            "spike-and-slab EP could not keep the assembly positive definite"
        )
    return eta


def _spike_slab_log_evidence(A, pairs: _PairSites, coords: _CoordinateSites, V, m):
    """Evidence approximation: site constants plus the normalizer of the
    (unnormalized) global approximation, whose Bernoulli block sums to
    (1-p) + p e^ell per coordinate."""
    log_c_pairs, _ = pairs.log_norms(V, m)
    log_c_coords = coords.log_norms(V, m)
    d = A.shape[1]
    prec = (A * pairs.K[:, None]).T @ A
    prec[np.diag_indices(d)] += coords.u
    sign, logdet_prec = np.linalg.slogdet(prec)
    if sign <= 0:
        raise NumericalError("assembly lost positive definiteness")
    r = A.T @ pairs.h + coords.v
    log_bern = np.logaddexp(np.log(coords.p) + coords.ell, np.log1p(-coords.p)).sum()
    log_gauss = 0.5 * d * LOG_2PI - 0.5 * logdet_prec + 0.5 * r @ m
    return float(log_c_pairs.sum() + log_c_coords.sum() + log_bern + log_gauss)


@dataclass
class PathPoint:
    v0: float
    mean: np.ndarray | None
    inclusion: np.ndarray | None
    selected: np.ndarray | None
    error: str | None = None


def default_v0_grid(lo: float = 1e-6, hi: float = 0.1, size: int = 13) -> np.ndarray:
    """Descending logarithmic spike-variance grid."""
    return np.geomspace(hi, lo, size)


def regularization_path(
    ds: LabeledDataset,
    prior: SpikeSlabPrior,
    v0_grid: np.ndarray,
    cfg: EpConfig,
    threshold: float = 0.5,
) -> list[PathPoint]:
    """Warm-started EP fits down a descending spike-variance grid.

    Per grid point reports the coordinate posterior means, inclusion
    probabilities and the selected set {inclusion >= threshold}. A failed
    point is recorded and the path continues from a cold start.
    """
    v0_grid = np.asarray(v0_grid, dtype=float)
    if v0_grid.size == 0:
        raise DataError("empty spike-variance grid")
    if np.any(np.diff(v0_grid) > 0):
        raise DataError("spike-variance grid must be sorted descending")
    out: list[PathPoint] = []
    warm: SpikeSlabResult | None = None
    for v0 in v0_grid:
        pr = SpikeSlabPrior(p=prior.p, v0=float(v0), v1=prior.v1)
        try:
            fit = ep_fit_spike_slab(ds, pr, cfg, warm_start=warm)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            out.append(PathPoint(float(v0), None, None, None, error=str(exc)))
            warm = None
            continue
        out.append(
            PathPoint(
                float(v0),
                fit.mean.copy(),
                fit.inclusion.copy(),
                fit.selected(threshold),
            )
        )
        warm = fit
    return out


def write_path_csv(path_points: list[PathPoint], path) -> None:
    """CSV export with columns v0, coordinate, posterior_mean, inclusion."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("v0,coordinate,posterior_mean,inclusion\n")
        for pt in path_points:
            if pt.mean is None:
                continue
            for k, (mu, pi) in enumerate(zip(pt.mean, pt.inclusion)):
                fh.write(f"{pt.v0!r},{k},{float(mu)!r},{float(pi)!r}\n")
