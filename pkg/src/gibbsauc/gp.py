"""Nonlinear scoring through a Gaussian-process prior on the training
scores s_1..s_n.

The pseudo-posterior over the score vector is N(s; 0, K) times the usual
exponential tilt on the misranking loss, so both backends apply
unchanged with dimension n: EP puts one 1-d site per mixed pair on the
projection s_i - s_j (cavity marginals cost O(1) per site once the full
covariance is held in memory; the O(n^3) reassembly happens once per
sweep), and the tempering sampler just needs a prior sampler with
covariance K.

Out-of-sample scores use the standard conditional-mean rule
score(x*) = k(x*)^T K^{-1} m_post.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from .data import LabeledDataset
from .ep_gaussian import EpConfig, _site_log_norms, _step_tilted_log, cavity_moments
from .errors import DataError, NumericalError
from .risk import misrank_loss

MIN_DAMPING = 1e-3


@dataclass(frozen=True)
class SqExpKernel:
    """Squared-exponential kernel with a diagonal jitter.

    jitter defaults to 1e-6 * variance; it keeps the Gram matrix
    factorizable and bounds the reproducing error of gp_predict at a
    training point.
    """

    variance: float = 1.0
    lengthscale: float = 1.0
    jitter: float | None = None

    def __post_init__(self):
        if self.variance <= 0 or self.lengthscale <= 0:
            raise DataError("kernel variance and lengthscale must be positive")
        if self.jitter is not None and self.jitter <= 0:
            raise DataError("jitter must be positive")

    @property
    def effective_jitter(self) -> float:
        return self.jitter if self.jitter is not None else 1e-6 * self.variance

    def cross(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        sq = cdist(X1, X2, "sqeuclidean")
        return self.variance * np.exp(-0.5 * sq / self.lengthscale**2)


def gram(X: np.ndarray, kernel: SqExpKernel) -> np.ndarray:
    """Symmetric kernel matrix with jitter on the diagonal."""
    X = np.asarray(X, dtype=float)
    K = kernel.cross(X, X)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += kernel.effective_jitter
    return K


class GpGibbsTarget:
    """Pseudo-posterior over the n-vector of training scores, SMC-ready."""

    def __init__(self, ds: LabeledDataset, kernel: SqExpKernel, gamma: float):
        ds.require_both_classes()
        if gamma < 0:
            raise DataError("gamma must be >= 0")
        self.ds = ds
        self.kernel = kernel
        self.gamma = gamma
        self.K = gram(ds.X, kernel)
        self._chol = np.linalg.cholesky(self.K)
        self._logdet = 2.0 * np.log(np.diag(self._chol)).sum()

    @property
    def dim(self) -> int:
        return self.ds.n

    def sample_prior(self, size: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return z @ self._chol.T

    def log_prior(self, s: np.ndarray) -> np.ndarray | float:
        s = np.asarray(s, dtype=float)
        sol = solve_triangular(self._chol, np.atleast_2d(s).T, lower=True)
        quad = np.sum(sol * sol, axis=0)
        out = -0.5 * (self.dim * np.log(2 * np.pi) + self._logdet + quad)
        return out if s.ndim == 2 else float(out[0])

    def loss(self, s: np.ndarray) -> np.ndarray | float:
        return misrank_loss(s, self.ds)

    def log_unnorm(self, s: np.ndarray) -> np.ndarray | float:
        return self.log_prior(s) - self.gamma * self.loss(s)


@dataclass
class GpPosterior:
    X_train: np.ndarray
    kernel: SqExpKernel
    mean: np.ndarray
    cov: np.ndarray
    weights: np.ndarray  # K^{-1} mean, precomputed for prediction
    log_evidence: float
    converged: bool
    n_sweeps: int
    warning: str | None = None


def gp_ep_fit(ds: LabeledDataset, kernel: SqExpKernel, cfg: EpConfig) -> GpPosterior:
    """EP fit of the GP pseudo-posterior.

    Sites live on pair projections s_i - s_j, so their marginals come
    from four entries of the running covariance; damping, SPD backoff and
    the evidence construction mirror the linear Gaussian fit.
    """
    ds.require_both_classes()
    n = ds.n
    pos, neg = ds.pos_idx, ds.neg_idx
    pair_pos = np.repeat(pos, neg.size)
    pair_neg = np.tile(neg, pos.size)
    n_pairs = pair_pos.size
    gamma_p = cfg.gamma / n_pairs

    K_mat = gram(ds.X, kernel)
    chol_prior = cho_factor(K_mat, lower=True)
    prior_prec = cho_solve(chol_prior, np.eye(n))
    logdet_prior = 2.0 * np.log(np.diag(chol_prior[0])).sum()

    site_K = np.zeros(n_pairs)
    site_h = np.zeros(n_pairs)
    V = K_mat.copy()
    m = np.zeros(n)
    eta = cfg.damping
    converged = False
    n_sweeps = 0
    while n_sweeps < cfg.max_sweeps:
        n_sweeps += 1
        m_t = m[pair_pos] - m[pair_neg]
        v_t = (
            V[pair_pos, pair_pos]
            + V[pair_neg, pair_neg]
            - 2.0 * V[pair_pos, pair_neg]
        )
        m_cav, v_cav, valid = cavity_moments(m_t, v_t, site_K, site_h)
        K_prop, h_prop = site_K.copy(), site_h.copy()
        if np.any(valid):
            _, mean, var = _step_tilted_log(m_cav[valid], v_cav[valid], gamma_p)
            K_new = 1.0 / var - 1.0 / v_cav[valid]
            h_new = mean / var - m_cav[valid] / v_cav[valid]
            K_prop[valid] = eta * K_new + (1.0 - eta) * site_K[valid]
            h_prop[valid] = eta * h_new + (1.0 - eta) * site_h[valid]
        delta = max(
            np.max(np.abs(K_prop - site_K), initial=0.0),
            np.max(np.abs(h_prop - site_h), initial=0.0),
        )
        try:
            V, m = _gp_assemble(prior_prec, pair_pos, pair_neg, K_prop, h_prop)
        except np.linalg.LinAlgError:
            eta *= 0.5
            if eta < MIN_DAMPING:
                raise NumericalError(
                    "GP EP could not keep the assembly positive definite"
                ) from None
            n_sweeps -= 1
            continue
        site_K, site_h = K_prop, h_prop
        if delta < cfg.tol:
            converged = True
            break

    m_t = m[pair_pos] - m[pair_neg]
    v_t = V[pair_pos, pair_pos] + V[pair_neg, pair_neg] - 2.0 * V[pair_pos, pair_neg]
    log_c, _ = _site_log_norms(m_t, v_t, site_K, site_h, gamma_p)
    sign, logdet_v = np.linalg.slogdet(V)
    if sign <= 0:
        raise NumericalError("GP covariance lost positive definiteness")
    r = np.zeros(n)
    np.add.at(r, pair_pos, site_h)
    np.add.at(r, pair_neg, -site_h)
    log_evidence = float(log_c.sum() + 0.5 * (logdet_v - logdet_prior) + 0.5 * r @ m)

    warning = None if converged else (
        f"GP EP did not converge within {cfg.max_sweeps} sweeps"
    )
    return GpPosterior(
        X_train=ds.X.copy(),
        kernel=kernel,
        mean=m,
        cov=V,
        weights=cho_solve(chol_prior, m),
        log_evidence=log_evidence,
        converged=converged,
        n_sweeps=n_sweeps,
        warning=warning,
    )


def _gp_assemble(prior_prec, pair_pos, pair_neg, site_K, site_h):
    """V = (K^{-1} + B)^{-1}, m = V r, with B the sparse pair-precision
    pattern (+K at (i,i),(j,j); -K at (i,j),(j,i))."""
    n = prior_prec.shape[0]
    prec = prior_prec.copy()
    np.add.at(prec, (pair_pos, pair_pos), site_K)
    np.add.at(prec, (pair_neg, pair_neg), site_K)
    np.add.at(prec, (pair_pos, pair_neg), -site_K)
    np.add.at(prec, (pair_neg, pair_pos), -site_K)
    L = np.linalg.cholesky(prec)
    V = cho_solve((L, True), np.eye(n))
    V = 0.5 * (V + V.T)
    r = np.zeros(n)
    np.add.at(r, pair_pos, site_h)
    np.add.at(r, pair_neg, -site_h)
    m = cho_solve((L, True), r)
    return V, m


def gp_predict(post: GpPosterior, X_new: np.ndarray) -> np.ndarray:
    """Posterior-mean scores at new inputs."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != post.X_train.shape[1]:
        raise DataError(
            f"expected {post.X_train.shape[1]} features, got {X_new.shape[1]}"
        )
    return post.kernel.cross(X_new, post.X_train) @ post.weights
