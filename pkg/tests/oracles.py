"""Independent oracles used to pin expected values.

Everything here deliberately avoids the library's closed forms: brute
force pair enumeration for ranking quantities, adaptive quadrature for
tilted moments and one-dimensional evidence.
"""

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad as _quad

SQRT_2PI = np.sqrt(2.0 * np.pi)


def quad(*args, **kwargs):
    """scipy quad with roundoff chatter silenced; epsabs=0 in deep tails
    trips the warning while the estimates stay far inside our tolerances."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return _quad(*args, **kwargs)


def brute_misrank_loss(scores, y):
    """Double loop over (positive, negative) pairs, ties count as misranked."""
    scores = np.asarray(scores, dtype=float)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == -1)
    bad = sum(1 for i in pos for j in neg if scores[i] <= scores[j])
    return bad / (len(pos) * len(neg))


def brute_ordered_risk(scores, y):
    """(1/(n(n-1))) sum over ordered pairs i != j of the strict misranking
    indicator (s_i - s_j)(y_i - y_j) < 0."""
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    bad = sum(
        1
        for i in range(n)
        for j in range(n)
        if i != j and (scores[i] - scores[j]) * (y[i] - y[j]) < 0
    )
    return bad / (n * (n - 1))


def brute_auc(scores, y):
    """Half-credit pair counting."""
    scores = np.asarray(scores, dtype=float)
    pos = scores[np.asarray(y) == 1]
    neg = scores[np.asarray(y) == -1]
    wins = sum(1.0 for a in pos for b in neg if a > b)
    ties = sum(1.0 for a in pos for b in neg if a == b)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def step_tilted_quad(m, v, gamma_p):
    """Quadrature moments of N(m, v) tilted by e^{-gamma_p} below zero."""
    s = np.sqrt(v)
    x0 = -m / s  # t >= 0 corresponds to standardized x >= x0
    w_lo = np.exp(-gamma_p)

    def moment(j):
        f = lambda x: x**j * np.exp(-0.5 * x * x) / SQRT_2PI
        lo = quad(f, -np.inf, x0, epsabs=0, epsrel=1e-13, limit=300)[0]
        hi = quad(f, x0, np.inf, epsabs=0, epsrel=1e-13, limit=300)[0]
        return w_lo * lo + hi

    M0, M1, M2 = moment(0), moment(1), moment(2)
    mean_x = M1 / M0
    var_x = M2 / M0 - mean_x**2
    return M0, m + s * mean_x, v * var_x


def mixture_tilted_quad(p, m_cav, v_cav, v0, v1):
    """Quadrature moments of N(m_cav, v_cav) times the spike/slab mixture;
    a zero spike variance contributes an exact point mass at zero."""

    def dens(t):
        cav = np.exp(-0.5 * (t - m_cav) ** 2 / v_cav) / (SQRT_2PI * np.sqrt(v_cav))
        pri = p * np.exp(-0.5 * t * t / v1) / (SQRT_2PI * np.sqrt(v1))
        if v0 > 0:
            pri += (1 - p) * np.exp(-0.5 * t * t / v0) / (SQRT_2PI * np.sqrt(v0))
        return cav * pri

    M = [
        quad(lambda t: t**j * dens(t), -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=400)[0]
        for j in range(3)
    ]
    Z1 = (
        p
        * np.exp(-0.5 * m_cav**2 / (v1 + v_cav))
        / (SQRT_2PI * np.sqrt(v1 + v_cav))
    )
    if v0 == 0:
        atom = (1 - p) * np.exp(-0.5 * m_cav**2 / v_cav) / (SQRT_2PI * np.sqrt(v_cav))
        M[0] += atom
    mean = M[1] / M[0]
    var = M[2] / M[0] - mean**2
    inclusion = Z1 / M[0]
    return M[0], inclusion, mean, var


def evidence_quad_1d(ds, prior_var, gamma):
    """Evidence integral over a one-dimensional parameter by adaptive
    quadrature: E_prior[exp(-gamma * loss(theta * x))]."""
    from gibbsauc.risk import misrank_loss

    assert ds.d == 1
    sd = np.sqrt(prior_var)

    def integrand(t):
        loss = misrank_loss(np.atleast_1d(t) * ds.X[:, 0], ds)
        return np.exp(-0.5 * t * t / prior_var - gamma * loss) / (SQRT_2PI * sd)

    lo = quad(integrand, -12 * sd, 0.0, epsabs=0, epsrel=1e-12, limit=400)[0]
    hi = quad(integrand, 0.0, 12 * sd, epsabs=0, epsrel=1e-12, limit=400)[0]
    # the loss is flat at theta = 0 only on a null set; split keeps quad honest
    return lo + hi


def quad_logz_grad(m, v, gamma_p, eps=1e-5):
    """Central finite differences of the quadrature log normalizer with
    respect to the cavity mean and variance."""
    f = lambda mm, vv: np.log(step_tilted_quad(mm, vv, gamma_p)[0])
    dm = (f(m + eps, v) - f(m - eps, v)) / (2 * eps)
    dv = (f(m, v + eps) - f(m, v - eps)) / (2 * eps)
    return dm, dv
