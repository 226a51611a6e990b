"""Matrix-valued (relative / generalized) Fisher information estimators.

Two expectation forms of the generalized Fisher divergence are provided:

* q-form: ``E_q[f''(r) grad r grad r^T]``
* p-form: ``E_p[r f''(r) u u^T]`` with ``u = grad log p - grad log q``

where ``r = p / q``. They agree because ``grad r = r u``.
"""

from dataclasses import dataclass

import numpy as np

from . import _mc
from .divergence import _check_same_dim, _finite, log_ratio, parse_generator
from .mixtures import draw_latent, gmm_logpdf_and_score, transform_latent
from .quadrature import check_coverage, check_dim, envelope, hermite_grid


@dataclass(frozen=True, eq=False)
class MatrixEstimate:
    mean: np.ndarray
    std_error: np.ndarray
    n_samples: int
    method: str  # "monte_carlo_p" | "monte_carlo_q" | "quadrature"

    def contract(self, V):
        """``tr(mean @ V)`` and its standard error, treating entries as independent."""
        V = np.asarray(V, dtype=float)
        value = float(np.sum(self.mean * V))
        se = float(np.sqrt(np.sum((self.std_error * V) ** 2)))
        return value, se

    @property
    def trace(self):
        return float(np.trace(self.mean))


def _outer(u):
    # u u^T is symmetric by construction; keep the explicit symmetrization cheap
    o = u[:, :, None] * u[:, None, :]
    return 0.5 * (o + np.swapaxes(o, 1, 2))


def _check_n(n):
    if n < 100:
        raise ValueError("n must be >= 100")


def _sample(g, rng, size):
    idx, z = draw_latent(rng, size, g.weights, g.dim)
    return transform_latent(g, idx, z)


def _weighted_outer_p(p, q, f, n, seed, workers, method="monte_carlo_p"):
    def batch(rng, size):
        y = _sample(p, rng, size)
        lp, sp = gmm_logpdf_and_score(p, y)
        lq, sq = gmm_logpdf_and_score(q, y)
        out = _outer(sp - sq)
        if f is not None:
            lr = log_ratio(lp, lq)
            w = _finite(np.exp(lr + f.log_d2f(lr)), "weight")
            out = w[:, None, None] * out
        return _finite(out, "Fisher")

    [(mean, se)] = _mc.mc_reduce(batch, n, seed, workers)
    return MatrixEstimate(mean, se, int(n), method)


def relative_fisher_mc(p, q, n, seed, workers=None):
    """``E_p[(grad log p - grad log q)(...)^T]`` from ``n`` draws of ``p``."""
    _check_same_dim(p, q)
    _check_n(n)
    return _weighted_outer_p(p, q, None, n, seed, workers)


def generalized_fisher_p(p, q, f, n, seed, workers=None):
    """p-form estimator; weight ``r f''(r)`` is formed in log space.

    For the KL generator the weight is exactly 1 and the result is identical to
    :func:`relative_fisher_mc` under the same seed.
    """
    _check_same_dim(p, q)
    _check_n(n)
    f = parse_generator(f)
    if f.kind == "kl":
        # r * (1/r) == 1 exactly in log space; skip the multiply entirely
        return _weighted_outer_p(p, q, None, n, seed, workers)
    return _weighted_outer_p(p, q, f, n, seed, workers)


def generalized_fisher_q(p, q, f, n, seed, workers=None):
    """q-form estimator ``E_q[f''(r) grad r grad r^T]`` from draws of ``q``."""
    _check_same_dim(p, q)
    _check_n(n)
    f = parse_generator(f)

    def batch(rng, size):
        y = _sample(q, rng, size)
        lp, sp = gmm_logpdf_and_score(p, y)
        lq, sq = gmm_logpdf_and_score(q, y)
        lr = log_ratio(lp, lq)
        w = _finite(np.exp(f.log_d2f(lr) + 2.0 * lr), "weight")
        return _finite(w[:, None, None] * _outer(sp - sq), "Fisher")

    [(mean, se)] = _mc.mc_reduce(batch, n, seed, workers)
    return MatrixEstimate(mean, se, int(n), "monte_carlo_q")


def generalized_fisher_quadrature(p, q, f, nodes_per_axis=64, env=None):
    """Gauss-Hermite integration of the q-form integrand (d <= 3)."""
    _check_same_dim(p, q)
    check_dim(p, q)
    f = parse_generator(f)
    mean, cov = envelope(p, q) if env is None else env
    Y, logw = hermite_grid(mean, cov, nodes_per_axis)
    lp, sp = gmm_logpdf_and_score(p, Y)
    lq, sq = gmm_logpdf_and_score(q, Y)
    check_coverage(logw, lp, lq)
    # exact in log space, so no clamping of the ratio is needed here
    lr = lp - lq
    w = _finite(np.exp(logw + lq + f.log_d2f(lr) + 2.0 * lr), "weight")
    total = np.einsum("n,nij->ij", w, _outer(sp - sq))
    total = 0.5 * (total + total.T)
    return MatrixEstimate(total, np.zeros_like(total), Y.shape[0], "quadrature")


def fisher_information_mc(p, n, seed, workers=None):
    """Fisher information matrix ``E_p[grad log p grad log p^T]``."""
    _check_n(n)

    def batch(rng, size):
        y = _sample(p, rng, size)
        _, s = gmm_logpdf_and_score(p, y)
        return _finite(_outer(s), "Fisher")

    [(mean, se)] = _mc.mc_reduce(batch, n, seed, workers)
    return MatrixEstimate(mean, se, int(n), "monte_carlo_p")


def fisher_information_quadrature(p, nodes_per_axis=64, env=None):
    check_dim(p)
    mean, cov = envelope(p) if env is None else env
    Y, logw = hermite_grid(mean, cov, nodes_per_axis)
    lp, s = gmm_logpdf_and_score(p, Y)
    check_coverage(logw, lp)
    total = np.einsum("n,nij->ij", np.exp(logw + lp), _outer(s))
    total = 0.5 * (total + total.T)
    return MatrixEstimate(total, np.zeros_like(total), Y.shape[0], "quadrature")


def estimate_generalized_fisher(p, q, f, method="quadrature", n=200_000, seed=0,
                                nodes_per_axis=64, workers=None, env=None):
    """Dispatch on ``method`` in ``{"mc_p", "mc_q", "quadrature"}``."""
    if method == "mc_p":
        return generalized_fisher_p(p, q, f, n, seed, workers)
    if method == "mc_q":
        return generalized_fisher_q(p, q, f, n, seed, workers)
    if method == "quadrature":
        return generalized_fisher_quadrature(p, q, f, nodes_per_axis, env)
    raise ValueError(f"unknown estimator method {method!r}")
