"""Gaussian mixtures with closed-form log-density, score and density Hessian.

Every evaluation function accepts either a single point of shape ``(d,)`` or a
batch of shape ``(n, d)`` and returns results with the matching leading axis.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import _mc
from .errors import DimensionMismatch
from .matrixcore import cholesky, check_pd, inverse_and_logdet, symmetrize

LOG_2PI = np.log(2.0 * np.pi)
COMPONENT_FLOOR = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch("component mean must be a vector")
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"covariance shape {cov.shape} does not match mean dimension {mean.size}"
            )
        cov = check_pd(cov, floor=COMPONENT_FLOOR, name="component covariance")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))

    @property
    def dim(self):
        return self.mean.size

    @cached_property
    def chol(self):
        return cholesky(self.covariance)

    @cached_property
    def precision(self):
        return inverse_and_logdet(self.covariance)[0]

    @cached_property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape != (len(comps),):
            raise DimensionMismatch("one weight per component is required")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1 (got {w.sum()!r})")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise DimensionMismatch(f"components have different dimensions {sorted(dims)}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def single(cls, mean, covariance):
        return cls((GaussianComponent(mean, covariance),), [1.0])

    @classmethod
    def from_spec(cls, items):
        """Build from ``[{"weight": w, "mean": [...], "covariance": [[...]]}, ...]``."""
        comps = [GaussianComponent(it["mean"], it["covariance"]) for it in items]
        return cls(tuple(comps), [float(it["weight"]) for it in items])

    def to_spec(self):
        return [
            {"weight": float(w), "mean": c.mean.tolist(), "covariance": c.covariance.tolist()}
            for w, c in zip(self.weights, self.components)
        ]

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def n_components(self):
        return len(self.components)

    @cached_property
    def log_weights(self):
        return np.log(self.weights)

    def moments(self):
        """Overall mean and covariance of the mixture."""
        means = np.array([c.mean for c in self.components])
        mu = self.weights @ means
        cov = sum(
            w * (c.covariance + np.outer(c.mean - mu, c.mean - mu))
            for w, c in zip(self.weights, self.components)
        )
        return mu, symmetrize(cov)

    def is_gaussian(self):
        return self.n_components == 1


def _as_batch(g, y):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    if Y.ndim != 2 or Y.shape[1] != g.dim:
        raise DimensionMismatch(f"point dimension {Y.shape[-1]} != mixture dimension {g.dim}")
    return Y, single


def _component_terms(g, Y, with_grad=True):
    """Per-component log weighted densities (n, K) and ``C_k^{-1}(y - mu_k)``."""
    n = Y.shape[0]
    logs = np.empty((n, g.n_components))
    prec_diffs = np.empty((g.n_components, n, g.dim)) if with_grad else None
    for k, c in enumerate(g.components):
        diff = Y - c.mean
        w = solve_triangular(c.chol, diff.T, lower=True)
        maha = np.sum(w * w, axis=0)
        logs[:, k] = g.log_weights[k] - 0.5 * (g.dim * LOG_2PI + c.logdet + maha)
        if with_grad:
            prec_diffs[k] = solve_triangular(c.chol.T, w, lower=False).T
    return logs, prec_diffs


def gmm_logpdf(g, y):
    """Log-density of the mixture, evaluated with log-sum-exp."""
    Y, single = _as_batch(g, y)
    logs, _ = _component_terms(g, Y, with_grad=False)
    out = logsumexp(logs, axis=1)
    return float(out[0]) if single else out


def gmm_logpdf_and_score(g, y):
    Y, single = _as_batch(g, y)
    logs, prec_diffs = _component_terms(g, Y)
    lp = logsumexp(logs, axis=1)
    resp = np.exp(logs - lp[:, None])
    score = -np.einsum("nk,knd->nd", resp, prec_diffs)
    if single:
        return float(lp[0]), score[0]
    return lp, score


def gmm_score(g, y):
    """Gradient of :func:`gmm_logpdf` in ``y``: responsibility-weighted Gaussian scores."""
    return gmm_logpdf_and_score(g, y)[1]


def gmm_density_hessian(g, y):
    """Hessian of the density itself (not the log-density) in ``y``.

    ``sum_k w_k phi_k(y) (a_k a_k^T - C_k^{-1})`` with ``a_k = C_k^{-1}(y - mu_k)``.
    """
    Y, single = _as_batch(g, y)
    logs, prec_diffs = _component_terms(g, Y)
    lp = logsumexp(logs, axis=1)
    resp = np.exp(logs - lp[:, None])
    H = np.zeros((Y.shape[0], g.dim, g.dim))
    for k, c in enumerate(g.components):
        a = prec_diffs[k]
        H += resp[:, k, None, None] * (a[:, :, None] * a[:, None, :] - c.precision)
    H *= np.exp(lp)[:, None, None]
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return H[0] if single else H


def draw_latent(rng, size, weights, dim):
    """Component indices and standard-normal draws for one batch.

    Splitting the draw from the transform lets mixtures with the same weights
    and dimension share random numbers (common random numbers for finite
    differences in the covariance).
    """
    u = rng.random(size)
    idx = np.searchsorted(np.cumsum(weights), u, side="right")
    idx = np.minimum(idx, len(weights) - 1)
    z = rng.standard_normal((size, dim))
    return idx, z


def transform_latent(g, idx, z):
    Y = np.empty_like(z)
    for k, c in enumerate(g.components):
        sel = idx == k
        if np.any(sel):
            Y[sel] = c.mean + z[sel] @ c.chol.T
    return Y


def sample_batch(g, rng, size):
    idx, z = draw_latent(rng, size, g.weights, g.dim)
    return transform_latent(g, idx, z)


def gmm_sample(g, n, seed):
    """``n`` i.i.d. draws, shape ``(n, d)``; deterministic in ``(seed, n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = _mc.batch_sizes(n)
    return np.concatenate([sample_batch(g, _mc.batch_rng(seed, b), s) for b, s in enumerate(sizes)])


def _check_pair(p, q):
    if not isinstance(p, GaussianComponent) or not isinstance(q, GaussianComponent):
        raise TypeError("expected GaussianComponent arguments")
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimension {p.dim} != {q.dim}")


def gaussian_kl(p, q):
    """Closed-form ``KL(N(mu_p, A) || N(mu_q, B))``."""
    _check_pair(p, q)
    B_inv = q.precision
    dmu = q.mean - p.mean
    val = 0.5 * (
        np.trace(B_inv @ p.covariance) + dmu @ B_inv @ dmu - p.dim + q.logdet - p.logdet
    )
    return float(val)


def gaussian_relative_fisher(p, q):
    """Closed-form relative Fisher matrix ``E_p[u u^T]``, ``u = score_p - score_q``."""
    _check_pair(p, q)
    M = q.precision - p.precision
    v = p.precision @ p.mean - q.precision @ q.mean
    c = M @ p.mean + v
    return symmetrize(M @ p.covariance @ M.T + np.outer(c, c))


def gaussian_entropy(c):
    return 0.5 * (c.dim * (1.0 + LOG_2PI) + c.logdet)


def as_component(g):
    """The single component of a one-component mixture."""
    if isinstance(g, GaussianComponent):
        return g
    if not g.is_gaussian():
        raise ValueError("mixture has more than one component")
    return g.components[0]


__all__ = [
    "GaussianComponent",
    "GaussianMixture",
    "gmm_logpdf",
    "gmm_score",
    "gmm_logpdf_and_score",
    "gmm_density_hessian",
    "gmm_sample",
    "gaussian_kl",
    "gaussian_relative_fisher",
    "gaussian_entropy",
]
