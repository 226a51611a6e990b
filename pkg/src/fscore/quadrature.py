"""Tensor-product Gauss-Hermite integration against a Gaussian envelope."""

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import DimensionTooHigh, UnresolvedQuadrature
from .matrixcore import cholesky, symmetrize

MAX_DIM = 3
MIN_NODES = 16
# gross-failure detector: each density must integrate to 1 on the grid within this
COVERAGE_TOL = 1e-3


def envelope(*mixtures):
    """Reference Gaussian ``(mean, cov)`` covering every mixture given.

    Mean: average of the mixtures' overall means. Covariance: twice the overall
    covariance with the largest trace, so the tails of all integrands fit.
    """
    moments = [g.moments() for g in mixtures]
    mean = np.mean([m for m, _ in moments], axis=0)
    cov = max((c for _, c in moments), key=np.trace)
    return mean, symmetrize(2.0 * cov)


def hermite_grid(mean, cov, nodes_per_axis):
    """Nodes ``Y`` (N, d) and log-weights so that ``int g dy ~ sum exp(logw) g(Y)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    if d > MAX_DIM:
        raise DimensionTooHigh(f"quadrature supports dimension <= {MAX_DIM}, got {d}")
    if nodes_per_axis < MIN_NODES:
        raise ValueError(f"nodes_per_axis must be >= {MIN_NODES}")
    x, w = hermegauss(int(nodes_per_axis))
    grids = np.meshgrid(*([x] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    logW = np.log(w)
    logw = sum(g.ravel() for g in np.meshgrid(*([logW] * d), indexing="ij"))
    L = cholesky(cov)
    logw = logw + 0.5 * np.sum(X * X, axis=1) + np.sum(np.log(np.diag(L)))
    return mean + X @ L.T, logw


def check_dim(*mixtures):
    for g in mixtures:
        if g.dim > MAX_DIM:
            raise DimensionTooHigh(f"quadrature supports dimension <= {MAX_DIM}, got {g.dim}")


def check_coverage(logw, *log_densities, tol=COVERAGE_TOL):
    """Raise :class:`UnresolvedQuadrature` if a density's grid mass is off by more than ``tol``."""
    for lp in log_densities:
        mass = float(np.sum(np.exp(logw + lp)))
        if not abs(mass - 1.0) <= tol:
            raise UnresolvedQuadrature(
                f"density integrates to {mass:.6g} on the quadrature grid; "
                "the envelope does not cover it (raise nodes_per_axis or move the densities closer)"
            )
