"""Dense symmetric / positive-definite matrix helpers.

Matrices are plain ``numpy`` arrays. Every constructor-like helper returns a
freshly symmetrized copy, ``(M + M.T) / 2``, so repeated updates cannot drift
away from symmetry.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, ZeroDirection

DEFAULT_PSD_FLOOR = 1e-8


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def is_psd(S, rtol=1e-10):
    """True when the smallest eigenvalue is >= -rtol * largest |eigenvalue|."""
    w = np.linalg.eigvalsh(symmetrize(S))
    scale = max(np.abs(w).max(), 1.0) if w.size else 1.0
    return bool(w.min() >= -rtol * scale)


def check_pd(S, floor=0.0, name="matrix"):
    """Return the symmetrized ``S`` or raise if its smallest eigenvalue <= floor."""
    S = symmetrize(S)
    wmin = np.linalg.eigvalsh(S).min()
    if not wmin > floor:
        raise NotPositiveDefinite(
            f"{name} is not positive definite (min eigenvalue {wmin:.3e} <= {floor:.1e})"
        )
    return S


def cholesky(S):
    """Lower-triangular ``L`` with ``L @ L.T == S``.

    Raises
    ------
    NotPositiveDefinite
        If a non-positive pivot is met; the caller should regularize or
        call :func:`project_psd` first.
    """
    S = symmetrize(S)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky failed: {exc}") from None


def inverse_and_logdet(S):
    """Return ``(S^{-1}, log|S|)`` for a strictly positive-definite ``S``."""
    L = cholesky(S)
    d = L.shape[0]
    Linv = solve_triangular(L, np.eye(d), lower=True)
    inv = symmetrize(Linv.T @ Linv)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return inv, logdet


def project_psd(M, floor=DEFAULT_PSD_FLOOR):
    """Clip the eigenvalues of symmetric ``M`` from below at ``floor``.

    This is the Frobenius-nearest matrix with spectrum bounded by ``floor``.
    """
    M = symmetrize(M)
    w, U = np.linalg.eigh(M)
    if w.min() >= floor:
        return M
    w = np.maximum(w, floor)
    return symmetrize((U * w) @ U.T)


def make_direction(M):
    """Unit-Frobenius symmetric direction built from the symmetric part of ``M``."""
    S = symmetrize(M)
    norm = np.linalg.norm(S, "fro")
    if norm < 1e-14:
        raise ZeroDirection("symmetric part of the direction is (numerically) zero")
    return S / norm


def random_directions(dim, k, seed, positive=False):
    """``k`` reproducible unit symmetric directions of size ``dim``.

    With ``positive=True`` the directions are positive semidefinite, which keeps
    contractions such as ``tr(J V)`` with positive-definite ``J`` away from zero.
    """
    rng = np.random.default_rng([int(seed), 0xD1EC, int(positive)])
    out = []
    for _ in range(k):
        A = rng.standard_normal((dim, dim))
        out.append(make_direction(A @ A.T if positive else A))
    return out
