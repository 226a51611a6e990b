"""f-generators and estimators of ``D_f(P || Q) = E_Q[f(dP/dQ)]``."""

from dataclasses import dataclass

import numpy as np

from . import _mc
from .errors import DimensionMismatch, InvalidAlpha, NonFiniteEstimate
from .mixtures import draw_latent, gmm_logpdf, transform_latent
from .quadrature import check_coverage, check_dim, envelope, hermite_grid

LOG_RATIO_MIN = np.log(1e-300)
LOG_RATIO_MAX = np.log(1e300)

KINDS = ("kl", "reverse_kl", "js", "hellinger2", "chi2", "alpha")


@dataclass(frozen=True)
class ScalarEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str  # "monte_carlo" | "quadrature"

    def __post_init__(self):
        if self.method == "quadrature" and self.std_error != 0:
            raise ValueError("quadrature estimates carry zero standard error")


@dataclass(frozen=True)
class FGenerator:
    """Convex generator ``f`` with ``f(1) = 0`` and analytic ``f'``, ``f''``.

    ``log_d2f`` takes ``log t`` and is used for weights that would otherwise
    overflow at extreme likelihood ratios.
    """

    kind: str
    alpha: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "alpha":
            if self.alpha is None or not np.isfinite(self.alpha):
                raise InvalidAlpha("alpha generator needs a finite alpha")
            if self.alpha in (0.0, 1.0):
                raise InvalidAlpha(f"InvalidAlpha: alpha must not be 0 or 1 (got {self.alpha:g})")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValueError(f"generator {self.kind!r} takes no alpha")

    @property
    def spec(self):
        return f"alpha:{self.alpha:g}" if self.kind == "alpha" else self.kind

    @property
    def infinite_at_zero(self):
        """Whether ``f(0+) = +inf``."""
        return self.kind == "reverse_kl" or (self.kind == "alpha" and self.alpha < 0)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "kl":
            return t * np.log(t)
        if k == "reverse_kl":
            return -np.log(t)
        if k == "js":
            return t * np.log(2.0 * t / (1.0 + t)) + np.log(2.0 / (1.0 + t))
        if k == "hellinger2":
            return (np.sqrt(t) - 1.0) ** 2
        if k == "chi2":
            return (t - 1.0) ** 2
        a = self.alpha
        # written so that t == 1 gives exactly 0
        return ((t**a - 1.0) - a * (t - 1.0)) / (a * (a - 1.0))

    def df(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "kl":
            return np.log(t) + 1.0
        if k == "reverse_kl":
            return -1.0 / t
        if k == "js":
            return np.log(2.0 * t / (1.0 + t))
        if k == "hellinger2":
            return 1.0 - 1.0 / np.sqrt(t)
        if k == "chi2":
            return 2.0 * (t - 1.0)
        a = self.alpha
        return (t ** (a - 1.0) - 1.0) / (a - 1.0)

    def log_d2f(self, log_t):
        log_t = np.asarray(log_t, dtype=float)
        k = self.kind
        if k == "kl":
            return -log_t
        if k == "reverse_kl":
            return -2.0 * log_t
        if k == "js":
            return -log_t - np.logaddexp(0.0, log_t)
        if k == "hellinger2":
            return -np.log(2.0) - 1.5 * log_t
        if k == "chi2":
            return np.full_like(log_t, np.log(2.0))
        return (self.alpha - 2.0) * log_t

    def d2f(self, t):
        return np.exp(self.log_d2f(np.log(np.asarray(t, dtype=float))))


def make_generator(kind, alpha=None):
    return FGenerator(kind, alpha)


def parse_generator(spec):
    """Parse ``"kl" | "reverse_kl" | "js" | "hellinger2" | "chi2" | "alpha:<value>"``."""
    if isinstance(spec, FGenerator):
        return spec
    spec = str(spec).strip().lower()
    if spec.startswith("alpha:"):
        try:
            alpha = float(spec.split(":", 1)[1])
        except ValueError:
            raise InvalidAlpha(f"InvalidAlpha: cannot parse alpha in {spec!r}") from None
        return FGenerator("alpha", alpha)
    return FGenerator(spec)


def log_ratio(log_p, log_q, f=None):
    """Clamped ``log(p/q)``; raises if clamping hides an infinite ``f(0+)``."""
    lr = np.asarray(log_p - log_q, dtype=float)
    if f is not None and f.infinite_at_zero and np.any(lr < LOG_RATIO_MIN):
        raise NonFiniteEstimate(
            f"likelihood ratio underflows and f(0+) is infinite for {f.spec!r}"
        )
    return np.clip(lr, LOG_RATIO_MIN, LOG_RATIO_MAX)


def _finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NonFiniteEstimate(f"non-finite {what} summand encountered")
    return values


def _check_same_dim(p, q):
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimension {p.dim} != {q.dim}")


def divergence_mc(p, q, f, n, seed, workers=None):
    """Monte-Carlo ``D_f(p || q)`` from ``n`` draws of ``q``."""
    _check_same_dim(p, q)
    if n < 100:
        raise ValueError("n must be >= 100")
    f = parse_generator(f)

    def batch(rng, size):
        idx, z = draw_latent(rng, size, q.weights, q.dim)
        y = transform_latent(q, idx, z)
        lr = log_ratio(gmm_logpdf(p, y), gmm_logpdf(q, y), f)
        return _finite(f.f(np.exp(lr)), "divergence")

    [(mean, se)] = _mc.mc_reduce(batch, n, seed, workers)
    return ScalarEstimate(float(mean), float(se), int(n), "monte_carlo")


def divergence_quadrature(p, q, f, nodes_per_axis=64, env=None):
    """Gauss-Hermite ``D_f(p || q)``; ``env`` fixes the reference Gaussian.

    Passing a fixed ``env`` matters when differencing in a covariance: the grid
    must not move with the perturbation.
    """
    _check_same_dim(p, q)
    check_dim(p, q)
    f = parse_generator(f)
    mean, cov = envelope(p, q) if env is None else env
    Y, logw = hermite_grid(mean, cov, nodes_per_axis)
    lp, lq = gmm_logpdf(p, Y), gmm_logpdf(q, Y)
    check_coverage(logw, lp, lq)
    over = lp - lq > LOG_RATIO_MAX
    if np.any(over) and np.sum(np.exp(logw[over] + lp[over])) > 1e-12:
        raise NonFiniteEstimate("p has non-negligible mass where q underflows on the grid")
    lr = log_ratio(lp, lq, f)
    vals = _finite(f.f(np.exp(lr)), "divergence")
    value = float(np.sum(np.exp(logw + lq) * vals))
    return ScalarEstimate(value, 0.0, Y.shape[0], "quadrature")
