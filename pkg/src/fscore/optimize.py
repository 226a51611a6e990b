"""Gradient-based applications of the covariance identities.

``fit_covariance`` runs descent on the channel noise covariance using the KL
gradient ``-1/2 * I(p_y || q_y)``; ``fit_model_fsm`` fits a single Gaussian to a
target by minimizing the trace of the generalized Fisher divergence.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _mc
from .channel import pushforward
from .divergence import (
    ScalarEstimate,
    _finite,
    divergence_mc,
    divergence_quadrature,
    log_ratio,
    parse_generator,
)
from .errors import DivergingObjective, NonFiniteEstimate, NotPositiveDefinite, UnresolvedQuadrature
from .fisher import estimate_generalized_fisher
from .identity import EstimatorConfig, VerificationCase, verify_kl_corollary
from .matrixcore import DEFAULT_PSD_FLOOR, project_psd
from .mixtures import GaussianComponent, GaussianMixture, draw_latent, gmm_logpdf_and_score, transform_latent
from .quadrature import check_coverage, envelope, hermite_grid

GUARD_STRIKES = 3
GUARD_SIGMAS = 5.0
# increases smaller than this (relative) are treated as rounding, not divergence
GUARD_FLOOR = 1e-12
# estimator failures that, after a step, mean the step overshot
_UNRESOLVABLE = (UnresolvedQuadrature, NonFiniteEstimate, NotPositiveDefinite)


@dataclass(frozen=True)
class DescentOptions:
    step_size: float
    max_iters: int = 100
    psd_floor: float = DEFAULT_PSD_FLOOR
    method: str = "quadrature"  # "quadrature" | "mc_p" | "mc_q"
    n: int = 200_000
    seed: int = 0
    nodes_per_axis: int = 64
    stop_tol: float = 1e-6
    fd_step: float = 1e-4
    consistency_every: int = 0
    workers: int = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.method not in ("quadrature", "mc_p", "mc_q"):
            raise ValueError(f"unknown gradient estimator {self.method!r}")


@dataclass
class Iterate:
    index: int
    params: dict  # {"sigma": ...} or {"mean": ..., "covariance": ...}
    objective: ScalarEstimate
    grad_norm: float


@dataclass
class Trajectory:
    iterates: list = field(default_factory=list)
    stop_reason: str = ""
    checks: list = field(default_factory=list)

    @property
    def converged(self):
        return self.stop_reason == "converged"

    @property
    def objectives(self):
        return np.array([it.objective.value for it in self.iterates])

    @property
    def final(self):
        return self.iterates[-1]


class _Guard:
    """Counts consecutive significant objective increases."""

    def __init__(self):
        self.prev = None
        self.strikes = 0

    def update(self, obj):
        if self.prev is not None:
            slack = max(GUARD_SIGMAS * np.hypot(obj.std_error, self.prev.std_error),
                        GUARD_FLOOR * max(1.0, abs(self.prev.value)))
            self.strikes = self.strikes + 1 if obj.value - self.prev.value > slack else 0
            if self.strikes >= GUARD_STRIKES:
                raise DivergingObjective(
                    f"objective increased {GUARD_STRIKES} steps in a row; reduce the step size"
                )
        self.prev = obj


def _coordinate_directions(m):
    out = []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0
            out.append(E / np.linalg.norm(E))
    return out


def kl_objective(p_y, q_y, opts, seed):
    if opts.method == "quadrature":
        return divergence_quadrature(p_y, q_y, "kl", opts.nodes_per_axis)
    return divergence_mc(p_y, q_y, "kl", opts.n, seed, opts.workers)


def covariance_gradient(p_y, q_y, opts, seed, beta_tilde=1.0):
    """``grad_Sigma D_KL = -1/2 (1 - a) I(p_y || q_y)`` (chain rule through ``C = (1 - a) Sigma``)."""
    I = estimate_generalized_fisher(p_y, q_y, "kl", opts.method, opts.n, seed,
                                    opts.nodes_per_axis, opts.workers)
    return -0.5 * beta_tilde * I.mean


def fit_covariance(source_p, source_q, ch0, opts):
    """Projected gradient descent on the channel noise covariance.

    ``Sigma_{k+1} = project_psd(Sigma_k - step * grad, floor)``. With the
    gradient being ``-1/2 I`` the update adds a positive semidefinite matrix,
    so the KL divergence between the outputs is nonincreasing for small steps.
    Stops when ``||grad||_F < stop_tol`` or after ``max_iters`` updates.
    """
    sigma = project_psd(ch0.sigma, opts.psd_floor)
    traj = Trajectory()
    guard = _Guard()
    coords = _coordinate_directions(ch0.output_dim)
    for k in range(opts.max_iters + 1):
        ch = replace(ch0, sigma=sigma)
        p_y, q_y = pushforward(source_p, ch), pushforward(source_q, ch)
        seed = opts.seed + k
        try:
            obj = kl_objective(p_y, q_y, opts, seed)
            grad = covariance_gradient(p_y, q_y, opts, seed, ch.beta_tilde)
        except _UNRESOLVABLE as exc:
            if k == 0:
                raise
            raise DivergingObjective(f"iterate {k} left the region the estimator resolves: {exc}") from exc
        gnorm = float(np.linalg.norm(grad, "fro"))
        traj.iterates.append(Iterate(k, {"sigma": sigma}, obj, gnorm))
        guard.update(obj)
        if opts.consistency_every and k % opts.consistency_every == 0:
            est = EstimatorConfig(opts.method, opts.n, seed, opts.nodes_per_axis, opts.workers)
            for V in coords:
                case = VerificationCase(source_p, source_q, ch, "kl", V, opts.fd_step, est)
                rec = verify_kl_corollary(case)
                rec.diagnostics["iteration"] = k
                traj.checks.append(rec)
        if gnorm < opts.stop_tol:
            traj.stop_reason = "converged"
            break
        if k == opts.max_iters:
            traj.stop_reason = "max_iters"
            break
        sigma = project_psd(sigma - opts.step_size * grad, opts.psd_floor)
    return traj


# ---------------------------------------------------------------- model fitting


def _pack(mean, cov):
    iu = np.triu_indices(mean.size)
    return np.concatenate([mean, cov[iu]])


def _unpack(theta, d):
    mean = theta[:d].copy()
    cov = np.zeros((d, d))
    iu = np.triu_indices(d)
    cov[iu] = theta[d:]
    cov = cov + np.triu(cov, 1).T
    return mean, cov


def _fsm_objective_mc(p, q, f, n, seed, workers):
    # scalar p-form: E_p[r f''(r) |grad log p - grad log q|^2]
    def batch(rng, size):
        idx, z = draw_latent(rng, size, p.weights, p.dim)
        y = transform_latent(p, idx, z)
        lp, sp = gmm_logpdf_and_score(p, y)
        lq, sq = gmm_logpdf_and_score(q, y)
        lr = log_ratio(lp, lq)
        u2 = np.sum((sp - sq) ** 2, axis=1)
        w = np.ones_like(lr) if f.kind == "kl" else np.exp(lr + f.log_d2f(lr))
        return _finite(w * u2, "objective")

    [(mean, se)] = _mc.mc_reduce(batch, n, seed, workers)
    return ScalarEstimate(float(mean), float(se), int(n), "monte_carlo")


def _fsm_objective_quadrature(p, q, f, grid):
    Y, logw = grid
    lp, sp = gmm_logpdf_and_score(p, Y)
    lq, sq = gmm_logpdf_and_score(q, Y)
    check_coverage(logw, lp, lq)
    lr = lp - lq
    w = np.exp(logw + lq + f.log_d2f(lr) + 2.0 * lr)
    value = float(np.sum(w * np.sum((sp - sq) ** 2, axis=1)))
    return ScalarEstimate(value, 0.0, Y.shape[0], "quadrature")


def fsm_objective(target_p, model, f, opts, seed=0, grid=None):
    """``tr I_f(target || model)`` with ``model`` a single Gaussian component or mixture."""
    f = parse_generator(f)
    q = model if isinstance(model, GaussianMixture) else GaussianMixture((model,), [1.0])
    if opts.method == "quadrature":
        if grid is None:
            grid = hermite_grid(*envelope(target_p, q), opts.nodes_per_axis)
        return _fsm_objective_quadrature(target_p, q, f, grid)
    return _fsm_objective_mc(target_p, q, f, opts.n, seed, opts.workers)


def fit_model_fsm(target_p, family_init, f, opts):
    """Fit ``q = N(mu, C)`` to ``target_p`` by descent on ``tr I_f(target_p || q)``.

    Gradients are central differences (step ``opts.fd_step``) in the
    coordinates ``(mu, upper triangle of C)``. Monte-Carlo objectives reuse one
    seed per iteration, so the differences see common random numbers; the
    quadrature grid is likewise frozen within an iteration. ``C`` is projected
    with floor ``max(psd_floor, 2 * fd_step)``: a +-h change to one entry moves
    eigenvalues by at most h, so every stencil point stays positive definite.

    The applied step is ``step_size / f''(1)``: near the optimum the ratio is
    close to 1 and ``tr I_f ~ f''(1) tr I_KL``, so this keeps one step size
    stable across generators.
    """
    f = parse_generator(f)
    step = opts.step_size / float(f.d2f(1.0))
    d = family_init.dim
    floor = max(opts.psd_floor, 2.0 * opts.fd_step)
    theta = _pack(family_init.mean, family_init.covariance)
    traj = Trajectory()
    guard = _Guard()
    h = opts.fd_step
    for k in range(opts.max_iters + 1):
        mean, cov = _unpack(theta, d)
        q = GaussianComponent(mean, cov)
        seed = opts.seed + k
        grid = None
        if opts.method == "quadrature":
            grid = hermite_grid(*envelope(target_p, GaussianMixture((q,), [1.0])), opts.nodes_per_axis)

        def objective(th):
            m, c = _unpack(th, d)
            return fsm_objective(target_p, GaussianComponent(m, c), f, opts, seed, grid)

        try:
            obj = objective(theta)
            grad = np.empty_like(theta)
            for j in range(theta.size):
                e = np.zeros_like(theta)
                e[j] = h
                grad[j] = (objective(theta + e).value - objective(theta - e).value) / (2 * h)
        except _UNRESOLVABLE as exc:
            if k == 0:
                raise
            raise DivergingObjective(f"iterate {k} left the region the estimator resolves: {exc}") from exc
        gnorm = float(np.linalg.norm(grad))
        traj.iterates.append(Iterate(k, {"mean": mean, "covariance": cov}, obj, gnorm))
        guard.update(obj)
        if gnorm < opts.stop_tol:
            traj.stop_reason = "converged"
            break
        if k == opts.max_iters:
            traj.stop_reason = "max_iters"
            break
        m_new, c_new = _unpack(theta - step * grad, d)
        theta = _pack(m_new, project_psd(c_new, floor))
    return traj
