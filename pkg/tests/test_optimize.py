import numpy as np
import pytest

from fscore.channel import ChannelModel
from fscore.divergence import divergence_quadrature
from fscore.errors import DivergingObjective
from fscore.mixtures import GaussianComponent, GaussianMixture
from fscore.optimize import DescentOptions, _Guard, fit_covariance, fit_model_fsm, fsm_objective
from fscore.divergence import ScalarEstimate

P1 = GaussianMixture.single([0.0], [[1.0]])
Q1 = GaussianMixture.single([0.0], [[2.0]])


def kl_1d(s2):
    return 0.5 * ((1 + s2) / (2 + s2) - 1 + np.log((2 + s2) / (1 + s2)))


def test_identical_sources_are_stationary():
    traj = fit_covariance(P1, P1, ChannelModel.identity([[0.5]]), DescentOptions(step_size=1.0, max_iters=20))
    assert traj.converged and len(traj.iterates) == 1
    assert traj.final.grad_norm == 0.0


def test_one_dimensional_descent_matches_closed_form():
    opts = DescentOptions(step_size=2.0, max_iters=25, nodes_per_axis=64, consistency_every=10)
    traj = fit_covariance(P1, Q1, ChannelModel.identity([[0.5]]), opts)
    for it in traj.iterates:
        assert it.objective.value == pytest.approx(kl_1d(it.params["sigma"][0, 0]), abs=1e-8)
    assert np.all(np.diff(traj.objectives) < 0)
    assert np.all(np.diff([it.params["sigma"][0, 0] for it in traj.iterates]) > 0)
    assert len(traj.checks) == 3 and all(c.passed for c in traj.checks)


def test_two_dimensional_first_order_prediction():
    p = GaussianMixture.single([0.0, 0.0], [[1.0, 0.3], [0.3, 0.5]])
    q = GaussianMixture.single([0.2, 0.0], [[0.6, -0.1], [-0.1, 1.4]])
    ch = ChannelModel.identity([[0.5, 0.1], [0.1, 0.4]])
    xi = 0.02
    traj = fit_covariance(p, q, ch, DescentOptions(step_size=xi, max_iters=1, nodes_per_axis=48))
    a, b = traj.iterates
    drop = a.objective.value - b.objective.value
    predicted = xi * a.grad_norm ** 2
    assert drop == pytest.approx(predicted, rel=0.2)


def test_monte_carlo_gradient_route_decreases():
    p = GaussianMixture.single([0.0], [[0.5]])
    traj = fit_covariance(p, Q1, ChannelModel.identity([[0.5]]),
                          DescentOptions(step_size=2.0, max_iters=5, method="mc_p", n=50_000, seed=3))
    assert traj.final.objective.value < traj.iterates[0].objective.value


def test_fit_model_recovers_gaussian_1d():
    target = GaussianMixture.single([0.7], [[1.5]])
    opts = DescentOptions(step_size=0.3, max_iters=300, nodes_per_axis=32, stop_tol=1e-7)
    traj = fit_model_fsm(target, GaussianComponent([0.0], [[1.0]]), "hellinger2", opts)
    assert traj.converged
    assert traj.final.params["mean"][0] == pytest.approx(0.7, abs=1e-3)
    assert traj.final.params["covariance"][0, 0] == pytest.approx(1.5, abs=1e-3)
    assert traj.final.objective.value < traj.iterates[0].objective.value


def test_fsm_objective_zero_at_target():
    c = GaussianComponent([0.3, -0.2], [[1.0, 0.2], [0.2, 0.7]])
    target = GaussianMixture((c,), [1.0])
    opts = DescentOptions(step_size=0.1)
    assert fsm_objective(target, c, "chi2", opts).value == pytest.approx(0.0, abs=1e-14)


def test_guard_trips_after_three_increases():
    g = _Guard()
    for v in (1.0, 2.0, 3.0):
        g.update(ScalarEstimate(v, 0.0, 1, "quadrature"))
    with pytest.raises(DivergingObjective):
        g.update(ScalarEstimate(4.0, 0.0, 1, "quadrature"))
    noisy = _Guard()
    for v in (1.0, 1.01, 1.02, 1.03, 1.04):
        noisy.update(ScalarEstimate(v, 0.1, 1000, "monte_carlo"))


def test_diverging_step_raises():
    target = GaussianMixture.single([0.5, -0.3], [[1.2, 0.3], [0.3, 0.8]])
    init = GaussianComponent([0.0, 0.0], np.eye(2))
    with pytest.raises(DivergingObjective):
        fit_model_fsm(target, init, "kl", DescentOptions(step_size=3.0, max_iters=50, nodes_per_axis=32))


def test_options_validation():
    for bad in (dict(step_size=0.0), dict(step_size=1.0, stop_tol=0.0), dict(step_size=1.0, method="sgd")):
        with pytest.raises(ValueError):
            DescentOptions(**bad)
