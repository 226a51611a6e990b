import numpy as np
import pytest

from fscore.channel import ChannelModel
from fscore.errors import NotPositiveDefinite
from fscore.identity import (
    EstimatorConfig,
    VerificationCase,
    differential_entropy,
    dir_derivative_density,
    measure_beta_scaling,
    run_cases,
    verify_debruijn,
    verify_heat_equation,
    verify_kl_corollary,
    verify_theorem1,
)
from fscore.matrixcore import random_directions
from fscore.mixtures import GaussianMixture

STD = GaussianMixture.single([0.0], [[1.0]])
MIX1 = GaussianMixture.from_spec([
    {"weight": 0.4, "mean": [-1.0], "covariance": [[0.3]]},
    {"weight": 0.6, "mean": [1.0], "covariance": [[0.5]]},
])
MIX1Q = GaussianMixture.from_spec([
    {"weight": 0.5, "mean": [-0.5], "covariance": [[0.8]]},
    {"weight": 0.5, "mean": [0.8], "covariance": [[1.0]]},
])
MIX2 = GaussianMixture.from_spec([
    {"weight": 0.5, "mean": [-0.8, 0.2], "covariance": [[0.4, 0.1], [0.1, 0.3]]},
    {"weight": 0.5, "mean": [0.7, -0.3], "covariance": [[0.3, -0.05], [-0.05, 0.5]]},
])
MIX2Q = GaussianMixture.from_spec([
    {"weight": 0.3, "mean": [0.0, 0.4], "covariance": [[1.0, 0.2], [0.2, 0.8]]},
    {"weight": 0.7, "mean": [0.2, -0.5], "covariance": [[0.9, -0.1], [-0.1, 1.1]]},
])
CH1 = ChannelModel.identity([[0.7]])
CH2 = ChannelModel.identity([[0.8, 0.2], [0.2, 0.6]])
ONE = np.array([[1.0]])


def test_density_derivative_of_near_point_mass():
    point = GaussianMixture.single([0.0], [[1e-8]])
    d = dir_derivative_density(point, ChannelModel.identity([[1.0]]), [0.0], ONE, 1e-4)
    assert d == pytest.approx(-0.19947114020071635, abs=1e-6)


def test_density_derivative_is_linear_in_direction():
    y = [0.3, -0.2]
    V, W = random_directions(2, 2, seed=5)
    combo = dir_derivative_density(MIX2, CH2, y, 0.6 * V + 0.8 * W, 1e-4)
    parts = 0.6 * dir_derivative_density(MIX2, CH2, y, V, 1e-4) + 0.8 * dir_derivative_density(MIX2, CH2, y, W, 1e-4)
    assert combo == pytest.approx(parts, abs=1e-9)


def test_heat_equation_standard_normal():
    rec = verify_heat_equation(STD, ChannelModel.identity([[1.0]]), [0.0], ONE)
    # output N(0, 2): 1/2 p''(0) = -p(0) / 4
    expected = -1.0 / (4.0 * np.sqrt(4.0 * np.pi))
    assert rec.rhs == pytest.approx(expected, abs=1e-15)
    assert rec.lhs == pytest.approx(expected, abs=1e-6)
    assert rec.passed


def test_heat_equation_mixture_passes_and_shrinks():
    for V in random_directions(2, 3, seed=2):
        coarse = verify_heat_equation(MIX2, CH2, [0.4, -0.1], V, h=1e-3)
        fine = verify_heat_equation(MIX2, CH2, [0.4, -0.1], V, h=1e-4)
        assert fine.passed and fine.residual < 1e-5
        assert coarse.residual / fine.residual > 50


def test_heat_equation_richardson_is_tighter():
    V = random_directions(1, 1, seed=0)[0]
    plain = verify_heat_equation(MIX1, CH1, [0.2], V, h=1e-3)
    rich = verify_heat_equation(MIX1, CH1, [0.2], V, h=1e-3, richardson=True)
    assert rich.residual < plain.residual / 100


def test_beta_scaling_is_measured():
    ch = ChannelModel(np.eye(2), 0.3, [[0.8, 0.2], [0.2, 0.6]])
    V = random_directions(2, 1, seed=1)[0]
    assert measure_beta_scaling(MIX2, ch, [0.1, 0.2], V) == pytest.approx(0.7, rel=1e-5)
    # the identity itself holds in the effective covariance for any form
    assert verify_heat_equation(MIX2, ch, [0.1, 0.2], V).passed


def test_fdiv_gradient_identical_sources():
    case = VerificationCase(MIX1, MIX1, CH1, "js", ONE, estimator=EstimatorConfig("quadrature"))
    rec = verify_theorem1(case)
    assert abs(rec.lhs) < 1e-10 and abs(rec.rhs) < 1e-12 and rec.passed
    rec = verify_theorem1(VerificationCase(MIX1, MIX1, CH1, "kl", ONE,
                                           estimator=EstimatorConfig("mc_q", n=5000)))
    assert rec.lhs == 0.0 and rec.rhs == 0.0 and rec.passed


def test_fdiv_gradient_gaussian_closed_form():
    p = GaussianMixture.single([0.3], [[0.5]])
    q = GaussianMixture.single([-0.2], [[1.2]])
    rec = verify_theorem1(VerificationCase(p, q, ChannelModel.identity([[1.0]]), "kl", ONE,
                                           estimator=EstimatorConfig("closed_form")))
    assert rec.residual < 1e-6 and rec.passed
    with pytest.raises(ValueError):
        verify_theorem1(VerificationCase(MIX1, MIX1Q, CH1, "kl", ONE, estimator=EstimatorConfig("closed_form")))


def test_fdiv_gradient_hellinger_mixture_quadrature():
    rec = verify_theorem1(VerificationCase(MIX1, MIX1Q, CH1, "hellinger2", ONE,
                                           estimator=EstimatorConfig("quadrature", nodes_per_axis=128)))
    assert rec.passed and rec.tolerance == 1e-5
    assert abs(rec.lhs) > 1e-3  # the check is not vacuous


@pytest.mark.parametrize("method", ["mc_q", "mc_p"])
def test_fdiv_gradient_mc_routes(method):
    V = random_directions(2, 1, seed=4)[0]
    rec = verify_theorem1(VerificationCase(MIX2, MIX2Q, CH2, "chi2", V,
                                           estimator=EstimatorConfig(method, n=200_000, seed=3)))
    assert rec.passed, rec
    assert rec.diagnostics["se_combined"] > 0


def test_kl_case_mean_shift_closed_form():
    p = GaussianMixture.single([0.0], [[1.0]])
    q = GaussianMixture.single([0.5], [[1.0]])
    for s2 in (0.5, 1.0, 2.0):
        ch = ChannelModel.identity([[s2]])
        rec = verify_kl_corollary(VerificationCase(p, q, ch, "kl", ONE, estimator=EstimatorConfig("closed_form")))
        # D = 1/2 * 0.25 / (1 + s2) for the output variance 1 + s2
        expected = -0.5 * 0.25 / (1.0 + s2) ** 2
        assert rec.rhs == pytest.approx(expected, abs=1e-14)
        assert rec.residual < 1e-8
        assert rec.kind == "kl_corollary"


def test_entropy_examples():
    assert differential_entropy(STD).value == pytest.approx(1.4189385332046727, abs=1e-10)
    g = GaussianMixture.single([0.0, 0.0], np.diag([1.0, 4.0]))
    exact = 0.5 * np.log((2 * np.pi * np.e) ** 2 * 4)
    assert differential_entropy(g).value == pytest.approx(exact, abs=1e-10)
    est = differential_entropy(g, "mc", 200_000, seed=3)
    assert abs(est.value - exact) < 3 * est.std_error


def test_debruijn_gaussian_constant_is_half():
    s, s2 = 0.6, 0.9
    rec = verify_debruijn(GaussianMixture.single([0.0], [[s]]), ChannelModel.identity([[s2]]), ONE)
    J = 1.0 / (s + s2)
    assert rec.rhs == pytest.approx(0.5 * J, abs=1e-12)
    assert rec.diagnostics["rhs_alt"] == pytest.approx(J, abs=1e-12)
    assert rec.diagnostics["constant"] == pytest.approx(0.5, abs=1e-6)
    assert rec.passed


def test_debruijn_isotropic_mc():
    src = GaussianMixture.single([0.0, 0.0], 0.5 * np.eye(2))
    rec = verify_debruijn(src, ChannelModel.identity(np.eye(2)), np.eye(2) / np.sqrt(2),
                          estimator=EstimatorConfig("mc", n=200_000, seed=1))
    assert rec.passed
    assert rec.diagnostics["constant"] == pytest.approx(0.5, rel=1e-2)


def test_debruijn_mixture_quadrature():
    rec = verify_debruijn(MIX1, CH1, ONE)
    assert rec.diagnostics["constant"] == pytest.approx(0.5, abs=1e-4)
    assert rec.diagnostics["residual_alt"] > 100 * rec.residual


def test_direction_must_keep_covariance_positive():
    with pytest.raises(NotPositiveDefinite):
        VerificationCase(MIX1, MIX1Q, ChannelModel.identity([[1e-5]]), "kl", -ONE, fd_step=1e-4)


def test_run_cases_keeps_order():
    V = random_directions(2, 4, seed=9)
    serial = run_cases(lambda v: verify_heat_equation(MIX2, CH2, [0.0, 0.0], v).lhs, V, workers=1)
    pooled = run_cases(lambda v: verify_heat_equation(MIX2, CH2, [0.0, 0.0], v).lhs, V, workers=4)
    assert serial == pooled
