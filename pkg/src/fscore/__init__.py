"""Generalized score matching under correlated Gaussian noise.

Closed-form Gaussian-mixture machinery, f-divergence and generalized Fisher
estimators, finite-difference certificates of the covariance identities, and
covariance / model fitting built on them.
"""

__version__ = "0.1.0"

from .channel import ChannelModel, effective_covariance, perturb_sigma, pushforward
from .divergence import (
    FGenerator,
    ScalarEstimate,
    divergence_mc,
    divergence_quadrature,
    make_generator,
    parse_generator,
)
from .fisher import (
    MatrixEstimate,
    fisher_information_mc,
    fisher_information_quadrature,
    generalized_fisher_p,
    generalized_fisher_q,
    generalized_fisher_quadrature,
    relative_fisher_mc,
)
from .identity import (
    EstimatorConfig,
    VerificationCase,
    VerificationRecord,
    differential_entropy,
    dir_derivative_density,
    verify_debruijn,
    verify_heat_equation,
    verify_kl_corollary,
    verify_theorem1,
)
from .matrixcore import cholesky, inverse_and_logdet, make_direction, project_psd
from .mixtures import (
    GaussianComponent,
    GaussianMixture,
    gaussian_kl,
    gaussian_relative_fisher,
    gmm_density_hessian,
    gmm_logpdf,
    gmm_sample,
    gmm_score,
)
from .optimize import DescentOptions, Trajectory, fit_covariance, fit_model_fsm
