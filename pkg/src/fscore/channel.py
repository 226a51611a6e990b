"""Vector Gaussian channels with noise ``N ~ N(0, Sigma)``.

Two forms share the same noise term:

* ``"diffusion"``: ``Y = sqrt(a) H X + sqrt(1 - a) N`` (signal scaled down as
  ``a -> 0``; at ``a = 0`` the output is pure noise)
* ``"additive"``:  ``Y = H X + sqrt(1 - a) N`` (at ``a = 0`` this is the
  classical ``Y = H X + N``)

The total noise covariance ``(1 - a) * Sigma`` is called the *effective*
covariance. Downstream identity checks differentiate in it.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateOutput, DimensionMismatch
from .matrixcore import check_pd, symmetrize
from .mixtures import GaussianComponent, GaussianMixture

OUTPUT_FLOOR = 1e-12
FORMS = ("diffusion", "additive")


@dataclass(frozen=True, eq=False)
class ChannelModel:
    H: np.ndarray
    alpha_bar: float
    sigma: np.ndarray
    form: str = "diffusion"

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"channel form must be one of {FORMS}, got {self.form!r}")
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        sigma = symmetrize(np.atleast_2d(np.asarray(self.sigma, dtype=float)))
        a = float(self.alpha_bar)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha_bar must lie in [0, 1], got {a}")
        if sigma.shape != (H.shape[0], H.shape[0]):
            raise DimensionMismatch(f"sigma shape {sigma.shape} does not match H rows {H.shape[0]}")
        if a < 1.0:
            sigma = check_pd(sigma, name="sigma")
        H.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "alpha_bar", a)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def identity(cls, sigma):
        """Default channel ``Y = X + N``: additive, ``H = I``, ``alpha_bar = 0``.

        The effective covariance is ``sigma`` itself.
        """
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        return cls(np.eye(sigma.shape[0]), 0.0, sigma, "additive")

    @property
    def gain(self):
        """Coefficient multiplying ``H X``."""
        return 1.0 if self.form == "additive" else float(np.sqrt(self.alpha_bar))

    @property
    def beta_tilde(self):
        return 1.0 - self.alpha_bar

    @property
    def input_dim(self):
        return self.H.shape[1]

    @property
    def output_dim(self):
        return self.H.shape[0]

    def to_spec(self):
        return {"H": self.H.tolist(), "alpha_bar": self.alpha_bar,
                "sigma": self.sigma.tolist(), "form": self.form}

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["H"], spec["alpha_bar"], spec["sigma"], spec.get("form", "diffusion"))


def effective_covariance(ch):
    """Total noise covariance ``(1 - alpha_bar) * sigma``."""
    return ch.beta_tilde * ch.sigma


def pushforward_with_noise(source, ch, noise_cov):
    """Output mixture of ``ch`` with its effective noise covariance replaced by ``noise_cov``."""
    if source.dim != ch.input_dim:
        raise DimensionMismatch(f"source dimension {source.dim} != channel input {ch.input_dim}")
    scale = ch.gain
    comps = []
    for c in source.components:
        cov = symmetrize(scale**2 * ch.H @ c.covariance @ ch.H.T + noise_cov)
        wmin = np.linalg.eigvalsh(cov).min()
        if wmin < OUTPUT_FLOOR:
            raise DegenerateOutput(f"output covariance has min eigenvalue {wmin:.3e}")
        comps.append(GaussianComponent(scale * ch.H @ c.mean, cov))
    return GaussianMixture(tuple(comps), source.weights)


def pushforward(source, ch):
    """Closed-form law of the channel output for a Gaussian-mixture input.

    Component ``k`` maps to ``N(g H mu_k, g^2 H C_k H^T + (1 - a) Sigma)`` with
    ``g = ch.gain``; weights are unchanged.
    """
    return pushforward_with_noise(source, ch, effective_covariance(ch))


def perturb_sigma(ch, V, eps):
    """Same channel with ``sigma <- sigma + eps * V``."""
    if eps == 0:
        return ch
    V = np.asarray(V, dtype=float)
    new = check_pd(ch.sigma + eps * V, name="perturbed sigma")
    return replace(ch, sigma=new)
