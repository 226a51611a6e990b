"""Experiment configuration: a single JSON document per run.

Unknown keys are rejected everywhere; every validation failure is raised as
:class:`~fscore.errors.ConfigError` with the offending key's location.
"""

import hashlib
import json
import re
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .channel import ChannelModel
from .divergence import parse_generator
from .errors import ConfigError, DimensionMismatch, DimensionTooHigh, FScoreError
from .matrixcore import make_direction, random_directions
from .mixtures import GaussianComponent, GaussianMixture
from .quadrature import MAX_DIM

EXPERIMENTS = (
    "verify_heat",
    "verify_theorem1",
    "verify_kl",
    "verify_debruijn",
    "fit_covariance",
    "fit_model",
    "estimate",
)
VERIFY_KINDS = EXPERIMENTS[:4]

Matrix = list[list[float]]
_DIRECTION_RE = re.compile(r"^(random|random_pd):([1-9][0-9]*)$")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ComponentSpec(_Strict):
    weight: float
    mean: list[float]
    covariance: Matrix


class ChannelSpec(_Strict):
    sigma: Matrix
    H: Optional[Matrix] = None
    alpha_bar: float = 0.0
    form: Literal["additive", "diffusion"] = "additive"

    def build(self):
        m = len(self.sigma)
        H = np.eye(m) if self.H is None else self.H
        return ChannelModel(H, self.alpha_bar, self.sigma, self.form)


class PairSpec(_Strict):
    name: Optional[str] = None
    p: list[ComponentSpec]
    q: Optional[list[ComponentSpec]] = None
    channel: ChannelSpec
    points: Optional[list[list[float]]] = None


class EstimatorSpec(_Strict):
    method: Literal["quadrature", "mc_p", "mc_q", "mc", "closed_form"] = "quadrature"
    n: int = 200_000
    seed: int = 0
    nodes_per_axis: int = 64


class FDSpec(_Strict):
    steps: list[float] = [1e-4]
    directions: Union[str, list[Matrix]] = "random:3"
    richardson: bool = False

    @field_validator("directions")
    @classmethod
    def _directions(cls, v):
        if isinstance(v, str) and v != "identity" and not _DIRECTION_RE.match(v):
            raise ValueError("directions must be 'identity', 'random:<k>', 'random_pd:<k>' or a list of matrices")
        return v

    @field_validator("steps")
    @classmethod
    def _steps(cls, v):
        if not v or any(not s > 0 for s in v):
            raise ValueError("steps must be a non-empty list of positive numbers")
        return v


class InitSpec(_Strict):
    mean: list[float]
    covariance: Matrix


class OptimizerSpec(_Strict):
    step_size: float
    max_iters: int = 100
    psd_floor: float = 1e-8
    stop_tol: float = 1e-6
    fd_step: float = 1e-4
    consistency_every: int = 0
    init: Optional[InitSpec] = None


class OutputSpec(_Strict):
    dir: str = "results"


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS]
    pairs: list[PairSpec]
    generators: list[str] = ["kl"]
    estimator: EstimatorSpec = EstimatorSpec()
    fd: FDSpec = FDSpec()
    optimizer: Optional[OptimizerSpec] = None
    output: OutputSpec = OutputSpec()
    workers: Optional[int] = None

    @field_validator("generators")
    @classmethod
    def _generators(cls, v):
        if not v:
            raise ValueError("at least one generator is required")
        for g in v:
            try:
                parse_generator(g)
            except FScoreError as exc:
                raise ValueError(str(exc)) from None
        return v

    @field_validator("workers")
    @classmethod
    def _workers(cls, v):
        if v is not None and v < 1:
            raise ValueError("workers must be >= 1")
        return v

    @model_validator(mode="after")
    def _per_experiment(self):
        if not self.pairs:
            raise ValueError("pairs: at least one pair is required")
        needs_q = self.experiment in ("verify_theorem1", "verify_kl", "fit_covariance", "estimate")
        for i, pair in enumerate(self.pairs):
            if needs_q and pair.q is None:
                raise ValueError(f"pairs[{i}].q is required for {self.experiment}")
        if self.experiment.startswith("fit_"):
            if self.optimizer is None:
                raise ValueError(f"optimizer is required for {self.experiment}")
            if self.experiment == "fit_model" and self.optimizer.init is None:
                raise ValueError("optimizer.init is required for fit_model")
        if self.estimator.method == "closed_form" and self.experiment not in ("verify_theorem1", "verify_kl"):
            raise ValueError("estimator.method 'closed_form' only applies to verify_theorem1/verify_kl")
        return self

    # ------------------------------------------------------------ helpers

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _format_error(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(f"[{p}]" if isinstance(p, int) else str(p) for p in err["loc"]).replace(".[", "[")
        msg = err["msg"].removeprefix("Value error, ")
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        parts.append(f"{loc or '<root>'}: {msg}")
    return "; ".join(parts)


def parse_config(data):
    """Validate a config mapping (or JSON text) into :class:`ExperimentConfig`."""
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None
    # semantic checks that need the numeric objects
    uses_grid = cfg.estimator.method == "quadrature" and cfg.experiment != "verify_heat"
    for i, pair in enumerate(cfg.pairs):
        try:
            p, q, ch = build_pair(pair)
            if uses_grid and ch.output_dim > MAX_DIM:
                raise DimensionTooHigh(
                    f"quadrature supports output dimension <= {MAX_DIM}, got {ch.output_dim}; use an mc method"
                )
            if cfg.experiment in VERIFY_KINDS and not isinstance(cfg.fd.directions, str):
                for j, V in enumerate(cfg.fd.directions):
                    if np.asarray(V, dtype=float).shape != (ch.output_dim,) * 2:
                        raise DimensionMismatch(f"fd.directions[{j}] must be {ch.output_dim}x{ch.output_dim}")
        except FScoreError as exc:
            raise ConfigError(f"pairs[{i}]: {type(exc).__name__}: {exc}") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"pairs[{i}]: {exc}") from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg):
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True)


def build_mixture(items):
    return GaussianMixture.from_spec([it.model_dump() for it in items])


def build_pair(pair):
    """``(p, q or None, channel)`` numeric objects for a pair spec."""
    p = build_mixture(pair.p)
    q = build_mixture(pair.q) if pair.q is not None else None
    ch = pair.channel.build()
    for name, g in (("p", p), ("q", q)):
        if g is not None and g.dim != ch.input_dim:
            raise ValueError(f"{name} dimension {g.dim} != channel input dimension {ch.input_dim}")
    return p, q, ch


def build_directions(spec, dim, seed):
    if isinstance(spec, str):
        if spec == "identity":
            return [make_direction(np.eye(dim))]
        kind, k = spec.split(":")
        return random_directions(dim, int(k), seed, positive=(kind == "random_pd"))
    return [make_direction(np.asarray(V, dtype=float)) for V in spec]


def build_init(init):
    return GaussianComponent(init.mean, init.covariance)
