"""Few-step samplers built around a consistency function.

All variants share one loop shape: draw the initial latent at the top
noise level, then for each adjacent pair of levels evaluate the
consistency function once and re-noise with a variant-specific rule,
and finish with one consistency evaluation at the last visited level.
The number of consistency evaluations therefore equals ``steps``
exactly, and ``steps=1`` collapses every variant to a single evaluation
of the initial latent.

Variants
--------
cm_baseline   re-noise the estimate with fresh Gaussian noise.
ddim          deterministic interpolation toward the estimate.
addim         ddim plus variance borrowed from the teacher error
              ||x_teacher - x_hat||^2 (needs ground truth).
inverse_addim ddim plus variance borrowed from the measurement residual
              ||y - A(x_hat)||^2; works for nonlinear forward maps too.
ddrm          spectral-domain three-case update (linear operators only).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .operators import LinearOperator, NonlinearOperator
from .schedules import (
    DEFAULT_RHO,
    DEFAULT_T_MAX,
    DEFAULT_T_MIN,
    NoiseSchedule,
    make_karras_schedule,
)

VARIANTS = ("cm_baseline", "ddim", "addim", "inverse_addim", "ddrm")


class UnsupportedCombination(ValueError):
    """Sampler variant applied to an operator it cannot handle."""


@dataclass(frozen=True)
class SamplerConfig:
    variant: str
    steps: int
    eta: float = 1.0
    gamma: float = 1.0
    ddrm_eta: float = 0.85
    ddrm_eta_b: float = 1.0
    t_min: float = DEFAULT_T_MIN
    t_max: float = DEFAULT_T_MAX
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.ddrm_eta <= 1.0:
            raise ValueError(f"ddrm_eta must lie in [0, 1], got {self.ddrm_eta}")
        if not 0.0 <= self.ddrm_eta_b <= 1.0:
            raise ValueError(f"ddrm_eta_b must lie in [0, 1], got {self.ddrm_eta_b}")
        if not 0.0 < self.t_min < self.t_max:
            raise ValueError(
                f"need 0 < t_min < t_max, got t_min={self.t_min}, t_max={self.t_max}"
            )
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    def schedule(self) -> NoiseSchedule:
        """Noise levels visited by the loop; steps=1 still needs two to exist."""
        return make_karras_schedule(max(self.steps, 2), self.t_min, self.t_max, self.rho)


def interval_ratio(t: float, s: float, t_min: float) -> float:
    """(s^2 - t_min^2) / (t^2 - t_min^2) for a step from level t down to s."""
    if not t_min <= s < t:
        raise ValueError(f"need t_min <= s < t, got t={t}, s={s}, t_min={t_min}")
    return (s * s - t_min * t_min) / (t * t - t_min * t_min)


def _scaled_noise_step(x_t, x_hat, ratio: float, extra: float):
    """x_hat + sqrt(ratio + extra) * (x_t - x_hat).

    Every deterministic variant funnels through this one expression so
    that extra == 0.0 reproduces the plain interpolation bit for bit.
    """
    eps = x_t - x_hat
    return x_hat + math.sqrt(ratio + extra) * eps


def ddim_step(x_t, x_hat, t: float, s: float, t_min: float = DEFAULT_T_MIN):
    """Deterministic step: shrink the implied noise by sqrt(interval ratio)."""
    return _scaled_noise_step(x_t, x_hat, interval_ratio(t, s, t_min), 0.0)


def _excess_term(ratio: float, scale: float, error_sq: float, eps_sq: float) -> float:
    """Variance surplus added under the square root, normalised by ||eps||^2."""
    if scale == 0.0 or error_sq == 0.0 or eps_sq == 0.0:
        return 0.0
    r = math.sqrt(ratio)
    return (1.0 - r) * (1.0 - r) * scale * error_sq / eps_sq


def addim_step(
    x_t, x_hat, x_teacher, t: float, s: float, t_min: float = DEFAULT_T_MIN, eta: float = 1.0
):
    """Teacher-guided step: inflate the noise scale by the estimation error."""
    eps = np.asarray(x_t) - np.asarray(x_hat)
    eps_sq = float(np.dot(eps, eps))
    delta = np.asarray(x_teacher) - np.asarray(x_hat)
    ratio = interval_ratio(t, s, t_min)
    extra = _excess_term(ratio, eta, float(np.dot(delta, delta)), eps_sq)
    return _scaled_noise_step(x_t, x_hat, ratio, extra)


def inverse_addim_step(
    x_t,
    x_hat,
    y,
    operator,
    t: float,
    s: float,
    t_min: float = DEFAULT_T_MIN,
    gamma: float = 1.0,
):
    """Measurement-guided step: the data residual stands in for the teacher.

    The residual y - A(x_hat) needs only a forward application, so any
    deterministic operator qualifies, nonlinear ones included.
    """
    eps = np.asarray(x_t) - np.asarray(x_hat)
    eps_sq = float(np.dot(eps, eps))
    resid = np.asarray(y) - operator.apply(x_hat)
    ratio = interval_ratio(t, s, t_min)
    extra = _excess_term(ratio, gamma, float(np.dot(resid, resid)), eps_sq)
    return _scaled_noise_step(x_t, x_hat, ratio, extra)


def ddrm_step(
    x_t,
    x_hat,
    y,
    operator: LinearOperator,
    t: float,
    s: float,
    sigma_y: float,
    noise,
    eta: float = 0.85,
    eta_b: float = 1.0,
):
    """One spectral-domain update from level t down to level s."""
    if not isinstance(operator, LinearOperator):
        raise UnsupportedCombination(
            "the spectral sampler needs a linear operator with an SVD"
        )
    y_bar, valid = operator.measurement_to_spectral(y)
    xs = kernels.ddrm_update(
        operator.to_spectral(x_t),
        operator.to_spectral(x_hat),
        y_bar,
        valid,
        operator.padded_singular_values(),
        s,
        t,
        sigma_y,
        eta,
        eta_b,
        np.asarray(noise, dtype=np.float64),
    )
    return operator.from_spectral(xs)


@dataclass(frozen=True)
class StepRecord:
    t: float
    latent: np.ndarray
    estimate: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Everything a sampling run produced, records in decreasing t."""

    estimate: np.ndarray
    records: tuple[StepRecord, ...] = field(repr=False)
    nfe: int
    degenerate_steps: int

    def levels(self) -> list[float]:
        return [rec.t for rec in self.records]


def _require(condition: bool, message: str):
    if not condition:
        raise ValueError(message)


def sample(
    consistency,
    config: SamplerConfig,
    *,
    n: int | None = None,
    y=None,
    operator=None,
    sigma_y: float = 0.0,
    x_teacher=None,
    seed: int = 0,
    schedule: NoiseSchedule | None = None,
) -> Trajectory:
    """Run one sampling trajectory and return its final estimate.

    The consistency function is called exactly ``config.steps`` times.
    The initial latent is t_max * z with z drawn from a fresh
    deterministic generator, so equal seeds give bit-identical runs; the
    stochastic variants consume further draws from the same generator in
    loop order.  An explicit schedule overrides the built-in one and must
    contain at least ``config.steps`` levels.
    """
    if schedule is None:
        schedule = config.schedule()
    _require(
        len(schedule) >= config.steps,
        f"schedule has {len(schedule)} levels but {config.steps} steps were requested",
    )
    levels = schedule.levels

    if operator is not None and n is None:
        n = operator.n
    if n is None and x_teacher is not None:
        n = np.asarray(x_teacher).size
    _require(n is not None, "cannot infer the signal dimension; pass n or an operator")

    variant = config.variant
    if variant == "addim":
        _require(x_teacher is not None, "addim needs x_teacher (the ground truth)")
        x_teacher = np.asarray(x_teacher, dtype=np.float64)
    if variant == "inverse_addim":
        _require(y is not None and operator is not None, "inverse_addim needs y and an operator")
    if variant == "ddrm":
        _require(y is not None and operator is not None, "ddrm needs y and an operator")
        if isinstance(operator, NonlinearOperator) or not isinstance(
            operator, LinearOperator
        ):
            raise UnsupportedCombination(
                "the spectral sampler needs a linear operator with an SVD"
            )

    rng = np.random.default_rng(seed)
    x = levels[0] * rng.standard_normal(n)
    records = []
    degenerate = 0

    for i in range(config.steps - 1):
        t, s = levels[i], levels[i + 1]
        x_hat = np.asarray(consistency(x, y, t), dtype=np.float64)
        records.append(StepRecord(t=t, latent=x, estimate=x_hat))
        if float(np.dot(x - x_hat, x - x_hat)) == 0.0 and variant in (
            "addim",
            "inverse_addim",
        ):
            degenerate += 1
        if variant == "cm_baseline":
            z = rng.standard_normal(n)
            x = x_hat + math.sqrt(s * s - config.t_min * config.t_min) * z
        elif variant == "ddim":
            x = ddim_step(x, x_hat, t, s, config.t_min)
        elif variant == "addim":
            x = addim_step(x, x_hat, x_teacher, t, s, config.t_min, config.eta)
        elif variant == "inverse_addim":
            x = inverse_addim_step(
                x, x_hat, y, operator, t, s, config.t_min, config.gamma
            )
        else:  # ddrm
            noise = rng.standard_normal(n)
            x = ddrm_step(
                x,
                x_hat,
                y,
                operator,
                t,
                s,
                sigma_y,
                noise,
                config.ddrm_eta,
                config.ddrm_eta_b,
            )

    t_last = levels[config.steps - 1]
    x_hat = np.asarray(consistency(x, y, t_last), dtype=np.float64)
    records.append(StepRecord(t=t_last, latent=x, estimate=x_hat))
    return Trajectory(
        estimate=x_hat,
        records=tuple(records),
        nfe=config.steps,
        degenerate_steps=degenerate,
    )
