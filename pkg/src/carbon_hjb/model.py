"""Model coefficients, closed-form cost oracles and auxiliary functions.

Time conventions used throughout the package:

* ``theta`` is physical (calendar) time in ``[0, T]``.
* ``tau = T - theta`` is time-to-horizon; the transformed PDE runs forward in
  ``t = tau`` starting from the terminal payoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import ndtr

from carbon_hjb.errors import MuNotGreaterThanR, NonPositiveCoefficient, ValidationError

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Baseline parameter set.
BASELINE = {"mu": 0.05, "sigma": 0.2, "nu": 0.5, "r": 0.03, "m": 0.3, "T": 1.0}


@dataclass(frozen=True)
class ModelParams:
    """Market and cost coefficients.

    mu, sigma: drift and volatility of the allowance price (geometric BM).
    nu: volatility of the emission surplus.
    r: discount rate. m: quadratic internal-cost coefficient. T: horizon.
    """

    mu: float = BASELINE["mu"]
    sigma: float = BASELINE["sigma"]
    nu: float = BASELINE["nu"]
    r: float = BASELINE["r"]
    m: float = BASELINE["m"]
    T: float = BASELINE["T"]

    @property
    def delta(self) -> float:
        return (self.mu - self.r) / (2.0 * self.m)

    @property
    def excess_drift(self) -> float:
        """mu - r, the growth rate of discounted allowance prices."""
        return self.mu - self.r

    def replace(self, **changes) -> "ModelParams":
        data = {k: getattr(self, k) for k in BASELINE}
        data.update(changes)
        return validate_params(data)


def validate_params(raw: Mapping[str, float] | ModelParams) -> ModelParams:
    """Check positivity and ``mu > r``; return a frozen :class:`ModelParams`."""
    if isinstance(raw, ModelParams):
        data = {k: getattr(raw, k) for k in BASELINE}
    else:
        unknown = set(raw) - set(BASELINE)
        if unknown:
            raise ValidationError(f"unknown parameter(s): {sorted(unknown)}")
        data = {**BASELINE, **raw}
    data = {k: float(v) for k, v in data.items()}
    for name in ("sigma", "nu", "r", "m", "T"):
        if not data[name] > 0.0:
            raise NonPositiveCoefficient(name, data[name])
    if not data["mu"] > data["r"]:
        raise MuNotGreaterThanR(data["mu"], data["r"])
    return ModelParams(**data)


@dataclass(frozen=True)
class PenaltyConfig:
    epsilon: float = 0.01
    epsilon_schedule: tuple[float, ...] = (0.1, 0.05, 0.02, 0.01)

    def __post_init__(self):
        for eps in (self.epsilon, *self.epsilon_schedule):
            if not 0.0 < eps <= 1.0:
                raise ValidationError(f"penalty parameter {eps} outside (0, 1]")
        sched = self.epsilon_schedule
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValidationError(f"epsilon schedule {sched} is not strictly decreasing")


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the exponential/rho barriers bracketing the penalty solution.

    ``kappa`` only has to be "large enough"; it defaults to 2(sigma^2+mu)+10.
    """

    delta: float
    kappa: float
    a_const: float = 1.0

    @classmethod
    def from_params(
        cls, p: ModelParams, kappa: float | None = None, a_const: float = 1.0
    ) -> "BoundConstants":
        if kappa is None:
            kappa = 2.0 * (p.sigma**2 + p.mu) + 10.0
        if not kappa > 2.0 * (p.sigma**2 + p.mu):
            raise ValidationError(f"kappa={kappa} must exceed 2(sigma^2+mu)")
        if not a_const > 0.0:
            raise ValidationError(f"a_const={a_const} must be positive")
        return cls(delta=p.delta, kappa=float(kappa), a_const=float(a_const))


def gaussian_cdf(z):
    return ndtr(z)


def gaussian_pdf(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):         # z*z -> inf gives the correct 0
        return np.exp(-0.5 * z * z) / SQRT_2PI


def terminal_payoff(x, s):
    """Cost of covering a positive surplus at the horizon: ``x^+ * s``."""
    return np.maximum(x, 0.0) * s


def trivial_strategy_cost(x, s, tau, p: ModelParams):
    """Expected discounted cost of never reducing and never buying.

    ``s e^{(mu-r) tau} E[(x + nu sqrt(tau) Z)^+]`` in closed form.
    """
    x, s, tau = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, s, tau)))
    out = np.empty_like(x)
    zero = tau <= 0.0
    out[zero] = np.maximum(x[zero], 0.0) * s[zero]
    pos = ~zero
    sd = p.nu * np.sqrt(tau[pos])
    z = x[pos] / sd
    growth = np.exp(p.excess_drift * tau[pos])
    out[pos] = s[pos] * growth * (x[pos] * gaussian_cdf(z) + sd * gaussian_pdf(z))
    return out[()] if out.ndim == 0 else out


def lemma22_bound(x, s, tau, p: ModelParams):
    """Upper bound ``s e^{(mu-r) tau} [x^+ + nu sqrt(tau)/sqrt(2 pi)]`` on the value."""
    tau = np.asarray(tau, dtype=float)
    return (
        s
        * np.exp(p.excess_drift * tau)
        * (np.maximum(x, 0.0) + p.nu * np.sqrt(np.maximum(tau, 0.0)) / SQRT_2PI)
    )


def beta(z, p: ModelParams):
    """C^1 convex nonincreasing penalty with beta(0) = 2(mu-r), zero on [1, inf)."""
    z = np.asarray(z, dtype=float)
    b0 = 2.0 * p.excess_drift
    out = np.where(z <= 0.0, b0 * (1.0 - 2.0 * z), b0 * np.square(1.0 - np.minimum(z, 1.0)))
    return out[()] if out.ndim == 0 else out


def beta_prime(z, p: ModelParams):
    z = np.asarray(z, dtype=float)
    b0 = 2.0 * p.excess_drift
    out = np.where(z <= 0.0, -2.0 * b0, -2.0 * b0 * (1.0 - np.minimum(z, 1.0)))
    return out[()] if out.ndim == 0 else out


def rho(z):
    """Sine-corrected ramp from 0 (z <= 1) to 1 (z >= 3)."""
    z = np.asarray(z, dtype=float)
    w = np.clip(z, 1.0, 3.0) - 1.0
    out = 0.5 * w - np.sin(np.pi * w) / (2.0 * np.pi)
    out = np.where(z >= 3.0, 1.0, np.where(z <= 1.0, 0.0, out))
    return out[()] if out.ndim == 0 else out


def _smoothstep(w):
    w = np.clip(w, 0.0, 1.0)
    return w * w * (3.0 - 2.0 * w)


def initial_profile(x, eps: float):
    """Smoothed indicator: 0 for x <= -eps, 1+eps for x >= 0, cubic ramp between."""
    x = np.asarray(x, dtype=float)
    out = (1.0 + eps) * _smoothstep((x + eps) / eps)
    return out[()] if out.ndim == 0 else out


def initial_profile_antiderivative(x, eps: float):
    """``int_{-inf}^x initial_profile(z, eps) dz`` in closed form."""
    x = np.asarray(x, dtype=float)
    w = np.clip((x + eps) / eps, 0.0, 1.0)
    ramp = eps * (w**3 - 0.5 * w**4)
    return (1.0 + eps) * (ramp + np.maximum(x, 0.0))


def initial_profile_cell_average(x, eps: float, dx: float):
    """Average of the profile over ``[x - dx/2, x + dx/2]``.

    Point sampling puts the discrete jump half a cell away from the true one
    whenever ``eps < dx``; averaging keeps ``sum(v) dx`` equal to the integral.
    """
    h = 0.5 * dx
    F = initial_profile_antiderivative
    return (F(np.asarray(x) + h, eps) - F(np.asarray(x) - h, eps)) / dx
