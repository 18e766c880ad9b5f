"""The 2x2 scalar hyperbolic system and its IDE representation.

For one rightward and one leftward transport speed the comparison IDE is

    x(t) = H11 x(t - tau) + int_{-tau}^0 w1(theta) x(t + theta) dtheta + u(t)

with tau = 1/lambda1 + 1/mu1, H11 = R Q and an explicit Bessel-type kernel w1.
The one-parameter mismatch family divides (lambda1, mu1, sigma_pm, sigma_mp)
by (1 + eps): the round-trip time becomes (1 + eps) tau while the cycle gain
H11 is unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .ide import FilteredController, IdeModel
from .kernel import SampledKernel

__all__ = [
    "CASE_STUDY",
    "ScalarPlant",
    "bessel_kernel",
    "j0_sqrt",
    "j2_sqrt",
    "perturb_plant",
    "perturbed_controller",
    "to_ide",
    "wdes_constant",
]

_SERIES_TOL = 1e-17
_SERIES_MAX = 400


def _series(z, offset):
    # sum_k (-z)^k / (k! (k + offset)!)
    z = np.asarray(z, dtype=float)
    term = np.full(z.shape, 1.0 / np.prod(np.arange(1, offset + 1), dtype=float))
    total = term.copy()
    for k in range(1, _SERIES_MAX):
        term = term * (-z) / (k * (k + offset))
        total = total + term
        if np.all(np.abs(term) <= _SERIES_TOL * np.maximum(np.abs(total), 1e-300)) and k > 3:
            break
    return total


def j0_sqrt(z):
    """J0(2 sqrt(z)) as an entire function of real z (z < 0 allowed)."""
    return _series(z, 0)


def j2_sqrt(z):
    """J2(2 sqrt(z)) as an entire function of real z (z < 0 allowed)."""
    return np.asarray(z, dtype=float) * _series(z, 2)


@dataclass(frozen=True)
class ScalarPlant:
    """Speeds, in-domain couplings and boundary reflections of the 2x2 system."""

    lambda1: float
    mu1: float
    sigma_pm: float
    sigma_mp: float
    Q: float
    R: float

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.mu1 > 0):
            raise ValueError("transport speeds lambda1 and mu1 must be positive")

    @property
    def tau(self):
        return 1.0 / self.lambda1 + 1.0 / self.mu1

    @property
    def H11(self):
        return self.R * self.Q

    @property
    def coupling_ratio(self):
        return self.sigma_pm * self.sigma_mp / (self.lambda1 * self.mu1)

    @property
    def a(self):
        return self.Q * self.sigma_mp / self.mu1 + self.R * self.sigma_pm / self.lambda1

    @property
    def b(self):
        return 1.0 + self.Q * self.R

    def h_minus(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -self.coupling_ratio / self.tau**2 * theta * (self.tau + theta)

    def d_minus(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.coupling_ratio * (self.tau + theta * self.b)


CASE_STUDY = ScalarPlant(lambda1=2.0, mu1=np.sqrt(2.0) / 2.0, sigma_pm=5.0, sigma_mp=1.0, Q=1.2, R=0.5)


def bessel_kernel(plant, theta):
    """Evaluate w1(theta) on [-tau, 0]."""
    theta = np.asarray(theta, dtype=float)
    tau = plant.tau
    if np.any(theta < -tau * (1 + 1e-12)) or np.any(theta > 0.0):
        raise ValueError(f"theta outside [-tau, 0] = [{-tau}, 0]")
    h = plant.h_minus(theta)
    d = plant.d_minus(theta) / tau**2
    return (plant.a / tau + d) * j0_sqrt(h) + d * j2_sqrt(h)


def to_ide(plant, n_samples=256):
    """Comparison IDE of the scalar plant, kernel sampled on ``n_samples`` nodes."""
    if n_samples < 8:
        raise ValueError("n_samples must be at least 8")
    tau = plant.tau
    kernel = SampledKernel.from_function(
        lambda t: bessel_kernel(plant, np.clip(t, -tau, 0.0)), [-tau, 0.0], n_samples
    )
    return IdeModel(
        H=[[plant.H11]], r=[1.0 / plant.lambda1], s=[1.0 / plant.mu1], w1=kernel
    )


def perturb_plant(plant, eps):
    """Divide speeds and couplings by (1 + eps)."""
    if not eps > -1.0:
        raise ValueError("eps must exceed -1")
    f = 1.0 + eps
    return replace(
        plant,
        lambda1=plant.lambda1 / f,
        mu1=plant.mu1 / f,
        sigma_pm=plant.sigma_pm / f,
        sigma_mp=plant.sigma_mp / f,
    )


def wdes_constant(value=0.45, n=4):
    """Constant desired kernel shape on [-1, 0]."""
    return SampledKernel.constant([[value]], -1.0, 0.0, n=n)


def perturbed_controller(plant, eps, T_hat, wdes=None, n_samples=256):
    """Filtered controller designed from the eps-mismatched plant.

    ``T_hat`` is the filter constant in units of the nominal round-trip time,
    i.e. the physical constant is ``T_hat * plant.tau``.  The assumed kernel
    is w1(theta/(1+eps))/(1+eps) on [-(1+eps) tau, 0], sampled from the
    closed-form kernel of the perturbed plant.
    """
    if not eps > -1.0:
        raise ValueError("eps must exceed -1")
    if T_hat < 0:
        raise ValueError("T_hat must be nonnegative")
    wdes = wdes_constant() if wdes is None else wdes
    f = 1.0 + eps
    base = _cached_ide(plant, n_samples)
    # sampling the perturbed closed form on the stretched grid gives the
    # stretched interpolant, so reuse the nominal samples
    return FilteredController(
        T=T_hat * plant.tau,
        Hhat=base.H,
        rhat=f * base.r,
        shat=f * base.s,
        w1hat=base.w1.stretched(f),
        wdes=wdes,
    )


@lru_cache(maxsize=32)
def _cached_ide(plant, n_samples):
    return to_ide(plant, n_samples)
