"""Integral-difference equation (IDE) model, filtered controller and
characteristic functions.

The plant is

    x(t) = sum_ij H_ij x(t - (r_i + s_j)) + int_{-tau}^0 w1(theta) x(t + theta) dtheta + u(t)

and the controller is the low-pass filtered cancellation law

    T u'(t) + u(t) = -sum_ij Hhat_ij x(t - (rhat_i + shat_j))
                     - int_{-tauhat}^0 w2(theta) x(t + theta) dtheta,

    w2(theta) = w1hat(theta) - wdes(theta / tauhat) / tauhat.

All characteristic functions accept scalar or array ``lam`` and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .kernel import SampledKernel, kernel_transform

__all__ = [
    "Fragility",
    "FilteredController",
    "IdeModel",
    "ModelError",
    "StabilityVerdict",
    "char_closed",
    "char_matrix_closed",
    "char_matrix_open",
    "char_open",
    "char_target",
    "delay_sum",
]


class ModelError(ValueError):
    """Structural or dimensional problem with a model or controller."""


def _as_blocks(H, k, ell):
    H = np.asarray(H, dtype=float)
    if H.ndim == 2 and k == 1 and ell == 1:
        H = H[None, None]
    elif H.ndim == 2:
        # scalar blocks given as a k x ell table
        H = H[:, :, None, None]
    if H.ndim != 4 or H.shape[:2] != (k, ell) or H.shape[2] != H.shape[3]:
        raise ModelError(f"H must be a ({k}, {ell}, m, m) table of square blocks")
    return H


def _check_delays(r, s):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if r.ndim != 1 or s.ndim != 1 or r.size == 0 or s.size == 0:
        raise ModelError("delay vectors must be non-empty 1-D")
    if np.any(r <= 0) or np.any(s <= 0):
        raise ModelError("delays must be positive")
    if np.any(np.diff(r) >= 0) or np.any(np.diff(s) >= 0):
        raise ModelError("delay vectors must be strictly decreasing")
    return r, s


@dataclass(frozen=True, eq=False)
class IdeModel:
    """Open-loop IDE data: H has shape (k, ell, m, m), r (k,), s (ell,)."""

    H: np.ndarray
    r: np.ndarray
    s: np.ndarray
    w1: SampledKernel

    def __post_init__(self):
        r, s = _check_delays(self.r, self.s)
        H = _as_blocks(self.H, r.size, s.size)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "H", H)
        lo, hi = self.w1.domain
        if not (np.isclose(lo, -self.tau, rtol=1e-12, atol=1e-14) and hi == 0.0):
            raise ModelError(f"w1 must live on [-tau, 0] = [{-self.tau}, 0], got [{lo}, {hi}]")
        if self.w1.dim != self.dim:
            raise ModelError("kernel and H blocks differ in size")

    @property
    def k(self):
        return self.r.size

    @property
    def ell(self):
        return self.s.size

    @property
    def dim(self):
        return self.H.shape[-1]

    @property
    def tau(self):
        return float(self.r[0] + self.s[0])

    @property
    def delays(self):
        """Matrix of discrete delays r_i + s_j, shape (k, ell)."""
        return self.r[:, None] + self.s[None, :]

    def difference_only(self):
        """Same model with the distributed term removed."""
        return IdeModel(self.H, self.r, self.s, SampledKernel.zero(-self.tau, 0.0, self.dim))


@dataclass(frozen=True, eq=False)
class FilteredController:
    """Filtered cancellation law built from assumed plant data.

    ``T`` is the physical filter time constant (seconds); ``T = 0`` is the
    unfiltered law and ``T = inf`` switches control off.
    """

    T: float
    Hhat: np.ndarray
    rhat: np.ndarray
    shat: np.ndarray
    w1hat: SampledKernel
    wdes: SampledKernel

    def __post_init__(self):
        if not (self.T >= 0):
            raise ModelError("filter constant T must be nonnegative")
        r, s = _check_delays(self.rhat, self.shat)
        object.__setattr__(self, "rhat", r)
        object.__setattr__(self, "shat", s)
        object.__setattr__(self, "Hhat", _as_blocks(self.Hhat, r.size, s.size))
        lo, hi = self.wdes.domain
        if not (np.isclose(lo, -1.0) and hi == 0.0):
            raise ModelError("wdes must live on [-1, 0]")
        lo, hi = self.w1hat.domain
        if not (np.isclose(lo, -self.tauhat, rtol=1e-12, atol=1e-14) and hi == 0.0):
            raise ModelError("w1hat must live on [-tauhat, 0]")
        if self.w1hat.dim != self.wdes.dim or self.w1hat.dim != self.Hhat.shape[-1]:
            raise ModelError("controller blocks differ in size")

    @classmethod
    def nominal(cls, model, wdes, T=0.0):
        """Controller whose assumed data equal the plant's."""
        return cls(T, model.H, model.r, model.s, model.w1, wdes)

    @property
    def tauhat(self):
        return float(self.rhat[0] + self.shat[0])

    @property
    def dim(self):
        return self.Hhat.shape[-1]

    def with_T(self, T):
        return FilteredController(T, self.Hhat, self.rhat, self.shat, self.w1hat, self.wdes)

    def feedback_kernel(self):
        """The implemented w2 as a SampledKernel on [-tauhat, 0]."""
        des = self.wdes.stretched(self.tauhat)
        bp = np.union1d(self.w1hat.breakpoints, des.breakpoints)
        # drop roundoff duplicates (both kernels end at -tauhat)
        bp = bp[np.concatenate([[True], np.diff(bp) > 1e-12 * max(1.0, self.tauhat)])]
        n = max(s.shape[0] for s in self.w1hat.samples + des.samples)
        return SampledKernel.from_function(lambda t: self.w1hat(t) - des(t), bp, n)

    def transform_w2(self, lam):
        """int w2(theta) e^{lam theta} dtheta, exactly for the interpolants."""
        lam = np.asarray(lam, dtype=complex)
        return kernel_transform(self.w1hat, lam) - kernel_transform(self.wdes, lam * self.tauhat)


class Fragility(str, Enum):
    ROBUST_UNFILTERED = "robust-unfiltered"
    FILTER_REQUIRED = "filter-required"
    NOT_STRONGLY_STABILIZABLE = "not-strongly-stabilizable"

    @classmethod
    def classify(cls, gamma0, gamma1):
        if gamma0 >= 1.0:
            return cls.NOT_STRONGLY_STABILIZABLE
        if gamma1 < 1.0:
            return cls.ROBUST_UNFILTERED
        return cls.FILTER_REQUIRED


@dataclass(frozen=True)
class StabilityVerdict:
    """Summary record; ``abscissa`` is ``None`` when it was not resolved."""

    gamma0: float
    gamma1: float
    fragility: Fragility
    abscissa: float | None = None


def delay_sum(H, delays, lam):
    """sum_ij H_ij exp(-lam d_ij) for array lam; shape lam.shape + (m, m)."""
    lam = np.asarray(lam, dtype=complex)
    ph = np.exp(-lam[..., None, None] * delays)
    return np.einsum("...ij,ijmn->...mn", ph, H)


def _det(M):
    if M.shape[-1] == 1:
        return M[..., 0, 0]
    return np.linalg.det(M)


def _check_compatible(model, controller):
    if controller.dim != model.dim:
        raise ModelError("controller and plant differ in state dimension")
    if controller.Hhat.shape[:2] != model.H.shape[:2]:
        raise ModelError("controller and plant differ in (k, ell)")


def char_matrix_open(model, lam):
    """-I + sum H_ij e^{-lam(r_i+s_j)} + W1(lam)."""
    lam = np.asarray(lam, dtype=complex)
    eye = np.eye(model.dim)
    return -eye + delay_sum(model.H, model.delays, lam) + kernel_transform(model.w1, lam)


def char_open(model, lam):
    """det(-I + sum_ij H_ij e^{-lam(r_i+s_j)} + W1(lam))."""
    return _det(char_matrix_open(model, lam))


def char_target(model, controller, lam):
    """det(-I + int (w1 - w2)(theta) e^{lam theta} dtheta).

    w2 is the controller's implemented kernel.  With nominal assumed data the
    difference is exactly wdes(theta/tau)/tau.
    """
    _check_compatible(model, controller)
    lam = np.asarray(lam, dtype=complex)
    eye = np.eye(model.dim)
    return _det(-eye + kernel_transform(model.w1, lam) - controller.transform_w2(lam))


def char_matrix_closed(model, controller, lam, cleared=True):
    """Closed-loop characteristic matrix.

    With ``cleared=True`` (default) this is (1 + lam T) Delta(lam; T):

        (1 + lam T)(-I + sum H e + W1) - (sum Hhat ehat + W2),

    which is entire in lam.  With ``cleared=False`` it is Delta itself.
    """
    _check_compatible(model, controller)
    lam = np.asarray(lam, dtype=complex)
    T = controller.T
    if np.isinf(T):
        return char_matrix_open(model, lam)
    plant = char_matrix_open(model, lam)
    ctrl = delay_sum(controller.Hhat, controller.rhat[:, None] + controller.shat[None, :], lam)
    ctrl = ctrl + controller.transform_w2(lam)
    if cleared:
        return (1.0 + lam * T)[..., None, None] * plant - ctrl
    return plant - ctrl / (1.0 + lam * T)[..., None, None]


def char_closed(model, controller, lam, cleared=True):
    """det of the closed-loop characteristic matrix (see char_matrix_closed).

    ``controller.T == inf`` returns ``char_open`` (control annihilated).
    """
    return _det(char_matrix_closed(model, controller, lam, cleared=cleared))
