"""Crossing curves of the delay-only closed loop in normalized time.

With the distributed terms dropped and time scaled by tau, the closed loop
of the scalar case has the characteristic function

    h(lam; T, eps) = 1 - H e^{-lam} + H e^{-lam (1 + eps)} / (1 + lam T)

(T, lam normalized).  At lam = i w and with theta = w T, Delta = w eps this
reads 1 - e^{i w} / H = e^{-i Delta} / (1 + i theta).  The modulus equation
fixes theta(w), the argument equation fixes Delta(w) modulo 2 pi, and since
only e^{i w} enters, every solution at w repeats at w + 2 pi l (offspring).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BranchPoint",
    "CrossingCurve",
    "DsubdivisionError",
    "build_curves",
    "cone_slopes",
    "mother_curve",
    "normalized_char",
    "omega_window",
    "points_inside_cone",
]

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class DsubdivisionError(ValueError):
    """Gain outside the window regime or a frequency with no crossing."""


@dataclass(frozen=True)
class BranchPoint:
    omega: float
    theta: float
    delta: float


@dataclass(frozen=True)
class CrossingCurve:
    """Critical (T_hat, eps, omega_tilde) triples along one branch.

    ``family`` is "S" or "T"; ``k`` is the 2 pi shift of Delta and
    ``offspring`` the frequency shift l (None for the T family).
    """

    family: str
    k: int
    offspring: int | None
    points: np.ndarray  # (n, 3): T_hat, eps, omega_tilde
    bounded: bool

    @property
    def label(self):
        if self.family == "S":
            return f"S({self.k}),l={self.offspring}"
        return f"T({self.k})"

    @property
    def T(self):
        return self.points[:, 0]

    @property
    def eps(self):
        return self.points[:, 1]

    @property
    def omega(self):
        return self.points[:, 2]


def _check_gain(H11):
    if not 0.5 < abs(H11) < 1.0:
        raise DsubdivisionError(f"|H11| = {abs(H11):.6g} must lie in (1/2, 1)")


def normalized_char(lam, H11, T_hat, eps):
    """1 - H e^{-lam} + H e^{-lam(1+eps)} / (1 + lam T_hat)."""
    lam = np.asarray(lam, dtype=complex)
    return 1 - H11 * np.exp(-lam) + H11 * np.exp(-lam * (1 + eps)) / (1 + lam * T_hat)


def omega_window(H11):
    """Frequencies where |1 - e^{i w} / H11| = 1, i.e. cos w = 1/(2 H11).

    For H11 > 0 the window is centred at 2 pi, for H11 < 0 at pi.
    """
    _check_gain(H11)
    a = np.arccos(1.0 / (2.0 * abs(H11)))
    centre = TWO_PI if H11 > 0 else np.pi
    return centre - a, centre + a


def _theta_delta(H11, omega):
    omega = np.asarray(omega, dtype=float)
    L = 1.0 - np.exp(1j * omega) / H11
    # 1 - |L|^2 in closed form; roundoff at the window edges is snapped to 0
    gap = (2.0 * H11 * np.cos(omega) - 1.0) / H11**2
    if np.any(gap < -1e-12):
        bad = omega.reshape(-1)[(gap < -1e-12).reshape(-1)][0]
        raise DsubdivisionError(f"|1 - e^(i w)/H11| > 1 at w = {bad:.6g}: no crossing")
    gap = np.where(gap < 1e-14, 0.0, gap)
    theta = np.sqrt(gap / np.abs(L) ** 2)
    delta = np.mod(-np.angle(L * (1 + 1j * theta)), TWO_PI)
    return theta, delta


def mother_curve(H11, omega):
    """(theta, Delta) solving the crossing equation at frequency ``omega``.

    Delta is reported in (0, 2 pi).  Scalar omega gives a BranchPoint; an
    array gives a list of them.
    """
    _check_gain(H11)
    theta, delta = _theta_delta(H11, omega)
    if np.ndim(omega) == 0:
        return BranchPoint(float(omega), float(theta), float(delta))
    return [BranchPoint(float(w), float(t), float(d)) for w, t, d in zip(omega, theta, delta)]


def _window_samples(H11, n_pts):
    w1, w2 = omega_window(H11)
    w = np.linspace(w1, w2, n_pts)
    theta, delta = _theta_delta(H11, w)
    # keep Delta continuous through the branch cut before the modular shift
    delta = np.mod(np.unwrap(delta), TWO_PI)
    return w, theta, delta


def build_curves(H11, k_range=(-2, 1), offspring_max=3, n_pts=400):
    """S_k offspring curves and, for H11 > 0, the T_k curves.

    ``k_range`` is inclusive.  Points are (T_hat, eps, omega_tilde) with
    T_hat = theta / omega_tilde and eps = (Delta + 2 pi k) / omega_tilde,
    omega_tilde = omega + 2 pi l (S family) or omega - 2 pi (T family).
    """
    _check_gain(H11)
    w, theta, delta = _window_samples(H11, n_pts)
    curves = []
    ks = range(k_range[0], k_range[1] + 1)
    for k in ks:
        shifted = delta + TWO_PI * k
        for ell in range(offspring_max + 1):
            wt = w + TWO_PI * ell
            pts = np.column_stack([theta / wt, shifted / wt, wt])
            curves.append(CrossingCurve("S", k, ell, pts, bounded=True))
        if H11 > 0:
            sel = w > TWO_PI
            wt = w[sel] - TWO_PI
            if wt.size:
                pts = np.column_stack([theta[sel] / wt, shifted[sel] / wt, wt])
                curves.append(CrossingCurve("T", k, None, pts, bounded=False))
    return [c for c in curves if np.all(c.T >= 0)]


def cone_slopes(H11, n_pts=4000):
    """Slopes (alpha_plus, alpha_minus) of the origin rays eps = alpha T_hat
    supporting the S_0 and S_{-1} curves.
    """
    _, theta, delta = _window_samples(H11, n_pts)
    inner = theta > 0
    th, de = theta[inner], delta[inner]
    alpha_plus = float(np.min(de / th))
    alpha_minus = float(np.max((de - TWO_PI) / th))
    return alpha_plus, alpha_minus


def points_inside_cone(curves, alpha_plus, alpha_minus):
    """Points of T-family curves strictly inside the cone (flagged, not removed)."""
    hits = []
    for c in curves:
        if c.family != "T":
            continue
        T, e = c.T, c.eps
        inside = (T > 0) & (e < alpha_plus * T) & (e > alpha_minus * T)
        if np.any(inside):
            log.warning("%s has %d points inside the cone", c.label, int(inside.sum()))
            hits.append((c, c.points[inside]))
    return hits
