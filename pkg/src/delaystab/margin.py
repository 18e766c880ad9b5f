"""Maximal filter constant preserving stability, by frequency sweeping.

For lam != 0 the closed loop det((1 + lam T) P(lam) - C(lam)) = 0 is
equivalent to

    1 / (lam T)  in  spectrum of  G(lam) = (C(lam) - P(lam))^{-1} P(lam),

with P = -I + sum H e^{-lam d} + W1 and C = sum Hhat e^{-lam dhat} + W2.
On lam = i omega the left side is purely imaginary, so imaginary-axis roots
appear exactly where an eigenvalue i*gamma of G(omega) is on the imaginary
axis, at T = -1/(omega gamma).  The smallest such T is the end of the
stability interval that starts at T = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .ide import Fragility, char_matrix_open, delay_sum
from .spectra import abscissa_target
from .strong import classify_fragility

__all__ = [
    "CrossingCandidate",
    "MarginError",
    "SweepResult",
    "g_eval",
    "g_infinity",
    "sweep_crossings",
    "t_max",
]

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
N_GRID = 4096
TAIL_MARGIN = 0.05
TAIL_DEVIATION = 0.02


class MarginError(RuntimeError):
    """Raised when the stability-margin preconditions fail."""


@dataclass(frozen=True)
class CrossingCandidate:
    """Frequency where G(omega) has the eigenvalue i*gamma.

    ``T_crit = 1 / (omega |gamma|)`` in seconds; ``T_hat`` is the same value
    in units of the round-trip time ``tau``.  Only ``gamma < 0`` corresponds
    to an imaginary-axis root for a positive T (``admissible``).
    """

    omega: float
    gamma: float
    tau: float
    re_residual: float = 0.0

    @property
    def T_crit(self):
        return 1.0 / (self.omega * abs(self.gamma))

    @property
    def T_hat(self):
        return self.T_crit / self.tau

    @property
    def admissible(self):
        return self.gamma < 0


@dataclass
class SweepResult:
    candidates: list
    omega_max: float
    n_grid: int
    tail_min_distance: float
    tail_deviation: float
    ambiguous: list = field(default_factory=list)

    @property
    def tail_ok(self):
        return self.tail_min_distance > TAIL_MARGIN and self.tail_deviation < TAIL_DEVIATION


def _controller_terms(controller, lam):
    dhat = controller.rhat[:, None] + controller.shat[None, :]
    return delay_sum(controller.Hhat, dhat, lam) + controller.transform_w2(lam)


def g_eval(model, controller, omega):
    """G(omega) = (I + sum Hhat e - sum H e + W2 - W1)^{-1} (-I + sum H e + W1).

    With nominal controller data the delay terms of the first factor cancel.
    Accepts scalar or array omega; returns (..., m, m).
    """
    lam = 1j * np.asarray(omega, dtype=float)
    P = char_matrix_open(model, lam)
    C = _controller_terms(controller, lam)
    A = C - P
    cond = np.linalg.cond(A)
    if np.any(cond > COND_LIMIT):
        bad = np.asarray(omega).reshape(-1)[np.asarray(cond).reshape(-1) > COND_LIMIT]
        raise MarginError(
            f"I + int (w2 - w1) e^(i omega theta) is near singular at omega = {bad[:3]}; "
            "the target system must be exponentially stable (c_CL < 0)"
        )
    return np.linalg.solve(A, P)


def g_infinity(model, omega):
    """High-frequency limit -I + sum H_ij e^{-i omega (r_i + s_j)}."""
    lam = 1j * np.asarray(omega, dtype=float)
    return -np.eye(model.dim) + delay_sum(model.H, model.delays, lam)


def _eigs(model, controller, omega):
    G = g_eval(model, controller, omega)
    if G.shape[-1] == 1:
        return G[..., 0, 0][..., None]
    return np.linalg.eigvals(G)


def _track(ev):
    """Reorder eigenvalue rows so that columns follow continuous branches."""
    out = ev.copy()
    gaps = []
    for n in range(1, ev.shape[0]):
        cost = np.abs(out[n - 1][:, None] - ev[n][None, :])
        _, perm = linear_sum_assignment(cost)
        out[n] = ev[n][perm]
        step = np.diag(cost[:, perm])
        if ev.shape[1] > 1:
            sep = np.min(np.abs(ev[n][:, None] - ev[n][None, :]) + np.eye(ev.shape[1]) * np.inf)
            gaps.append(sep < 2 * np.max(step))
        else:
            gaps.append(False)
    return out, np.array(gaps)


def sweep_crossings(model, controller, omega_max=None, n_grid=N_GRID, omega_min=None):
    """All omega in (0, omega_max] where an eigenvalue of G crosses the imaginary axis.

    Returns a SweepResult; its ``candidates`` are sorted by omega.  Crossings
    with gamma == 0 are dropped because lam = 0 is never a closed-loop root.
    """
    tau = model.tau
    omega_max = 200.0 / tau if omega_max is None else float(omega_max)
    omega_min = 1e-3 / tau if omega_min is None else float(omega_min)
    grid = np.geomspace(omega_min, omega_max, n_grid)
    ev, ambiguous_steps = _track(_eigs(model, controller, grid))

    ambiguous = []
    candidates = []
    m = ev.shape[1]
    for n in range(n_grid - 1):
        lo, hi = grid[n], grid[n + 1]
        if ambiguous_steps[n]:
            # refine locally; if the branches still touch, flag the interval
            fine = np.linspace(lo, hi, 9)
            fev, fgaps = _track(_eigs(model, controller, fine))
            fev[0] = ev[n]
            if np.any(fgaps):
                ambiguous.append((lo, hi))
            segs = [(fine[i], fine[i + 1], fev[i], fev[i + 1]) for i in range(8)]
        else:
            segs = [(lo, hi, ev[n], ev[n + 1])]
        for a, b, ea, eb in segs:
            for j in range(m):
                ra, rb = ea[j].real, eb[j].real
                if ra == 0.0 or np.sign(ra) != np.sign(rb):
                    cand = _refine(model, controller, a, b, ea[j], eb[j], tau)
                    if cand is not None:
                        candidates.append(cand)

    candidates = _unique(candidates)
    dist, dev = _tail_check(model, controller, omega_max)
    if not (dist > TAIL_MARGIN and dev < TAIL_DEVIATION):
        log.warning("tail check above omega_max=%g failed (distance %.3g, deviation %.3g)",
                    omega_max, dist, dev)
    return SweepResult(candidates, omega_max, n_grid, dist, dev, ambiguous)


def _refine(model, controller, a, b, ea, eb, tau):
    def branch(w):
        e = _eigs(model, controller, np.array([w]))[0]
        guess = ea + (eb - ea) * (w - a) / (b - a)
        return e[np.argmin(np.abs(e - guess))]

    fa, fb = branch(a).real, branch(b).real
    if fa == 0.0:
        w = a
    elif np.sign(fa) == np.sign(fb):
        return None
    else:
        w = brentq(lambda x: branch(x).real, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    e = branch(w)
    if abs(e.imag) < 1e-12:
        return None
    return CrossingCandidate(omega=float(w), gamma=float(e.imag), tau=tau, re_residual=abs(e.real))


def _unique(cands, tol=1e-9):
    out = []
    for c in sorted(cands, key=lambda c: c.omega):
        if out and abs(c.omega - out[-1].omega) < tol * c.omega and abs(c.gamma - out[-1].gamma) < 1e-6:
            continue
        out.append(c)
    return out


def _tail_check(model, controller, omega_max, decades=2, n=2000):
    """Distance of sigma(G) to the imaginary axis beyond omega_max, and
    ||G - G_inf|| at the far end of the checked window."""
    w = np.geomspace(omega_max, omega_max * 10**decades, n)
    ev = _eigs(model, controller, w)
    dist = float(np.min(np.abs(ev.real)))
    far = w[-8:]
    dev = float(np.max(np.linalg.norm(g_eval(model, controller, far) - g_infinity(model, far), ord=2, axis=(-2, -1))))
    return dist, dev


def t_max(model, controller, omega_max=None, n_grid=N_GRID, return_sweep=False):
    """Right end of the maximal stability interval in T containing 0.

    Returns ``math.inf`` when no admissible crossing exists.  Raises
    MarginError unless c_CL < 0 and gamma0 < 1.
    """
    verdict = classify_fragility(model)
    if verdict.fragility is Fragility.NOT_STRONGLY_STABILIZABLE:
        raise MarginError(
            f"gamma0 = {verdict.gamma0:.6g} >= 1; a stabilizing filter range requires "
            "'c_CL<0 and gamma0<1'"
        )
    c_cl = abscissa_target(model, controller.with_T(0.0))
    if not c_cl < 0:
        raise MarginError(
            f"c_CL = {c_cl:.6g} >= 0; a stabilizing filter range requires 'c_CL<0 and gamma0<1'"
        )
    sweep = sweep_crossings(model, controller, omega_max, n_grid)
    adm = [c for c in sweep.candidates if c.admissible]
    T = min((c.T_crit for c in adm), default=math.inf)
    return (T, sweep) if return_sweep else T
