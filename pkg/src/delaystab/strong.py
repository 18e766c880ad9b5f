"""Strong-stability indices of the delay-difference part.

gamma0 maximizes rho(sum_ij H_ij e^{i(theta_i + nu_j)}) over the torus,
gamma1 does the same for the difference of two independently phased copies,
and the literature bound treats every phase theta_ij as independent.

The spectral radius is unchanged by a global phase and by shifting all
theta by c and all nu by -c, so theta_1 and nu_1 are pinned to zero.  What
remains is searched on a uniform grid and polished by compass search.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .ide import Fragility, StabilityVerdict

__all__ = [
    "TorusMaxResult",
    "classify_fragility",
    "gamma0",
    "gamma1",
    "gamma_literature",
    "spectral_radius",
]

GRID_PER_ANGLE = 32
GRID_BUDGET = 2**15
N_STARTS = 10
MIN_STEP = 1e-10


@dataclass(frozen=True)
class TorusMaxResult:
    value: float
    argmax: dict
    certificate: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def spectral_radius(M):
    """Spectral radius of a stack of square matrices (..., m, m)."""
    M = np.asarray(M)
    if M.shape[-1] == 1:
        return np.abs(M[..., 0, 0])
    return np.max(np.abs(np.linalg.eigvals(M)), axis=-1)


def _maximize(objective, ndim, n_per_angle=GRID_PER_ANGLE, budget=GRID_BUDGET,
              n_starts=N_STARTS, extra_starts=None):
    """Maximize a 2*pi-periodic objective of ``ndim`` angles.

    ``objective`` maps an (N, ndim) array of angles to N values.  The grid
    shrinks per angle until it fits ``budget`` points; ``extra_starts`` are
    known-good points added to the ascent starts.
    """
    if ndim == 0:
        v = float(objective(np.zeros((1, 0)))[0])
        return v, np.zeros(0), {"grid_per_angle": 0, "grid_points": 1, "ascent_iterations": 0}

    n = n_per_angle
    while n > 4 and n**ndim > budget:
        n -= 1
    axis = 2 * np.pi * np.arange(n) / n
    pts = np.array(list(itertools.product(axis, repeat=ndim)))
    vals = objective(pts)
    # stable sort keeps lexicographic order among ties
    order = np.argsort(-vals, kind="stable")[:n_starts]
    starts = [pts[i] for i in order]
    if extra_starts is not None:
        starts.extend(np.atleast_2d(extra_starts))

    best_v, best_x = -np.inf, None
    total_iters = 0
    for x0 in starts:
        x = np.array(x0, dtype=float)
        v = objective(x[None, :])[0]
        step = 2 * np.pi / n
        while step > MIN_STEP:
            total_iters += 1
            trial = np.repeat(x[None, :], 2 * ndim, axis=0)
            for d in range(ndim):
                trial[2 * d, d] += step
                trial[2 * d + 1, d] -= step
            tv = objective(trial)
            j = int(np.argmax(tv))
            if tv[j] > v:
                x, v = trial[j], tv[j]
            else:
                step *= 0.5
        x = np.mod(x, 2 * np.pi)
        if v > best_v + 1e-15 or (abs(v - best_v) <= 1e-15 and tuple(x) < tuple(best_x)):
            best_v, best_x = v, x
    cert = {"grid_per_angle": n, "grid_points": int(pts.shape[0]), "ascent_iterations": total_iters}
    return float(best_v), best_x, cert


def _phased_sum(H, theta, nu):
    # theta (N, k), nu (N, ell) -> (N, m, m)
    ph = np.exp(1j * (theta[:, :, None] + nu[:, None, :]))
    return np.einsum("nij,ijab->nab", ph, H)


def _split(x, k, ell):
    # free angles -> full theta, nu with theta_1 = nu_1 = 0
    N = x.shape[0]
    theta = np.concatenate([np.zeros((N, 1)), x[:, : k - 1]], axis=1)
    nu = np.concatenate([np.zeros((N, 1)), x[:, k - 1: k - 1 + ell - 1]], axis=1)
    return theta, nu


def gamma0(model, n_per_angle=GRID_PER_ANGLE):
    """max over the (k+ell)-torus of rho(sum H_ij e^{i(theta_i + nu_j)})."""
    H, k, ell = model.H, model.k, model.ell

    def obj(x):
        theta, nu = _split(x, k, ell)
        return spectral_radius(_phased_sum(H, theta, nu))

    v, x, cert = _maximize(obj, k + ell - 2, n_per_angle)
    theta, nu = _split(x[None, :], k, ell)
    return TorusMaxResult(v, {"theta": theta[0], "nu": nu[0]}, cert)


def gamma1(model, n_per_angle=GRID_PER_ANGLE):
    """max of rho(A(theta, nu) - A(vartheta, mu)) over the doubled torus."""
    H, k, ell = model.H, model.k, model.ell
    nfree = k + ell - 2

    def unpack(x):
        theta, nu = _split(x[:, :nfree], k, ell)
        rest = x[:, nfree:]
        vartheta = rest[:, :k]
        mu = np.concatenate([np.zeros((x.shape[0], 1)), rest[:, k:]], axis=1)
        return theta, nu, vartheta, mu

    def obj(x):
        theta, nu, vt, mu = unpack(x)
        return spectral_radius(_phased_sum(H, theta, nu) - _phased_sum(H, vt, mu))

    # shifting every phase of gamma0's maximizer by pi reaches 2*gamma0
    g0 = gamma0(model, n_per_angle)
    seed = np.concatenate([g0.argmax["theta"][1:], g0.argmax["nu"][1:],
                           g0.argmax["theta"] + np.pi, g0.argmax["nu"][1:]])
    v, x, cert = _maximize(obj, 2 * (k + ell) - 3, n_per_angle, extra_starts=seed)
    theta, nu, vt, mu = unpack(x[None, :])
    return TorusMaxResult(v, {"theta": theta[0], "nu": nu[0], "vartheta": vt[0], "mu": mu[0]}, cert)


def gamma_literature(model, n_per_angle=GRID_PER_ANGLE):
    """max of rho(sum H_ij e^{i theta_ij}) with all k*ell phases independent."""
    H, k, ell = model.H, model.k, model.ell
    flat = H.reshape(k * ell, *H.shape[2:])

    def obj(x):
        ph = np.exp(1j * np.concatenate([np.zeros((x.shape[0], 1)), x], axis=1))
        return spectral_radius(np.einsum("np,pab->nab", ph, flat))

    g0 = gamma0(model, n_per_angle)
    phases = (g0.argmax["theta"][:, None] + g0.argmax["nu"][None, :]).reshape(-1)
    v, x, cert = _maximize(obj, k * ell - 1, n_per_angle, extra_starts=phases[1:])
    return TorusMaxResult(v, {"theta": np.concatenate([[0.0], x]).reshape(k, ell)}, cert)


def classify_fragility(model, g0=None, g1=None):
    """Fragility class from gamma0 / gamma1 (computed if not supplied)."""
    g0 = gamma0(model).value if g0 is None else float(g0)
    g1 = gamma1(model).value if g1 is None else float(g1)
    return StabilityVerdict(gamma0=g0, gamma1=g1, fragility=Fragility.classify(g0, g1))
