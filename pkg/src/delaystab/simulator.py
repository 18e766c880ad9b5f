"""Time-domain simulation of the filtered closed loop.

On a uniform grid t_n = n*dt every right-hand side is a fixed linear
combination of stored samples: point delays use 4-point Lagrange (cubic)
interpolation and distributed terms the composite trapezoid rule, with the
partial last interval of an incommensurate window closed by an interpolated
end value.  Lag-0 contributions make the step implicit; together with the
implicit Euler step of the filter this is one small linear solve per step.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .ide import FilteredController, IdeModel
from .scalar import perturbed_controller, to_ide, wdes_constant

__all__ = [
    "SimConfig",
    "SimulationError",
    "Trajectory",
    "Verdict",
    "estimate_decay",
    "fourier_history",
    "simulate",
    "stability_probe",
]

STRONGLY_STABLE = -math.inf
DEAD_ZONE = 0.02
MIN_STEPS_PER_DELAY = 64


class SimulationError(ValueError):
    """Invalid simulation configuration."""


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class SimConfig:
    """Step and horizon in seconds; ``history`` maps t <= 0 to R^m (vectorized).

    ``decay_window`` is the width of the sliding L2 window (defaults to the
    round-trip time of the model when None).
    """

    step: float
    horizon: float
    history: object = None
    decay_window: float | None = None


@dataclass
class Trajectory:
    times: np.ndarray
    x_values: np.ndarray  # (n,) or (n, m)
    u_values: np.ndarray
    window_norms: np.ndarray
    window: float
    transient: float


def fourier_history(span, n_modes=8, seed=0, dim=1):
    """Smooth random history on [-span, 0]: a Fourier series with decaying amplitudes."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, n_modes + 1)
    a = rng.standard_normal((n_modes, dim)) / k[:, None]
    b = rng.standard_normal((n_modes, dim)) / k[:, None]
    c = rng.standard_normal(dim)

    def phi(t):
        ph = 2 * np.pi * np.outer(np.asarray(t, dtype=float), k) / span
        out = c + np.cos(ph) @ a + np.sin(ph) @ b
        return out[:, 0] if dim == 1 else out

    return phi


def _lagrange_stencil(lag):
    """Weights on integer lags reproducing the value at fractional ``lag``."""
    q = math.floor(lag)
    f = lag - q
    if f < 1e-12:
        return {q: 1.0}
    nodes = np.array([q - 1, q, q + 1, q + 2], dtype=float)
    w = {}
    for i, p in enumerate(nodes):
        others = np.delete(nodes, i)
        w[int(p)] = float(np.prod((lag - others) / (p - others)))
    return w


def _add(weights, lag, mat):
    weights[lag] = weights.get(lag, 0.0) + mat


def _point_weights(H, delays, dt, weights, sign=1.0):
    k, ell = delays.shape
    for i in range(k):
        for j in range(ell):
            for lag, c in _lagrange_stencil(delays[i, j] / dt).items():
                _add(weights, lag, sign * c * H[i, j])


def _integral_weights(kernel_fn, length, dt, weights, sign=1.0):
    """Trapezoid weights for int_{-length}^0 w(theta) x(t + theta) dtheta."""
    M = int(math.floor(length / dt + 1e-9))
    theta = -dt * np.arange(M + 1)
    vals = kernel_fn(theta)  # (M+1, m, m)
    for j in range(M + 1):
        c = dt if 0 < j < M else dt / 2
        _add(weights, j, sign * c * vals[j])
    rest = length - M * dt
    if rest > 1e-12 * dt:
        # last partial panel between -M dt and -length
        _add(weights, M, sign * rest / 2 * vals[M])
        end = kernel_fn(np.array([-length]))[0]
        for lag, c in _lagrange_stencil(length / dt).items():
            _add(weights, lag, sign * rest / 2 * c * end)


def _weights_array(weights, m):
    n = max(weights) + 1
    W = np.zeros((n, m, m))
    for lag, mat in weights.items():
        W[lag] += mat
    return W


def simulate(model: IdeModel, controller: FilteredController, config: SimConfig):
    """Integrate the closed loop on [0, horizon] from the history on t <= 0.

    The filter state starts at u(0) = 0.  Requires a finite T > 0.
    """
    T = controller.T
    if not (T > 0 and math.isfinite(T)):
        raise SimulationError("T>0 required (filter present)")
    dt = float(config.step)
    min_delay = min(model.delays.min(), (controller.rhat[:, None] + controller.shat[None, :]).min())
    if not dt > 0 or dt > min_delay / MIN_STEPS_PER_DELAY * (1 + 1e-9):
        raise SimulationError(
            f"step {dt:.6g} must be positive and at most min delay / {MIN_STEPS_PER_DELAY} = "
            f"{min_delay / MIN_STEPS_PER_DELAY:.6g}"
        )
    tau = model.tau
    if config.horizon < 10 * tau * (1 - 1e-12):
        raise SimulationError(f"horizon must be at least 10 tau = {10 * tau:.6g}")
    m = model.dim

    A, B = {}, {}
    _point_weights(model.H, model.delays, dt, A)
    _integral_weights(model.w1, model.tau, dt, A)
    hdel = controller.rhat[:, None] + controller.shat[None, :]
    _point_weights(controller.Hhat, hdel, dt, B, sign=-1.0)
    w2 = controller.feedback_kernel()
    _integral_weights(w2, controller.tauhat, dt, B, sign=-1.0)
    WA, WB = _weights_array(A, m), _weights_array(B, m)
    n_lag = max(len(WA), len(WB))
    WA = np.concatenate([WA, np.zeros((n_lag - len(WA), m, m))])
    WB = np.concatenate([WB, np.zeros((n_lag - len(WB), m, m))])

    n_steps = int(math.ceil(config.horizon / dt - 1e-9))
    history = config.history
    if history is None:
        history = lambda t: np.ones((np.size(t), m)) if m > 1 else np.ones(np.size(t))
    t_hist = -dt * np.arange(n_lag - 1, 0, -1)
    x = np.zeros((n_lag - 1 + n_steps + 1, m))
    x[: n_lag - 1] = np.asarray(history(t_hist), dtype=float).reshape(n_lag - 1, m)
    x[n_lag - 1] = np.asarray(history(np.array([0.0])), dtype=float).reshape(m)
    u = np.zeros((n_steps + 1, m))

    eye = np.eye(m)
    g = T / dt
    K = np.block([[eye - WA[0], -eye], [-WB[0], (g + 1.0) * eye]])
    K_inv = np.linalg.inv(K)
    # past lags 1..n_lag-1, most recent first
    PA = WA[1:].transpose(1, 0, 2).reshape(m, -1)
    PB = WB[1:].transpose(1, 0, 2).reshape(m, -1)
    off = n_lag - 1
    for n in range(1, n_steps + 1):
        pv = x[n: off + n][::-1].reshape(-1)  # lags 1 .. n_lag-1
        rhs = np.concatenate([PA @ pv, g * u[n - 1] + PB @ pv])
        sol = K_inv @ rhs
        x[off + n], u[n] = sol[:m], sol[m:]

    times = dt * np.arange(n_steps + 1)
    window = tau if config.decay_window is None else float(config.decay_window)
    norms = _window_norms(x, off, dt, window)
    xs = x[off:]
    if m == 1:
        xs, u = xs[:, 0], u[:, 0]
    return Trajectory(times, xs, u, norms, window, 3 * tau)


def _window_norms(x, off, dt, window):
    """sqrt(int_{t-window}^t |x|^2) at every grid time t >= 0, trapezoid rule.

    A direct sum of nonnegative terms: differences of a running sum would
    cancel once the norms fall far below their initial size.
    """
    sq = np.sum(x**2, axis=1)
    w = max(int(round(window / dt)), 1)
    kern = np.full(w + 1, dt)
    kern[0] = kern[-1] = dt / 2
    full = np.convolve(sq, kern)[: len(sq)]  # full[i] = sum_j kern[j] sq[i-j]
    return np.sqrt(full[off:])


def estimate_decay(traj: Trajectory, transient=None):
    """Least-squares slope of log(window norm) against time after the transient."""
    transient = traj.transient if transient is None else transient
    sel = traj.times >= transient
    if traj.times[-1] - transient < 5 * traj.window:
        raise SimulationError("need at least 5 windows beyond the transient")
    norms = traj.window_norms[sel]
    if np.all(norms < 1e-300):
        return STRONGLY_STABLE
    ok = norms >= 1e-300
    slope = np.polyfit(traj.times[sel][ok], np.log(norms[ok]), 1)[0]
    return float(slope)


def stability_probe(plant, wdes=None, T_hat=0.05, eps=0.0, steps_per_tau=256,
                    steps_per_T=40, horizon_taus=40, seed=0, dead_zone=DEAD_ZONE, return_rate=False):
    """Simulate the scalar case from a random smooth history and classify the decay.

    ``T_hat`` is in units of the nominal round-trip time.
    """
    if not T_hat > 0:
        raise SimulationError("T>0 required (filter present)")
    wdes = wdes_constant() if wdes is None else wdes
    model = to_ide(plant)
    ctrl = perturbed_controller(plant, eps, T_hat, wdes)
    tau = model.tau
    # the filter perturbs the neutral root chain by O(dt / T): resolve T too
    dt = min(min(tau, ctrl.tauhat) / steps_per_tau, ctrl.T / steps_per_T)
    span = max(tau, ctrl.tauhat)
    cfg = SimConfig(step=dt, horizon=horizon_taus * tau, history=fourier_history(2 * span, seed=seed))
    rate = estimate_decay(simulate(model, ctrl, cfg))
    if rate < -dead_zone:
        v = Verdict.STABLE
    elif rate > dead_zone:
        v = Verdict.UNSTABLE
    else:
        v = Verdict.MARGINAL
    return (v, rate) if return_rate else v
