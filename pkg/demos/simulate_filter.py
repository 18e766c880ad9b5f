"""
Watching the filter work in the time domain
============================================

The closed loop is integrated directly from a smooth random history.  The
sliding L2 norm over one round-trip window decays below the critical filter
constant, stalls at it and grows beyond it.  Fitted rates are compared with
the rightmost characteristic root.
"""
import numpy as np

from delaystab import CASE_STUDY, abscissa_closed, perturbed_controller, to_ide
from delaystab.simulator import SimConfig, estimate_decay, fourier_history, simulate

model = to_ide(CASE_STUDY)
tau = model.tau

print(" T/tau    eps    fitted rate   abscissa")
for T_hat, eps in [(0.05, 0.0), (0.1, 0.1), (0.1615, 0.0), (0.18, 0.0), (0.05, 0.15)]:
    ctrl = perturbed_controller(CASE_STUDY, eps, T_hat)
    dt = min(min(tau, ctrl.tauhat) / 256, ctrl.T / 40)
    cfg = SimConfig(step=dt, horizon=40 * tau, history=fourier_history(2 * max(tau, ctrl.tauhat), seed=1))
    traj = simulate(model, ctrl, cfg)
    print(f" {T_hat:6.4f} {eps:+5.2f}   {estimate_decay(traj):+9.4f}   {abscissa_closed(model, ctrl):+9.4f}")

# %% the window norm itself, sampled every 5 round trips
ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.05)
traj = simulate(model, ctrl, SimConfig(step=tau / 256, horizon=40 * tau, history=fourier_history(2 * tau)))
idx = np.searchsorted(traj.times, tau * np.arange(0, 41, 5))
for t, n in zip(traj.times[idx], traj.window_norms[idx]):
    print(f"t = {t:6.2f} s   ||x_t|| = {n:.3e}")
