"""
Why the filter is needed, and how large it may be
==================================================

A scalar transport loop with boundary reflection gain H11 = R Q = 0.6 is
turned into an integral-difference equation by a backstepping-type change
of variables.  A controller that cancels the distributed term places the
closed loop at a prescribed target, but the cancellation is fragile: an
arbitrarily small delay mismatch destroys it.  A low-pass filter restores
robustness as long as its time constant stays below a critical value.

Run with ``python demos/case_study_walkthrough.py``.
"""
import math

from delaystab import (
    CASE_STUDY,
    abscissa_closed,
    abscissa_open,
    abscissa_target,
    classify_fragility,
    perturbed_controller,
    t_max,
    to_ide,
)

plant = CASE_STUDY
model = to_ide(plant)
print(f"round-trip time tau = {plant.tau:.6f} s, reflection gain H11 = {plant.H11:.3f}")

# %% strong stability indices
# gamma0 < 1: the open-loop difference part is strongly stable.
# gamma1 >= 1: exact cancellation is not, so some filtering is mandatory.
verdict = classify_fragility(model)
print(f"gamma0 = {verdict.gamma0:.4f}, gamma1 = {verdict.gamma1:.4f} -> {verdict.fragility.value}")

# %% nominal spectra
nominal = perturbed_controller(plant, eps=0.0, T_hat=0.0)
print(f"open-loop abscissa   c0  = {abscissa_open(model):+.4f} 1/s")
print(f"target-loop abscissa cCL = {abscissa_target(model, nominal):+.4f} 1/s")

# %% maximal filter constant
T_tilde, sweep = t_max(model, nominal, return_sweep=True)
print("\nimaginary-axis crossings found by the frequency sweep:")
for c in sweep.candidates:
    print(f"  omega = {c.omega:7.4f} rad/s   T = {c.T_crit:.4f} s   T/tau = {c.T_hat:.4f}")
print(f"stability interval in T: (0, {T_tilde:.4f} s), i.e. T/tau < {T_tilde / plant.tau:.4f}")

# %% the closed-loop abscissa along the T axis
print("\n T/tau   abscissa [1/s]")
for T_hat in (0.02, 0.05, 0.1, 0.15, 0.1615, 0.17, 0.2, 0.3):
    a = abscissa_closed(model, nominal.with_T(T_hat * plant.tau))
    mark = "stable" if a < -1e-4 else ("on boundary" if abs(a) <= 1e-3 else "unstable")
    print(f" {T_hat:6.4f}  {a:+.4f}  {mark}")

# small filters inherit a root chain at ln|H11|/tau from the difference part
print(f"\nneutral chain asymptote ln(0.6)/tau = {math.log(0.6) / plant.tau:+.4f} 1/s")
