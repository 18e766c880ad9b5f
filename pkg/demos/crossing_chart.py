"""
Stability crossing curves in the (T, eps) plane
===============================================

Two charts are built.  The delay-only chart drops the distributed terms and
is known in closed form: every crossing frequency w of the window around
2 pi spawns copies at w + 2 pi l, which pile up near the origin.  The full
chart continues the exact crossing manifold numerically from seeds on the
eps = 0 axis and from delay-only predictions.

Writes CSV files to ``demo_out/`` for plotting with any tool.
"""
from pathlib import Path

import numpy as np

from delaystab import CASE_STUDY, assemble_chart, build_curves, cone_slopes
from delaystab.cli import write_csv

out = Path("demo_out")
H = CASE_STUDY.H11

# %% delay-only chart
curves = build_curves(H, k_range=(-2, 1), offspring_max=6)
ap, am = cone_slopes(H)
print(f"{len(curves)} delay-only curves; stable cone  {am:.4f} T < eps < {ap:.4f} T")
rows = [[c.family, c.k, c.offspring, *p] for c in curves for p in c.points]
write_csv(out / "delay_only.csv", ["family", "k", "offspring", "T [tau]", "eps [-]", "omega [rad/tau]"], rows)

# the cone narrows as |H11| approaches 1
for h in (0.55, 0.7, 0.9, 0.99):
    p, m = cone_slopes(h)
    print(f"  H11 = {h:4.2f}: alpha+ = {p:8.4f}, alpha- = {m:8.4f}")

# %% full chart
chart = assemble_chart(CASE_STUDY, workers=4)
print(f"\n{len(chart.curves)} traced curves of the full system")
print("eps = 0 intercepts (T/tau):", np.round(chart.level_crossings(0.0), 6))
for e in (-0.1, -0.05, 0.0, 0.05, 0.1):
    print(f"  largest stable T at eps = {e:+.2f}: {chart.max_stable_T(e):.4f}")

rows = [[i, p.T, p.eps, p.omega, p.residual] for i, c in enumerate(chart.curves) for p in c.points]
write_csv(out / "full_chart.csv", ["curve", "T [tau]", "eps [-]", "omega [rad/s]", "residual [-]"], rows)
write_csv(out / "central_region.csv", ["T [tau]", "eps [-]"], chart.central_region)
print(f"CSV files written to {out}/")
