"""Stability analysis of delay-compensating control for integral-difference equations."""
from .continuation import Chart, ManifoldPoint, ScalarFamily, assemble_chart, seed_points, trace, trace_both
from .dsubdivision import BranchPoint, CrossingCurve, build_curves, cone_slopes, mother_curve, omega_window
from .ide import (
    FilteredController,
    Fragility,
    IdeModel,
    StabilityVerdict,
    char_closed,
    char_open,
    char_target,
)
from .kernel import SampledKernel, kernel_transform
from .margin import CrossingCandidate, g_eval, sweep_crossings, t_max
from .scalar import CASE_STUDY, ScalarPlant, bessel_kernel, perturbed_controller, to_ide, wdes_constant
from .simulator import SimConfig, Trajectory, estimate_decay, simulate, stability_probe
from .spectra import RootSearchRegion, abscissa_closed, abscissa_open, abscissa_target, find_roots
from .strong import classify_fragility, gamma0, gamma1, gamma_literature

__version__ = "0.1.0"
