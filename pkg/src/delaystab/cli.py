"""Configuration files, subcommands and CSV export.

Config format: flat sections of ``key = value`` lines, ``#`` comments::

    [plant]
    lambda1 = 2.0
    ...
    [controller]
    wdes = 0.45
    [analysis]
    [output]
    directory = out

Every key has a documented default except the six plant parameters (see
DEFAULTS).  ``parse_config`` fills all defaults into the returned record, so
``serialize`` writes a complete file and parsing it back is lossless.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import assemble_chart
from .dsubdivision import DsubdivisionError, build_curves, cone_slopes, normalized_char
from .ide import ModelError
from .kernel import SampledKernel
from .margin import MarginError, t_max
from .scalar import ScalarPlant, bessel_kernel, perturbed_controller, to_ide
from .simulator import SimConfig, SimulationError, estimate_decay, fourier_history, simulate
from .spectra import SpectrumError, abscissa_open, abscissa_target
from .strong import classify_fragility, gamma0, gamma1, gamma_literature

__all__ = ["ConfigError", "RunConfig", "main", "parse_config", "run_subcommand", "serialize"]

log = logging.getLogger(__name__)

SUBCOMMANDS = ("analyze", "tmax", "kernel", "chart-ds", "chart-full", "simulate")
PLANT_KEYS = ("lambda1", "mu1", "sigma_pm", "sigma_mp", "Q", "R")

# section -> key -> (type, default); None default means required
DEFAULTS = {
    "plant": {k: (float, None) for k in PLANT_KEYS},
    "controller": {
        "wdes": (float, 0.45),            # constant desired kernel on [-1, 0]
        "wdes_table": (str, ""),          # comma-separated samples on [-1, 0]; overrides wdes
        "T_hat": (float, 0.05),           # filter constant in units of tau (simulate)
        "eps": (float, 0.0),              # speed mismatch of the design model (simulate)
    },
    "analysis": {
        "omega_max": (float, 0.0),        # 0 means 200 / tau
        "n_grid": (int, 4096),
        "n_samples": (int, 256),
        "T_min": (float, 0.0),
        "T_max": (float, 0.5),
        "eps_min": (float, -0.3),
        "eps_max": (float, 0.3),
        "probe_nT": (int, 6),
        "probe_neps": (int, 5),
        "max_branches": (int, 40),
        "arc_steps": (int, 600),
        "ds_k_min": (int, -2),
        "ds_k_max": (int, 1),
        "ds_offspring": (int, 3),
        "ds_points": (int, 400),
        "sim_steps_per_tau": (int, 256),
        "sim_horizon_taus": (float, 40.0),
        "kernel_points": (int, 201),
        "residual_tol": (float, 1e-8),
        "seed": (int, 0),
    },
    "output": {
        "directory": (str, "out"),
    },
}


class ConfigError(ValueError):
    """Config problem; the message names the key and line when known."""


@dataclass(frozen=True)
class RunConfig:
    plant: ScalarPlant
    controller: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @property
    def wdes(self):
        table = self.controller["wdes_table"]
        if table:
            vals = np.array([float(v) for v in table.split(",")])
            return SampledKernel(np.array([-1.0, 0.0]), (vals,))
        return SampledKernel.constant([[self.controller["wdes"]]], -1.0, 0.0)

    @property
    def region(self):
        a = self.analysis
        return (a["T_min"], a["T_max"]), (a["eps_min"], a["eps_max"])

    @property
    def omega_max(self):
        w = self.analysis["omega_max"]
        return w if w > 0 else 200.0 / self.plant.tau


def _convert(typ, raw, key, line):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return raw
    except ValueError:
        raise ConfigError(f"line {line}: key '{key}' expects {typ.__name__}, got {raw!r}") from None


def parse_config(text):
    """Parse config text into a validated RunConfig with all defaults applied."""
    values = {sec: {} for sec in DEFAULTS}
    where = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in DEFAULTS:
                raise ConfigError(f"line {n}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {n}: key outside of a section")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS[section]:
            raise ConfigError(f"line {n}: unknown key '{key}' in [{section}]")
        if key in values[section]:
            raise ConfigError(f"line {n}: duplicate key '{key}' in [{section}]")
        values[section][key] = _convert(DEFAULTS[section][key][0], val, key, n)
        where[(section, key)] = n
    return _build(values, where)


def _build(values, where=None):
    where = where or {}

    def err(sec, key, msg):
        line = where.get((sec, key))
        loc = f"line {line}: " if line else ""
        return ConfigError(f"{loc}key '{key}' in [{sec}]: {msg}")

    full = {}
    for sec, spec in DEFAULTS.items():
        full[sec] = {}
        for key, (_, default) in spec.items():
            if key in values[sec]:
                full[sec][key] = values[sec][key]
            elif default is None:
                raise err(sec, key, "required")
            else:
                full[sec][key] = default

    p = full["plant"]
    for key in ("lambda1", "mu1"):
        if not p[key] > 0:
            raise err("plant", key, f"must be positive (transport speed), got {p[key]}")
    plant = ScalarPlant(**p)

    c = full["controller"]
    if c["wdes_table"]:
        try:
            vals = [float(v) for v in c["wdes_table"].split(",")]
        except ValueError:
            raise err("controller", "wdes_table", "expects comma-separated numbers") from None
        if len(vals) < 4:
            raise err("controller", "wdes_table", "needs at least 4 samples")
    if c["T_hat"] < 0:
        raise err("controller", "T_hat", "must be nonnegative")
    if not c["eps"] > -1:
        raise err("controller", "eps", "must exceed -1")

    a = full["analysis"]
    for key in ("residual_tol",):
        if not a[key] > 0:
            raise err("analysis", key, "tolerances must be positive")
    if a["omega_max"] < 0:
        raise err("analysis", "omega_max", "must be nonnegative (0 selects 200/tau)")
    for key in ("n_grid", "n_samples", "probe_nT", "probe_neps", "max_branches", "arc_steps",
                "ds_points", "sim_steps_per_tau", "kernel_points"):
        if a[key] < 1:
            raise err("analysis", key, "must be a positive integer")
    if a["n_samples"] < 8:
        raise err("analysis", "n_samples", "must be at least 8")
    if not a["T_min"] < a["T_max"]:
        raise err("analysis", "T_max", "region must satisfy T_min < T_max")
    if a["T_min"] < 0:
        raise err("analysis", "T_min", "must be nonnegative")
    if not a["eps_min"] < a["eps_max"]:
        raise err("analysis", "eps_max", "region must satisfy eps_min < eps_max")
    if a["eps_min"] <= -0.9:
        raise err("analysis", "eps_min", "must exceed -0.9")
    if a["ds_k_min"] > a["ds_k_max"]:
        raise err("analysis", "ds_k_max", "must be at least ds_k_min")
    if a["ds_offspring"] < 0:
        raise err("analysis", "ds_offspring", "must be nonnegative")
    if a["sim_horizon_taus"] < 10:
        raise err("analysis", "sim_horizon_taus", "must be at least 10")
    return RunConfig(plant, c, a, full["output"])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(config: RunConfig):
    """Complete config text; ``parse_config(serialize(c)) == c``."""
    out = io.StringIO()
    out.write("[plant]\n")
    for key in PLANT_KEYS:
        out.write(f"{key} = {_fmt(float(getattr(config.plant, key)))}\n")
    for sec in ("controller", "analysis", "output"):
        out.write(f"\n[{sec}]\n")
        for key, val in getattr(config, sec).items():
            out.write(f"{key} = {_fmt(val)}\n")
    return out.getvalue()


def apply_overrides(config: RunConfig, overrides):
    """Apply ``section.key=value`` strings on top of ``config``."""
    values = {sec: dict(getattr(config, sec)) for sec in ("controller", "analysis", "output")}
    values["plant"] = {k: float(getattr(config.plant, k)) for k in PLANT_KEYS}
    for item in overrides:
        name, sep, raw = item.partition("=")
        sec, dot, key = name.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override '{item}' must look like --section.key=value")
        if sec not in DEFAULTS or key not in DEFAULTS[sec]:
            raise ConfigError(f"override '{item}': unknown key '{key}' in [{sec}]")
        values[sec][key] = _convert(DEFAULTS[sec][key][0], raw.strip(), key, "override")
    return _build(values)


# -- CSV helpers -------------------------------------------------------------

def num(v):
    """17 significant digits, the round-trip precision of a double."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([num(v) for v in row])
    return path


def worker_count():
    raw = os.environ.get("DELAYSTAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DELAYSTAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"DELAYSTAB_THREADS must be a positive integer, got {raw!r}")
    return n


# -- subcommands -------------------------------------------------------------

def _analyze(cfg, outdir, echo):
    model = to_ide(cfg.plant, cfg.analysis["n_samples"])
    ctrl = perturbed_controller(cfg.plant, 0.0, 0.0, cfg.wdes, cfg.analysis["n_samples"])
    g0, g1, gl = gamma0(model).value, gamma1(model).value, gamma_literature(model).value
    verdict = classify_fragility(model, g0, g1)
    c0 = abscissa_open(model) if g0 < 1 else math.nan
    ccl = abscissa_target(model, ctrl) if g0 < 1 else math.nan
    write_csv(outdir / "verdict.csv", ["gamma0 [-]", "gamma1 [-]", "gamma_lit [-]", "c0 [1/s]", "cCL [1/s]", "fragility"],
              [[g0, g1, gl, c0, ccl, verdict.fragility.value]])
    echo(f"gamma0 = {num(g0)}  gamma1 = {num(g1)}  gamma_lit = {num(gl)}")
    echo(f"c0 = {num(c0)} 1/s  (open loop {'stable' if c0 < 0 else 'unstable'})")
    echo(f"cCL = {num(ccl)} 1/s  (target system {'stable' if ccl < 0 else 'unstable'})")
    echo(f"fragility: {verdict.fragility.value}")
    return 0


def _tmax(cfg, outdir, echo):
    model = to_ide(cfg.plant, cfg.analysis["n_samples"])
    ctrl = perturbed_controller(cfg.plant, 0.0, 0.0, cfg.wdes, cfg.analysis["n_samples"])
    T, sweep = t_max(model, ctrl, cfg.omega_max, cfg.analysis["n_grid"], return_sweep=True)
    rows = [[c.omega, c.gamma, c.T_crit, c.T_hat, c.admissible] for c in sweep.candidates]
    write_csv(outdir / "tmax.csv", ["omega [rad/s]", "gamma [-]", "T_crit [s]", "T_hat [tau]", "admissible"], rows)
    for r in rows:
        echo(f"omega = {num(r[0])}  gamma = {num(r[1])}  T = {num(r[2])} s  T_hat = {num(r[3])}")
    if math.isinf(T):
        echo("no admissible crossing: every T > 0 keeps the loop stable")
    else:
        echo(f"T_tilde = {num(T)} s = {num(T / model.tau)} tau")
    if not sweep.tail_ok:
        echo("warning: tail check beyond omega_max failed; increase omega_max")
    return 0


def _kernel(cfg, outdir, echo):
    tau = cfg.plant.tau
    theta = np.linspace(-tau, 0.0, cfg.analysis["kernel_points"])
    w = bessel_kernel(cfg.plant, theta)
    write_csv(outdir / "kernel.csv", ["theta [s]", "w1 [1/s]"], zip(theta, w))
    echo(f"wrote {theta.size} samples of w1 on [-{num(tau)}, 0]")
    return 0


def _chart_ds(cfg, outdir, echo):
    a = cfg.analysis
    H = cfg.plant.H11
    curves = build_curves(H, (a["ds_k_min"], a["ds_k_max"]), a["ds_offspring"], a["ds_points"])
    rows = []
    for c in curves:
        res = np.abs(normalized_char(1j * c.omega, H, c.T, c.eps))
        for (T, e, w), r in zip(c.points, res):
            rows.append([c.family, c.k, c.offspring, w, T, e, r])
    write_csv(outdir / "curves_ds.csv",
              ["family", "k", "offspring", "omega [rad/tau]", "T [tau]", "eps [-]", "residual [-]"], rows)
    worst = max((r[-1] for r in rows), default=0.0)
    if worst > a["residual_tol"]:
        echo(f"warning: largest curve residual {num(worst)} exceeds residual_tol")
    ap, am = cone_slopes(H)
    write_csv(outdir / "cone.csv", ["H11 [-]", "alpha_plus [-]", "alpha_minus [-]"], [[H, ap, am]])
    echo(f"{len(curves)} curves; cone slopes alpha+ = {num(ap)}, alpha- = {num(am)}")
    return 0


def _chart_full(cfg, outdir, echo):
    a = cfg.analysis
    chart = assemble_chart(cfg.plant, cfg.wdes, cfg.region, (a["probe_nT"], a["probe_neps"]),
                           a["max_branches"], a["arc_steps"], a["seed"], workers=worker_count())
    rows = []
    for i, c in enumerate(chart.curves):
        for p in c.points:
            rows.append(["full", i, None, p.omega, p.T, p.eps, p.residual])
    write_csv(outdir / "curves_full.csv",
              ["family", "k", "offspring", "omega [rad/s]", "T [tau]", "eps [-]", "residual [-]"], rows)
    write_csv(outdir / "probes.csv", ["T [tau]", "eps [-]", "sign [-]", "abscissa [1/s]"],
              [[T, e, s, ab] for (T, e), s, ab in chart.probes])
    write_csv(outdir / "region.csv", ["T [tau]", "eps [-]"], chart.central_region)
    worst = max((r[-1] for r in rows), default=0.0)
    if worst > a["residual_tol"]:
        echo(f"warning: largest curve residual {num(worst)} exceeds residual_tol")
    stable = sum(1 for _, s, _ in chart.probes if s < 0)
    echo(f"{len(chart.curves)} traced curves, {stable}/{len(chart.probes)} probes stable")
    return 0


def _simulate(cfg, outdir, echo):
    c, a = cfg.controller, cfg.analysis
    if not c["T_hat"] > 0:
        raise SimulationError("T>0 required (filter present)")
    model = to_ide(cfg.plant, a["n_samples"])
    ctrl = perturbed_controller(cfg.plant, c["eps"], c["T_hat"], cfg.wdes, a["n_samples"])
    tau = model.tau
    dt = min(min(tau, ctrl.tauhat) / a["sim_steps_per_tau"], ctrl.T / 40)
    hist = fourier_history(2 * max(tau, ctrl.tauhat), seed=a["seed"])
    traj = simulate(model, ctrl, SimConfig(dt, a["sim_horizon_taus"] * tau, hist))
    write_csv(outdir / "trajectory.csv", ["t [s]", "x [-]", "u [-]", "window_norm [s^0.5]"],
              zip(traj.times, traj.x_values, traj.u_values, traj.window_norms))
    echo(f"fitted decay rate {num(estimate_decay(traj))} 1/s over {traj.times.size} steps")
    return 0


_DISPATCH = {
    "analyze": _analyze,
    "tmax": _tmax,
    "kernel": _kernel,
    "chart-ds": _chart_ds,
    "chart-full": _chart_full,
    "simulate": _simulate,
}


def run_subcommand(name, config: RunConfig, echo=print):
    """Run one subcommand, writing CSVs into the configured directory.

    Returns the exit status: 0 on success, 2 when a precondition fails.
    """
    if name not in _DISPATCH:
        raise ConfigError(f"unknown subcommand '{name}'; choose from {', '.join(SUBCOMMANDS)}")
    outdir = Path(config.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        return _DISPATCH[name](config, outdir, echo)
    except (MarginError, SimulationError, DsubdivisionError, SpectrumError, ModelError) as exc:
        echo(f"error: {exc}")
        return 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="delaystab",
        description="Stability analysis of filtered delay-compensating control.",
        epilog="Override config keys with --section.key=value.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="path to a config file")
    args, extra = parser.parse_known_args(argv)
    overrides = []
    for item in extra:
        if not item.startswith("--"):
            parser.error(f"unexpected argument {item!r}")
        overrides.append(item[2:])
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        cfg = apply_overrides(cfg, overrides)
        worker_count()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_subcommand(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
