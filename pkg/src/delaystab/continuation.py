"""Crossing curves of the full scalar closed loop, traced by continuation.

A crossing point is a triple (T_hat, eps, omega) with the closed-loop
characteristic function vanishing at lam = i*omega.  Two real equations in
three unknowns define curves, which are followed by pseudo-arclength
continuation and projected on the (T_hat, eps) plane.

Units: ``T`` is the filter constant in units of tau (T_hat) and ``omega``
is the physical frequency.  Internally the frequency coordinate is
omega * tau * OMEGA_WEIGHT so that the three coordinates have comparable
scale in the arclength metric.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dsubdivision import build_curves
from .kernel import kernel_transform
from .margin import t_max
from .scalar import perturbed_controller, to_ide, wdes_constant
from .spectra import abscissa_closed

__all__ = [
    "Chart",
    "ManifoldPoint",
    "ScalarFamily",
    "TracedCurve",
    "assemble_chart",
    "refine_fixed_T",
    "seed_points",
    "trace",
    "trace_both",
]

log = logging.getLogger(__name__)

OMEGA_WEIGHT = 0.1
FD_STEP = 1e-6
RESIDUAL_GATE = 1e-8
MIN_STEP = 1e-4
MAX_STEP = 0.02
MAX_CORRECTOR = 8
DEFAULT_REGION = ((0.0, 0.5), (-0.3, 0.3))


@dataclass(frozen=True)
class ManifoldPoint:
    T: float
    eps: float
    omega: float
    residual: float


class ScalarFamily:
    """Closed-loop characteristic function of the perturbed scalar family.

    ``family(T_hat, eps, omega)`` broadcasts over its arguments and equals
    ``char_closed(to_ide(plant), perturbed_controller(plant, eps, T_hat), 1j*omega)``.
    """

    def __init__(self, plant, wdes=None, n_samples=256):
        self.plant = plant
        self.wdes = wdes_constant() if wdes is None else wdes
        self.model = to_ide(plant, n_samples)
        self.n_samples = n_samples
        self.tau = self.model.tau
        self.H = float(self.model.H[0, 0, 0, 0])

    def __call__(self, T_hat, eps, omega):
        T_hat, eps, omega = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (T_hat, eps, omega)))
        lam = 1j * omega
        f = 1.0 + eps
        tau, H, w1 = self.tau, self.H, self.model.w1
        plant = -1.0 + H * np.exp(-lam * tau) + kernel_transform(w1, lam)[..., 0, 0]
        ctrl = (H * np.exp(-lam * f * tau) + kernel_transform(w1, f * lam)[..., 0, 0]
                - kernel_transform(self.wdes, lam * f * tau)[..., 0, 0])
        return (1.0 + lam * T_hat * tau) * plant - ctrl

    def controller(self, T_hat, eps):
        return perturbed_controller(self.plant, eps, T_hat, self.wdes, self.n_samples)

    def abscissa(self, T_hat, eps):
        return abscissa_closed(self.model, self.controller(T_hat, eps))

    # internal coordinates z = (T_hat, eps, omega * tau * OMEGA_WEIGHT)
    def to_z(self, T, eps, omega):
        return np.array([T, eps, omega * self.tau * OMEGA_WEIGHT])

    def from_z(self, z):
        return z[0], z[1], z[2] / (self.tau * OMEGA_WEIGHT)

    def F(self, z):
        """Residual (Re, Im) and its 2x3 Jacobian at internal coordinates z."""
        z = np.asarray(z, dtype=float)
        h = FD_STEP * np.maximum(np.abs(z), 1.0)
        pts = np.repeat(z[None, :], 7, axis=0)
        for j in range(3):
            pts[1 + 2 * j, j] += h[j]
            pts[2 + 2 * j, j] -= h[j]
        T, e, w = self.from_z(pts.T)
        vals = self(T, e, w)
        J = np.empty((2, 3))
        for j in range(3):
            d = (vals[1 + 2 * j] - vals[2 + 2 * j]) / (2 * h[j])
            J[:, j] = d.real, d.imag
        return np.array([vals[0].real, vals[0].imag]), J

    def point(self, z):
        T, e, w = self.from_z(z)
        return ManifoldPoint(float(T), float(e), float(w), float(abs(self(T, e, w))))


def _newton_fixed(family, z, free, maxiter=50, tol=1e-12):
    """Newton on the two free coordinates with the third one frozen."""
    z = np.array(z, dtype=float)
    for _ in range(maxiter):
        r, J = family.F(z)
        if np.hypot(*r) < tol:
            return z, True
        try:
            dz = np.linalg.solve(J[:, free], -r)
        except np.linalg.LinAlgError:
            return z, False
        z[free] += dz
        if not np.all(np.isfinite(z)):
            return z, False
    r, _ = family.F(z)
    return z, bool(np.hypot(*r) < RESIDUAL_GATE)


def refine_fixed_T(family, T, eps0, omega0, maxiter=50):
    """Newton in (eps, omega) at fixed T_hat; None when it fails to converge."""
    z, ok = _newton_fixed(family, family.to_z(T, eps0, omega0), [1, 2], maxiter)
    pt = family.point(z)
    if not ok or pt.omega <= 0 or pt.residual >= RESIDUAL_GATE:
        log.info("seed at T=%.4g eps=%.4g omega=%.4g dropped (no convergence)", T, eps0, omega0)
        return None
    return pt


def _refine_on_axis(family, T, omega):
    z, ok = _newton_fixed(family, family.to_z(T, 0.0, omega), [0, 2])
    return family.point(z) if ok else None


def seed_points(plant, wdes=None, family=None, ds_offspring=(0, 1, 2, 3), ds_k=(-1, 0)):
    """Seeds on the full crossing manifold.

    Admissible frequency-sweep candidates give seeds on the eps = 0 axis;
    delay-only curves S_k, offspring l, give predictions at small (T, eps)
    that are refined at fixed T_hat.
    """
    family = ScalarFamily(plant, wdes) if family is None else family
    seeds = []
    controller = family.controller(0.0, 0.0)
    _, sweep = t_max(family.model, controller, return_sweep=True)
    for c in sweep.candidates:
        if not c.admissible:
            continue
        pt = _refine_on_axis(family, c.T_hat, c.omega)
        if pt is not None:
            seeds.append(pt)
    seeds.extend(delay_only_seeds(family, ds_k, ds_offspring))
    return seeds


def delay_only_seeds(family, ks=(-1, 0), offspring=(0, 1, 2, 3), n_pts=81):
    """One refined seed per delay-only curve, taken half way up its rising flank."""
    out = []
    curves = build_curves(family.H, (min(ks), max(ks)), max(offspring), n_pts)
    for c in curves:
        if c.family != "S" or c.k not in ks or c.offspring not in offspring:
            continue
        pt = refine_delay_only_point(family, c, n_pts // 4)
        if pt is not None:
            out.append(pt)
    return out


def refine_delay_only_point(family, curve, index):
    """Newton-refine curve point ``index`` (normalized omega) on the full system."""
    T, e, wt = curve.points[index]
    return refine_fixed_T(family, T, e, wt / family.tau)


@dataclass
class TracedCurve:
    points: list
    reason: str
    label: str = ""

    def array(self):
        return np.array([[p.T, p.eps, p.omega, p.residual] for p in self.points])


def _tangent(J, prev=None):
    t = np.cross(J[0], J[1])
    n = np.linalg.norm(t)
    if n == 0:
        return None
    t /= n
    if prev is not None and t @ prev < 0:
        t = -t
    return t


def trace(family, seed, arc_steps=400, direction=1, h0=0.005, bounds=None):
    """Pseudo-arclength continuation from ``seed``.

    Stops at the domain boundary (T <= 0 or eps <= -0.9), outside ``bounds``
    ((T_lo, T_hi), (eps_lo, eps_hi)) when given, on closure, after
    ``arc_steps`` steps, or when the step falls below MIN_STEP.
    """
    z = family.to_z(seed.T, seed.eps, seed.omega)
    z0 = z.copy()
    _, J = family.F(z)
    t = _tangent(J)
    if t is None:
        return TracedCurve([seed], "singular-seed")
    # orient so that direction=+1 increases omega (ties: T)
    key = t[2] if abs(t[2]) > 1e-12 else t[0]
    t = t * direction * (1 if key >= 0 else -1)
    h = h0
    pts = [seed]
    reason = "arc-steps"
    travelled = 0.0
    for _ in range(arc_steps):
        ok = False
        while h >= MIN_STEP:
            zp = z + h * t
            zn = zp.copy()
            for _it in range(MAX_CORRECTOR):
                r, Jn = family.F(zn)
                A = np.vstack([Jn, t])
                b = -np.concatenate([r, [t @ (zn - zp)]])
                try:
                    dz = np.linalg.solve(A, b)
                except np.linalg.LinAlgError:
                    break
                zn = zn + dz
                if np.linalg.norm(dz) < 1e-13 * max(1.0, np.linalg.norm(zn)):
                    break
            r, Jn = family.F(zn)
            tn = _tangent(Jn, t)
            if (np.hypot(*r) < RESIDUAL_GATE and tn is not None
                    and np.linalg.norm(zn - z) < 2 * h and tn @ t > 0.5):
                ok = True
                break
            h *= 0.5
        if not ok:
            reason = "min-step"
            break
        pt = family.point(zn)
        if pt.T <= 0 or pt.eps <= -0.9 or pt.omega <= 0:
            reason = "domain-boundary"
            break
        if bounds is not None:
            (tl, th), (el, eh) = bounds
            if not (tl <= pt.T <= th and el <= pt.eps <= eh):
                reason = "region-boundary"
                edge = _land(family, z, zn, bounds)
                if edge is not None:
                    pts.append(edge)
                break
        travelled += np.linalg.norm(zn - z)
        z, t = zn, tn
        pts.append(pt)
        if travelled > 4 * h and np.linalg.norm(z - z0) < h / 2:
            reason = "closed"
            break
        h = min(1.5 * h, MAX_STEP)
    return TracedCurve(pts, reason)


def _land(family, z_in, z_out, bounds):
    """Manifold point on the region edge crossed by the step z_in -> z_out."""
    lo = np.array([bounds[0][0], bounds[1][0]])
    hi = np.array([bounds[0][1], bounds[1][1]])
    best = None
    for j in (0, 1):
        for edge in (lo[j], hi[j]):
            d = z_out[j] - z_in[j]
            if d == 0 or not (min(z_in[j], z_out[j]) <= edge <= max(z_in[j], z_out[j])):
                continue
            s = (edge - z_in[j]) / d
            if best is None or s < best[0]:
                best = (s, j, edge)
    if best is None:
        return None
    s, j, edge = best
    z = z_in + s * (z_out - z_in)
    z[j] = edge
    z, ok = _newton_fixed(family, z, [1 - j, 2])
    pt = family.point(z)
    inside = np.all(z[:2] >= lo - 1e-12) and np.all(z[:2] <= hi + 1e-12)
    return pt if ok and inside and pt.T > 0 and pt.omega > 0 else None


def trace_both(family, seed, arc_steps=400, bounds=None, label=""):
    """Trace in both directions and join into one ordered curve."""
    fwd = trace(family, seed, arc_steps, +1, bounds=bounds)
    if fwd.reason == "closed":
        fwd.label = label
        return fwd
    bwd = trace(family, seed, arc_steps, -1, bounds=bounds)
    pts = bwd.points[::-1] + fwd.points[1:]
    return TracedCurve(pts, f"{bwd.reason}|{fwd.reason}", label)


def _segments_cross(points, eps_level):
    """(T, omega) linear estimates where a curve crosses eps = eps_level."""
    a = points
    out = []
    for p, q in zip(a[:-1], a[1:]):
        dp, dq = p.eps - eps_level, q.eps - eps_level
        if dp == 0.0:
            out.append((p.T, p.omega))
        elif dp * dq < 0:
            s = dp / (dp - dq)
            out.append((p.T + s * (q.T - p.T), p.omega + s * (q.omega - p.omega)))
    return out


@dataclass
class Chart:
    """Traced curves, sign probes and the central stability region."""

    curves: list
    probes: list  # ((T, eps), sign, abscissa)
    central_region: np.ndarray  # (n, 2) polygon in (T, eps)
    centre: tuple
    region: tuple
    family: ScalarFamily = field(repr=False, default=None)

    def level_crossings(self, eps_level=0.0):
        """T values where traced curves cross eps = eps_level, Newton-polished."""
        Ts = []
        for c in self.curves:
            for T, w in _segments_cross(c.points, eps_level):
                if self.family is not None:
                    z, ok = _newton_fixed(self.family, self.family.to_z(T, eps_level, w), [0, 2])
                    if ok:
                        T = float(z[0])
                Ts.append(T)
        return np.array(sorted(Ts))

    def max_stable_T(self, eps_level, T_start=None):
        """Smallest curve crossing of eps = eps_level to the right of T_start."""
        T_start = self.centre[0] if T_start is None else T_start
        Ts = self.level_crossings(eps_level)
        Ts = Ts[Ts > T_start]
        return float(Ts[0]) if Ts.size else math.inf

    def distance_to_curves(self, T, eps):
        best = math.inf
        P = np.array([T, eps])
        for c in self.curves:
            a = c.array()[:, :2]
            if len(a) < 2:
                continue
            A, B = a[:-1], a[1:]
            d = B - A
            s = np.clip(np.einsum("ij,ij->i", P - A, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
            best = min(best, float(np.min(np.linalg.norm(A + s[:, None] * d - P, axis=1))))
        return best


def _ray_polygon(curves, centre, region, n_rays=180):
    (tl, th), (el, eh) = region
    segs = []
    for c in curves:
        a = c.array()[:, :2]
        if len(a) >= 2:
            segs.append((a[:-1], a[1:]))
    if segs:
        A = np.concatenate([s[0] for s in segs])
        B = np.concatenate([s[1] for s in segs])
    else:
        A = B = np.zeros((0, 2))
    C = np.asarray(centre, dtype=float)
    poly = []
    for phi in np.linspace(0, 2 * np.pi, n_rays, endpoint=False):
        d = np.array([math.cos(phi), math.sin(phi)])
        # distance to the region boundary along d
        ts = []
        for k, (lo, hi) in enumerate(((tl, th), (el, eh))):
            if d[k] > 0:
                ts.append((hi - C[k]) / d[k])
            elif d[k] < 0:
                ts.append((lo - C[k]) / d[k])
        t_best = min(ts)
        if len(A):
            e = B - A
            den = d[0] * e[:, 1] - d[1] * e[:, 0]
            w = A - C
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / den
                u = (w[:, 0] * d[1] - w[:, 1] * d[0]) / den
            hit = (np.abs(den) > 1e-300) & (t > 0) & (u >= 0) & (u <= 1)
            if np.any(hit):
                t_best = min(t_best, float(np.min(t[hit])))
        poly.append(C + t_best * d)
    return np.array(poly)


def _probe(family, T, eps, rng):
    a = family.abscissa(T, eps)
    tries = 0
    while abs(a) < 1e-4 and tries < 5:
        T = max(T + rng.uniform(-1e-3, 1e-3), 1e-4)
        eps = eps + rng.uniform(-1e-3, 1e-3)
        a = family.abscissa(T, eps)
        tries += 1
    return (T, eps), int(np.sign(a)), a


def assemble_chart(plant, wdes=None, region=DEFAULT_REGION, n_probe=(6, 5), max_branches=40,
                   arc_steps=600, seed=0, family=None, workers=1):
    """Curves, probes and central stable region on a (T_hat, eps) rectangle.

    Probes are independent and run on ``workers`` threads; results keep grid
    order, and each probe's jitter uses its own generator, so output does not
    depend on scheduling.
    """
    family = ScalarFamily(plant, wdes) if family is None else family
    seeds = seed_points(plant, wdes, family)
    curves = []
    for s in seeds:
        if len(curves) >= max_branches:
            break
        (tl, th), (el, eh) = region
        if not (tl <= s.T <= th and el <= s.eps <= eh):
            continue
        # skip seeds already lying on a traced branch
        if any(_on_curve(family, c, s) for c in curves):
            continue
        curves.append(trace_both(family, s, arc_steps, bounds=region,
                                 label=f"seed(T={s.T:.4f},eps={s.eps:.4f})"))

    T_tilde = min((s.T for s in seeds if s.eps == 0.0), default=region[0][1])
    centre = (0.5 * T_tilde, 0.0)

    (tl, th), (el, eh) = region
    Tg = np.linspace(tl, th, n_probe[0] + 1)[1:]  # T > 0 only
    eg = np.linspace(el, eh, n_probe[1])
    grid = [(T, e) for T in Tg for e in eg]
    rngs = [np.random.default_rng([seed, i]) for i in range(len(grid))]
    jobs = [(family, T, e, r) for (T, e), r in zip(grid, rngs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probes = list(pool.map(lambda a: _probe(*a), jobs))
    else:
        probes = [_probe(*a) for a in jobs]
    polygon = _ray_polygon(curves, centre, region)
    return Chart(curves, probes, polygon, centre, region, family)


def _on_curve(family, curve, pt):
    """True when ``pt`` lies on the traced polyline (internal coordinates)."""
    a = curve.array()
    Z = np.column_stack([a[:, 0], a[:, 1], a[:, 2] * family.tau * OMEGA_WEIGHT])
    if len(Z) < 2:
        return False
    P = family.to_z(pt.T, pt.eps, pt.omega)
    A, d = Z[:-1], np.diff(Z, axis=0)
    s = np.clip(np.einsum("ij,ij->i", P - A, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
    return bool(np.min(np.linalg.norm(A + s[:, None] * d - P, axis=1)) < 0.1 * MAX_STEP)
