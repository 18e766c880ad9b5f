"""Rightmost characteristic roots and spectral abscissae.

Roots of an analytic function in a rectangle are isolated by counting
zeros per grid cell with the argument principle (the phase of f is tracked
along every cell edge with adaptive bisection), subdividing cells that hold
more than one zero, and polishing each isolated zero with damped Newton.

All characteristic functions handled here have real data, so only the
upper half plane is scanned; the scan starts slightly below the real axis
so that real roots lie strictly inside a cell.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ide import char_closed, char_open, char_target
from .kernel import SampledKernel

__all__ = [
    "NO_ROOTS",
    "RootSearchRegion",
    "RootSet",
    "SpectrumError",
    "abscissa_closed",
    "abscissa_open",
    "abscissa_target",
    "count_zeros",
    "find_roots",
    "newton_root",
]

log = logging.getLogger(__name__)

NO_ROOTS = -math.inf
MAX_DEPTH = 12
_MAX_ARG_STEP = np.pi / 4
_EDGE_REFINE_LEVELS = 24
_NEWTON_TOL = 1e-12
_ACCEPT_TOL = 1e-10


class SpectrumError(RuntimeError):
    """Precondition failure for an abscissa computation."""


@dataclass(frozen=True)
class RootSearchRegion:
    re_min: float
    re_max: float
    im_max: float
    grid_re: int = 8
    grid_im: int = 8
    im_min: float | None = None

    def __post_init__(self):
        if not self.re_min < self.re_max:
            raise ValueError("re_min must be below re_max")
        if not self.im_max > 0:
            raise ValueError("im_max must be positive")
        if self.grid_re < 8 or self.grid_im < 8:
            raise ValueError("grid counts must be at least 8")

    @property
    def im_lo(self):
        if self.im_min is not None:
            return self.im_min
        # irrational fraction of a cell below the axis
        return -0.3183 * self.im_max / self.grid_im


@dataclass
class RootSet:
    roots: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    exhaustive: bool = True
    unresolved: list = field(default_factory=list)

    @property
    def abscissa(self):
        if not self.roots:
            return NO_ROOTS
        return max(z.real for z in self.roots)

    def __len__(self):
        return len(self.roots)


def _vectorize(f):
    def g(z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(f(z), dtype=complex)
        if out.shape != z.shape:
            out = np.array([complex(f(v)) for v in z.reshape(-1)]).reshape(z.shape)
        return out
    return g


def newton_root(f, z0, tol=_NEWTON_TOL, maxiter=60, box=None):
    """Damped Newton with a central-difference derivative.

    Returns (root, residual, converged).  With ``box = (re0, re1, im0, im1)``
    iterates leaving the box stop the iteration as not converged.
    """
    z = complex(z0)
    fz = complex(f(np.array([z]))[0])
    for _ in range(maxiter):
        if abs(fz) < tol:
            return z, abs(fz), True
        h = 1e-7 * max(1.0, abs(z))
        fp, fm = f(np.array([z + h, z - h]))
        d = (fp - fm) / (2 * h)
        if d == 0 or not np.isfinite(d):
            return z, abs(fz), False
        step = fz / d
        t = 1.0
        for _ in range(12):
            zn = z - t * step
            fn = complex(f(np.array([zn]))[0])
            if abs(fn) < abs(fz):
                break
            t *= 0.5
        else:
            return z, abs(fz), abs(fz) < _ACCEPT_TOL
        z, fz = zn, fn
        if box is not None:
            re0, re1, im0, im1 = box
            if not (re0 <= z.real <= re1 and im0 <= z.imag <= im1):
                return z, abs(fz), False
        if abs(t * step) < 1e-15 * max(1.0, abs(z)):
            break
    return z, abs(fz), abs(fz) < _ACCEPT_TOL


def _edge_phase(f, starts, ends, n_init):
    """Total phase change of f along each straight edge starts[e] -> ends[e].

    Returns (dphi, ok) arrays; ok is False where the phase could not be
    resolved (f vanishes on or too close to the edge).
    """
    ne = starts.size
    s = np.linspace(0.0, 1.0, n_init + 1)
    pts = starts[:, None] + (ends - starts)[:, None] * s[None, :]
    vals = f(pts.reshape(-1)).reshape(ne, n_init + 1)
    dphi = np.zeros(ne)
    ok = np.ones(ne, dtype=bool)

    # segments: (edge, za, zb, fa, fb)
    seg_e = np.repeat(np.arange(ne), n_init)
    za = pts[:, :-1].reshape(-1)
    zb = pts[:, 1:].reshape(-1)
    fa = vals[:, :-1].reshape(-1)
    fb = vals[:, 1:].reshape(-1)
    for level in range(_EDGE_REFINE_LEVELS + 1):
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.angle(fb / fa)
        zero = (fa == 0) | (fb == 0) | ~np.isfinite(d)
        bad = (np.abs(d) > _MAX_ARG_STEP) | zero
        good = ~bad
        np.add.at(dphi, seg_e[good], d[good])
        if not np.any(bad):
            break
        if level == _EDGE_REFINE_LEVELS:
            np.logical_and.at(ok, seg_e[bad], False)
            np.add.at(dphi, seg_e[bad & ~zero], d[bad & ~zero])
            break
        e, a, b, va, vb = seg_e[bad], za[bad], zb[bad], fa[bad], fb[bad]
        mid = 0.5 * (a + b)
        vm = f(mid)
        seg_e = np.concatenate([e, e])
        za = np.concatenate([a, mid])
        zb = np.concatenate([mid, b])
        fa = np.concatenate([va, vm])
        fb = np.concatenate([vm, vb])
    return dphi, ok


def _count_cells(f, re_edges, im_edges, n_init):
    """Zero counts for the cells of a rectangular grid (shape (nre, nim))."""
    nre, nim = re_edges.size - 1, im_edges.size - 1
    X, Y = np.meshgrid(re_edges, im_edges, indexing="ij")
    Z = X + 1j * Y
    # horizontal edges: (i, j) -> (i+1, j)
    h_dphi, h_ok = _edge_phase(f, Z[:-1, :].reshape(-1), Z[1:, :].reshape(-1), n_init)
    h_dphi = h_dphi.reshape(nre, nim + 1)
    h_ok = h_ok.reshape(nre, nim + 1)
    # vertical edges: (i, j) -> (i, j+1)
    v_dphi, v_ok = _edge_phase(f, Z[:, :-1].reshape(-1), Z[:, 1:].reshape(-1), n_init)
    v_dphi = v_dphi.reshape(nre + 1, nim)
    v_ok = v_ok.reshape(nre + 1, nim)
    # counter-clockwise: bottom (left->right), right (up), top (reverse), left (reverse)
    total = h_dphi[:, :-1] + v_dphi[1:, :] - h_dphi[:, 1:] - v_dphi[:-1, :]
    wind = total / (2 * np.pi)
    counts = np.rint(wind).astype(int)
    ok = h_ok[:, :-1] & h_ok[:, 1:] & v_ok[1:, :] & v_ok[:-1, :] & (np.abs(wind - counts) < 0.05)
    return counts, ok


def _solve_cell(f, box, count, depth, out, n_init):
    re0, re1, im0, im1 = box
    if count == 1:
        c = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
        w, h = re1 - re0, im1 - im0
        grow = (re0 - 0.05 * w, re1 + 0.05 * w, im0 - 0.05 * h, im1 + 0.05 * h)
        z, res, conv = newton_root(f, c, box=grow)
        if conv:
            out.roots.append(z)
            out.residuals.append(res)
            return
    if depth >= MAX_DEPTH:
        # a cluster that never separated: keep what Newton gives, flag it
        c = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
        z, res, conv = newton_root(f, c)
        if conv:
            out.roots.extend([z] * count)
            out.residuals.extend([res] * count)
        else:
            out.unresolved.append(box)
            out.exhaustive = False
        return
    re_e = np.array([re0, re0 + 0.5129 * (re1 - re0), re1])
    im_e = np.array([im0, im0 + 0.4891 * (im1 - im0), im1])
    counts, ok = _count_cells(f, re_e, im_e, n_init)
    if not np.all(ok) or counts.sum() != count:
        # shift the split point off whatever sits on the inner edges
        re_e[1] = re0 + 0.4637 * (re1 - re0)
        im_e[1] = im0 + 0.5371 * (im1 - im0)
        counts, ok = _count_cells(f, re_e, im_e, n_init)
    for i in range(2):
        for j in range(2):
            if counts[i, j] > 0 or not ok[i, j]:
                sub = (re_e[i], re_e[i + 1], im_e[j], im_e[j + 1])
                if not ok[i, j]:
                    out.unresolved.append(sub)
                    out.exhaustive = False
                    continue
                _solve_cell(f, sub, counts[i, j], depth + 1, out, n_init)


def _dedupe(roots, residuals, tol=1e-7):
    keep_r, keep_res = [], []
    for z, r in sorted(zip(roots, residuals), key=lambda t: (t[0].real, t[0].imag)):
        if any(abs(z - q) < tol * max(1.0, abs(z)) for q in keep_r):
            continue
        keep_r.append(z)
        keep_res.append(r)
    return keep_r, keep_res


def find_roots(charfun, region, mirror=True, n_init=8):
    """All zeros of ``charfun`` in ``region`` (upper half plane, mirrored).

    ``charfun`` should accept complex arrays; scalar functions are wrapped.
    With ``mirror=True`` the function is assumed real on the real axis:
    roots with positive imaginary part are returned together with their
    conjugates and only one copy of each real root is kept.
    """
    f = _vectorize(charfun)
    im_lo = region.im_lo if mirror else (region.im_min if region.im_min is not None else -region.im_max)
    re_e = np.linspace(region.re_min, region.re_max, region.grid_re + 1)
    im_e = np.linspace(im_lo, region.im_max, region.grid_im + 1)
    # keep interior grid lines off round numbers where structured roots sit
    re_e[1:-1] += 0.0371 * (re_e[1] - re_e[0])
    im_e[1:-1] += 0.0529 * (im_e[1] - im_e[0])
    counts, ok = _count_cells(f, re_e, im_e, n_init)
    out = RootSet()
    for i in range(region.grid_re):
        for j in range(region.grid_im):
            box = (re_e[i], re_e[i + 1], im_e[j], im_e[j + 1])
            if not ok[i, j]:
                # retry the cell on its own with a finer initial sampling
                sub_counts, sub_ok = _count_cells(f, re_e[i:i + 2], im_e[j:j + 2], 4 * n_init)
                if not sub_ok[0, 0]:
                    out.unresolved.append(box)
                    out.exhaustive = False
                    continue
                c = sub_counts[0, 0]
            else:
                c = counts[i, j]
            if c > 0:
                _solve_cell(f, box, c, 0, out, n_init)
            elif c < 0:
                out.unresolved.append(box)
                out.exhaustive = False

    roots, res = out.roots, out.residuals
    if mirror:
        scale = 1e-9
        kept, kept_res = [], []
        for z, r in zip(roots, res):
            if z.imag < -scale:
                continue  # conjugate of a root in the band above the axis
            if abs(z.imag) <= scale:
                kept.append(complex(z.real, 0.0))
                kept_res.append(r)
            else:
                kept.extend([z, z.conjugate()])
                kept_res.extend([r, r])
        roots, res = kept, kept_res
    roots, res = _dedupe(roots, res)
    # final resubstitution
    if roots:
        resid = np.abs(f(np.array(roots)))
        good = resid < 1e-8
        if not np.all(good):
            log.warning("dropping %d roots with residual above 1e-8", int((~good).sum()))
            out.exhaustive = False
        roots = [z for z, g in zip(roots, good) if g]
        res = [float(r) for r, g in zip(resid, good) if g]
    out.roots, out.residuals = roots, res
    return out


# -- abscissae ------------------------------------------------------------------

def _kernel_bound(kernel: SampledKernel, sigma):
    """Upper bound of || int w(theta) e^{lam theta} dtheta || for Re lam >= sigma > 0."""
    wmax = max(float(np.max(np.abs(s).sum(axis=-1))) for s in kernel.samples)
    # small safety factor for interpolation overshoot
    wmax *= 1.1
    lo, hi = kernel.domain
    return wmax * (math.exp(sigma * hi) - math.exp(sigma * lo)) / sigma


def _delay_bound(H, delays, sigma):
    norms = np.abs(H).sum(axis=-1).max(axis=-1)  # infinity norm per block
    return float(np.sum(norms * np.exp(-sigma * delays)))


def _right_edge(bound_fn, start=0.5):
    """Smallest sigma on a doubling ladder with bound_fn(sigma) < 0.5."""
    sigma = start
    for _ in range(60):
        if bound_fn(sigma) < 0.5:
            return sigma
        sigma *= 1.5
    raise SpectrumError("could not bound the spectrum from the right")


def count_zeros(f, box, spacing):
    """Argument-principle zero count inside ``box = (re0, re1, im0, im1)``.

    Returns (count, ok).  Edges are sampled at most ``spacing`` apart before
    adaptive refinement.
    """
    re0, re1, im0, im1 = box
    corners = np.array([complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)])
    starts, ends = corners, np.roll(corners, -1)
    total, ok = 0.0, True
    for a, b in zip(starts, ends):
        n = max(4, int(math.ceil(abs(b - a) / spacing)))
        d, e_ok = _edge_phase(_vectorize(f), np.array([a]), np.array([b]), n)
        total += d[0]
        ok &= bool(e_ok[0])
    wind = total / (2 * np.pi)
    c = int(round(wind))
    return c, ok and abs(wind - c) < 0.05


def _scan_abscissa(f, re_max, re_floor, im_max, tau, strip=None):
    """Locate the rightmost roots by halving on zero counts, then solve that strip."""
    strip = strip if strip is not None else max(1.0, 2.0 / tau)
    spacing = 0.25 / tau
    im_lo = -0.0419 * im_max
    total, ok = count_zeros(f, (re_floor, re_max, im_lo, im_max), spacing)
    if ok and total == 0:
        return RootSet()
    a, b = re_floor, re_max
    while ok and b - a > strip:
        mid = a + 0.5237 * (b - a)
        right, ok = count_zeros(f, (mid, b, im_lo, im_max), spacing)
        if right > 0:
            a = mid
        else:
            b = mid
    if not ok:
        log.warning("zero counting unresolved; scanning the full strip [%g, %g]", re_floor, re_max)
        a, b = re_floor, re_max
    cell = 0.5 / tau
    grid_re = max(8, int(math.ceil((b - a) / cell)))
    grid_im = max(8, int(math.ceil(im_max / cell)))
    roots = find_roots(f, RootSearchRegion(a, b, im_max, grid_re, grid_im, im_min=im_lo), n_init=4)
    if not roots.roots and ok:
        # counts said there is something here; retry on a finer grid
        roots = find_roots(f, RootSearchRegion(a, b, im_max, 2 * grid_re, 2 * grid_im, im_min=im_lo), n_init=8)
    roots.exhaustive &= ok
    return roots


def _require_gamma0(model):
    from .strong import gamma0

    g0 = gamma0(model).value
    if g0 >= 1.0:
        raise SpectrumError(
            f"gamma0 = {g0:.6g} >= 1: the essential spectrum reaches the closed right "
            "half plane and the abscissa need not be attained by isolated roots"
        )
    return g0


def abscissa_open(model, im_max=None, re_floor=None, return_roots=False):
    """Spectral abscissa of the open-loop IDE (requires gamma0 < 1)."""
    _require_gamma0(model)
    tau = model.tau
    im_max = 60.0 / tau if im_max is None else im_max
    sigma = _right_edge(lambda s: _delay_bound(model.H, model.delays, s) + _kernel_bound(model.w1, s))
    re_floor = -(4.0 + 20.0 / tau) if re_floor is None else re_floor
    roots = _scan_abscissa(lambda z: char_open(model, z), sigma + 0.5, re_floor, im_max, tau)
    return (roots.abscissa, roots) if return_roots else roots.abscissa


def abscissa_target(model, controller, im_max=None, re_floor=None, return_roots=False):
    """Spectral abscissa of the target loop det(-I + W1 - W2) = 0."""
    tau = max(model.tau, controller.tauhat)
    im_max = 60.0 / tau if im_max is None else im_max
    w2 = controller.feedback_kernel()
    sigma = _right_edge(lambda s: _kernel_bound(model.w1, s) + _kernel_bound(w2, s))
    re_floor = -(4.0 + 20.0 / tau) if re_floor is None else re_floor
    roots = _scan_abscissa(lambda z: char_target(model, controller, z), sigma + 0.5, re_floor, im_max, tau)
    return (roots.abscissa, roots) if return_roots else roots.abscissa


def abscissa_closed(model, controller, im_max=None, re_floor=None, return_roots=False):
    """Spectral abscissa of the filtered closed loop (cleared characteristic function)."""
    T = controller.T
    if T == 0:
        return abscissa_target(model, controller, im_max, re_floor, return_roots)
    from .strong import gamma0

    g0 = gamma0(model).value
    if g0 >= 1.0:
        warnings.warn(
            f"gamma0 = {g0:.6g} >= 1: the open-loop essential spectrum is not in the left "
            "half plane; the closed-loop abscissa may be a supremum over root chains",
            RuntimeWarning,
            stacklevel=2,
        )
    tau = max(model.tau, controller.tauhat)
    im_max = max(60.0 / tau, 8.0 / T) if im_max is None else im_max
    w2 = controller.feedback_kernel()
    hdel = controller.rhat[:, None] + controller.shat[None, :]

    def bound(s):
        return (_delay_bound(model.H, model.delays, s) + _kernel_bound(model.w1, s)
                + _delay_bound(controller.Hhat, hdel, s) + _kernel_bound(w2, s))

    sigma = _right_edge(bound)
    re_floor = -(4.0 + 20.0 / tau) if re_floor is None else re_floor
    roots = _scan_abscissa(lambda z: char_closed(model, controller, z), sigma + 0.5, re_floor, im_max, tau)
    return (roots.abscissa, roots) if return_roots else roots.abscissa
