"""Piecewise-polynomial kernels and their exponential (Laplace-type) transforms.

A distributed-delay kernel w(theta), theta in [a, b], is stored as samples on
uniform per-piece grids and interpolated by a cubic spline on each piece.  The
transform

    W(lam) = int_a^b w(theta) exp(lam * theta) dtheta

is then computed exactly for the interpolant, interval by interval, from the
closed-form moments int_0^1 s^p exp(z s) ds.  Nothing is sampled in the
oscillatory factor, so the result stays accurate for arbitrarily large
|Im lam|.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "KernelError",
    "SampledKernel",
    "exp_moments",
    "kernel_transform",
]

ORDER = 3
_TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 24


class KernelError(ValueError):
    """Raised for structurally invalid kernels."""


def exp_moments(z, order=ORDER):
    """Return m_p(z) = int_0^1 s^p exp(z s) ds for p = 0..order.

    Uses the upward recurrence m_p = (e^z - p m_{p-1}) / z where |z| > 1 and
    a Taylor series where |z| <= 1 (the recurrence cancels badly near 0).
    The result has shape ``z.shape + (order + 1,)``.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (order + 1,), dtype=complex)
    small = np.abs(z) <= _TAYLOR_RADIUS

    if np.any(small):
        zs = z[small]
        acc = np.zeros(zs.shape + (order + 1,), dtype=complex)
        term = np.ones_like(zs)  # z^n / n!
        for n in range(_TAYLOR_TERMS):
            for p in range(order + 1):
                acc[..., p] += term / (p + n + 1)
            term = term * zs / (n + 1)
        out[small] = acc

    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        m = (ez - 1.0) / zb
        vals = [m]
        for p in range(1, order + 1):
            m = (ez - p * m) / zb
            vals.append(m)
        out[big] = np.stack(vals, axis=-1)
    return out


@dataclass(frozen=True, eq=False)
class SampledKernel:
    """Matrix-valued kernel sampled on uniform grids between breakpoints.

    Parameters
    ----------
    breakpoints : increasing sequence of length npieces + 1.
    samples : list with one array per piece, shaped (n_i, m, m) or (n_i,)
        for scalar kernels.  Piece i is sampled uniformly on
        [breakpoints[i], breakpoints[i + 1]] including both ends.
    """

    breakpoints: np.ndarray
    samples: tuple
    _splines: tuple = field(init=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise KernelError("need at least two breakpoints")
        if not np.all(np.isfinite(bp)) or np.any(np.diff(bp) <= 0):
            raise KernelError("breakpoints must be finite and strictly increasing")
        if len(self.samples) != bp.size - 1:
            raise KernelError(
                f"{bp.size - 1} pieces declared but {len(self.samples)} sample blocks given"
            )
        blocks = []
        shape = None
        for s in self.samples:
            s = np.asarray(s, dtype=float)
            if s.ndim == 1:
                s = s[:, None, None]
            if s.ndim != 3 or s.shape[1] != s.shape[2]:
                raise KernelError("samples must be (n,) or (n, m, m) arrays")
            if s.shape[0] < ORDER + 1:
                raise KernelError(f"every piece needs at least {ORDER + 1} samples")
            if shape is not None and s.shape[1:] != shape:
                raise KernelError("all pieces must share the matrix size")
            shape = s.shape[1:]
            blocks.append(s)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "samples", tuple(blocks))
        splines = tuple(
            CubicSpline(np.linspace(bp[i], bp[i + 1], s.shape[0]), s, axis=0)
            for i, s in enumerate(blocks)
        )
        object.__setattr__(self, "_splines", splines)

    # -- constructors ----------------------------------------------------

    @classmethod
    def from_function(cls, func, breakpoints, n_per_piece=64):
        """Sample ``func(theta)`` (vectorized) on each piece."""
        bp = np.asarray(breakpoints, dtype=float)
        samples = [
            np.asarray(func(np.linspace(bp[i], bp[i + 1], n_per_piece)), dtype=float)
            for i in range(bp.size - 1)
        ]
        return cls(bp, tuple(samples))

    @classmethod
    def constant(cls, value, lo, hi, n=ORDER + 1):
        value = np.atleast_2d(np.asarray(value, dtype=float))
        block = np.broadcast_to(value, (n,) + value.shape).copy()
        return cls(np.array([lo, hi], dtype=float), (block,))

    @classmethod
    def zero(cls, lo, hi, dim=1):
        return cls.constant(np.zeros((dim, dim)), lo, hi)

    # -- properties ------------------------------------------------------

    @property
    def dim(self):
        return self.samples[0].shape[1]

    @property
    def domain(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def length(self):
        lo, hi = self.domain
        return hi - lo

    # -- algebra ---------------------------------------------------------

    def scaled(self, factor):
        """Return ``factor * w``."""
        return SampledKernel(self.breakpoints, tuple(factor * s for s in self.samples))

    def stretched(self, c):
        """Return the kernel theta -> w(theta / c) / c on the stretched domain.

        The spline on the stretched grid is exactly the stretched spline, so
        ``kernel_transform(k.stretched(c), lam) == kernel_transform(k, c * lam)``.
        """
        if c <= 0:
            raise KernelError("stretch factor must be positive")
        return SampledKernel(c * self.breakpoints, tuple(s / c for s in self.samples))

    # -- evaluation ------------------------------------------------------

    def __call__(self, theta):
        """Evaluate the interpolant; zero outside the domain."""
        theta = np.asarray(theta, dtype=float)
        flat = theta.reshape(-1)
        out = np.zeros((flat.size, self.dim, self.dim))
        bp = self.breakpoints
        piece = np.clip(np.searchsorted(bp, flat, side="right") - 1, 0, len(self._splines) - 1)
        inside = (flat >= bp[0]) & (flat <= bp[-1])
        for i, sp in enumerate(self._splines):
            sel = inside & (piece == i)
            if np.any(sel):
                out[sel] = sp(flat[sel])
        return out.reshape(theta.shape + (self.dim, self.dim))

    def intervals(self):
        """Yield (left_nodes, width, coeffs) per piece.

        Pieces are uniform, so ``width`` is a scalar.  ``coeffs[p]`` has shape
        (n_intervals, m, m) and multiplies (theta - left)^p.
        """
        for sp in self._splines:
            x = sp.x
            width = (x[-1] - x[0]) / (x.size - 1)
            c = sp.c[::-1]  # scipy stores highest power first
            yield x[:-1], width, c


def kernel_transform(kernel, lam):
    """Exact transform of the interpolated kernel: int w(theta) e^{lam theta} dtheta.

    ``lam`` may be a scalar or an array; the result has shape
    ``np.shape(lam) + (m, m)``.
    """
    if not isinstance(kernel, SampledKernel):
        raise KernelError("kernel_transform expects a SampledKernel")
    lam = np.asarray(lam, dtype=complex)
    flat = lam.reshape(-1)
    m = kernel.dim
    total = np.zeros((flat.size, m * m), dtype=complex)
    for left, width, coeffs in kernel.intervals():
        # on a uniform grid the moments depend on lam * width only
        mom = exp_moments(flat * width)  # (n_lam, 4)
        shift = np.exp(flat[:, None] * left[None, :])  # (n_lam, n_int)
        for p in range(ORDER + 1):
            total += (width ** (p + 1) * mom[:, p])[:, None] * (shift @ coeffs[p].reshape(left.size, m * m))
    return total.reshape(lam.shape + (m, m))
