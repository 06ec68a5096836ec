"""Two- and three-body correlation phases.

The pair phase as a function of the slow-light separation u is

    phi(u) = 1/(hbar c) * int dw  n~(w + u) n~(w) V(zeta(w + u) - zeta(w)),

where ``n~(z)`` is the Rydberg fraction at lab position ``zeta(z)``.  For
detection points beyond the cloud, u equals the lab separation because the
coordinate map is an isometry there.  For a compact cloud phi vanishes
identically once |u| exceeds the transformed cloud length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .errors import NumericalError, ValidationError
from .interaction import TwoBodyPotential
from .medium import HBAR, build_map, derive, rydberg_fraction

UNIT_KERNEL_INTEGRAL = 2.0 * math.pi / 3.0  # int dx / (1 + x**6)


def universal_shape(s):
    """Long-cloud kernel shape 1 / (1 + s**6), with s = u / xi_out."""
    return 1.0 / (1.0 + np.asarray(s, dtype=float) ** 6)


def _refine_table(func, extent, xi_out, rtol, atol, max_rounds, n_core=97, n_bulk=65):
    """Adaptive sampling of an even function on [0, extent]."""
    core = np.linspace(0.0, min(extent, 6.0 * xi_out), n_core)
    u = np.unique(np.concatenate([core, np.linspace(0.0, extent, n_bulk)]))
    vals = np.asarray(func(u), dtype=float)
    worst = 0.0
    for _ in range(max_rounds):
        spline = CubicSpline(u, vals, bc_type="not-a-knot")
        mids = 0.5 * (u[1:] + u[:-1])
        exact = np.asarray(func(mids), dtype=float)
        err = np.abs(spline(mids) - exact)
        bad = err > atol + rtol * np.abs(exact)
        worst = float(err.max()) if err.size else 0.0
        u = np.concatenate([u, mids])
        vals = np.concatenate([vals, exact])
        order = np.argsort(u)
        u, vals = u[order], vals[order]
        if not bad.any():
            break
        # keep only the new nodes inside intervals that failed
        keep = np.ones(u.size, dtype=bool)
        good_mids = mids[~bad]
        keep[np.searchsorted(u, good_mids)] = False
        u, vals = u[keep], vals[keep]
    else:
        raise NumericalError(
            f"phase kernel tabulation did not converge in {max_rounds} rounds "
            f"(worst interpolation error {worst:.3g})"
        )
    return u, vals, worst


@dataclass(frozen=True)
class PhaseKernel:
    """Even pair phase phi(u), tabulated for u >= 0 and spline-interpolated.

    ``extent`` is the separation beyond which phi is exactly zero.
    ``quadrature`` (when present) evaluates phi directly from the integral.
    """

    u: np.ndarray
    values: np.ndarray
    phi0: float
    xi_out: float
    extent: float
    interpolation_error: float = 0.0
    analytic_slab: Optional[Callable] = None
    quadrature: Optional[Callable] = None
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._spline is None:
            spline = CubicSpline(self.u, self.values, bc_type="not-a-knot")
            object.__setattr__(self, "_spline", spline)

    @classmethod
    def tabulate(cls, func, extent, xi_out, rtol=1e-8, atol=None, max_rounds=16, **kw):
        """Kernel from any even callable supported on |u| <= extent."""
        scale = abs(float(func(np.array([0.0]))[0]))
        atol = 1e-11 * max(scale, 1e-300) if atol is None else atol
        u, vals, worst = _refine_table(func, extent, xi_out, rtol, atol, max_rounds)
        return cls(u=u, values=vals, phi0=float(vals[0]), xi_out=float(xi_out),
                   extent=float(extent), interpolation_error=worst, **kw)

    @classmethod
    def universal(cls, phi0, xi_out, extent_in_xi_out=60.0):
        """Infinitely long cloud limit phi0 / (1 + (u / xi_out)**6), cut off at a far extent."""
        return cls.tabulate(lambda u: phi0 * universal_shape(np.asarray(u) / xi_out),
                            extent_in_xi_out * xi_out, xi_out)

    def __call__(self, u):
        a = np.abs(np.asarray(u, dtype=float))
        out = np.where(a <= self.extent, self._spline(np.minimum(a, self.extent)), 0.0)
        return out if out.ndim else float(out)

    phi = __call__

    def scaled(self, factor):
        """Same shape with every phase multiplied by ``factor`` (the spline scales exactly)."""
        return PhaseKernel(u=self.u, values=self.values * factor, phi0=self.phi0 * factor,
                           xi_out=self.xi_out, extent=self.extent,
                           interpolation_error=self.interpolation_error * abs(factor))

    def table(self, pad=None):
        """Mirrored (u, phi) table, zero-padded out to extent + pad (default 10 xi_out)."""
        pad = 10.0 * self.xi_out if pad is None else pad
        tail = np.linspace(self.extent, self.extent + pad, 41)[1:]
        u = np.concatenate([self.u, tail])
        v = np.concatenate([self.values, np.zeros(tail.size)])
        return np.concatenate([-u[:0:-1], u]), np.concatenate([v[:0:-1], v])

    def integral(self):
        """sigma = int du phi(u), exact for the interpolant."""
        return 2.0 * float(self._spline.integrate(0.0, self.extent))

    def gauss_nodes(self, order=8):
        """Gauss-Legendre nodes/weights on [0, extent] aligned with the table knots."""
        x, w = np.polynomial.legendre.leggauss(order)
        a, b = self.u[:-1], self.u[1:]
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
        weights = half[:, None] * w[None, :]
        return nodes.ravel(), weights.ravel()


def slab_phase_closed_form(params, medium, u):
    """Exact slab kernel phi0 * [1 + (b u / xi)^6]^-1 * max(0, 1 - b |u| / L), b = beta^2."""
    if medium.kind != "slab":
        raise ValidationError("closed-form kernel needs a slab medium", "medium.kind")
    pp = peak_phase(params, medium)
    d = derive(params, medium)
    b2 = params.omega**2 / (d.g**2 + params.omega**2)
    u = np.asarray(u, dtype=float)
    out = pp.value * universal_shape(b2 * u / d.xi) * np.maximum(0.0, 1.0 - b2 * np.abs(u) / medium.length)
    return out if out.ndim else float(out)


def phase_quadrature(params, medium, pot, cmap, u, epsabs=None, epsrel=1e-11):
    """phi(u) straight from the w-integral, vectorised over ``u``.

    The integration variable is rescaled to [0, 1] over the overlap of the
    two shifted clouds so every component shares one adaptive rule.
    """
    u = np.abs(np.atleast_1d(np.asarray(u, dtype=float)))
    z_lo, z_hi = cmap.z_support
    span = np.maximum(z_hi - z_lo - u, 0.0)
    scale = abs(pot.depth) * (z_hi - z_lo) / (HBAR * params.c)
    epsabs = 1e-14 * max(scale, 1e-300) if epsabs is None else epsabs

    def integrand(t):
        w = z_lo + t * span
        xw = cmap.inverse(w)
        xwu = cmap.inverse(w + u)
        return span * rydberg_fraction(params, medium, xw) * rydberg_fraction(params, medium, xwu) \
            * pot(xwu - xw)

    val, err = quad_vec(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, norm="max", limit=2000)
    if not np.all(np.isfinite(val)):
        raise NumericalError("phase quadrature produced non-finite values")
    return val / (HBAR * params.c)


def build_phase_kernel(params, medium, pot=None, cmap=None, rtol=1e-8, max_rounds=16, workers=1):
    """Tabulate phi(u) for ``medium`` with adaptive refinement.

    ``workers > 1`` evaluates tabulation batches on a thread pool.
    """
    pot = TwoBodyPotential.from_params(params) if pot is None else pot
    cmap = build_map(params, medium) if cmap is None else cmap
    d = derive(params, medium)

    def exact(u):
        u = np.atleast_1d(u)
        if workers > 1 and u.size > 16:
            from concurrent.futures import ThreadPoolExecutor

            chunks = np.array_split(u, workers)
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(lambda c: phase_quadrature(params, medium, pot, cmap, c), chunks))
            return np.concatenate(parts)
        return phase_quadrature(params, medium, pot, cmap, u)

    analytic = None
    if medium.kind == "slab":
        analytic = lambda u: slab_phase_closed_form(params, medium, u)  # noqa: E731
    extent = cmap.z_length
    phi0 = float(exact(np.array([0.0]))[0])
    atol = 1e-11 * abs(phi0) if phi0 != 0 else 1e-300
    u, vals, worst = _refine_table(exact, extent, d.xi_out, rtol, atol, max_rounds)
    return PhaseKernel(u=u, values=vals, phi0=float(vals[0]), xi_out=d.xi_out, extent=extent,
                       interpolation_error=worst, analytic_slab=analytic, quadrature=exact)


class PeakPhase(NamedTuple):
    from_potential: float
    from_optical_depth: float

    @property
    def value(self):
        return self.from_potential


def peak_phase(params, medium, rtol=1e-12):
    """Slab peak phase by its two equivalent closed forms, checked against each other."""
    if medium.kind != "slab":
        raise ValidationError("peak-phase closed form needs a homogeneous slab", "medium.kind")
    d = derive(params, medium)
    g2, om2 = d.g**2, params.omega**2
    v0 = params.potential_depth
    first = g2**2 * v0 * medium.length / ((g2 + om2) * om2 * HBAR * params.c)
    second = -(g2 / (g2 + om2)) * d.kappa * params.gamma / params.delta
    if abs(first - second) > rtol * max(abs(first), abs(second)) + 1e-300:
        raise NumericalError(f"peak-phase forms disagree: {first!r} vs {second!r}")
    return PeakPhase(first, second)


@dataclass(frozen=True)
class KerrSummary:
    sigma: float
    Phi: float
    eta: float


def kerr_summary(kernel, xi_out=None, order=8):
    """sigma = int phi du and the (Phi, eta) pair with i Phi + eta = -int (e^{-i phi} - 1) du / xi_out."""
    xi_out = kernel.xi_out if xi_out is None else xi_out
    nodes, weights = kernel.gauss_nodes(order)
    ph = kernel(nodes)
    Phi = 2.0 * float(np.dot(weights, np.sin(ph))) / xi_out
    eta = 2.0 * float(np.dot(weights, 2.0 * np.sin(0.5 * ph) ** 2)) / xi_out
    return KerrSummary(sigma=kernel.integral(), Phi=Phi, eta=eta)


def long_slab_sigma(params, medium):
    """Long-cloud Kerr coefficient (2 pi / 3) phi(0) xi_out.

    Signed like the kernel itself, i.e. (2 pi / 3) (g^2/(g^2+omega^2)) (kappa gamma / delta) xi_out
    with the overall minus sign carried by the peak phase.
    """
    d = derive(params, medium)
    return UNIT_KERNEL_INTEGRAL * peak_phase(params, medium).value * d.xi_out


@dataclass(frozen=True)
class ThreeBodyKernel:
    """phi3(u, v): tabulated on a square grid, with direct quadrature via ``exact``."""

    u_axis: np.ndarray
    table: np.ndarray
    exact: Callable
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._interp is None:
            interp = RegularGridInterpolator((self.u_axis, self.u_axis), self.table,
                                             bounds_error=False, fill_value=0.0)
            object.__setattr__(self, "_interp", interp)

    def __call__(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        out = self._interp(np.stack([u, v], axis=-1))
        return out if out.ndim else float(out)

    def rows(self):
        uu, vv = np.meshgrid(self.u_axis, self.u_axis, indexing="ij")
        return np.column_stack([uu.ravel(), vv.ravel(), self.table.ravel()])


def build_phi3(params, medium, u3, cmap=None, n_grid=21, epsabs=1e-13, epsrel=1e-10, workers=1):
    """Three-body phase (1/(hbar c)) int dw n~(w+u) n~(w+v) n~(w) U3(zeta(w+u), zeta(w+v), zeta(w))."""
    if u3.arity != 3:
        raise ValidationError(f"phi3 needs a three-body potential, got arity {u3.arity}", "u3.arity")
    cmap = build_map(params, medium) if cmap is None else cmap
    z_lo, z_hi = cmap.z_support

    def nz(z):
        return rydberg_fraction(params, medium, cmap.inverse(z))

    def exact(u, v):
        lo = z_lo - min(0.0, u, v)
        hi = z_hi - max(0.0, u, v)
        if hi <= lo:
            return 0.0

        def f(w):
            return nz(w + u) * nz(w + v) * nz(w) * u3(cmap.inverse(w + u), cmap.inverse(w + v),
                                                      cmap.inverse(w))

        val, err, *rest = quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=500, full_output=1)
        if len(rest) > 1 and err > 10 * max(epsabs, epsrel * abs(val)):
            raise NumericalError(f"phi3 quadrature failed at (u, v) = ({u}, {v}): error {err:.3g}")
        return val / (HBAR * params.c)

    axis = np.linspace(-cmap.z_length, cmap.z_length, n_grid)
    pairs = [(a, b) for a in axis for b in axis]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            vals = list(pool.map(lambda p: exact(*p), pairs))
    else:
        vals = [exact(a, b) for a, b in pairs]
    table = np.asarray(vals).reshape(n_grid, n_grid)
    return ThreeBodyKernel(u_axis=axis, table=table, exact=exact)
