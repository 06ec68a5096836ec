"""Atomic cloud, polariton parameters and the slow-light coordinate map.

Units are any self-consistent set with hbar = 1.  The light speed ``c`` is
kept explicit because delays and group velocities depend on it.

The coordinate map measures positions in the time a polariton needs to reach
them: ``z(x) = int_0^x dy / beta(y)**2`` with the photonic fraction
``beta(x)**2 = omega**2 / (omega**2 + g0**2 * n_a(x))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator, PPoly
from scipy.special import erf

from .errors import NumericalError, ValidationError

HBAR = 1.0


@dataclass(frozen=True)
class PolaritonParams:
    """Three-level EIT parameters in the dispersive regime.

    Parameters
    ----------
    omega : float
        Control Rabi frequency.
    delta : float
        Signed detuning from the intermediate p-level.
    gamma : float
        Decay rate of the p-level.
    g0 : float
        Single-atom coupling; ``g0 * sqrt(n_a)`` is a frequency.
    c6 : float
        Signed van der Waals coefficient. ``c6 * delta`` must be negative.
    c : float
        Vacuum light speed.
    """

    omega: float
    delta: float
    gamma: float
    g0: float
    c6: float
    c: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError(f"omega must be positive, got {self.omega}", "params.omega")
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}", "params.gamma")
        if not self.c > 0:
            raise ValidationError(f"c must be positive, got {self.c}", "params.c")
        if self.g0 < 0:
            raise ValidationError(f"g0 must be non-negative, got {self.g0}", "params.g0")
        if not abs(self.delta) > max(self.omega, self.gamma):
            raise ValidationError(
                f"not dispersive: |delta| = {abs(self.delta):g} must exceed "
                f"max(omega, gamma) = {max(self.omega, self.gamma):g}",
                "params.delta",
            )
        if not self.c6 * self.delta < 0:
            raise ValidationError(
                f"c6 * delta = {self.c6 * self.delta:g} must be negative "
                "(attractive branch)",
                "params.c6",
            )

    @property
    def hbar(self):
        return HBAR

    @property
    def blockade_radius(self):
        return (abs(self.c6 * self.delta) / (2.0 * self.omega**2)) ** (1.0 / 6.0)

    @property
    def potential_depth(self):
        """V(0) = -2 hbar omega^2 / delta (signed)."""
        return -2.0 * HBAR * self.omega**2 / self.delta


_KINDS = ("slab", "gaussian", "tabulated")


@dataclass(frozen=True)
class MediumProfile:
    """Atomic density n_a(x) with compact support.

    Build instances with :meth:`slab`, :meth:`gaussian` or :meth:`tabulated`.
    """

    kind: str
    support: tuple
    mean_density: float = 0.0
    length: float = 0.0
    peak: float = 0.0
    width: float = 0.0
    center: float = 0.0
    samples_x: tuple = ()
    samples_n: tuple = ()
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown medium kind {self.kind!r}", "medium.kind")
        lo, hi = self.support
        if not hi > lo:
            raise ValidationError(f"empty support {self.support}", "medium.support")

    @classmethod
    def slab(cls, mean_density, length, center=0.0):
        if mean_density < 0:
            raise ValidationError("mean_density must be >= 0", "medium.mean_density")
        if not length > 0:
            raise ValidationError("length must be > 0", "medium.length")
        half = 0.5 * length
        return cls("slab", (center - half, center + half), mean_density=float(mean_density),
                   length=float(length), center=float(center))

    @classmethod
    def gaussian(cls, peak, width, center=0.0, cutoff=8.0):
        """Gaussian density ``peak * exp(-(x - center)**2 / (2 width**2))``.

        The profile is set to zero beyond ``cutoff`` widths.
        """
        if peak < 0:
            raise ValidationError("peak must be >= 0", "medium.peak")
        if not width > 0:
            raise ValidationError("width must be > 0", "medium.width")
        return cls("gaussian", (center - cutoff * width, center + cutoff * width),
                   peak=float(peak), width=float(width), center=float(center))

    @classmethod
    def tabulated(cls, x, n):
        x = np.asarray(x, dtype=float)
        n = np.asarray(n, dtype=float)
        if x.ndim != 1 or x.shape != n.shape or x.size < 2:
            raise ValidationError("tabulated density needs two equal 1-D arrays", "medium.samples")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(n))):
            raise ValidationError("tabulated samples must be finite", "medium.samples")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("tabulated grid must be strictly increasing", "medium.samples")
        if np.any(n < 0):
            raise ValidationError("tabulated density must be non-negative", "medium.samples")
        interp = PchipInterpolator(x, n, extrapolate=False)
        return cls("tabulated", (float(x[0]), float(x[-1])), samples_x=tuple(x),
                   samples_n=tuple(n), _interp=interp)

    @classmethod
    def from_csv(cls, path):
        """Two-column CSV ``x, n_a``; a non-numeric first row is treated as a header."""
        xs, ns = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    ns.append(float(row[1]))
                except ValueError:
                    if xs:
                        raise ValidationError(f"bad row {row!r} in {path}", "medium.file")
        return cls.tabulated(xs, ns)

    def _inside(self, x, side):
        lo, hi = self.support
        if side > 0:
            return (x >= lo) & (x < hi)
        if side < 0:
            return (x > lo) & (x <= hi)
        return (x >= lo) & (x <= hi)

    def density(self, x, side=0):
        """n_a(x); ``side=+1/-1`` selects the right/left limit at support edges."""
        x = np.asarray(x, dtype=float)
        inside = self._inside(x, side)
        if self.kind == "slab":
            out = np.where(inside, self.mean_density, 0.0)
        elif self.kind == "gaussian":
            out = np.where(inside, self.peak * np.exp(-0.5 * ((x - self.center) / self.width) ** 2), 0.0)
        else:
            lo, hi = self.support
            vals = self._interp(np.clip(x, lo, hi))
            out = np.where(inside, np.maximum(vals, 0.0), 0.0)
        return out if out.ndim else float(out)

    @property
    def breakpoints(self):
        lo, hi = self.support
        if self.kind == "tabulated":
            return np.asarray(self.samples_x)
        if self.kind == "gaussian":
            return np.array([lo, self.center, hi])
        return np.array([lo, hi])

    @property
    def peak_density(self):
        if self.kind == "slab":
            return self.mean_density
        if self.kind == "gaussian":
            return self.peak
        return float(max(self.samples_n))

    def column_density(self):
        """Integral of n_a over the support, in closed form."""
        if self.kind == "slab":
            return self.mean_density * self.length
        if self.kind == "gaussian":
            lo, hi = self.support
            cut = (hi - self.center) / self.width
            return self.peak * self.width * math.sqrt(2 * math.pi) * erf(cut / math.sqrt(2))
        return float(self._interp.integrate(*self.support))


def beta_sq(params, medium, x, side=0):
    """Photonic fraction beta(x)^2 of the polariton."""
    na = medium.density(x, side)
    return params.omega**2 / (params.omega**2 + params.g0**2 * na)


def rydberg_fraction(params, medium, x, side=0):
    """n(x) = 1 - beta(x)^2, written to avoid cancellation at low density."""
    na = params.g0**2 * medium.density(x, side)
    return na / (params.omega**2 + na)


@dataclass(frozen=True)
class DerivedQuantities:
    g: float
    xi: float
    xi_out: float
    v_g: float
    kappa: float
    delta_t: float
    mass: float
    length: float


def _quad(func, a, b, epsabs, epsrel, points=None, limit=200):
    if points is not None:
        points = [p for p in points if a < p < b] or None
    res = quad(func, a, b, epsabs=epsabs, epsrel=epsrel, points=points, limit=limit,
               full_output=1)
    val, err, info = res[:3]
    # QUADPACK appends a message when ier != 0; round-off flags alone are tolerated
    flagged = len(res) > 3 and err > 10 * max(epsabs, epsrel * abs(val))
    if not np.isfinite(val) or flagged:
        alist, blist = info.get("alist"), info.get("blist")
        worst = ""
        if alist is not None and "elist" in info and info.get("last", 0):
            last = info["last"]
            k = int(np.argmax(info["elist"][:last]))
            worst = f"; worst subinterval [{alist[k]:.6g}, {blist[k]:.6g}]"
        raise NumericalError(
            f"quadrature on [{a:.6g}, {b:.6g}] did not converge: "
            f"value {val:.6g}, error estimate {err:.3g}{worst}"
        )
    return val, err


def derive(params, medium, epsabs=1e-10, epsrel=1e-8):
    """Single-polariton quantities for ``params`` in ``medium``.

    For a slab these are the textbook closed forms.  For other profiles the
    collective coupling uses the peak density, the effective length is
    ``column_density / peak_density`` and the delay is integrated numerically.
    The optical depth is ``kappa = 2 g^2 L / (gamma c)``.
    """
    n_ref = medium.peak_density
    g = params.g0 * math.sqrt(n_ref)
    om2 = params.omega**2
    xi = params.blockade_radius
    xi_out = xi * (g**2 + om2) / om2
    v_g = params.c * om2 / (g**2 + om2)
    if medium.kind == "slab":
        length = medium.length
        delta_t = length * (1.0 / v_g - 1.0 / params.c)
    else:
        length = medium.column_density() / n_ref if n_ref > 0 else 0.0
        lo, hi = medium.support
        col, _ = _quad(medium.density, lo, hi, epsabs, epsrel, points=list(medium.breakpoints))
        delta_t = params.g0**2 * col / (om2 * params.c)
    kappa = 2.0 * g**2 * length / (params.gamma * params.c)
    if g > 0:
        mass = HBAR * (g**2 + om2) ** 3 / (2 * params.c**2 * g**2 * params.delta * om2)
    else:
        mass = math.inf
    return DerivedQuantities(g=g, xi=xi, xi_out=xi_out, v_g=v_g, kappa=kappa,
                             delta_t=delta_t, mass=mass, length=length)


def _hermite_ppoly(x, y, d_right, d_left):
    """Piecewise cubic Hermite with one-sided end slopes on every segment."""
    h = np.diff(x)
    dy = np.diff(y) / h
    d0, d1 = d_right[:-1], d_left[1:]
    coeffs = np.empty((4, h.size))
    coeffs[0] = (d0 + d1 - 2 * dy) / h**2
    coeffs[1] = (3 * dy - 2 * d0 - d1) / h
    coeffs[2] = d0
    coeffs[3] = y[:-1]
    return PPoly(coeffs, x, extrapolate=True)


class CoordinateMap:
    """Monotone map between lab positions x and slow-light coordinates z.

    ``forward(x)`` gives z, ``inverse(z)`` gives x.  Both directions are
    piecewise cubic Hermite interpolants through exactly integrated nodes
    with exact slopes, and are linear with slope 1 outside the cloud.
    """

    def __init__(self, params, medium, nodes, cumulative):
        self.params = params
        self.medium = medium
        self.nodes = nodes
        lo, hi = medium.support
        inv_right = 1.0 / beta_sq(params, medium, nodes, side=+1)
        inv_left = 1.0 / beta_sq(params, medium, nodes, side=-1)
        self._cum = _hermite_ppoly(nodes, cumulative, inv_right, inv_left)
        self._total = float(cumulative[-1])
        self._origin = 0.0
        self._origin = float(self._cumulative(0.0))
        self.z_support = (float(self.forward(lo)), float(self.forward(hi)))
        self._inv = _hermite_ppoly(cumulative, nodes, 1.0 / inv_right, 1.0 / inv_left)
        self.roundtrip_error = self._roundtrip()

    def _cumulative(self, x):
        lo, hi = self.medium.support
        x = np.asarray(x, dtype=float)
        inner = self._cum(np.clip(x, lo, hi))
        return np.where(x < lo, x - lo, np.where(x > hi, self._total + (x - hi), inner))

    def forward(self, x):
        """z = zeta^{-1}(x)."""
        out = self._cumulative(x) - self._origin
        return out if out.ndim else float(out)

    def inverse(self, z):
        """x = zeta(z)."""
        lo, hi = self.medium.support
        c = np.asarray(z, dtype=float) + self._origin
        inner = self._inv(np.clip(c, 0.0, self._total))
        out = np.where(c < 0.0, lo + c, np.where(c > self._total, hi + (c - self._total), inner))
        return out if out.ndim else float(out)

    def beta_sq(self, x):
        return beta_sq(self.params, self.medium, x)

    def rydberg_fraction(self, x):
        return rydberg_fraction(self.params, self.medium, x)

    def rydberg_fraction_z(self, z):
        """n~(z) = n(zeta(z))."""
        return rydberg_fraction(self.params, self.medium, self.inverse(z))

    @property
    def z_length(self):
        return self.z_support[1] - self.z_support[0]

    def _roundtrip(self):
        mids = 0.5 * (self.nodes[1:] + self.nodes[:-1])
        quarter = 0.25 * (3 * self.nodes[1:] + self.nodes[:-1])
        x = np.concatenate([self.nodes, mids, quarter])
        return float(np.max(np.abs(self.inverse(self.forward(x)) - x)))


def build_map(params, medium, n_nodes=1025, epsabs=1e-10, epsrel=1e-8, tol=1e-9, max_refine=4):
    """Coordinate map for ``medium``; refines nodes until the round trip is within ``tol``.

    ``tol`` is relative to the cloud length.
    """
    lo, hi = medium.support
    scale = hi - lo

    def integrand(y):
        return 1.0 / beta_sq(params, medium, y)

    n = n_nodes
    for _ in range(max_refine + 1):
        grid = np.linspace(lo, hi, n) if medium.kind != "slab" else np.array([lo, hi])
        nodes = np.union1d(grid, np.clip(medium.breakpoints, lo, hi))
        segs = np.empty(nodes.size - 1)
        for i in range(segs.size):
            segs[i], _ = _quad(integrand, nodes[i], nodes[i + 1], epsabs, epsrel)
        cumulative = np.concatenate([[0.0], np.cumsum(segs)])
        cmap = CoordinateMap(params, medium, nodes, cumulative)
        if cmap.roundtrip_error <= tol * scale:
            return cmap
        n = 2 * n - 1
    raise NumericalError(
        f"coordinate map round-trip error {cmap.roundtrip_error:.3g} exceeds "
        f"{tol * scale:.3g} after {max_refine} refinements"
    )


def slab_setup(g=1.0, omega=1.0, length=50.0, xi=1.0, delta=100.0, gamma=0.1, c=1.0, center=0.0):
    """Parameters and slab medium from (g, omega, L, xi, delta); uses g0 = 1.

    ``c6`` is chosen so that the blockade radius equals ``xi``.
    """
    c6 = -math.copysign(2.0 * omega**2 * xi**6 / abs(delta), delta)
    params = PolaritonParams(omega=omega, delta=delta, gamma=gamma, g0=1.0, c6=c6, c=c)
    return params, MediumProfile.slab(mean_density=g**2, length=length, center=center)


def detuning_for_peak_phase(phi0, g, omega, length, c=1.0):
    """Detuning giving slab peak phase ``phi0`` (inverse of the peak-phase formula)."""
    if phi0 == 0:
        raise ValidationError("phi0 must be non-zero", "phi0")
    return -2.0 * g**4 * length / ((g**2 + omega**2) * c * phi0)


def slab_with_peak_phase(phi0, g=1.0, omega=1.0, length_over_xi=50.0, xi=1.0, gamma=0.1, c=1.0):
    """Slab setup whose peak phase is exactly ``phi0`` at blockade radius ``xi``."""
    length = length_over_xi * xi
    delta = detuning_for_peak_phase(phi0, g, omega, length, c)
    return slab_setup(g=g, omega=omega, length=length, xi=xi, delta=delta, gamma=gamma, c=c)
