"""Probe-mode moments and Wigner-function reconstruction.

The probe annihilator is ``a_u = int u(x) psi(x) dx`` (no conjugate on u), so

    G_nm = int prod_{i<=n} u*(tau_i) prod_{j>n} u(tau_j) G_{n,m}(tau) d^{n+m}tau.

Phase-space conventions: alpha = q + i p with [q, p] = i/2, so the vacuum
has W = (2/pi) exp(-2 |alpha|^2) and unit purity means pi * int W^2 = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, simpson

from .errors import NumericalError, ValidationError
from .scattering import FluctuationRule, correlator_batch, fluctuation_exponent


@dataclass(frozen=True)
class ProbeMode:
    """Square-normalised probe mode u(x) with effective support ``window``."""

    mode: Callable
    l_probe: float
    center: float
    window: tuple
    kind: str = "custom"

    def __post_init__(self):
        lo, hi = self.window
        norm = quad(lambda x: abs(complex(self.mode(x))) ** 2, lo, hi, points=[self.center]
                    if lo < self.center < hi else None, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"probe mode norm is {norm!r}, expected 1 within 1e-9", "probe")

    @classmethod
    def gaussian(cls, width, center=0.0, cutoff=12.0):
        """u(x) = (2 pi l^2)^(-1/4) exp(-(x - center)^2 / (4 l^2)), so |u|^2 has std ``width``."""
        if not width > 0:
            raise ValidationError("probe width must be positive", "probe.width")
        amp = (2 * math.pi * width**2) ** -0.25

        def mode(x):
            return amp * np.exp(-0.25 * ((np.asarray(x, dtype=float) - center) / width) ** 2)

        return cls(mode, float(width), float(center), (center - cutoff * width, center + cutoff * width),
                   kind="gaussian")

    def __call__(self, x):
        return self.mode(x)

    def rule(self, order):
        """Nodes and weights w_j such that int u(x) f(x) dx ~ sum w_j f(x_j)."""
        if self.kind == "gaussian":
            t, w = np.polynomial.hermite.hermgauss(order)
            scale = 2.0 * self.l_probe
            return self.center + scale * t, w * scale * (2 * math.pi * self.l_probe**2) ** -0.25
        lo, hi = self.window
        t, w = np.polynomial.legendre.leggauss(order)
        x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        return x, 0.5 * (hi - lo) * w * self.mode(x)


@dataclass(frozen=True)
class ModeMoments:
    gnm: np.ndarray
    n_max: int
    method: str
    tail_estimate: float
    overlap: complex
    quad_error: float = 0.0

    def __post_init__(self):
        g = self.gnm
        if g.shape != (self.n_max + 1, self.n_max + 1):
            raise ValidationError("moment matrix shape does not match n_max", "moments")
        if abs(g[0, 0] - 1.0) > 1e-12:
            raise ValidationError(f"G_00 must be 1, got {g[0, 0]!r}", "moments")
        scale = max(1.0, float(np.max(np.abs(g))))
        if np.max(np.abs(g - g.conj().T)) > 1e-10 * scale:
            raise ValidationError("moment matrix is not Hermitian", "moments")


def probe_overlap(inp, probe):
    """c = int u(tau) E(tau) dtau."""
    lo = max(probe.window[0], inp.window[0])
    hi = min(probe.window[1], inp.window[1])
    if hi <= lo:
        return 0j
    pts = sorted({p for p in (probe.center, *inp.breakpoints) if lo < p < hi}) or None
    parts = []
    for f in (np.real, np.imag):
        parts.append(quad(lambda x: float(f(probe(x) * inp(x))), lo, hi, points=pts,
                          epsabs=1e-15, epsrel=1e-13, limit=400)[0])
    return complex(*parts)


def coherent_moments(alpha0, n_max=20):
    """Moments conj(alpha0)^n alpha0^m of a pure coherent state."""
    a = complex(alpha0)
    n = np.arange(n_max + 1)
    g = np.conj(a) ** n[:, None] * a ** n[None, :]
    g[0, 0] = 1.0
    return ModeMoments(g, n_max, "coherent", 0.0, a)


def _series_tail(c_abs, n_max):
    # bound on sum_{max(n,m) > n_max} |c|^(n+m) / sqrt(n! m!) style growth, using |G_nm| <= |c|^(n+m)
    k = np.arange(n_max + 1, n_max + 60)
    return float(2.0 * np.sum(np.exp(k * math.log(max(c_abs, 1e-300)) - np.array([math.lgamma(x + 1) for x in k])))
                 * math.exp(c_abs))


def mode_moments(inp, kernel, probe, n_max=None, method="narrow-probe", rtol=1e-4):
    """Probe-mode moment matrix G_nm for 0 <= n, m <= n_max.

    ``narrow-probe`` freezes phi across the probe support and works to any
    order (default n_max = 40).  ``exact`` integrates the closed-form
    correlators over the probe with a p-adaptive tensor rule and needs
    n_max <= 2.  The kernel has a cusp at zero separation, so that rule
    converges only algebraically; ``rtol`` is its stopping tolerance.
    """
    c = probe_overlap(inp, probe)
    if method == "narrow-probe":
        n_max = 40 if n_max is None else int(n_max)
        if probe.l_probe > kernel.xi_out / 10 or probe.l_probe > inp.l_coh / 10:
            raise ValidationError(
                f"narrow-probe moments need l_probe <= xi_out/10 and <= l_coh/10 "
                f"(l_probe={probe.l_probe:g}, xi_out={kernel.xi_out:g}, l_coh={inp.l_coh:g})",
                "probe.width")
        F = [0j]
        err = 0.0
        for d in range(1, n_max + 1):
            val, e = fluctuation_exponent(inp, kernel, plus=[probe.center] * d)
            F.append(val)
            err = max(err, e)
        n = np.arange(n_max + 1)
        kerr = 0.5 * kernel.phi0 * (n * (n - 1))
        delta = n[:, None] - n[None, :]
        Fmat = np.where(delta >= 0, np.array(F)[np.abs(delta)], np.conj(np.array(F)[np.abs(delta)]))
        g = (np.conj(c) ** n[:, None]) * (c ** n[None, :]) * np.exp(1j * (kerr[:, None] - kerr[None, :]) + Fmat)
        g[0, 0] = 1.0
        g = 0.5 * (g + g.conj().T)
        return ModeMoments(g, n_max, method, _series_tail(abs(c), n_max), c, err)
    if method == "exact":
        n_max = 2 if n_max is None else int(n_max)
        if n_max > 2:
            raise ValidationError("exact moments are limited to n_max <= 2 (n + m <= 4)", "moments.n_max")
        return _exact_moments(inp, kernel, probe, n_max, rtol, c)
    raise ValidationError(f"unknown moment method {method!r}", "moments.method")


def _exact_moments(inp, kernel, probe, n_max, rtol, c):
    lo = probe.window[0] - kernel.extent
    hi = probe.window[1] + kernel.extent
    rule = FluctuationRule(inp, kernel, span=(lo, hi))
    g = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    g[0, 0] = 1.0
    worst = 0.0
    for n in range(n_max + 1):
        for m in range(n, n_max + 1):
            if n + m == 0:
                continue
            prev = None
            for order in (6, 10, 14, 20, 28):
                x, w = probe.rule(order)
                wc = np.conj(w)
                grids = np.meshgrid(*([x] * (n + m)), indexing="ij")
                pts = np.stack([a.ravel() for a in grids], axis=1)
                wgrids = np.meshgrid(*([wc] * n + [w] * m), indexing="ij")
                weight = np.prod(np.stack([a.ravel() for a in wgrids], axis=1), axis=1)
                val = complex(np.sum(weight * correlator_batch(inp, kernel, n, m, pts, rule)))
                if prev is not None and abs(val - prev) <= rtol * abs(val) + 1e-14:
                    break
                prev = val
            else:
                raise NumericalError(f"exact moment G_{n}{m} not converged at order 28 (rtol {rtol:g})")
            worst = max(worst, abs(val - prev))
            g[n, m] = val
            g[m, n] = np.conj(val)
    return ModeMoments(g, n_max, "exact", math.inf, c, worst)


def gaussian_derivative(n, m, alpha):
    """d^n/d(alpha*)^n d^m/d(alpha)^m exp(-2 |alpha|^2), by the product rule in closed form."""
    alpha = np.asarray(alpha, dtype=complex)
    ac = np.conj(alpha)
    total = np.zeros(alpha.shape, dtype=complex)
    for k in range(min(n, m) + 1):
        coef = math.comb(n, k) * math.perm(m, k) * (-2.0) ** m
        total = total + coef * ac ** (m - k) * (-2.0 * alpha) ** (n - k)
    return total * np.exp(-2.0 * np.abs(alpha) ** 2)


def _series_terms(alpha, n_max):
    """T_nm(alpha) with W = (2/pi) e^{-2|alpha|^2} sum G_nm T_nm."""
    two_a = 2.0 * alpha
    A = [np.ones(alpha.shape, dtype=complex)]
    for j in range(1, n_max + 1):
        A.append(A[-1] * two_a / j)
    B = [np.conj(a) for a in A]
    kcoef = [(-2.0) ** k / math.factorial(k) for k in range(n_max + 1)]

    def term(n, m):
        out = np.zeros(alpha.shape, dtype=complex)
        for k in range(min(n, m) + 1):
            out += kcoef[k] * A[n - k] * B[m - k]
        return out

    return term


class _Neumaier:
    def __init__(self, shape):
        self.s = np.zeros(shape, dtype=complex)
        self.c = np.zeros(shape, dtype=complex)

    def add(self, x):
        for part in (np.real, np.imag):
            s, c = part(self.s), part(self.c)
            t = s + part(x)
            big = np.abs(s) >= np.abs(part(x))
            comp = np.where(big, (s - t) + part(x), (part(x) - t) + s)
            if part is np.real:
                self.s.real, self.c.real = t, c + comp
            else:
                self.s.imag, self.c.imag = t, c + comp

    @property
    def value(self):
        return self.s + self.c


@dataclass(frozen=True)
class WignerGrid:
    q: np.ndarray
    p: np.ndarray
    values: np.ndarray  # values[i, j] = W(q[i], p[j])
    order: int
    residual: float
    imag_residual: float
    converged: bool
    meta: dict = field(default_factory=dict)

    def integrate(self, f=None):
        vals = self.values if f is None else f
        return float(simpson(simpson(vals, x=self.p, axis=1), x=self.q))

    def normalization(self):
        return self.integrate()

    def purity(self):
        return purity(self)

    def mean(self):
        qq, pp = np.meshgrid(self.q, self.p, indexing="ij")
        norm = self.normalization()
        return self.integrate(qq * self.values) / norm, self.integrate(pp * self.values) / norm

    def covariance(self):
        """Quadrature covariance matrix; a coherent state gives diag(1/4, 1/4)."""
        qq, pp = np.meshgrid(self.q, self.p, indexing="ij")
        mq, mp = self.mean()
        norm = self.normalization()
        dq, dp = qq - mq, pp - mp
        cqq = self.integrate(dq * dq * self.values) / norm
        cpp = self.integrate(dp * dp * self.values) / norm
        cqp = self.integrate(dq * dp * self.values) / norm
        return np.array([[cqq, cqp], [cqp, cpp]])

    def axis_ratio(self):
        """sqrt(minor / major) eigenvalue ratio of the covariance ellipse."""
        ev = np.linalg.eigvalsh(self.covariance())
        return float(math.sqrt(ev[0] / ev[1]))

    def diagnostics(self):
        return {
            "truncation_order": self.order,
            "truncation_residual": self.residual,
            "imag_residual": self.imag_residual,
            "converged": self.converged,
            "normalization": self.normalization(),
            "purity": self.purity(),
            "min_value": float(self.values.min()),
            **self.meta,
        }

    def rows(self):
        qq, pp = np.meshgrid(self.q, self.p, indexing="ij")
        return np.column_stack([qq.ravel(), pp.ravel(), self.values.ravel()])


def wigner(moments, q=None, p=None, half_width=None, num=161, center=0j, tol=1e-6):
    """W(q, p) from the moment series, adding shells max(n, m) = N until two consecutive shells are below ``tol``."""
    if q is None or p is None:
        hw = abs(moments.overlap) + 4.0 if half_width is None else half_width
        q = np.linspace(center.real - hw, center.real + hw, num) if q is None else q
        p = np.linspace(center.imag - hw, center.imag + hw, num) if p is None else p
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = q[:, None] + 1j * p[None, :]
    pref = (2.0 / math.pi) * np.exp(-2.0 * np.abs(alpha) ** 2)
    term = _series_terms(alpha, moments.n_max)
    acc = _Neumaier(alpha.shape)
    g = moments.gnm
    small = 0
    shell_max = 0.0
    order = moments.n_max
    converged = False
    for N in range(moments.n_max + 1):
        shell = np.zeros(alpha.shape, dtype=complex)
        for n in range(N + 1):
            shell += g[n, N] * term(n, N)
            if n != N:
                shell += g[N, n] * term(N, n)
        acc.add(shell)
        shell_max = float(np.max(np.abs(pref * shell)))
        scale = float(np.max(np.abs(pref * acc.value)))
        small = small + 1 if shell_max <= tol * scale else 0
        if small >= 2:
            order, converged = N, True
            break
    W = pref * acc.value
    imag = float(np.max(np.abs(W.imag)))
    scale = float(np.max(np.abs(W.real)))
    if imag > 1e-8 * max(scale, 1.0):
        raise NumericalError(f"Wigner series has imaginary residual {imag:.3g}")
    return WignerGrid(q, p, W.real.copy(), order, shell_max, imag, converged,
                      {"moment_method": moments.method, "n_max": moments.n_max})


def purity(grid):
    """pi * int W^2 dq dp (1 for pure states in the [q, p] = i/2 convention)."""
    return math.pi * grid.integrate(grid.values**2)
