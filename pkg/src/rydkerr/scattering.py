"""Input-output maps for Fock and coherent inputs.

Everything is evaluated in reduced coordinates tau = x - c (t - delta_t),
where the medium delay has been absorbed.  A coherent input is described by
its envelope E(tau), normalised so that |E|^2 is a photon density.

For a coherent input the normally ordered output correlators are

    G_{n,m}(tau_1..tau_{n+m}) = prod_{i<=n} E*(tau_i) prod_{j>n} E(tau_j)
        * exp(+i sum_{k>l, both<=n} phi(tau_k - tau_l))
        * exp(-i sum_{k>l, both>n} phi(tau_k - tau_l))
        * exp( int du |E(u)|^2 [exp(i theta(u)) - 1] ),
    theta(u) = sum_{i<=n} phi(u - tau_i) - sum_{j>n} phi(u - tau_j).

Coincident points need no regularisation because phi(0) is finite.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .errors import NumericalError, ValidationError


def reduced_coordinate(x, t, delta_t, c=1.0):
    return np.asarray(x) - c * (np.asarray(t) - delta_t)


def lab_position(tau, t, delta_t, c=1.0):
    return np.asarray(tau) + c * (np.asarray(t) - delta_t)


@dataclass(frozen=True)
class CoherentInput:
    """Coherent input envelope E(tau) on a finite quadrature window.

    ``tail_weight`` is the photon number outside ``window`` (neglected).
    """

    envelope: Callable
    window: tuple
    l_coh: float
    breakpoints: tuple = ()
    tail_weight: float = 0.0

    def __post_init__(self):
        lo, hi = self.window
        if not hi > lo:
            raise ValidationError(f"empty envelope window {self.window}", "input.window")

    @classmethod
    def gaussian(cls, width, center=0.0, mean_photons=None, peak_density=None, phase=0.0, cutoff=10.0):
        """|E|^2 = peak_density * exp(-(tau - center)^2 / (2 width^2)); give one of the two amplitudes."""
        if not width > 0:
            raise ValidationError("width must be positive", "input.width")
        if (mean_photons is None) == (peak_density is None):
            raise ValidationError("give exactly one of mean_photons / peak_density", "input")
        if peak_density is None:
            peak_density = mean_photons / (width * math.sqrt(2 * math.pi))
        amp = math.sqrt(peak_density) * complex(math.cos(phase), math.sin(phase))

        def envelope(tau):
            return amp * np.exp(-0.25 * ((np.asarray(tau, dtype=float) - center) / width) ** 2)

        total = peak_density * width * math.sqrt(2 * math.pi)
        return cls(envelope, (center - cutoff * width, center + cutoff * width), float(width),
                   breakpoints=(center,), tail_weight=total * erfc(cutoff / math.sqrt(2)))

    @classmethod
    def flat_top(cls, density, start, stop, phase=0.0):
        """Constant density on the closed interval [start, stop]."""
        if density < 0:
            raise ValidationError("density must be >= 0", "input.density")
        amp = math.sqrt(density) * complex(math.cos(phase), math.sin(phase))

        def envelope(tau):
            tau = np.asarray(tau, dtype=float)
            return np.where((tau >= start) & (tau <= stop), amp, 0j)

        return cls(envelope, (float(start), float(stop)), float(stop - start), breakpoints=(start, stop))

    def scaled(self, factor):
        """Same shape with the envelope multiplied by ``factor``."""
        env = self.envelope
        return CoherentInput(lambda tau: factor * env(tau), self.window, self.l_coh,
                             self.breakpoints, self.tail_weight * abs(factor) ** 2)

    def __call__(self, tau):
        return self.envelope(tau)

    def intensity(self, tau):
        return np.abs(self.envelope(tau)) ** 2

    def mean_photon_number(self):
        lo, hi = self.window
        pts = [p for p in self.breakpoints if lo < p < hi] or None
        return quad(lambda t: float(self.intensity(t)), lo, hi, points=pts, limit=400,
                    epsabs=1e-14, epsrel=1e-12)[0]


def _points_in(window, candidates):
    lo, hi = window
    return sorted({float(p) for p in candidates if lo < p < hi})


def fluctuation_exponent(inp, kernel, plus=(), minus=(), epsabs=1e-13, epsrel=1e-10):
    """int du |E(u)|^2 [exp(i theta(u)) - 1] with theta = sum phi(u - plus) - sum phi(u - minus).

    Returns ``(value, error_estimate)``; the estimate adds the quadrature error
    and the neglected envelope tail (bounded by 2 * tail_weight).
    """
    plus = np.atleast_1d(np.asarray(plus, dtype=float))
    minus = np.atleast_1d(np.asarray(minus, dtype=float))
    if plus.size + minus.size == 0:
        return 0j, 0.0
    ext = kernel.extent
    centers = np.concatenate([plus, minus])
    pts = _points_in(inp.window, list(inp.breakpoints) + list(centers) + list(centers - ext)
                     + list(centers + ext))

    def theta(u):
        return float(np.sum(kernel(u - plus)) - np.sum(kernel(u - minus)))

    def re(u):
        return -2.0 * float(inp.intensity(u)) * math.sin(0.5 * theta(u)) ** 2

    def im(u):
        return float(inp.intensity(u)) * math.sin(theta(u))

    lo, hi = inp.window
    total_err = 2.0 * inp.tail_weight
    parts, flagged = [], False
    for f in (re, im):
        res = quad(f, lo, hi, points=pts or None, epsabs=epsabs, epsrel=epsrel, limit=max(2000, 4 * len(pts)),
                   full_output=1)
        parts.append(res[0])
        total_err += res[1]
        flagged = flagged or len(res) > 3
    value = complex(parts[0], parts[1])
    # judged against the complex magnitude: one part alone may nearly cancel
    if not np.isfinite(value) or (flagged and total_err > 10 * max(epsabs, epsrel * abs(value))):
        raise NumericalError(f"fluctuation exponent quadrature failed (error estimate {total_err:.3g})")
    return value, total_err


def _pair_phase_sum(kernel, taus):
    taus = np.asarray(taus, dtype=float)
    if taus.size < 2:
        return 0.0
    i, j = np.triu_indices(taus.size, k=1)
    return float(np.sum(kernel(taus[j] - taus[i])))


@dataclass(frozen=True)
class CorrelatorRequest:
    n: int
    m: int
    points: tuple

    def __post_init__(self):
        if self.n < 0 or self.m < 0 or self.n + self.m < 1:
            raise ValidationError(f"need n, m >= 0 and n + m >= 1, got ({self.n}, {self.m})", "request")
        if len(self.points) != self.n + self.m:
            raise ValidationError(
                f"G_({self.n},{self.m}) needs {self.n + self.m} points, got {len(self.points)}", "request.points")


def correlator_with_error(inp, kernel, n, m, points):
    """Closed-form G_{n,m} and an absolute error estimate."""
    req = CorrelatorRequest(n, m, tuple(float(p) for p in points))
    pts = np.asarray(req.points)
    created, annihilated = pts[:n], pts[n:]
    prefactor = np.prod(np.conj(inp(created))) * np.prod(inp(annihilated))
    phase = _pair_phase_sum(kernel, created) - _pair_phase_sum(kernel, annihilated)
    expo, err = fluctuation_exponent(inp, kernel, plus=created, minus=annihilated)
    value = complex(prefactor) * np.exp(1j * phase + expo)
    return complex(value), float(abs(value) * err)


def correlator(inp, kernel, n, m, points):
    """Normally ordered output correlator G_{n,m} for a coherent input."""
    return correlator_with_error(inp, kernel, n, m, points)[0]


def coherent_out(inp, kernel, tau):
    """Output mean field E_out(tau) = E(tau) exp(int |E(u)|^2 [e^{-i phi(u - tau)} - 1] du)."""
    tau = np.asarray(tau, dtype=float)
    flat = np.atleast_1d(tau)
    out = np.empty(flat.shape, dtype=complex)
    for k, t in enumerate(flat):
        expo, _ = fluctuation_exponent(inp, kernel, minus=[t])
        out[k] = complex(inp(t)) * np.exp(expo)
    return out.reshape(tau.shape) if tau.ndim else complex(out[0])


def evaluate_requests(inp, kernel, requests, workers=1):
    """Evaluate many correlators; results keep request order."""
    def one(req):
        return correlator_with_error(inp, kernel, req.n, req.m, req.points)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, requests))
    return [one(r) for r in requests]


def read_requests(path):
    """CSV rows ``n, m, tau_1, ..., tau_{n+m}``; lines starting with '#' and a header row are skipped."""
    reqs = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip()]
            if not row or row[0].startswith("#"):
                continue
            try:
                n, m = int(row[0]), int(row[1])
            except ValueError:
                if reqs:
                    raise ValidationError(f"bad request row {row!r}", "correlators.file")
                continue
            reqs.append(CorrelatorRequest(n, m, tuple(float(x) for x in row[2:])))
    return reqs


def write_correlator_csv(path, requests, results, header_lines=()):
    width = max(r.n + r.m for r in requests) if requests else 0
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m"] + [f"tau_{k + 1}" for k in range(width)] + ["re_G", "im_G", "quad_error"])
        for req, (val, err) in zip(requests, results):
            pts = [repr(float(p)) for p in req.points] + [""] * (width - len(req.points))
            w.writerow([req.n, req.m] + pts + [repr(val.real), repr(val.imag), repr(err)])


class FluctuationRule:
    """Fixed composite Gauss-Legendre rule for the fluctuation exponent.

    Used where many point sets share one envelope (mode overlaps); panels are
    at most ``panel`` wide and split at envelope breakpoints.
    """

    def __init__(self, inp, kernel, panel=None, order=10, span=None):
        self.inp = inp
        self.kernel = kernel
        panel = kernel.xi_out / 8.0 if panel is None else panel
        lo, hi = inp.window
        if span is not None:
            lo, hi = max(lo, span[0]), min(hi, span[1])
        edges = np.array([lo] + _points_in((lo, hi), inp.breakpoints) + [hi])
        x, w = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            k = max(1, int(math.ceil((b - a) / panel)))
            cuts = np.linspace(a, b, k + 1)
            half = 0.5 * np.diff(cuts)
            mid = 0.5 * (cuts[1:] + cuts[:-1])
            nodes.append((mid[:, None] + half[:, None] * x).ravel())
            weights.append((half[:, None] * w).ravel())
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights) * inp.intensity(self.nodes)

    def exponent(self, plus, minus, chunk=4096):
        """Vectorised exponent for point sets ``plus`` (K, n) and ``minus`` (K, m)."""
        plus = np.asarray(plus, dtype=float)
        minus = np.asarray(minus, dtype=float)
        K = plus.shape[0] if plus.ndim == 2 else minus.shape[0]
        plus = plus.reshape(K, -1)
        minus = minus.reshape(K, -1)
        out = np.empty(K, dtype=complex)
        step = max(1, chunk * 256 // max(1, self.nodes.size))
        for s in range(0, K, step):
            th = np.zeros((min(step, K - s), self.nodes.size))
            for col in range(plus.shape[1]):
                th += self.kernel(self.nodes[None, :] - plus[s:s + step, col, None])
            for col in range(minus.shape[1]):
                th -= self.kernel(self.nodes[None, :] - minus[s:s + step, col, None])
            out[s:s + step] = (np.expm1(1j * th) * self.weights).sum(axis=1)
        return out


def correlator_batch(inp, kernel, n, m, points, rule=None):
    """Closed-form G_{n,m} for an array of point sets ``points`` (K, n + m) on a fixed rule."""
    rule = FluctuationRule(inp, kernel) if rule is None else rule
    pts = np.asarray(points, dtype=float).reshape(-1, n + m)
    created, annihilated = pts[:, :n], pts[:, n:]
    pref = np.prod(np.conj(inp(created)), axis=1) * np.prod(inp(annihilated), axis=1)
    phase = np.zeros(pts.shape[0])
    for block, sign in ((created, 1.0), (annihilated, -1.0)):
        for a in range(block.shape[1]):
            for b in range(a + 1, block.shape[1]):
                phase += sign * kernel(block[:, b] - block[:, a])
    return pref * np.exp(1j * phase + rule.exponent(created, annihilated))


@dataclass(frozen=True)
class FewPhotonState:
    """Symmetric N-photon wavefunction ``amplitude(tau_1, ..., tau_N)`` (broadcasting)."""

    n_photons: int
    amplitude: Callable

    def __call__(self, *taus):
        if len(taus) != self.n_photons:
            raise ValidationError(f"expected {self.n_photons} coordinates, got {len(taus)}", "state")
        return self.amplitude(*taus)

    @classmethod
    def product(cls, mode, n_photons):
        """Every photon in the same single-photon ``mode``."""
        def amp(*taus):
            out = 1.0 + 0j
            for t in taus:
                out = out * mode(t)
            return out

        return cls(n_photons, amp)

    def norm_squared(self, axis):
        """Tensor-grid Riemann sum of |amplitude|^2 on a uniform 1-D ``axis``."""
        axis = np.asarray(axis, dtype=float)
        h = axis[1] - axis[0]
        grids = np.meshgrid(*([axis] * self.n_photons), indexing="ij")
        return float(np.sum(np.abs(self(*grids)) ** 2) * h**self.n_photons)


def two_photon_out(state, kernel):
    """Two-photon output: multiply by exp(-i phi(tau_1 - tau_2))."""
    if state.n_photons != 2:
        raise ValidationError(f"two_photon_out needs N = 2, got {state.n_photons}", "state")
    return n_photon_out(state, kernel)


def n_photon_out(state, kernel, kernel3=None):
    """N-photon output: exp(-i sum_{i<j} phi(tau_i - tau_j) - i sum_{i<j<k} phi3(tau_i - tau_k, tau_j - tau_k))."""
    N = state.n_photons
    if kernel3 is not None and N < 3:
        raise ValidationError(f"three-body phase needs N >= 3, got {N}", "state")
    base = state.amplitude

    def amp(*taus):
        taus = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in taus))
        total = np.zeros(taus[0].shape)
        for i in range(N):
            for j in range(i + 1, N):
                total = total + kernel(taus[i] - taus[j])
        if kernel3 is not None:
            for i in range(N):
                for j in range(i + 1, N):
                    for k in range(j + 1, N):
                        total = total + kernel3(taus[i] - taus[k], taus[j] - taus[k])
        return np.exp(-1j * total) * base(*taus)

    return FewPhotonState(N, amp)
