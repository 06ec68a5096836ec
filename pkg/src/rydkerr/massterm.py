"""Size of the neglected dispersion-curvature (mass) term.

Treating the polariton mass perturbatively, the two-body wavefunction picks
up an extra phase theta_m.  For a slab at relative distance r = xi it has the
closed form

    theta_m = 3 (phi0 + i) (L / xi)^2 g^6 / (g^2 + omega^2)^3.

``mass_phase_quadrature`` evaluates the defining R-integral with analytic
second r-derivatives of the massless phase factor.  Its prefactor is
hbar / m, the dimensionally consistent choice.  Done carefully, the integral
equals **minus** the closed form; the functions keep their own signs and the
validity predicate only uses magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericalError, ValidationError
from .medium import HBAR, derive
from .phase import peak_phase

DEFAULT_THRESHOLD = 0.1


def _require_slab(medium):
    if medium.kind != "slab":
        raise ValidationError("mass-term analysis needs a homogeneous slab", "medium.kind")


def closed_form(phi0, g_over_omega, l_over_xi):
    """3 (phi0 + i) (L/xi)^2 x^6 / (1 + x^2)^3 with x = g / omega."""
    x2 = g_over_omega**2
    return 3.0 * (phi0 + 1j) * l_over_xi**2 * x2**3 / (1.0 + x2) ** 3


def mass_phase_closed(params, medium):
    _require_slab(medium)
    d = derive(params, medium)
    phi0 = peak_phase(params, medium).value
    return closed_form(phi0, d.g / params.omega, medium.length / d.xi)


def _shape_derivatives(r, xi):
    s6 = (r / xi) ** 6
    f1 = -6.0 * s6 / r / (1.0 + s6) ** 2
    f2 = -30.0 * s6 / r**2 / (1.0 + s6) ** 2 + 72.0 * s6**2 / r**2 / (1.0 + s6) ** 3
    return f1, f2


def mass_phase_quadrature(params, medium, r=None, epsrel=1e-12):
    """-(1/v_g) int_0^L dR (hbar/m) [-i a f''(r) - a^2 f'(r)^2], a = phi0 R / L, f = 1/(1 + (r/xi)^6)."""
    _require_slab(medium)
    d = derive(params, medium)
    r = d.xi if r is None else float(r)
    if not r > 0:
        raise ValidationError("separation r must be positive", "r")
    phi0 = peak_phase(params, medium).value
    f1, f2 = _shape_derivatives(r, d.xi)
    L = medium.length
    pref = -HBAR / (d.v_g * d.mass)

    def integrand(R, part):
        a = phi0 * R / L
        val = -1j * a * f2 - a**2 * f1**2
        return val.real if part == 0 else val.imag

    out = []
    for part in (0, 1):
        res = quad(integrand, 0.0, L, args=(part,), epsabs=0.0, epsrel=epsrel, full_output=1)
        if len(res) > 3:
            raise NumericalError(f"mass-term quadrature flagged: {res[3]}")
        out.append(res[0])
    return pref * complex(*out)


@dataclass(frozen=True)
class MassCorrection:
    theta_m: complex
    phi_m_abs: float
    ratio: float
    valid: bool
    threshold: float

    @property
    def main_text_estimate(self):
        """|phi0 + i| g^6/(g^2+omega^2)^3 (L/xi)^2, i.e. |theta_m| / 3."""
        return self.phi_m_abs / 3.0


def assess(theta_m, phi0, threshold=DEFAULT_THRESHOLD):
    mag = abs(theta_m)
    ratio = mag / abs(phi0) if phi0 != 0 else math.inf
    return MassCorrection(complex(theta_m), mag, ratio, bool(mag < threshold and ratio < threshold), threshold)


def mass_correction(params, medium, threshold=DEFAULT_THRESHOLD):
    return assess(mass_phase_closed(params, medium), peak_phase(params, medium).value, threshold)


def validity_scan(g_over_omega, l_over_xi, phi0=1.0, threshold=DEFAULT_THRESHOLD):
    """Rows (g/omega, L/xi, |theta_m|, |theta_m/phi0|, valid) at fixed peak phase."""
    rows = []
    for x in np.atleast_1d(g_over_omega):
        for ell in np.atleast_1d(l_over_xi):
            mc = assess(closed_form(phi0, float(x), float(ell)), phi0, threshold)
            rows.append((float(x), float(ell), mc.phi_m_abs, mc.ratio, mc.valid))
    return rows
