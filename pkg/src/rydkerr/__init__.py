"""Exact input-output numerics for Rydberg slow-light polaritons with a Kerr-type interaction."""

from .errors import NumericalError, ValidationError
from .homodyne import ModeMoments, ProbeMode, WignerGrid, mode_moments, purity, wigner
from .interaction import NBodyPotential, TwoBodyPotential, make_constant_u3
from .massterm import MassCorrection, mass_correction, mass_phase_closed, mass_phase_quadrature
from .medium import CoordinateMap, MediumProfile, PolaritonParams, build_map, derive, slab_setup, slab_with_peak_phase
from .phase import KerrSummary, PhaseKernel, ThreeBodyKernel, build_phase_kernel, build_phi3, kerr_summary
from .scattering import (CoherentInput, CorrelatorRequest, FewPhotonState, coherent_out, correlator,
                         n_photon_out, two_photon_out)

__version__ = "0.1.0"

__all__ = [
    "CoherentInput", "CoordinateMap", "CorrelatorRequest", "FewPhotonState", "KerrSummary",
    "MassCorrection", "MediumProfile", "ModeMoments", "NBodyPotential", "NumericalError",
    "PhaseKernel", "PolaritonParams", "ProbeMode", "ThreeBodyKernel", "TwoBodyPotential",
    "ValidationError", "WignerGrid", "build_map", "build_phase_kernel", "build_phi3",
    "coherent_out", "correlator", "derive", "kerr_summary", "make_constant_u3", "mass_correction",
    "mass_phase_closed", "mass_phase_quadrature", "mode_moments", "n_photon_out", "purity", "slab_setup",
    "slab_with_peak_phase",
    "two_photon_out", "wigner",
]
