import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydkerr.errors import ValidationError
from rydkerr.interaction import make_constant_u3
from rydkerr.medium import slab_setup
from rydkerr.phase import PhaseKernel, build_phi3, kerr_summary
from rydkerr.scattering import (CoherentInput, CorrelatorRequest, FewPhotonState, FluctuationRule, coherent_out,
                                correlator, correlator_batch, correlator_with_error, evaluate_requests,
                                lab_position, n_photon_out, read_requests, reduced_coordinate, two_photon_out,
                                write_correlator_csv)


@pytest.fixture(scope="module")
def pulse():
    return CoherentInput.gaussian(width=20.0, mean_photons=5.0)


def gaussian_mode(center, width):
    return lambda t: (2 * math.pi * width**2) ** -0.25 * np.exp(-((t - center) / (2 * width)) ** 2)


def test_input_photon_number(pulse):
    assert pulse.mean_photon_number() == pytest.approx(5.0, rel=1e-12)
    assert pulse.tail_weight < 1e-20
    with pytest.raises(ValidationError):
        CoherentInput.gaussian(width=1.0)


def test_two_photon_identity_without_interaction(zero_kernel):
    state = FewPhotonState.product(gaussian_mode(0.0, 3.0), 2)
    out = two_photon_out(state, zero_kernel)
    t1, t2 = np.meshgrid(np.linspace(-5, 5, 11), np.linspace(-5, 5, 11))
    np.testing.assert_array_equal(out(t1, t2), state(t1, t2))


def test_two_photon_is_pure_phase(kernel50):
    state = FewPhotonState.product(gaussian_mode(0.0, 3.0), 2)
    out = two_photon_out(state, kernel50)
    t1, t2 = np.meshgrid(np.linspace(-8, 8, 33), np.linspace(-8, 8, 33))
    np.testing.assert_allclose(np.abs(out(t1, t2)), np.abs(state(t1, t2)), rtol=1e-15)
    # coincident photons pick up -phi(0) = +0.5
    ratio = out(0.3, 0.3) / state(0.3, 0.3)
    assert np.angle(ratio) == pytest.approx(0.5, rel=1e-9)


def test_two_photon_needs_two():
    with pytest.raises(ValidationError):
        two_photon_out(FewPhotonState.product(gaussian_mode(0, 1), 3), PhaseKernel.universal(0.1, 1.0))


def test_single_photon_identity(kernel50):
    state = FewPhotonState.product(gaussian_mode(0.0, 1.0), 1)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_array_equal(n_photon_out(state, kernel50)(x), state(x))


def test_three_body_phase_at_coincidence(zero_kernel):
    params, medium = slab_setup(length=4.0)
    k3 = build_phi3(params, medium, make_constant_u3(0.2, 1e3), n_grid=5)
    state = FewPhotonState.product(gaussian_mode(0.0, 2.0), 3)
    out = n_photon_out(state, zero_kernel, k3)
    ratio = out(0.0, 0.0, 0.0) / state(0.0, 0.0, 0.0)
    assert np.angle(ratio) == pytest.approx(-k3(0.0, 0.0), rel=1e-12)
    with pytest.raises(ValidationError):
        n_photon_out(FewPhotonState.product(gaussian_mode(0, 1), 2), zero_kernel, k3)


def test_permutation_commutes(kernel50):
    rng = np.random.default_rng(3)
    psi = FewPhotonState(3, lambda a, b, c: np.exp(-(a**2 + b**2 + c**2) / 50) * (1 + 0.1 * (a + b + c)))
    out = n_photon_out(psi, kernel50)
    for taus in rng.uniform(-10, 10, size=(10, 3)):
        base = out(*taus)
        for perm in [(1, 0, 2), (2, 1, 0), (1, 2, 0)]:
            assert out(*taus[list(perm)]) == pytest.approx(base, rel=1e-14)


def test_fock_map_preserves_norm(kernel50):
    state = FewPhotonState.product(gaussian_mode(0.0, 2.0), 2)
    axis = np.linspace(-15, 15, 301)
    assert n_photon_out(state, kernel50).norm_squared(axis) == pytest.approx(state.norm_squared(axis), rel=1e-14)


def test_coherent_out_without_interaction(zero_kernel, pulse):
    tau = np.array([-10.0, 0.0, 5.0])
    np.testing.assert_allclose(coherent_out(pulse, zero_kernel, tau), pulse(tau), rtol=1e-15)


def test_coherent_out_flat_density():
    k = PhaseKernel.universal(-0.8, 1.0)
    rho = 0.3
    inp = CoherentInput.flat_top(rho, -500.0, 500.0)
    s = kerr_summary(k)
    expected = np.exp(-rho * k.xi_out * (s.eta + 1j * s.Phi))
    assert coherent_out(inp, k, 0.0) / inp(0.0) == pytest.approx(expected, rel=1e-8)


def test_classical_kerr_limit():
    phi0 = 1e-3
    k = PhaseKernel.universal(phi0, 1.0)
    inp = CoherentInput.gaussian(width=300.0, peak_density=1.0)
    sigma = k.integral()
    for tau in (0.0, 150.0, 400.0):
        ratio = coherent_out(inp, k, tau) / inp(tau)
        classical = np.exp(-1j * sigma * inp.intensity(tau))
        assert abs(ratio - classical) < 10 * phi0**2


def test_output_field_bounded(kernel50, pulse):
    tau = np.linspace(-60, 60, 13)
    assert np.all(np.abs(coherent_out(pulse, kernel50, tau)) <= np.abs(pulse(tau)) * (1 + 1e-14))


def test_g01_equals_coherent_out(kernel50, pulse):
    for tau in (-7.0, 0.0, 13.0):
        assert correlator(pulse, kernel50, 0, 1, [tau]) == pytest.approx(coherent_out(pulse, kernel50, tau),
                                                                         rel=1e-12)


def test_cluster_decomposition(kernel50, pulse):
    a, b = -120.0, 120.0  # farther apart than the kernel extent plus support overlap
    g2 = correlator(pulse, kernel50, 0, 2, [a, b])
    prod = correlator(pulse, kernel50, 0, 1, [a]) * correlator(pulse, kernel50, 0, 1, [b])
    assert g2 == pytest.approx(prod, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.lists(st.floats(-40, 40), min_size=6, max_size=6))
def test_hermiticity(n, m, taus):
    if n + m == 0:
        return
    k = _hermite_kernel()
    inp = _hermite_input()
    pts = taus[: n + m]
    g = correlator(inp, k, n, m, pts)
    swapped = correlator(inp, k, m, n, pts[n:] + pts[:n])
    assert swapped == pytest.approx(np.conj(g), rel=1e-12, abs=1e-300)


_CACHE = {}


def _hermite_kernel():
    if "k" not in _CACHE:
        _CACHE["k"] = PhaseKernel.universal(1.3, 2.0, extent_in_xi_out=20.0)
    return _CACHE["k"]


def _hermite_input():
    return CoherentInput.gaussian(width=15.0, mean_photons=3.0, phase=0.4)


def test_intensity_invariance(kernel50, pulse):
    rng = np.random.default_rng(11)
    for strength in (0.5, 3.0, 25.0):
        k = kernel50.scaled(strength / kernel50.phi0)
        for tau in rng.uniform(-50, 50, size=10):
            assert correlator(pulse, k, 1, 1, [tau, tau]) == pytest.approx(pulse.intensity(tau), rel=1e-12)


def test_batch_matches_adaptive(short_kernel, pulse):
    pts = np.array([[0.0, 1.0, 2.5], [-3.0, 4.0, 4.0], [10.0, -10.0, 0.0]])
    batch = correlator_batch(pulse, short_kernel, 1, 2, pts)
    for row, val in zip(pts, batch):
        assert val == pytest.approx(correlator(pulse, short_kernel, 1, 2, row), rel=1e-9)
    rule = FluctuationRule(pulse, short_kernel, span=(-30.0, 30.0))
    np.testing.assert_allclose(correlator_batch(pulse, short_kernel, 1, 2, pts, rule), batch, rtol=1e-12)


def test_request_validation():
    with pytest.raises(ValidationError):
        CorrelatorRequest(0, 0, ())
    with pytest.raises(ValidationError):
        CorrelatorRequest(1, 1, (0.0,))


def test_batch_csv_roundtrip(tmp_path, short_kernel, pulse):
    src = tmp_path / "requests.csv"
    src.write_text("# demo\nn,m,tau_1,tau_2\n0,1,0.5\n1,1,0.0,0.0\n0,2,0.0,3.0\n")
    reqs = read_requests(src)
    assert [(r.n, r.m) for r in reqs] == [(0, 1), (1, 1), (0, 2)]
    serial = evaluate_requests(pulse, short_kernel, reqs)
    threaded = evaluate_requests(pulse, short_kernel, reqs, workers=3)
    assert serial == threaded
    out = tmp_path / "out.csv"
    write_correlator_csv(out, reqs, serial, ["header line"])
    lines = out.read_text().splitlines()
    assert lines[0] == "# header line"
    assert lines[1] == "n,m,tau_1,tau_2,re_G,im_G,quad_error"
    assert len(lines) == 5
    assert complex(*map(float, lines[3].split(",")[4:6])) == serial[1][0]


def test_error_estimate_is_small(kernel50, pulse):
    val, err = correlator_with_error(pulse, kernel50, 0, 2, [0.0, 2.0])
    assert 0 <= err < 1e-9 * abs(val)


def test_lab_frame_roundtrip():
    x = np.array([1.0, 7.5])
    tau = reduced_coordinate(x, t=80.0, delta_t=50.0, c=2.0)
    np.testing.assert_allclose(lab_position(tau, t=80.0, delta_t=50.0, c=2.0), x)
    assert tau[0] == 1.0 - 60.0
