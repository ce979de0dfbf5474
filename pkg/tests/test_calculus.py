import numpy as np
import pytest
from hypothesis import given, strategies as st

from velobound import scenarios
from velobound.calculus import (
    DegreeCapError,
    SpectralBoundsError,
    avoids_point_spectrum,
    chebyshev_coefficients,
    estimate_spectral_bounds,
    f_of_H_chebyshev,
    f_of_H_dense,
    make_bump,
    operator_norm_estimate,
    parse_cutoff,
    smooth_step,
    unit_function,
    zero_function,
)
from velobound.hamiltonian import Hamiltonian, apply_H_flat, decompose
from velobound.propagator import evolve_exact
from velobound.spectral import GridSpec, WaveFunction, gaussian_packet, norm


@pytest.fixture(scope="module")
def well():
    h = Hamiltonian.build(scenarios.WELL_GRID, scenarios.WELL_RHO, scenarios.WELL_POTENTIAL)
    return h, decompose(h)


@pytest.fixture(scope="module")
def small_well():
    h = Hamiltonian.build(GridSpec(1, 64, 8.0), 0.5, scenarios.WELL_POTENTIAL)
    return h, decompose(h)


# --- cutoffs ---------------------------------------------------------------

def test_smooth_step_values():
    assert smooth_step(0.0) == 0.0
    assert smooth_step(1.0) == 1.0
    assert smooth_step(0.5) == 0.5
    assert smooth_step(-3.0) == 0.0 and smooth_step(7.0) == 1.0


def test_bump_examples():
    f = make_bump(0.0, 1.0, 2.0, 3.0)
    assert 0.0 < f(0.5) < 1.0
    assert f(3.0) == 0.0
    assert f(1.0) == 1.0 and f(1.7) == 1.0
    sym = make_bump(-2.0, -1.0, 1.0, 2.0)
    x = np.linspace(-3, 3, 601)
    assert np.max(np.abs(sym(x) - sym(-x))) <= 1e-15


def test_bump_ordering_error():
    with pytest.raises(ValueError):
        make_bump(0.0, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        make_bump(0.0, 1.5, 1.0, 2.0)


def test_bump_flat_at_support_ends():
    f = make_bump(0.2, 2.0, 3.0, 5.0)
    h = 1e-5
    for end in (0.2, 5.0):
        d = (f(end + h) - f(end - h)) / (2 * h)
        assert abs(d) <= 1e-6


def test_bump_derivative_matches_central_difference():
    f = make_bump(0.0, 1.0, 2.0, 3.0)
    x = np.linspace(0.05, 2.95, 59)
    h = 1e-6
    fd = (f(x + h) - f(x - h)) / (2 * h)
    np.testing.assert_allclose(f.derivative(x), fd, atol=1e-6)


@given(st.floats(-10, 10), st.floats(0.01, 3), st.floats(0.0, 3), st.floats(0.01, 3), st.floats(-20, 20))
def test_bump_range(a, d1, d2, d3, x):
    f = make_bump(a, a + d1, a + d1 + d2, a + d1 + d2 + d3)
    v = f(x)
    assert 0.0 <= v <= 1.0
    if not (f.a < x < f.b):
        assert v == 0.0


def test_parse_cutoff():
    f = parse_cutoff("0.1, 0.25, 1.5, 2.5")
    assert f.as_tuple() == (0.1, 0.25, 1.5, 2.5)
    with pytest.raises(ValueError):
        parse_cutoff("1, 2, 3")


def test_avoids_point_spectrum():
    f = make_bump(1.0, 1.5, 2.0, 2.5)
    assert avoids_point_spectrum(f, [-1.0, 0.5, 3.0])
    assert avoids_point_spectrum(f, [1.0, 2.5])       # endpoints: f vanishes there
    assert not avoids_point_spectrum(f, [1.7])


# --- dense calculus --------------------------------------------------------

def test_dense_unit_is_identity(small_well):
    _, d = small_well
    F = f_of_H_dense(d, unit_function).matrix()
    assert np.abs(F - np.eye(len(d))).max() <= 1e-10


def test_dense_below_spectrum_is_zero(small_well):
    _, d = small_well
    lo = d.eigenvalues[0]
    f = make_bump(lo - 3.0, lo - 2.5, lo - 2.0, lo - 1.0)
    assert np.abs(f_of_H_dense(d, f).matrix()).max() <= 1e-12


def test_dense_product_rule(small_well):
    _, d = small_well
    f = make_bump(0.3, 0.5, 1.0, 1.2)
    g = make_bump(0.1, 0.3, 1.2, 1.5)     # g = 1 on supp f
    F, G = f_of_H_dense(d, f).matrix(), f_of_H_dense(d, g).matrix()
    assert np.abs(F @ G - F).max() <= 1e-10
    assert np.abs(F - F.conj().T).max() <= 1e-11
    assert np.linalg.norm(F, 2) <= 1.0 + 1e-12


def test_dense_commutes_with_propagator(small_well):
    h, d = small_well
    f = make_bump(0.3, 0.5, 1.0, 1.2)
    F = f_of_H_dense(d, f)
    psi = gaussian_packet(h.grid, -1.0, 1.0, 0.7)
    a = F(evolve_exact(d, psi, 3.0))
    b = evolve_exact(d, F(psi), 3.0)
    assert norm(a - b) <= 1e-8


def test_dense_spectral_support(small_well):
    h, d = small_well
    f = make_bump(d.eigenvalues[5] + 1e-3, 5.0, 6.0, 7.0)
    F = f_of_H_dense(d, f)
    for j in range(6):
        assert norm(F(d.state(j))) <= 1e-10


# --- Chebyshev -------------------------------------------------------------

def test_chebyshev_reproduces_cubic(small_well):
    h, d = small_well
    bounds = (d.eigenvalues[0] - 0.1, d.eigenvalues[-1] + 0.1)
    poly = lambda x: 0.5 - x + 0.25 * x ** 2 - 0.01 * x ** 3  # noqa: E731
    cheb = f_of_H_chebyshev(h, poly, 3, bounds)
    assert cheb.degree <= 3
    dense = f_of_H_dense(d, poly)
    err = operator_norm_estimate(cheb.apply_flat, dense.apply_flat, h.grid)
    assert err <= 1e-12 * np.abs(dense.weights).max()


def test_chebyshev_zero_function(small_well):
    h, _ = small_well
    cheb = f_of_H_chebyshev(h, zero_function, 10, (-5.0, 10.0))
    v = np.ones(h.grid.size, dtype=complex)
    assert np.all(cheb.apply_flat(v) == 0)


def test_chebyshev_standard_bump_matches_dense(well):
    h, d = well
    f = make_bump(*scenarios.WELL_BUMP)
    cheb = f_of_H_chebyshev(h, f, 2000)
    dense = f_of_H_dense(d, f)
    err = operator_norm_estimate(cheb.apply_flat, dense.apply_flat, h.grid, n_states=20)
    assert err <= 1e-8


def test_spectral_bounds_enclose_spectrum(well):
    h, d = well
    lo, hi = estimate_spectral_bounds(h)
    span = d.eigenvalues[-1] - d.eigenvalues[0]
    assert lo <= d.eigenvalues[0] - 1e-3 * span
    assert hi >= d.eigenvalues[-1] + 1e-3 * span


def test_chebyshev_blowup_detected(small_well):
    h, d = small_well
    # bounds far inside the spectrum make the recurrence grow
    bounds = (d.eigenvalues[0], 0.5 * (d.eigenvalues[0] + d.eigenvalues[-1]) * 0.1)
    cheb = f_of_H_chebyshev(h, lambda x: np.exp(-x * x), 60, bounds)
    v = d.eigenvectors[:, -1]
    with pytest.raises(SpectralBoundsError):
        cheb.apply_flat(v)


def test_chebyshev_degree_cap():
    f = make_bump(10.0, 20.0, 30.0, 40.0)
    with pytest.raises(DegreeCapError):
        chebyshev_coefficients(f, (0.0, 100.0), 20)
    with pytest.raises(DegreeCapError):
        chebyshev_coefficients(f, (0.0, 1.0), 10_001)


def test_chebyshev_applier_on_wavefunction(small_well):
    h, d = small_well
    f = make_bump(0.3, 0.5, 1.0, 1.2)
    cheb = f_of_H_chebyshev(h, f, 8000)
    psi = gaussian_packet(h.grid, 0.0, 1.0, 0.5)
    out = cheb(psi)
    assert isinstance(out, WaveFunction)
    assert norm(out - f_of_H_dense(d, f)(psi)) <= 1e-8
    # sanity: applier is linear in the state
    np.testing.assert_allclose(cheb.apply_flat(2 * psi.flat()), 2 * out.flat(), atol=1e-12)
    assert apply_H_flat(h, psi.flat()).shape == (h.grid.size,)
