import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from velobound.spectral import (
    FractionalSymbol,
    GridMismatchError,
    GridSpec,
    WaveFunction,
    apply_multiplier,
    boundary_mass,
    eval_symbol,
    gaussian_packet,
    inner,
    momentum_norm,
    norm,
    plane_wave,
    position_multiply,
    random_band_limited,
    symbol_derivative_via_identity,
)


def random_state(grid, seed=0):
    rng = np.random.default_rng(seed)
    return WaveFunction(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))


# --- grid ------------------------------------------------------------------

@pytest.mark.parametrize("n", [4, 100, 63])
def test_grid_rejects_bad_point_counts(n):
    with pytest.raises(ValueError):
        GridSpec(1, n, 1.0)


def test_grid_rejects_bad_dim_and_width():
    with pytest.raises(ValueError):
        GridSpec(4, 8, 1.0)
    with pytest.raises(ValueError):
        GridSpec(1, 8, 0.0)


def test_momentum_lattice_has_positive_nyquist():
    g = GridSpec(1, 8, np.pi)
    xi = g.ordered_momenta
    np.testing.assert_allclose(xi, [-3, -2, -1, 0, 1, 2, 3, 4])
    assert g.spacing == pytest.approx(2 * np.pi / 8)


def test_coordinates_are_affine():
    g = GridSpec(1, 8, 2.0)
    np.testing.assert_allclose(g.axis, np.linspace(-2.0, 2.0, 9)[:-1])


# --- symbol ----------------------------------------------------------------

def test_symbol_examples():
    assert eval_symbol(FractionalSymbol(1.0), 3.0) == pytest.approx(3.0, abs=1e-15)
    assert eval_symbol(FractionalSymbol(0.5), 3.0) == pytest.approx(1.0, abs=1e-15)
    assert abs(eval_symbol(FractionalSymbol(0.75), 1.0, 1) - 0.6307) <= 1e-4


def test_symbol_second_derivative():
    sym = FractionalSymbol(0.5)
    assert eval_symbol(sym, 3.0, 2) == pytest.approx(0.5 * -0.5 * 4.0 ** -1.5)


def test_symbol_domain_errors():
    with pytest.raises(ValueError):
        eval_symbol(FractionalSymbol(0.5), -0.1)
    with pytest.raises(ValueError):
        eval_symbol(FractionalSymbol(0.5), 1.0, 3)
    with pytest.raises(ValueError):
        FractionalSymbol(0.0)
    with pytest.raises(ValueError):
        FractionalSymbol(1.5)


def test_symbol_vanishes_at_zero_and_increases():
    for rho in (0.25, 0.5, 1.0):
        sym = FractionalSymbol(rho)
        s = np.linspace(0, 50, 1001)
        vals = sym(s)
        assert vals[0] == 0.0
        assert np.all(np.diff(vals) > 0)
        assert np.all(sym(s, 1) > 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 1e6))
def test_symbol_identity_property(rho, s):
    sym = FractionalSymbol(rho)
    direct = eval_symbol(sym, s, 1)
    via = symbol_derivative_via_identity(sym, s)
    assert abs(via - direct) <= 1e-13 * abs(direct)


def test_group_velocity_and_inverse_energy():
    sym = FractionalSymbol(0.5)
    assert sym.group_velocity(1.0) == pytest.approx(np.sqrt(2) / 2)
    lam = 0.7
    assert sym(sym.momentum_at_energy(lam) ** 2) == pytest.approx(lam)


# --- multipliers -----------------------------------------------------------

def test_identity_multiplier():
    g = GridSpec(1, 64, 5.0)
    psi = random_state(g)
    out = apply_multiplier(psi, lambda xi: np.ones_like(xi))
    assert norm(out - psi) <= 1e-13 * norm(psi)


def test_symbol_multiplier_on_plane_wave():
    g = GridSpec(1, 64, 5.0)
    psi = plane_wave(g, 3)
    xi0 = np.pi * 3 / 5.0
    sym = FractionalSymbol(0.5)
    out = apply_multiplier(psi, sym(g.momentum_sq))
    expect = np.sqrt(xi0 ** 2 + 1) - 1
    assert norm(out - psi * expect) <= 1e-12


def test_laplacian_of_gaussian():
    g = GridSpec(1, 256, 20.0)
    x = g.axis
    a = 0.5
    psi = WaveFunction(g, np.exp(-a * x ** 2))
    out = apply_multiplier(psi, g.momentum_sq)
    expect = (2 * a - 4 * a ** 2 * x ** 2) * np.exp(-a * x ** 2)
    assert np.max(np.abs(out.values - expect)) <= 1e-8


def test_multiplier_rejects_non_finite():
    g = GridSpec(1, 16, 1.0)
    psi = random_state(g)
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        apply_multiplier(psi, lambda xi: 1.0 / xi)   # inf at xi = 0


def test_multiplier_is_hermitian_and_multiplicative():
    g = GridSpec(2, 16, 3.0)
    psi, phi = random_state(g, 1), random_state(g, 2)
    m1 = np.cos(g.momentum_sq)
    m2 = 1.0 + g.momentum_sq
    lhs = inner(apply_multiplier(psi, m1), phi)
    rhs = inner(psi, apply_multiplier(phi, m1))
    assert abs(lhs - rhs) <= 1e-11 * norm(psi) * norm(phi)
    both = apply_multiplier(apply_multiplier(psi, m2), m1)
    prod = apply_multiplier(psi, m1 * m2)
    assert norm(both - prod) <= 1e-12 * norm(prod)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_parseval(dim):
    g = GridSpec(dim, 8 if dim == 3 else 32, 2.0)
    psi = random_state(g, dim)
    assert abs(momentum_norm(psi) - norm(psi)) <= 1e-12 * norm(psi)


# --- position multiplication ----------------------------------------------

def test_position_multiply_examples():
    g = GridSpec(1, 64, 4.0)
    psi = random_state(g)
    assert norm(position_multiply(psi, 0.0)) == 0.0
    ind = lambda x: (np.abs(x) <= 2.0).astype(float)  # noqa: E731
    once = position_multiply(psi, ind)
    twice = position_multiply(once, ind)
    assert norm(twice - once) == 0.0
    spike = np.zeros(g.shape, dtype=complex)
    spike[32] = 1.0    # x = 0
    out = position_multiply(WaveFunction(g, spike), lambda x: (1 + x * x) ** -1.0)
    assert out.values[32] == 1.0


def test_position_multiply_rejects_non_finite():
    g = GridSpec(1, 16, 1.0)
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        position_multiply(random_state(g), lambda x: 1.0 / x)


# --- inner products --------------------------------------------------------

def test_inner_examples():
    g = GridSpec(1, 32, 3.0)
    psi = random_state(g)
    val = inner(psi, psi)
    assert val.imag == 0.0 and val.real >= 0
    assert abs(inner(plane_wave(g, 2), plane_wave(g, 5))) <= 1e-12
    const = WaveFunction(g, np.full(g.shape, 1.0 / np.sqrt(2 * 3.0)))
    assert abs(norm(const) - 1.0) <= 1e-12


def test_inner_conjugate_symmetry_and_grid_mismatch():
    g = GridSpec(1, 32, 3.0)
    psi, phi = random_state(g, 1), random_state(g, 2)
    assert inner(psi, phi) == pytest.approx(np.conj(inner(phi, psi)), rel=1e-14)
    with pytest.raises(GridMismatchError):
        inner(psi, random_state(GridSpec(1, 32, 4.0)))


def test_wavefunction_rejects_nan_and_is_read_only():
    g = GridSpec(1, 8, 1.0)
    vals = np.zeros(8, dtype=complex)
    vals[2] = np.nan
    with pytest.raises(FloatingPointError):
        WaveFunction(g, vals)
    psi = random_state(g)
    with pytest.raises(ValueError):
        psi.values[0] = 1.0


def test_normalized_and_boundary_mass():
    g = GridSpec(1, 128, 10.0)
    psi = gaussian_packet(g, 0.0, 1.0, 0.5)
    assert abs(norm(psi) - 1.0) <= 1e-12
    assert boundary_mass(psi) < 1e-12
    edge = gaussian_packet(g, 9.5, 0.0, 0.5)
    assert boundary_mass(edge) > 0.5


def test_random_band_limited_support():
    g = GridSpec(1, 64, 5.0)
    psi = random_band_limited(g, 2.0, np.random.default_rng(0))
    coeffs = np.fft.fft(psi.values)
    assert np.max(np.abs(coeffs[np.abs(g.momenta[0]) > 2.0])) <= 1e-12
