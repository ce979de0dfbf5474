import numpy as np
import pytest

from velobound import scenarios
from velobound.calculus import make_bump
from velobound.hamiltonian import DenseCapError, Hamiltonian, decompose
from velobound.mourre import (
    build_conjugate,
    c_theory,
    choose_sub_window,
    commutator_iHA,
    dilation_commutator_check,
    free_commutator_symbol,
    free_mode_value,
    interior_packets,
    localized_bound,
    mourre_lower_bound,
    scalar_mourre_lhs,
)
from velobound.potentials import LongRangePart, PotentialSpec
from velobound.spectral import GridSpec, boundary_mass, multiplier_matrix


def test_rho_one_conjugate_is_dilation():
    g = GridSpec(1, 64, 8.0)
    a = build_conjugate(g, 1.0, "A_rho")
    b = build_conjugate(g, 1.0, "dilation")
    assert np.abs(a.dense - b.dense).max() <= 1e-12


def test_conjugate_hermiticity_defect():
    g = GridSpec(1, 64, 8.0)
    A = build_conjugate(g, 0.5)
    assert A.defect <= 1e-10
    assert np.abs(A.dense - A.dense.conj().T).max() <= 1e-11


def test_conjugate_is_parity_even_on_interior_states():
    # x and D both flip sign under parity, so their symmetrized product is even
    # parity x -> -x maps index j to (N - j) mod N on the grid; the box is wide
    # enough that the exp(-|x|) tails of the multiplier vanish at the edge
    g = GridSpec(1, 128, 32.0)
    n = g.size
    P = np.zeros((n, n))
    for j in range(n):
        P[(n - j) % n, j] = 1.0
    A = build_conjugate(g, 0.5).dense
    rng = np.random.default_rng(0)
    for _ in range(5):
        # interior state with no weight on the Nyquist mode, which is not odd
        k = rng.uniform(-2, 2)
        psi = np.exp(-(g.axis - rng.uniform(-3, 3)) ** 2 / 8 + 1j * k * g.axis)
        res = (A @ P - P @ A) @ psi
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(A @ psi)


def test_conjugate_errors():
    with pytest.raises(DenseCapError):
        build_conjugate(GridSpec(2, 128, 8.0), 0.5)
    with pytest.raises(ValueError):
        build_conjugate(GridSpec(1, 16, 8.0), 0.5, "boost")
    with pytest.raises(ValueError):
        commutator_iHA(np.eye(2), np.eye(3))


def test_commutator_with_scalar_vanishes():
    g = GridSpec(1, 32, 8.0)
    A = build_conjugate(g, 0.5)
    C, defect = commutator_iHA(2.5 * np.eye(g.size), A.dense)
    assert np.abs(C).max() <= 1e-12 and defect <= 1e-12


@pytest.mark.parametrize("rho", [0.5, 0.75, 1.0])
def test_free_commutator_form(rho):
    g = GridSpec(1, 64, 16.0)
    h = Hamiltonian.build(g, rho)
    A = build_conjugate(g, rho)
    C, _ = commutator_iHA(h.dense(), A.dense)
    M = multiplier_matrix(g, free_commutator_symbol(g, rho))
    for psi in interior_packets(g, width=1.2):
        assert boundary_mass(psi) < 1e-10
        v = psi.flat()
        lhs, rhs = np.vdot(v, C @ v).real, np.vdot(v, M @ v).real
        assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


def test_rho_one_commutator_is_twice_laplacian():
    g = GridSpec(1, 64, 16.0)
    symbol = free_commutator_symbol(g, 1.0)
    np.testing.assert_allclose(symbol, 2.0 * g.momentum_sq)


def test_c_theory_examples():
    assert c_theory(0.5, 1.0, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-15)
    for l1, l2 in ((0.3, 0.9), (1.0, 5.0)):
        assert c_theory(1.0, l1, l2) == 2.0 * l1
    assert localized_bound(0.5, 1.0, 2.0) == pytest.approx(1.0 / 3.0)


def test_scalar_mourre_inequality_dense_sample():
    for rho in (0.25, 0.5, 0.75, 1.0):
        for l1, l2 in ((0.1, 0.5), (1.0, 2.0), (3.0, 10.0)):
            lam = np.linspace(l1, l2, 2001)
            assert np.all(scalar_mourre_lhs(rho, lam) >= c_theory(rho, l1, l2) - 1e-14)


def test_free_mode_value_matches_symbol():
    g = GridSpec(1, 64, 16.0)
    h = Hamiltonian.build(g, 0.5)
    np.testing.assert_allclose(free_mode_value(0.5, h.kinetic), free_commutator_symbol(g, 0.5),
                               rtol=1e-12, atol=1e-14)


def test_free_localized_minimum_closed_form():
    g = GridSpec(1, 64, 16.0)
    rho = 0.5
    h = Hamiltonian.build(g, rho)
    d = decompose(h)
    g_cut = make_bump(1.0, 1.2, 1.8, 2.0)
    rep = mourre_lower_bound(h, build_conjugate(g, rho), (1.0, 2.0), g_cut, d)
    lam = h.kinetic
    sel = (lam >= rep.sub_window[0]) & (lam <= rep.sub_window[1])
    expect = float(free_mode_value(rho, lam[sel]).min())
    assert abs(rep.observed_min - expect) <= 1e-6
    assert rep.observed_min > rep.c_theory / 2
    # the compact remainder is Hermitian with real spectrum
    assert rep.remainder_eigenvalues.size == g.size


def test_mourre_input_errors():
    g = GridSpec(1, 32, 8.0)
    h = Hamiltonian.build(g, 0.5)
    d = decompose(h)
    A = build_conjugate(g, 0.5)
    with pytest.raises(ValueError):
        mourre_lower_bound(h, A, (2.0, 1.0), make_bump(1.2, 1.3, 1.4, 1.5), d)
    with pytest.raises(ValueError):
        mourre_lower_bound(h, A, (1.0, 2.0), make_bump(0.5, 1.3, 1.4, 1.5), d)
    top = float(d.eigenvalues[-1])
    with pytest.raises(ValueError):
        mourre_lower_bound(h, A, (top + 1, top + 2), make_bump(top + 1.1, top + 1.2, top + 1.3, top + 1.4), d)


def test_choose_sub_window_avoids_eigenvalues():
    g_cut = make_bump(1.0, 1.2, 1.8, 2.0)
    assert choose_sub_window((1.0, 2.0), g_cut, [], 1e-3) == (1.2, 1.8)
    sub = choose_sub_window((1.0, 2.0), g_cut, [1.35], 0.01)
    assert sub == (1.37, 1.8)
    with pytest.raises(ValueError):
        choose_sub_window((1.0, 2.0), make_bump(2.5, 2.6, 2.7, 2.8), [], 0.0)


def test_mourre_report_csv():
    g = GridSpec(1, 64, 16.0)
    h = Hamiltonian.build(g, 0.5)
    rep = mourre_lower_bound(h, build_conjugate(g, 0.5), (1.0, 2.0), make_bump(1.0, 1.2, 1.8, 2.0),
                             decompose(h))
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("# summary c_theory=0.666666")
    assert "margin=" in lines[0]
    assert lines[1] == "mode,lambda,form,bound"
    assert len(lines) == 2 + rep.modes.size


def test_long_range_mourre_bound():
    g = GridSpec(1, 128, 16.0)
    h = Hamiltonian.build(g, 0.5, scenarios.MOURRE_POTENTIAL)
    d = decompose(h)
    from velobound.hamiltonian import point_spectrum_candidates
    rep = mourre_lower_bound(h, build_conjugate(g, 0.5), scenarios.MOURRE_WINDOW,
                             make_bump(*scenarios.MOURRE_CUTOFF), d, point_spectrum_candidates(d))
    assert rep.observed_min >= rep.localized_bound - 0.05


# --- dilation identity -----------------------------------------------------

def test_dilation_free_identity():
    g = GridSpec(1, 64, 16.0)
    resid, ok = dilation_commutator_check(Hamiltonian.build(g, 0.5), None,
                                          interior_packets(g, width=1.2))
    assert resid <= 1e-6 and ok


def test_dilation_scalar_inequality_at_zero():
    g = GridSpec(1, 16, 4.0)
    h = Hamiltonian.build(g, 0.5)
    s0 = 0.0
    assert (2 / 0.5) * h.symbol(s0, 1) * s0 == 0.0 == 2 * h.symbol(s0)


def test_dilation_long_range_residual():
    g = GridSpec(1, 128, 14.0)
    long = LongRangePart(0.3, 0.5)
    h = Hamiltonian.build(g, 0.5, PotentialSpec(long=long))
    resid, ok = dilation_commutator_check(h, long, interior_packets(g, width=1.0))
    assert resid <= 1e-5 and ok


def test_dilation_rejects_short_range_potential():
    g = GridSpec(1, 32, 8.0)
    h = Hamiltonian.build(g, 0.5, scenarios.WELL_POTENTIAL)
    with pytest.raises(ValueError):
        dilation_commutator_check(h, None)
