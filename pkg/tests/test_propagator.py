import numpy as np
import pytest

from velobound import scenarios
from velobound.hamiltonian import Hamiltonian, decompose
from velobound.propagator import (
    centroid_velocity,
    evolve_exact,
    evolve_exact_trace,
    evolve_free,
    evolve_split_step,
)
from velobound.spectral import FractionalSymbol, GridSpec, gaussian_packet, inner, norm


@pytest.fixture(scope="module")
def small_well():
    h = Hamiltonian.build(GridSpec(1, 128, 12.0), 0.5, scenarios.WELL_POTENTIAL)
    return h, decompose(h)


def packet(grid, center=-3.0, k=1.0, w=0.7):
    return gaussian_packet(grid, center, k, w)


def test_free_split_step_equals_exact_multiplier():
    g = GridSpec(1, 256, 30.0)
    h = Hamiltonian.build(g, 0.5)
    psi = packet(g)
    ref = evolve_free(h, psi, [3.0]).states[0]
    for dt in (0.5, 0.01):
        out = evolve_split_step(h, psi, 3.0, dt).states[-1]
        assert norm(out - ref) <= 1e-12


def test_zero_time_is_identity(small_well):
    h, d = small_well
    psi = packet(h.grid)
    tr = evolve_split_step(h, psi, 0.0, 0.01)
    assert norm(tr.states[-1] - psi) == 0.0
    assert norm(evolve_exact(d, psi, 0.0) - psi) <= 1e-10


def test_exact_eigenstate_only_rotates_phase(small_well):
    h, d = small_well
    v = d.state(0)
    out = evolve_exact(d, v, 7.3)
    assert np.max(np.abs(np.abs(out.values) - np.abs(v.values))) <= 1e-10


def test_strang_second_order(small_well):
    h, d = small_well
    psi = packet(h.grid)
    ref = evolve_exact(d, psi, 2.0)
    e1 = norm(evolve_split_step(h, psi, 2.0, 4e-3).states[-1] - ref)
    e2 = norm(evolve_split_step(h, psi, 2.0, 2e-3).states[-1] - ref)
    assert abs(e1 / e2 - 4.0) <= 0.8


def test_unitarity_over_many_steps(small_well):
    h, d = small_well
    psi = packet(h.grid)
    times = np.linspace(0, 100.0, 11)
    tr = evolve_split_step(h, psi, 100.0, 0.01, record_times=times)
    assert np.max(np.abs(tr.norms() - 1.0)) <= 1e-10
    ex = evolve_exact_trace(d, psi, times)
    assert np.max(np.abs(ex.norms() - 1.0)) <= 1e-10


def test_energy_conservation(small_well):
    h, d = small_well
    psi = packet(h.grid)
    times = np.linspace(0, 5.0, 6)
    e = evolve_exact_trace(d, psi, times).energies(h)
    assert np.max(np.abs(e - e[0])) <= 1e-8 * abs(e[0])
    drift = []
    for dt in (0.02, 0.01):
        es = evolve_split_step(h, psi, 5.0, dt, record_times=times).energies(h)
        drift.append(np.max(np.abs(es - es[0])))
    # O(dt^2): halving dt cuts the drift by about 4
    assert drift[1] < drift[0] / 3.0


def test_time_reversal(small_well):
    h, _ = small_well
    psi = packet(h.grid)
    fwd = evolve_split_step(h, psi, 3.0, 0.01).states[-1]
    back = evolve_split_step(h, fwd, -3.0, 0.01).states[-1]
    assert norm(back - psi) <= 1e-9


@pytest.mark.parametrize("rho,k0,expect", [(1.0, 1.0, 2.0), (0.5, 1.0, np.sqrt(2) / 2), (0.5, 0.0, 0.0)])
def test_centroid_velocity_examples(rho, k0, expect):
    g = GridSpec(1, 512, 64.0)
    h = Hamiltonian.build(g, rho)
    tr = evolve_free(h, gaussian_packet(g, 0.0, k0, 4.0), np.linspace(0, 10, 11))
    assert tr.valid
    v = centroid_velocity(tr)[0]
    if expect == 0.0:
        assert abs(v) <= 1e-3
    else:
        assert abs(v - expect) <= 0.02 * expect


def test_centroid_velocity_needs_enough_times():
    g = GridSpec(1, 64, 8.0)
    tr = evolve_free(Hamiltonian.build(g, 0.5), packet(g, 0.0), [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        centroid_velocity(tr)
    tr = evolve_free(Hamiltonian.build(g, 0.5), packet(g, 0.0), [1.0] * 4)
    with pytest.raises(ValueError):
        centroid_velocity(tr)


def test_boundary_mass_flags_trace():
    g = GridSpec(1, 128, 8.0)
    h = Hamiltonian.build(g, 1.0)
    tr = evolve_free(h, gaussian_packet(g, 0.0, 3.0, 0.5), [0.0, 4.0])
    assert not tr.valid
    assert tr.boundary_mass[-1] > 1e-8


def test_split_step_input_errors(small_well):
    h, _ = small_well
    psi = packet(h.grid)
    with pytest.raises(ValueError):
        evolve_split_step(h, psi, 1.0, 0.0)
    with pytest.raises(ValueError):
        evolve_split_step(h, psi, 1.0, 0.1, record_times=[0.5, 2.0])
    with pytest.raises(ValueError):
        evolve_split_step(h, packet(GridSpec(1, 64, 12.0)), 1.0, 0.1)
    with pytest.raises(ValueError):
        evolve_free(h, psi, [1.0])


def test_trace_csv_columns(small_well):
    h, _ = small_well
    tr = evolve_split_step(h, packet(h.grid), 1.0, 0.01, record_times=[0.0, 0.5, 1.0])
    lines = tr.to_csv(h).splitlines()
    assert lines[0] == "t,norm,boundary_mass,x1,energy"
    assert len(lines) == 4
    row = [float(v) for v in lines[2].split(",")]
    assert row[0] == 0.5 and abs(row[1] - 1.0) <= 1e-10
    e = inner(tr.states[1], tr.states[1]).real
    assert abs(e - 1.0) <= 1e-10
    assert abs(row[4] - tr.energies(h)[1]) == 0.0


def test_group_velocity_formula_matches_symbol():
    sym = FractionalSymbol(0.75)
    assert sym.group_velocity(1.5) == pytest.approx(2 * 1.5 * 0.75 * (1 + 2.25) ** -0.25)
