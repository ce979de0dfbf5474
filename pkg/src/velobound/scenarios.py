"""Reference scenarios shared by the CLI, the tests and the README.

Each builder returns plain objects so callers can vary one parameter at a
time.  The values below are the documented defaults of the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import SmoothCutoff, make_bump
from .potentials import LongRangePart, PotentialSpec, ShortRangePart, SingularPart
from .spectral import GridSpec, WaveFunction, eval_symbol, FractionalSymbol, gaussian_packet

# 1D well: attractive power-law well with two bound states at rho = 1/2
WELL_GRID = GridSpec(1, 256, 16.0)
WELL_RHO = 0.5
WELL_POTENTIAL = PotentialSpec(short=ShortRangePart(-2.0, 4.0))
WELL_PACKET = dict(center=-3.0, momentum=1.0, width=0.7)
WELL_BUMP = (0.2, 2.0, 3.0, 5.0)

# velocity-bound experiments: free dynamics on a box large enough for t <= 100
VELOCITY_GRID = GridSpec(1, 1024, 128.0)
VELOCITY_RHO = 0.5
PROBE_WIDTHS = (0.5, 0.6, 0.7, 0.85, 1.0)
PROBE_MOMENTA = (1.0, 1.5, 2.0)
MINIMAL_BUMP = (0.1, 0.25, 1.5, 2.5)
# the maximal window starts at this multiple of the speed bound C_f
MAXIMAL_FACTOR = 5.0

# Mourre check with a shallow long-range potential
MOURRE_GRID = GridSpec(1, 256, 32.0)
MOURRE_POTENTIAL = PotentialSpec(long=LongRangePart(0.3, 0.5))
MOURRE_WINDOW = (1.0, 2.0)
MOURRE_CUTOFF = (1.0, 1.2, 1.8, 2.0)

# softened Coulomb singularity for the relative bound
RELBOUND_GRID = GridSpec(1, 512, 16.0)
RELBOUND_RHO = 0.8
RELBOUND_SING = SingularPart(kappa=-1.0, epsilon=0.6, cutoff_radius=1.0)
RELBOUND_DELTAS = (1.0, 0.5, 0.25, 0.125, 0.0625)

# leading-order commutator remainder
REMAINDER_GRID = GridSpec(1, 256, 40.0)
REMAINDER_CHI = (-2.0, -1.0, 1.0, 2.0)
REMAINDER_TIMES = tuple(np.geomspace(2.0, 8.0, 5))


@dataclass(frozen=True)
class Probe:
    label: str
    center: float
    momentum: float
    width: float

    def state(self, grid: GridSpec) -> WaveFunction:
        return gaussian_packet(grid, self.center, self.momentum, self.width)


def probe_family(widths=PROBE_WIDTHS, momenta=PROBE_MOMENTA) -> list[Probe]:
    """Gaussian packets at the origin: every width paired with every momentum."""
    out = []
    for i, w in enumerate(widths):
        for j, k in enumerate(momenta):
            out.append(Probe(f"p{i}{j}", 0.0, float(k), float(w)))
    return out


def full_band_cutoff(grid: GridSpec, rho: float) -> SmoothCutoff:
    """Bump whose plateau covers every kinetic energy of the lattice."""
    top = float(eval_symbol(FractionalSymbol(rho), grid.k_max ** 2 * grid.dim))
    return make_bump(-1.0, -0.5, top + 0.5, top + 1.0)


def velocity_bound_windows(grid: GridSpec, rho: float, f_min: SmoothCutoff,
                           f_max: SmoothCutoff) -> dict:
    """Default windows of the three velocity-bound integrals."""
    from .observables import speed_range, min_group_speed
    from .hamiltonian import Hamiltonian

    h = Hamiltonian.build(grid, rho, None)
    v_lo, v_hi = speed_range(h, f_min)
    _, c_f = speed_range(h, f_max)
    return {
        "theta0": 0.1 * min_group_speed(rho, f_min),
        "Theta": MAXIMAL_FACTOR * c_f,
        "theta": 1.5 * MAXIMAL_FACTOR * c_f,
        "theta1": 0.25 * v_lo,
        "theta2": v_hi,
    }
