"""Pseudospectral laboratory for fractional Schrodinger-type operators.

``H = Psi_rho(|D|^2) + V`` with ``Psi_rho(s) = (s + 1)^rho - 1`` on a
periodic grid, with tools for propagation estimates, Mourre-type
commutator bounds and spectral checks.
"""
from .spectral import FractionalSymbol, GridSpec, WaveFunction, eval_symbol
from .potentials import LongRangePart, PotentialSpec, ShortRangePart, SingularPart
from .hamiltonian import Hamiltonian, decompose

__all__ = [
    "FractionalSymbol",
    "GridSpec",
    "WaveFunction",
    "eval_symbol",
    "LongRangePart",
    "PotentialSpec",
    "ShortRangePart",
    "SingularPart",
    "Hamiltonian",
    "decompose",
]

__version__ = "0.1.0"
