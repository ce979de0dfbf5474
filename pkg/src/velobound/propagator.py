"""Time evolution ``exp(-itH) phi`` and wave-packet kinematics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hamiltonian import Hamiltonian, SpectralDecomposition, apply_H
from .spectral import (
    BOUNDARY_MASS_BUDGET,
    WaveFunction,
    boundary_mass,
    forward,
    inner,
    inverse,
    norm,
)


class DecompositionError(ValueError):
    pass


@dataclass(eq=False)
class EvolutionTrace:
    times: np.ndarray
    states: list[WaveFunction]
    boundary_mass: np.ndarray
    method: str
    dt: float | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.flags

    def norms(self) -> np.ndarray:
        return np.array([norm(s) for s in self.states])

    def centroids(self) -> np.ndarray:
        """``<x_j>(t)`` per recorded time, shape ``(n_times, dim)``."""
        out = []
        for s in self.states:
            dens = np.abs(s.values) ** 2
            total = dens.sum()
            out.append([float((c * dens).sum() / total) for c in s.grid.coords])
        return np.array(out)

    def energies(self, h: Hamiltonian) -> np.ndarray:
        return np.array([inner(s, apply_H(h, s)).real for s in self.states])

    def to_csv(self, h: Hamiltonian | None = None) -> str:
        """CSV with columns ``t, norm, boundary_mass, x_1..x_n, energy``."""
        dim = self.states[0].grid.dim if self.states else 1
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "norm", "boundary_mass"] + [f"x{j + 1}" for j in range(dim)] + ["energy"])
        cents = self.centroids() if self.states else np.empty((0, dim))
        energies = self.energies(h) if h is not None else np.full(len(self.states), np.nan)
        for t, nrm, bm, c, e in zip(self.times, self.norms(), self.boundary_mass, cents, energies):
            writer.writerow([_fmt(t), _fmt(nrm), _fmt(bm)] + [_fmt(v) for v in c] + [_fmt(e)])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def _check_state(values: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"NaN/Inf encountered during evolution at t={t:g}")


def _record(trace_states, trace_bm, psi: WaveFunction, flags: list, t: float) -> None:
    bm = boundary_mass(psi)
    trace_states.append(psi)
    trace_bm.append(bm)
    if bm > BOUNDARY_MASS_BUDGET and not flags:
        flags.append(f"boundary mass {bm:.2e} exceeds budget at t={t:g}")


def evolve_split_step(h: Hamiltonian, psi0: WaveFunction, t_final: float, dt: float,
                      record_times: Sequence[float] | None = None) -> EvolutionTrace:
    """Strang splitting ``e^{-i dt V/2} e^{-i dt Psi(|D|^2)} e^{-i dt V/2}``.

    Each interval between consecutive record times is cut into equal
    substeps no longer than ``dt``; ``t_final`` may be negative.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if psi0.grid != h.grid:
        raise ValueError("state and Hamiltonian live on different grids")
    sign = 1.0 if t_final >= 0 else -1.0
    if record_times is None:
        record_times = [0.0, t_final]
    rec = np.array(sorted(set(float(t) for t in record_times)), dtype=float)
    if sign < 0:
        rec = rec[::-1]
    if np.any(sign * rec < 0) or np.any(sign * rec > sign * t_final + 1e-12):
        raise ValueError("record_times must lie within [0, t_final]")

    vals = psi0.values.copy()
    t = 0.0
    states, bms, flags = [], [], []
    cache = {}
    for tr in rec:
        span = tr - t
        nsteps = int(np.ceil(abs(span) / dt - 1e-9)) if span != 0 else 0
        if nsteps:
            step = span / nsteps
            key = round(step, 15)
            if key not in cache:
                cache[key] = (np.exp(-0.5j * step * h.potential), np.exp(-1j * step * h.kinetic))
            half_v, kin = cache[key]
            for _ in range(nsteps):
                vals = half_v * inverse(kin * forward(half_v * vals))
            _check_state(vals, tr)
        t = tr
        _record(states, bms, WaveFunction(h.grid, vals), flags, t)
    return EvolutionTrace(rec, states, np.array(bms), "split_step", dt, flags)


def evolve_exact(decomp: SpectralDecomposition, psi0: WaveFunction, t: float) -> WaveFunction:
    """``sum_j exp(-i lambda_j t) (v_j, psi0) v_j``."""
    if not decomp.residual_ok():
        raise DecompositionError(f"decomposition residual {decomp.residual:.2e} above tolerance")
    U = decomp.eigenvectors
    coeffs = U.conj().T @ psi0.flat()
    return WaveFunction.from_flat(psi0.grid, U @ (np.exp(-1j * decomp.eigenvalues * t) * coeffs))


def evolve_exact_trace(decomp: SpectralDecomposition, psi0: WaveFunction,
                       times: Sequence[float]) -> EvolutionTrace:
    if not decomp.residual_ok():
        raise DecompositionError(f"decomposition residual {decomp.residual:.2e} above tolerance")
    U = decomp.eigenvectors
    coeffs = U.conj().T @ psi0.flat()
    states, bms, flags = [], [], []
    times = np.asarray(times, dtype=float)
    for t in times:
        psi = WaveFunction.from_flat(psi0.grid, U @ (np.exp(-1j * decomp.eigenvalues * t) * coeffs))
        _record(states, bms, psi, flags, t)
    return EvolutionTrace(times, states, np.array(bms), "dense_exact", None, flags)


def evolve_free(h: Hamiltonian, psi0: WaveFunction, times: Sequence[float]) -> EvolutionTrace:
    """Exact free evolution by the multiplier ``exp(-it Psi(|xi|^2))``; needs ``V = 0``."""
    if not h.free:
        raise ValueError("free evolution requires a vanishing potential")
    coeffs = forward(psi0.values)
    states, bms, flags = [], [], []
    times = np.asarray(times, dtype=float)
    for t in times:
        vals = inverse(np.exp(-1j * t * h.kinetic) * coeffs)
        _record(states, bms, WaveFunction(h.grid, vals), flags, t)
    return EvolutionTrace(times, states, np.array(bms), "free_exact", None, flags)


def centroid_velocity(trace: EvolutionTrace) -> np.ndarray:
    """Least-squares slope of ``<x>(t)`` over the recorded times."""
    if len(trace.times) < 4:
        raise ValueError("need at least 4 recorded times")
    if np.unique(trace.times).size < 2 or np.ptp(trace.times) == 0:
        raise ValueError("degenerate time sampling")
    cents = trace.centroids()
    slopes = np.polyfit(trace.times, cents, 1)[0]
    return np.atleast_1d(slopes)
