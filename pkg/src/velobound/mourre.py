"""Conjugate operators, commutators ``i[H, A]`` and Mourre-type lower bounds.

Two conjugate operators are built as dense matrices on small grids:

* ``A_rho = (1/(2 rho)) (<D>^(2rho-2) D.x + x.D <D>^(2rho-2))``
* the dilation generator ``A = (1/(2 rho)) (D.x + x.D)``

The coordinate operator uses affine coordinates on ``[-L, L)`` and is not
periodic, so commutator identities only hold on states supported away from
the box edge.  All assertions in this module are made on such states.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calculus import SmoothCutoff
from .hamiltonian import DENSE_CAP, DenseCapError, Hamiltonian, SpectralDecomposition
from .spectral import GridSpec, WaveFunction, multiplier_matrix


@dataclass(frozen=True, eq=False)
class ConjugateOperator:
    kind: str
    dense: np.ndarray
    rho: float
    grid: GridSpec
    # max |P - P^*| before the explicit symmetrization
    defect: float

    def apply(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction.from_flat(psi.grid, self.dense @ psi.flat())


def conjugate_multiplier(grid: GridSpec, rho: float, kind: str, j: int) -> np.ndarray:
    """Fourier-side factor of component ``j``: ``<xi>^(2rho-2) xi_j`` or ``xi_j``."""
    xi = grid.momenta[j]
    if kind == "A_rho":
        return (1.0 + grid.momentum_sq) ** (rho - 1.0) * xi
    if kind == "dilation":
        return xi
    raise ValueError(f"unknown conjugate operator kind {kind!r}")


def build_conjugate(grid: GridSpec, rho: float, kind: str = "A_rho") -> ConjugateOperator:
    if grid.size > DENSE_CAP:
        raise DenseCapError(f"dense size cap exceeded: {grid.size} > {DENSE_CAP}")
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    n = grid.size
    P = np.zeros((n, n), dtype=complex)
    for j in range(grid.dim):
        M = multiplier_matrix(grid, conjugate_multiplier(grid, rho, kind, j))
        x = grid.coords[j].reshape(-1)
        # M X + X M with X diagonal
        P += M * x[None, :] + x[:, None] * M
    P /= 2.0 * rho
    defect = float(np.abs(P - P.conj().T).max())
    return ConjugateOperator(kind, 0.5 * (P + P.conj().T), rho, grid, defect)


def commutator_iHA(H: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, float]:
    """``i(HA - AH)`` re-Hermitized; returns the matrix and its anti-Hermitian defect."""
    if H.shape != A.shape:
        raise ValueError(f"size mismatch: {H.shape} vs {A.shape}")
    C = 1j * (H @ A - A @ H)
    defect = float(np.abs(C - C.conj().T).max())
    return 0.5 * (C + C.conj().T), defect


def free_commutator_symbol(grid: GridSpec, rho: float, kind: str = "A_rho") -> np.ndarray:
    """Multiplier of ``i[Psi(|D|^2), A]`` on the lattice.

    ``A_rho``: ``(2/rho^2) Psi'^2 |xi|^2 = 2 (1+|xi|^2)^(2rho-2) |xi|^2``;
    dilation: ``(2/rho) Psi' |xi|^2``.
    """
    s = grid.momentum_sq
    if kind == "A_rho":
        return 2.0 * (1.0 + s) ** (2.0 * rho - 2.0) * s
    return 2.0 * (1.0 + s) ** (rho - 1.0) * s


def c_theory(rho: float, lam1: float, lam2: float) -> float:
    """``2 lam1 / (1 + lam2)^((1-rho)/rho)``."""
    return 2.0 * lam1 / (1.0 + lam2) ** ((1.0 - rho) / rho)


def localized_bound(rho: float, lam1: float, lam2: float) -> float:
    """Constant of the localized inequality near a non-eigenvalue: half of :func:`c_theory`."""
    return lam1 / (1.0 + lam2) ** ((1.0 - rho) / rho)


def free_mode_value(rho: float, lam):
    """Free commutator multiplier at kinetic energy ``lam``.

    With ``|xi|^2 = (1+lam)^(1/rho) - 1`` this is
    ``2 (1+lam)^(2(rho-1)/rho) ((1+lam)^(1/rho) - 1)``.
    """
    lam = np.asarray(lam, dtype=float)
    return 2.0 * (1.0 + lam) ** (2.0 * (rho - 1.0) / rho) * ((1.0 + lam) ** (1.0 / rho) - 1.0)


def scalar_mourre_lhs(rho: float, lam):
    """``2 lam (1+lam)^(-(1-rho)/rho)``, the free bound at energy ``lam``."""
    lam = np.asarray(lam, dtype=float)
    return 2.0 * lam * (1.0 + lam) ** (-(1.0 - rho) / rho)


def extended_commutator(h: Hamiltonian, A: ConjugateOperator) -> np.ndarray:
    """``i[H, A]`` with the kinetic part taken as its exact multiplier.

    The kinetic contribution is the closed-form commutator symbol; the
    potential contribution ``i[V, A]`` is the dense matrix commutator.  On a
    finite box the plain matrix commutator has zero expectation in every
    eigenvector (virial identity), so the exact kinetic form is what carries
    the positivity that the lower bound measures.
    """
    free = multiplier_matrix(h.grid, free_commutator_symbol(h.grid, A.rho, A.kind))
    v = h.potential.reshape(-1)
    # i[V, A] = i (V A - A V) with V diagonal
    pot = 1j * (v[:, None] * A.dense - A.dense * v[None, :])
    C = free + pot
    return 0.5 * (C + C.conj().T)


@dataclass(eq=False)
class MourreReport:
    rho: float
    window: tuple[float, float]
    c_theory: float
    localized_bound: float
    sub_window: tuple[float, float]
    modes: np.ndarray            # eigen-indices spanning the localized subspace
    mode_energies: np.ndarray
    mode_forms: np.ndarray       # <v_j, C v_j>
    observed_min: float
    remainder_eigenvalues: np.ndarray
    M: np.ndarray = field(repr=False)

    @property
    def margin(self) -> float:
        return self.observed_min - self.localized_bound

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# summary c_theory={self.c_theory!r} observed_min={self.observed_min!r} "
                  f"margin={self.margin!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "lambda", "form", "bound"])
        for j, lam, q in zip(self.modes, self.mode_energies, self.mode_forms):
            writer.writerow([int(j), repr(float(lam)), repr(float(q)), repr(self.localized_bound)])
        return buf.getvalue()


def choose_sub_window(window: tuple[float, float], g: SmoothCutoff,
                      point_spectrum: Sequence[float], residual: float) -> tuple[float, float]:
    """Largest piece of the plateau of ``g`` inside ``window`` avoiding point spectrum.

    Each eigenvalue in ``point_spectrum`` excludes a neighbourhood of twice
    the eigenvalue residual.
    """
    lo = max(window[0], g.a_in)
    hi = min(window[1], g.b_in)
    if not hi > lo:
        raise ValueError("cutoff plateau does not meet the window")
    guard = 2.0 * residual
    cuts = sorted(float(e) for e in point_spectrum if lo - guard < e < hi + guard)
    edges = [lo]
    for e in cuts:
        edges.extend([e - guard, e + guard])
    edges.append(hi)
    best = (lo, lo)
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a > best[1] - best[0]:
            best = (a, b)
    if not best[1] > best[0]:
        raise ValueError("no eigenvalue-free sub-window")
    return best


def mourre_lower_bound(h: Hamiltonian, A: ConjugateOperator, window: tuple[float, float],
                       g: SmoothCutoff, decomp: SpectralDecomposition,
                       point_spectrum: Sequence[float] = ()) -> MourreReport:
    """Localized Mourre check on an eigenvalue-free sub-window.

    ``point_spectrum`` lists the eigenvalues regarded as genuine bound or
    embedded states; the discretized continuum is not point spectrum.
    """
    lam1, lam2 = window
    if not (0.0 < lam1 < lam2):
        raise ValueError("window needs 0 < lambda1 < lambda2")
    if g.a < lam1 or g.b > lam2:
        raise ValueError("cutoff support leaks outside the window")
    lam = decomp.eigenvalues
    in_window = (lam > lam1) & (lam < lam2)
    if not np.any(in_window):
        raise ValueError("window contains no spectrum")
    rho = h.rho
    C = extended_commutator(h, A)
    U = decomp.eigenvectors
    gw = np.asarray(g(lam), dtype=float)
    G = (U * gw) @ U.conj().T
    M = G @ C @ G
    ct = c_theory(rho, lam1, lam2)
    K = M - ct * (G @ G)
    K_eigs = np.linalg.eigvalsh(0.5 * (K + K.conj().T))

    sub = choose_sub_window(window, g, point_spectrum, decomp.residual)
    modes = np.flatnonzero((lam >= sub[0]) & (lam <= sub[1]))
    if modes.size == 0:
        raise ValueError("sub-window contains no spectrum")
    V = U[:, modes]
    # on this subspace g(H) acts by nonzero scalars, so the ratio
    # <psi, M psi> / <psi, g^2 psi> reduces to the compression of C
    compressed = V.conj().T @ C @ V
    observed = float(np.linalg.eigvalsh(0.5 * (compressed + compressed.conj().T)).min())
    forms = np.real(np.einsum("ij,ij->j", V.conj(), C @ V))
    return MourreReport(rho, (lam1, lam2), ct, localized_bound(rho, lam1, lam2), sub, modes,
                        lam[modes], forms, observed, K_eigs, M)


def interior_packets(grid: GridSpec, momenta: Sequence[float] = (-1.5, -0.5, 0.0, 0.7, 1.3),
                     width: float | None = None) -> list[WaveFunction]:
    """Gaussian packets centred at the origin, well inside the box (1D or nD)."""
    from .spectral import gaussian_packet
    if width is None:
        width = grid.half_width / 10.0
    return [gaussian_packet(grid, 0.0, k, width) for k in momenta]


def dilation_commutator_check(h: Hamiltonian, long_part, packets: Sequence[WaveFunction] | None = None
                              ) -> tuple[float, bool]:
    """Residual of ``i[H, A] = (2/rho) Psi' |D|^2 - (1/rho) x.grad V_long``.

    Returns the worst ``||(i[H,A] - RHS) psi|| / ||psi||`` over interior
    packets and whether ``(2/rho) Psi'(s) s >= 2 Psi(s)`` holds on every
    lattice mode.
    """
    grid = h.grid
    rho = h.rho
    if long_part is None:
        field_ = np.zeros(grid.shape)
    else:
        field_ = long_part.value(grid.radius ** 2)
    if np.max(np.abs(h.potential - field_)) > 1e-12 * max(1.0, np.max(np.abs(field_))):
        raise ValueError("dilation identity requires a purely long-range potential")
    A = build_conjugate(grid, rho, "dilation")
    Cm, _ = commutator_iHA(h.dense(), A.dense)
    rhs = multiplier_matrix(grid, free_commutator_symbol(grid, rho, "dilation"))
    if long_part is not None:
        xgrad = long_part.radial_derivative_term(grid.radius ** 2).reshape(-1)
        rhs = rhs - np.diag(xgrad / rho)
    if packets is None:
        packets = interior_packets(grid)
    worst = 0.0
    for psi in packets:
        v = psi.flat()
        worst = max(worst, float(np.linalg.norm((Cm - rhs) @ v) / np.linalg.norm(v)))
    s = grid.momentum_sq
    lhs = (2.0 / rho) * h.symbol(s, 1) * s
    ok = bool(np.all(lhs >= 2.0 * h.symbol(s) - 1e-12 * (1.0 + lhs)))
    return worst, ok
