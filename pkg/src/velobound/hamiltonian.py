"""The operator ``H = Psi_rho(|D|^2) + V`` on a periodic grid.

Matrix-free application goes through the FFT; on small grids the dense
Hermitian matrix is assembled and diagonalized as the finite-dimensional
oracle used by the propagator and calculus modules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as sla

from .potentials import PotentialSpec, SingularPart, admissibility_check, sample_potential
from .spectral import (
    FractionalSymbol,
    GridMismatchError,
    GridSpec,
    WaveFunction,
    forward,
    gaussian_packet,
    inverse,
    multiplier_matrix,
    random_band_limited,
)

DENSE_CAP = 4096
MATRIX_MAGIC = b"VBHMAT01"


class DenseCapError(ValueError):
    pass


class EigensolverError(RuntimeError):
    pass


@dataclass(eq=False)
class Hamiltonian:
    """Grid, symbol and sampled potential with a cached kinetic table."""

    grid: GridSpec
    symbol: FractionalSymbol
    potential: np.ndarray
    kinetic: np.ndarray = field(default=None, repr=False)
    _dense: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        pot = np.array(np.broadcast_to(self.potential, self.grid.shape), dtype=float)
        if not np.all(np.isfinite(pot)):
            raise ValueError("potential must be finite")
        pot.flags.writeable = False
        self.potential = pot
        if self.kinetic is None:
            table = self.symbol(self.grid.momentum_sq)
        else:
            table = np.array(np.broadcast_to(self.kinetic, self.grid.shape), dtype=float)
        if np.any(table < 0):
            raise ValueError("kinetic table must be nonnegative")
        table.flags.writeable = False
        self.kinetic = table

    @classmethod
    def build(cls, grid: GridSpec, rho: float, potential: PotentialSpec | np.ndarray | None = None,
              kinetic: np.ndarray | None = None) -> "Hamiltonian":
        if potential is None:
            field_ = np.zeros(grid.shape)
        elif isinstance(potential, PotentialSpec):
            field_ = sample_potential(potential, grid)
        else:
            field_ = np.asarray(potential, dtype=float)
        return cls(grid, FractionalSymbol(rho), field_, kinetic)

    @property
    def rho(self) -> float:
        return self.symbol.rho

    @property
    def free(self) -> bool:
        return not np.any(self.potential)

    @property
    def band_top(self) -> float:
        return float(self.kinetic.max())

    def with_potential(self, field_: np.ndarray) -> "Hamiltonian":
        return Hamiltonian(self.grid, self.symbol, field_, self.kinetic)

    def norm_bound(self) -> float:
        """Cheap upper bound on the operator norm."""
        return self.band_top + float(np.abs(self.potential).max())

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = assemble_dense(self)
        return self._dense


def apply_H(h: Hamiltonian, psi: WaveFunction) -> WaveFunction:
    if psi.grid != h.grid:
        raise GridMismatchError("state and Hamiltonian live on different grids")
    kin = inverse(h.kinetic * forward(psi.values))
    return WaveFunction(h.grid, kin + h.potential * psi.values)


def apply_H_flat(h: Hamiltonian, vec: np.ndarray) -> np.ndarray:
    """Action on flattened vectors, for linear-operator wrappers."""
    arr = np.asarray(vec).reshape(h.grid.shape)
    return (inverse(h.kinetic * forward(arr)) + h.potential * arr).reshape(-1)


def assemble_dense(h: Hamiltonian) -> np.ndarray:
    """Dense Hermitian matrix of ``h`` on flattened states."""
    if h.grid.size > DENSE_CAP:
        raise DenseCapError(f"dense size cap exceeded: {h.grid.size} > {DENSE_CAP}")
    mat = multiplier_matrix(h.grid, h.kinetic)
    mat[np.diag_indices_from(mat)] += h.potential.reshape(-1)
    return 0.5 * (mat + mat.conj().T)


def write_dense_matrix(path, mat: np.ndarray) -> None:
    """Row-major little-endian complex128 after the ``VBHMAT01`` magic."""
    mat = np.asarray(mat, dtype="<c16")
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("expected a square matrix")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(np.ascontiguousarray(mat).tobytes(order="C"))


def read_dense_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MATRIX_MAGIC:
        raise ValueError("not a VBHMAT01 file")
    body = np.frombuffer(raw[8:], dtype="<c16")
    n = int(round(np.sqrt(body.size)))
    if n * n != body.size:
        raise ValueError("matrix payload is not square")
    return body.reshape(n, n).copy()


# ---------------------------------------------------------------------------
# diagonalization

@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray   # orthonormal columns (Euclidean)
    residual: float
    orthonormality_defect: float
    matrix_norm: float
    grid: Optional[GridSpec] = None
    band_top: Optional[float] = None
    # kinetic level of half the Nyquist momentum; above it modes are poorly resolved
    reliable_edge: Optional[float] = None

    def __len__(self):
        return self.eigenvalues.size

    def state(self, j: int) -> WaveFunction:
        """Eigenvector ``j`` as an L2-normalized wave function."""
        if self.grid is None:
            raise ValueError("decomposition carries no grid")
        return WaveFunction.from_flat(self.grid, self.eigenvectors[:, j]).normalized()

    def residual_ok(self, rel_tol: float = 1e-9) -> bool:
        return self.residual <= rel_tol * max(self.matrix_norm, 1.0)


def diagonalize(dense: np.ndarray, grid: GridSpec | None = None,
                band_top: float | None = None,
                reliable_edge: float | None = None) -> SpectralDecomposition:
    """Full Hermitian eigendecomposition with residual and orthonormality checks."""
    herm_defect = float(np.abs(dense - dense.conj().T).max()) if dense.size else 0.0
    scale = max(float(np.abs(dense).max()), 1.0)
    if herm_defect > 1e-10 * scale:
        raise ValueError(f"matrix is not Hermitian (defect {herm_defect:.3e})")
    try:
        evals, evecs = scipy.linalg.eigh(dense)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    resid = float(np.linalg.norm(dense @ evecs - evecs * evals, axis=0).max())
    ortho = float(np.abs(evecs.conj().T @ evecs - np.eye(evals.size)).max())
    mnorm = float(np.abs(evals).max())
    decomp = SpectralDecomposition(evals, evecs, resid, ortho, mnorm, grid, band_top,
                                   reliable_edge)
    if ortho > 1e-10 or not decomp.residual_ok():
        raise EigensolverError(
            f"eigendecomposition inaccurate: residual {resid:.3e}, orthonormality {ortho:.3e}")
    return decomp


def decompose(h: Hamiltonian) -> SpectralDecomposition:
    edge = float(h.symbol((0.5 * h.grid.k_max) ** 2))
    return diagonalize(h.dense(), h.grid, h.band_top, edge)


# ---------------------------------------------------------------------------
# relative bound probe

@dataclass(frozen=True)
class RelBoundPoint:
    delta: float
    epsilon_eff: float
    c_eff: float
    # rigorous pair from the resolvent-type factorization: eps <= delta * C
    epsilon_bound: float


def relbound_probe_family(grid: GridSpec, seed: int = 0, n_random: int = 20) -> list[WaveFunction]:
    """Gaussians of several widths and momenta, plus random band-limited states."""
    probes = []
    for width in (0.05, 0.1, 0.25, 0.5, 1.0):
        if width < 2 * grid.spacing:
            continue
        for k0 in (0.0, 2.0, 8.0):
            if k0 > 0.5 * grid.k_max:
                continue
            probes.append(gaussian_packet(grid, 0.0, k0, width))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        probes.append(random_band_limited(grid, 0.5 * grid.k_max, rng))
    return probes


def _weighted_norm(h: Hamiltonian, sing: np.ndarray, delta: float) -> float:
    """Largest singular value of ``V (1 + delta Psi)^-1``."""
    damp = 1.0 / (1.0 + delta * h.kinetic)
    v2 = sing * sing
    if not np.any(v2):
        return 0.0
    shape = h.grid.shape

    def matvec(vec):
        arr = inverse(damp * forward(vec.reshape(shape)))
        arr = v2 * arr
        return inverse(damp * forward(arr)).reshape(-1)

    op = sla.LinearOperator((h.grid.size, h.grid.size), matvec=matvec, dtype=complex)
    if h.grid.size <= 512:
        dense = op @ np.eye(h.grid.size, dtype=complex)
        top = float(np.linalg.eigvalsh(0.5 * (dense + dense.conj().T)).max())
    else:
        top = float(sla.eigsh(op, k=1, which="LA", tol=1e-10,
                              v0=np.ones(h.grid.size, dtype=complex))[0][0])
    return float(np.sqrt(max(top, 0.0)))


def relative_bound_probe(h: Hamiltonian, sing_field: np.ndarray, deltas: Sequence[float],
                         sing_spec: SingularPart | None = None,
                         probes: Sequence[WaveFunction] | None = None,
                         seed: int = 0) -> list[RelBoundPoint]:
    """Empirical ``(epsilon, C)`` pairs in ``||V phi|| <= eps ||Psi phi|| + C ||phi||``.

    For each ``delta`` the constant is ``C = ||V (1 + delta Psi)^-1||`` and
    ``eps`` is the worst excess ``(||V phi|| - C ||phi||)_+ / ||Psi phi||`` over
    the probe family.  Shrinking ``delta`` raises ``C`` and drives ``eps`` down.
    """
    if sing_spec is not None:
        verdict = admissibility_check(sing_spec, h.rho, h.grid.dim)
        if not verdict.admissible:
            raise ValueError(f"inadmissible singular part: {verdict.reason}")
    sing = np.asarray(sing_field, dtype=float)
    if probes is None:
        probes = relbound_probe_family(h.grid, seed)
    dv = h.grid.cell_volume
    stats = []
    for phi in probes:
        v_norm = np.sqrt(np.sum(np.abs(sing * phi.values) ** 2) * dv)
        kin = inverse(h.kinetic * forward(phi.values))
        k_norm = np.sqrt(np.sum(np.abs(kin) ** 2) * dv)
        stats.append((v_norm, k_norm, phi.norm()))
    out = []
    for delta in deltas:
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        c_eff = _weighted_norm(h, sing, delta)
        eps = 0.0
        for v_norm, k_norm, p_norm in stats:
            excess = v_norm - c_eff * p_norm
            if excess > 0 and k_norm > 0:
                eps = max(eps, excess / k_norm)
        out.append(RelBoundPoint(float(delta), float(eps), c_eff, float(delta * c_eff)))
    return out


# ---------------------------------------------------------------------------
# point spectrum

@dataclass
class PointSpectrumReport:
    window: tuple[float, float]
    bound_states: np.ndarray
    embedded_candidates: np.ndarray
    gaps: np.ndarray
    drift: np.ndarray            # relative drift per matched bound state
    fine_bound_states: np.ndarray
    band_edge_flag: bool
    tolerance: float

    @property
    def count(self) -> int:
        return int(self.bound_states.size)

    @property
    def max_drift(self) -> float:
        return float(self.drift.max()) if self.drift.size else 0.0


def _bound_states(decomp: SpectralDecomposition, window) -> tuple[np.ndarray, float]:
    tol = 1e-8 * max(decomp.matrix_norm, 1.0)
    lam = decomp.eigenvalues
    sel = (lam < -tol) & (lam >= window[0]) & (lam <= window[1])
    return lam[sel], tol


def _embedded(decomp: SpectralDecomposition, window, tol: float) -> np.ndarray:
    """Positive eigenvalues whose eigenvectors stay away from the box edge."""
    if decomp.grid is None:
        return np.empty(0)
    mask = decomp.grid.shell_mask.reshape(-1)
    lam = decomp.eigenvalues
    sel = (lam > tol) & (lam >= window[0]) & (lam <= window[1])
    out = []
    for j in np.flatnonzero(sel):
        v = np.abs(decomp.eigenvectors[:, j]) ** 2
        if v[mask].sum() < 1e-6:
            out.append(lam[j])
    return np.asarray(out)


def point_spectrum_report(coarse: SpectralDecomposition, fine: SpectralDecomposition,
                          window: tuple[float, float] = (-np.inf, 0.0)) -> PointSpectrumReport:
    """Bound states below the essential-spectrum proxy, with refinement drift."""
    lo, hi = window
    if lo >= hi:
        raise ValueError("empty window")
    bs_c, tol = _bound_states(coarse, window)
    bs_f, _ = _bound_states(fine, window)
    m = min(bs_c.size, bs_f.size)
    drift = np.abs(bs_c[:m] - bs_f[:m]) / np.maximum(np.abs(bs_f[:m]), tol)
    if bs_c.size != bs_f.size:
        # unmatched eigenvalues count as full drift
        drift = np.concatenate([drift, np.ones(abs(bs_c.size - bs_f.size))])
    flag = coarse.reliable_edge is not None and hi > coarse.reliable_edge
    return PointSpectrumReport((lo, hi), bs_c, _embedded(coarse, window, tol), np.diff(bs_c),
                               drift, bs_f, bool(flag), tol)


def point_spectrum_candidates(decomp: SpectralDecomposition) -> np.ndarray:
    """Bound states plus localized positive eigenvalues: the computed stand-in for ``sigma_pp``."""
    window = (-np.inf, np.inf)
    bound, tol = _bound_states(decomp, window)
    return np.sort(np.concatenate([bound, _embedded(decomp, window, tol)]))
