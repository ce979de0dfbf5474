"""Periodic grids, discrete Fourier transforms and multiplier application.

Position coordinates are affine on ``[-L, L)`` per axis.  Transforms are the
unscaled forward DFT with a ``1/N**n`` inverse; the grid measure ``h**n`` only
enters through :func:`inner` and :func:`norm`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

MultiplierLike = Union[np.ndarray, Callable[..., np.ndarray]]

#: Fraction of the half width forming the monitored outer shell.
SHELL_FRACTION = 0.1
#: Boundary-mass budget shared by all experiments.
BOUNDARY_MASS_BUDGET = 1e-8


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)**dim``."""

    dim: int
    n_points: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = int(self.n_points)
        if n != self.n_points or n < 8 or n & (n - 1):
            raise ValueError(
                f"n_points must be a power of two and >= 8, got {self.n_points}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_points,) * self.dim

    @property
    def size(self) -> int:
        return self.n_points ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def k_max(self) -> float:
        """Nyquist momentum ``pi / h``."""
        return np.pi / self.spacing

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n_points)

    @cached_property
    def axis_momenta(self) -> np.ndarray:
        """Momenta in FFT order; the Nyquist mode carries ``+pi/h``."""
        n = self.n_points
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = n // 2
        return np.pi * k / self.half_width

    @property
    def ordered_momenta(self) -> np.ndarray:
        """Momenta in ascending physical order, ``k = -N/2+1, ..., N/2``."""
        return np.sort(self.axis_momenta)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def momenta(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis_momenta] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def momentum_sq(self) -> np.ndarray:
        return sum(k * k for k in self.momenta)

    @cached_property
    def shell_mask(self) -> np.ndarray:
        """Outer shell: any coordinate beyond ``(1 - SHELL_FRACTION) L``."""
        cut = (1.0 - SHELL_FRACTION) * self.half_width
        mask = np.zeros(self.shape, dtype=bool)
        for c in self.coords:
            mask |= np.abs(c) > cut
        return mask

    def refined(self) -> "GridSpec":
        return GridSpec(self.dim, 2 * self.n_points, self.half_width)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes on a grid; the array is stored read-only."""

    grid: GridSpec
    values: np.ndarray
    cached_norm: float | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("wave function contains NaN or Inf")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "WaveFunction") -> "WaveFunction":
        _check_same(self, other)
        return WaveFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "WaveFunction") -> "WaveFunction":
        _check_same(self, other)
        return WaveFunction(self.grid, self.values - other.values)

    def __mul__(self, c: complex) -> "WaveFunction":
        return WaveFunction(self.grid, c * self.values)

    __rmul__ = __mul__

    def norm(self) -> float:
        if self.cached_norm is None:
            object.__setattr__(self, "cached_norm", norm(self))
        return self.cached_norm

    def normalized(self) -> "WaveFunction":
        nrm = norm(self)
        if nrm == 0:
            raise ZeroDivisionError("cannot normalize the zero state")
        return WaveFunction(self.grid, self.values / nrm, cached_norm=1.0)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @classmethod
    def from_flat(cls, grid: GridSpec, vec: np.ndarray) -> "WaveFunction":
        return cls(grid, np.asarray(vec).reshape(grid.shape))


def _check_same(psi: WaveFunction, phi: WaveFunction) -> None:
    if psi.grid != phi.grid:
        raise GridMismatchError(f"grid mismatch: {psi.grid} vs {phi.grid}")


def forward(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values)


def inverse(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coeffs)


def multiplier_table(grid: GridSpec, m: MultiplierLike) -> np.ndarray:
    """Sample ``m`` on the momentum lattice (FFT layout)."""
    if callable(m):
        table = np.asarray(m(*grid.momenta))
    else:
        table = np.asarray(m)
    table = np.broadcast_to(table, grid.shape)
    if not np.all(np.isfinite(table)):
        raise ValueError("multiplier is not finite on the momentum lattice")
    return table


def apply_multiplier(psi: WaveFunction, m: MultiplierLike) -> WaveFunction:
    """Return ``F* m(xi) F psi``.

    ``m`` is either a callable taking the momentum component arrays or an
    array already laid out in FFT order.
    """
    table = multiplier_table(psi.grid, m)
    return WaveFunction(psi.grid, inverse(table * forward(psi.values)))


def position_multiply(psi: WaveFunction, w: MultiplierLike) -> WaveFunction:
    """Pointwise product ``w(x) psi(x)`` with affine coordinates."""
    if callable(w):
        field_ = np.asarray(w(*psi.grid.coords))
    else:
        field_ = np.asarray(w)
    field_ = np.broadcast_to(field_, psi.grid.shape)
    if not np.all(np.isfinite(field_)):
        raise ValueError("position weight is not finite on the grid")
    return WaveFunction(psi.grid, field_ * psi.values)


def inner(psi: WaveFunction, phi: WaveFunction) -> complex:
    """L2 pairing ``sum conj(psi) phi h**n``, antilinear in the first slot."""
    _check_same(psi, phi)
    return complex(np.vdot(psi.values, phi.values) * psi.grid.cell_volume)


def norm(psi: WaveFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(psi.values) ** 2) * psi.grid.cell_volume))


def momentum_norm(psi: WaveFunction) -> float:
    """L2 norm computed on the Fourier side (Parseval partner of :func:`norm`)."""
    coeffs = forward(psi.values)
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2) * psi.grid.cell_volume / psi.grid.size))


def boundary_mass(psi: WaveFunction) -> float:
    """Fraction of ``|psi|**2`` in the outer shell of the box."""
    dens = np.abs(psi.values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    return float(dens[psi.grid.shell_mask].sum() / total)


def japanese(x: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + x * x)


# ---------------------------------------------------------------------------
# fractional symbol

@dataclass(frozen=True)
class FractionalSymbol:
    """``Psi_rho(s) = (s + 1)**rho - 1`` on ``s >= 0``."""

    rho: float

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")

    def __call__(self, s, order: int = 0):
        return eval_symbol(self, s, order)

    def group_velocity(self, xi):
        """Classical speed ``2 xi Psi'(xi**2)`` (componentwise in ``xi``)."""
        xi = np.asarray(xi, dtype=float)
        return 2.0 * xi * eval_symbol(self, xi * xi, 1)

    def momentum_at_energy(self, lam):
        """``|xi|`` solving ``Psi(|xi|**2) = lam`` for ``lam >= 0``."""
        lam = np.asarray(lam, dtype=float)
        return np.sqrt((1.0 + lam) ** (1.0 / self.rho) - 1.0)


def eval_symbol(sym: FractionalSymbol, s, order: int = 0):
    """Evaluate ``Psi_rho``, ``Psi'_rho`` or ``Psi''_rho`` at ``s >= 0``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValueError("symbol is only defined for s >= 0")
    rho = sym.rho
    if order == 0:
        # expm1/log1p keeps small s accurate
        out = np.expm1(rho * np.log1p(s_arr))
    elif order == 1:
        out = rho * np.exp((rho - 1.0) * np.log1p(s_arr))
    elif order == 2:
        out = rho * (rho - 1.0) * np.exp((rho - 2.0) * np.log1p(s_arr))
    else:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    return out if np.ndim(s) else float(out)


def symbol_derivative_via_identity(sym: FractionalSymbol, s):
    """``rho / (1 + Psi(s))**((1 - rho)/rho)``, an independent route to ``Psi'``."""
    psi = np.asarray(eval_symbol(sym, s, 0))
    # exp/log1p instead of a power: the exponent is large for small rho
    out = sym.rho * np.exp(-((1.0 - sym.rho) / sym.rho) * np.log1p(psi))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# state builders

def gaussian_packet(grid: GridSpec, center: Sequence[float] | float = 0.0,
                    momentum: Sequence[float] | float = 0.0,
                    width: float = 1.0) -> WaveFunction:
    """Normalized Gaussian ``exp(-|x-c|^2/(4 w^2) + i k.x)``.

    ``width`` is the position standard deviation of ``|psi|**2``.
    """
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    k = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))
    arg = np.zeros(grid.shape, dtype=complex)
    for j, x in enumerate(grid.coords):
        arg += -((x - c[j]) ** 2) / (4.0 * width ** 2) + 1j * k[j] * x
    return WaveFunction(grid, np.exp(arg)).normalized()


def plane_wave(grid: GridSpec, mode: Sequence[int] | int) -> WaveFunction:
    """Normalized lattice plane wave with integer mode index per axis."""
    idx = np.broadcast_to(np.asarray(mode), (grid.dim,))
    phase = np.zeros(grid.shape)
    for j, x in enumerate(grid.coords):
        phase = phase + np.pi * idx[j] * x / grid.half_width
    vals = np.exp(1j * phase) / np.sqrt((2.0 * grid.half_width) ** grid.dim)
    return WaveFunction(grid, vals)


def random_band_limited(grid: GridSpec, k_cut: float, rng: np.random.Generator) -> WaveFunction:
    """Random state whose Fourier support is ``|xi| <= k_cut``."""
    coeffs = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    coeffs[np.sqrt(grid.momentum_sq) > k_cut] = 0.0
    psi = WaveFunction(grid, inverse(coeffs))
    return psi.normalized()


def multiplier_matrix(grid: GridSpec, m: MultiplierLike) -> np.ndarray:
    """Dense matrix of a Fourier multiplier acting on flattened states."""
    table = multiplier_table(grid, m)
    n = grid.size
    if n > 4096:
        raise ValueError(f"dense size cap exceeded: {n} > 4096")
    axes = tuple(range(1, grid.dim + 1))
    eye = np.eye(n, dtype=complex).reshape((n,) + grid.shape)
    cols = np.fft.ifftn(table[None] * np.fft.fftn(eye, axes=axes), axes=axes)
    # row i of `cols` is the image of basis vector i
    return cols.reshape(n, n).T
