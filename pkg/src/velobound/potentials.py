"""Potential classes: singular, short-range and long-range parts.

A :class:`PotentialSpec` samples to a real field on a grid.  The admissibility
checker encodes which local singularities ``kappa |x|^(-1+eps) F(|x| <= R)``
fall into the weighted ``L^p`` class required of the singular part.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .spectral import GridSpec, japanese


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class SingularPart:
    kappa: float
    epsilon: float = 0.0
    cutoff_radius: float = 1.0
    gamma_sing: float = 2.0
    # None means "one grid spacing", resolved at sampling time
    mollify_radius: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.epsilon < 1.0):
            raise PotentialError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not self.cutoff_radius > 0:
            raise PotentialError("cutoff_radius must be positive")
        if not self.gamma_sing > 1:
            raise PotentialError(f"gamma_sing must exceed 1, got {self.gamma_sing}")
        if self.mollify_radius is not None and self.mollify_radius < 0:
            raise PotentialError("mollify_radius must be nonnegative")


@dataclass(frozen=True)
class ShortRangePart:
    amplitude: float
    gamma_short: float = 2.0
    profile: str = "power"   # "power" or "bump"
    radius: float = 1.0      # support radius of the bump profile

    def __post_init__(self):
        if not self.gamma_short > 1:
            raise PotentialError(f"gamma_short must exceed 1, got {self.gamma_short}")
        if self.profile not in ("power", "bump"):
            raise PotentialError(f"unknown short-range profile {self.profile!r}")
        if not self.radius > 0:
            raise PotentialError("bump radius must be positive")


@dataclass(frozen=True)
class LongRangePart:
    amplitude: float
    gamma_long: float = 0.5

    def __post_init__(self):
        if not self.gamma_long > 0:
            raise PotentialError(f"gamma_long must be positive, got {self.gamma_long}")

    def value(self, r2: np.ndarray) -> np.ndarray:
        return self.amplitude * (1.0 + r2) ** (-0.5 * self.gamma_long)

    def radial_derivative_term(self, r2: np.ndarray) -> np.ndarray:
        """``x . grad V_long = -a gamma |x|^2 <x>^(-gamma-2)``."""
        return -self.amplitude * self.gamma_long * r2 * (1.0 + r2) ** (-0.5 * self.gamma_long - 1.0)


@dataclass(frozen=True)
class PotentialSpec:
    """``V = V_sing + V_short + V_long (+ custom)``; absent parts are ``None``."""

    sing: Optional[SingularPart] = None
    short: Optional[ShortRangePart] = None
    long: Optional[LongRangePart] = None
    custom: Optional[Callable[..., np.ndarray]] = None
    # growth-type potentials (harmonic confinement and the like) are refused
    growth: Optional[float] = None

    def __post_init__(self):
        if self.growth is not None:
            raise PotentialError(
                "growing potentials are only covered by the maximal velocity "
                "bound and are not supported")

    @property
    def is_zero(self) -> bool:
        return all(p is None for p in (self.sing, self.short, self.long, self.custom))

    @property
    def long_range_only(self) -> bool:
        return self.sing is None and self.short is None and self.custom is None

    def scaled(self, c: float) -> "PotentialSpec":
        """Every part multiplied by ``c``."""
        sing = short = long = custom = None
        if self.sing is not None:
            sing = SingularPart(c * self.sing.kappa, self.sing.epsilon, self.sing.cutoff_radius,
                                self.sing.gamma_sing, self.sing.mollify_radius)
        if self.short is not None:
            short = ShortRangePart(c * self.short.amplitude, self.short.gamma_short,
                                   self.short.profile, self.short.radius)
        if self.long is not None:
            long = LongRangePart(c * self.long.amplitude, self.long.gamma_long)
        if self.custom is not None:
            base = self.custom
            custom = lambda *x: c * np.asarray(base(*x))  # noqa: E731
        return PotentialSpec(sing, short, long, custom)


def _smooth_step(u):
    from .calculus import smooth_step
    return smooth_step(u)


def sample_singular(part: SingularPart, grid: GridSpec) -> np.ndarray:
    mollify = grid.spacing if part.mollify_radius is None else part.mollify_radius
    r = grid.radius
    if mollify == 0:
        if np.any((r == 0) & (r <= part.cutoff_radius)):
            raise PotentialError(
                "unmollified singularity sits on a grid point; set mollify_radius > 0")
        rr = r
    else:
        rr = np.maximum(r, mollify)
    with np.errstate(divide="ignore"):
        vals = part.kappa * rr ** (-1.0 + part.epsilon)
    return np.where(r <= part.cutoff_radius, vals, 0.0)


def sample_short(part: ShortRangePart, grid: GridSpec) -> np.ndarray:
    r = grid.radius
    if part.profile == "power":
        return part.amplitude * japanese(r) ** (-part.gamma_short)
    # plateau on |x| <= R/2, vanishing for |x| >= R
    half = 0.5 * part.radius
    return part.amplitude * _smooth_step((part.radius - r) / half)


def sample_potential(spec: PotentialSpec, grid: GridSpec) -> np.ndarray:
    """Real field ``V(x)`` on the grid."""
    field = np.zeros(grid.shape)
    if spec.sing is not None:
        field = field + sample_singular(spec.sing, grid)
    if spec.short is not None:
        field = field + sample_short(spec.short, grid)
    if spec.long is not None:
        field = field + spec.long.value(grid.radius ** 2)
    if spec.custom is not None:
        extra = np.broadcast_to(np.asarray(spec.custom(*grid.coords), dtype=float), grid.shape)
        field = field + extra
    if not np.all(np.isfinite(field)):
        raise PotentialError("sampled potential is not finite")
    return field


# ---------------------------------------------------------------------------
# admissibility of local singularities

@dataclass(frozen=True)
class Verdict:
    admissible: bool
    reason: str
    p_low: Optional[float] = None
    p_high: Optional[float] = None
    # p_exact is set when the class is L^2 itself
    p_exact: Optional[float] = None

    def contains(self, p: float) -> bool:
        if not self.admissible:
            return False
        if self.p_exact is not None:
            return p == self.p_exact
        return self.p_low < p < self.p_high

    def representative_p(self) -> float:
        if self.p_exact is not None:
            return self.p_exact
        return 0.5 * (self.p_low + self.p_high)


def lp_exponent_rule(rho: float, dim: int) -> str:
    """Which integrability the singular part needs: ``"L2"`` or ``"p>n/(2rho)"``."""
    return "L2" if dim < 4 * rho else "p>n/(2rho)"


def admissibility_check(sing: SingularPart | tuple[float, float], rho: float, dim: int) -> Verdict:
    """Classify ``|x|^(-1+eps) F(|x| <= R)`` for the given ``rho`` and dimension.

    The verdict depends on ``(eps, rho, dim)`` only.
    """
    eps = sing.epsilon if isinstance(sing, SingularPart) else float(sing[0])
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    n = dim
    l2_note = " (the p=2 branch is unreachable for rho <= 1/4)" if rho <= 0.25 else ""

    if eps > 0:
        if 1.0 - 2.0 * rho < eps < 1.0:
            return Verdict(True, "softened singularity with 1-2rho < eps < 1" + l2_note,
                           p_low=n / (2.0 * rho), p_high=n / (1.0 - eps))
        return Verdict(False, f"softened singularity needs eps > 1-2rho = {1 - 2 * rho:g}")

    # pure Coulomb
    if rho <= 0.5:
        return Verdict(False, "Coulomb singularity is not admitted for rho <= 1/2" + l2_note)
    if rho > 0.75:
        if n == 3:
            return Verdict(True, "Coulomb singularity in L^2 for 3/4 < rho <= 1, n = 3", p_exact=2.0)
        return Verdict(False, f"|x|^-1 is not in L^2 near 0 in dimension {n}")
    # 1/2 < rho <= 3/4
    if n >= 3:
        return Verdict(True, "Coulomb singularity in L^p with n/(2rho) < p < n",
                       p_low=n / (2.0 * rho), p_high=float(n))
    return Verdict(False, f"|x|^-1 is not in L^2 near 0 in dimension {n}")


def weighted_lp_norm(field: np.ndarray, gamma: float, p: float, grid: GridSpec) -> float:
    """``(sum |<x>^gamma field|^p h^n)^(1/p)``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    weighted = np.abs(japanese(grid.radius) ** gamma * np.asarray(field))
    return float((np.sum(weighted ** p) * grid.cell_volume) ** (1.0 / p))
