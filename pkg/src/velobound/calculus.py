"""Smooth compactly supported cutoffs and functions ``f(H)``.

Two routes to ``f(H)``: exact functional calculus on a dense
eigendecomposition, and a Chebyshev expansion applied through the
three-term recurrence, which only needs ``H`` as a matrix-free operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import expit

from .hamiltonian import Hamiltonian, SpectralDecomposition, apply_H_flat
from .spectral import WaveFunction

CHEB_TAIL_TOL = 1e-10
CHEB_MAX_DEGREE = 10_000


class SpectralBoundsError(RuntimeError):
    pass


class DegreeCapError(RuntimeError):
    pass


def smooth_step(u):
    """``S(u) = w(u) / (w(u) + w(1-u))`` with ``w(u) = exp(-1/u)`` for ``u > 0``.

    Exactly 0 for ``u <= 0`` and exactly 1 for ``u >= 1``.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        out = out.astype(float)
        out[mid] = expit(1.0 / (1.0 - um) - 1.0 / um)
    return out if out.ndim else float(out)


def smooth_step_derivative(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        s = expit(1.0 / (1.0 - um) - 1.0 / um)
        out[mid] = s * (1.0 - s) * (1.0 / um ** 2 + 1.0 / (1.0 - um) ** 2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SmoothCutoff:
    """``C_0^inf`` bump: 0 outside ``(a, b)``, 1 on ``[a_in, b_in]``.

    Infinite ``a``/``b`` give one-sided steps (used for radial windows).
    """

    a: float
    a_in: float
    b_in: float
    b: float

    def __post_init__(self):
        if not (self.a < self.a_in <= self.b_in < self.b):
            raise ValueError(
                f"cutoff needs a < a' <= b' < b, got ({self.a}, {self.a_in}, {self.b_in}, {self.b})")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def plateau(self) -> tuple[float, float]:
        return (self.a_in, self.b_in)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        left = 1.0 if np.isinf(self.a) else smooth_step((x - self.a) / (self.a_in - self.a))
        right = 1.0 if np.isinf(self.b) else smooth_step((self.b - x) / (self.b - self.b_in))
        out = left * right * np.ones_like(x)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if np.isinf(self.a):
            left, dleft = 1.0, 0.0
        else:
            wl = self.a_in - self.a
            left = smooth_step((x - self.a) / wl)
            dleft = smooth_step_derivative((x - self.a) / wl) / wl
        if np.isinf(self.b):
            right, dright = 1.0, 0.0
        else:
            wr = self.b - self.b_in
            right = smooth_step((self.b - x) / wr)
            dright = -smooth_step_derivative((self.b - x) / wr) / wr
        out = (dleft * right + left * dright) * np.ones_like(x)
        return out if out.ndim else float(out)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.a_in, self.b_in, self.b)


def make_bump(a: float, a_in: float, b_in: float, b: float) -> SmoothCutoff:
    return SmoothCutoff(float(a), float(a_in), float(b_in), float(b))


def parse_cutoff(text: str) -> SmoothCutoff:
    """Parse an ``a, a', b', b`` quadruple."""
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 4:
        raise ValueError(f"cutoff needs four numbers, got {text!r}")
    return make_bump(*(float(p) for p in parts))


def avoids_point_spectrum(f: Callable, eigenvalues, support: tuple[float, float] | None = None,
                          tol: float = 1e-12) -> bool:
    """True when every eigenvalue lies outside ``supp f`` or ``f`` vanishes there."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        return True
    if support is None:
        support = getattr(f, "support", (-np.inf, np.inf))
    inside = (lam > support[0]) & (lam < support[1])
    return bool(np.all(np.abs(np.asarray(f(lam[inside]))) <= tol))


# ---------------------------------------------------------------------------
# dense functional calculus

class DenseFunction:
    """``U f(Lambda) U^*`` applied as three products."""

    method = "dense"

    def __init__(self, decomp: SpectralDecomposition, f: Callable):
        self.decomp = decomp
        self.f = f
        self.weights = np.asarray(f(decomp.eigenvalues), dtype=float) * np.ones(len(decomp))

    def apply_flat(self, vec: np.ndarray) -> np.ndarray:
        """Apply to a vector or to the columns of a matrix."""
        U = self.decomp.eigenvectors
        coeffs = U.conj().T @ vec
        w = self.weights if coeffs.ndim == 1 else self.weights[:, None]
        return U @ (w * coeffs)

    def __call__(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction.from_flat(psi.grid, self.apply_flat(psi.flat()))

    def matrix(self) -> np.ndarray:
        U = self.decomp.eigenvectors
        return (U * self.weights) @ U.conj().T


def f_of_H_dense(decomp: SpectralDecomposition, f: Callable) -> DenseFunction:
    return DenseFunction(decomp, f)


# ---------------------------------------------------------------------------
# Chebyshev route

def estimate_spectral_bounds(h: Hamiltonian, iterations: int = 30, margin: float = 0.05,
                             seed: int = 0) -> tuple[float, float]:
    """Power iterations on ``H`` and ``c - H`` with a relative safety margin."""
    rng = np.random.default_rng(seed)
    n = h.grid.size
    c = h.band_top + float(np.abs(h.potential).max())

    def top(op):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            w = op(v)
            lam = float(np.real(np.vdot(v, w)))
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return 0.0
            v = w / nrm
        return lam

    # shift so both operators are positive and the power method finds the extreme ends
    shift = float(np.abs(h.potential).max())
    e_max = top(lambda v: apply_H_flat(h, v) + shift * v) - shift
    e_min = c - top(lambda v: c * v - apply_H_flat(h, v))
    span = max(e_max - e_min, 1e-12)
    return (e_min - margin * span, e_max + margin * span)


def chebyshev_coefficients(f: Callable, bounds: tuple[float, float], degree: int) -> np.ndarray:
    """Coefficients of ``f`` on ``bounds``, truncated where the tail drops below tolerance."""
    if degree > CHEB_MAX_DEGREE:
        raise DegreeCapError(f"degree {degree} exceeds the cap {CHEB_MAX_DEGREE}")
    lo, hi = bounds
    if not hi > lo:
        raise ValueError("bounds must satisfy lo < hi")
    mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
    # a few extra nodes so the tail beyond `degree` is observable
    coeffs = C.chebinterpolate(lambda u: np.asarray(f(mid + rad * u), dtype=float) * np.ones_like(u),
                               degree + 8)
    tail = np.cumsum(np.abs(coeffs[::-1]))[::-1]   # tail[k] = sum_{j >= k} |c_j|
    if tail[degree + 1] >= CHEB_TAIL_TOL:
        raise DegreeCapError(
            f"Chebyshev tail {tail[degree + 1]:.2e} above {CHEB_TAIL_TOL:g} at degree {degree}")
    keep = int(np.argmax(np.append(tail, 0.0) < CHEB_TAIL_TOL))
    return coeffs[:max(keep, 1)]


class ChebyshevFunction:
    """``f(H)`` from the Chebyshev three-term recurrence on states."""

    method = "chebyshev"

    def __init__(self, h: Hamiltonian, f: Callable, degree: int,
                 bounds: tuple[float, float] | None = None):
        self.h = h
        self.f = f
        self.bounds = estimate_spectral_bounds(h) if bounds is None else tuple(bounds)
        self.coeffs = chebyshev_coefficients(f, self.bounds, degree)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def apply_flat(self, vec: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds
        mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
        vec = np.asarray(vec, dtype=complex)

        def scaled(v):
            return (apply_H_flat(self.h, v) - mid * v) / rad

        ref = np.linalg.norm(vec)
        t_prev = vec
        out = self.coeffs[0] * t_prev
        if self.coeffs.size == 1:
            return out
        t_cur = scaled(vec)
        out = out + self.coeffs[1] * t_cur
        for c in self.coeffs[2:]:
            t_prev, t_cur = t_cur, 2.0 * scaled(t_cur) - t_prev
            if np.linalg.norm(t_cur) > 10.0 * ref:
                raise SpectralBoundsError("Chebyshev recurrence blew up; bounds do not enclose the spectrum")
            out = out + c * t_cur
        return out

    def __call__(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction.from_flat(psi.grid, self.apply_flat(psi.flat()))


def f_of_H_chebyshev(h: Hamiltonian, f: Callable, degree: int,
                     bounds: tuple[float, float] | None = None) -> ChebyshevFunction:
    return ChebyshevFunction(h, f, degree, bounds)


def operator_norm_estimate(apply_a: Callable, apply_b: Callable, grid, n_states: int = 20,
                           seed: int = 0) -> float:
    """Largest ``||(A - B) v|| / ||v||`` over random states."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        v = rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size)
        v /= np.linalg.norm(v)
        worst = max(worst, float(np.linalg.norm(apply_a(v) - apply_b(v))))
    return worst


def zero_function(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def unit_function(x):
    return np.ones_like(np.asarray(x, dtype=float))

