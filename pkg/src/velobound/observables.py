"""Propagation observables and the ``dt/t`` velocity-bound integrals.

The three integrals measure, for ``psi_t = f(H) exp(-itH) phi``:

* minimal:  ``int ||F(|x|/2t < theta0) psi_t||^2 dt/t``
* maximal:  ``int ||F(Theta <= |x|/2t < theta) psi_t||^2 dt/t``
* middle:   ``int ||F(theta1 <= |x|/2t < theta2) (Psi'(|D|^2) D - x/2t) psi_t||^2 dt/t``

Each is reported on a log-spaced time grid as a cumulative trapezoid in
``log t``.  Sharp windows are half-open so adjacent windows add up exactly.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import integrate, optimize

from .calculus import (
    SmoothCutoff,
    avoids_point_spectrum,
    f_of_H_chebyshev,
    smooth_step,
    smooth_step_derivative,
)
from .hamiltonian import (
    DENSE_CAP,
    Hamiltonian,
    SpectralDecomposition,
    decompose,
    point_spectrum_candidates,
)
from .propagator import evolve_split_step
from .spectral import (
    BOUNDARY_MASS_BUDGET,
    FractionalSymbol,
    GridSpec,
    WaveFunction,
    boundary_mass,
    forward,
    inner,
    inverse,
    multiplier_matrix,
    position_multiply,
)

PER_DECADE = 16
REPORT_MAGIC = "# velobound v1"
REPORT_COLUMNS = ("t", "integrand", "cumulative", "boundary_mass")
REMAINDER_FLOOR = 1e-13


class PointSpectrumOverlapError(ValueError):
    pass


class ReportFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# cutoffs in |x| / 2t

@dataclass(frozen=True)
class VelocityWindow:
    """Window ``theta_low <= |x|/2t < theta_high``; ``smoothing`` is a transition width or None."""

    theta_low: float
    theta_high: float = math.inf
    smoothing: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.theta_low < self.theta_high):
            raise ValueError(
                f"window needs 0 <= theta_low < theta_high, got ({self.theta_low}, {self.theta_high})")
        if self.smoothing is not None and not self.smoothing > 0:
            raise ValueError("smoothing width must be positive")

    def weight(self, u):
        """Weight as a function of ``u = |x|/2t``."""
        u = np.asarray(u, dtype=float)
        if self.smoothing is None:
            # half-open so that adjacent windows add up exactly
            return ((u >= self.theta_low) & (u < self.theta_high)).astype(float)
        d = self.smoothing
        left = 1.0 if self.theta_low == 0.0 else smooth_step((u - self.theta_low + d) / d)
        right = 1.0 if math.isinf(self.theta_high) else smooth_step((self.theta_high + d - u) / d)
        return left * right * np.ones_like(u)


def radial_cutoff(grid: GridSpec, t: float, window: VelocityWindow) -> np.ndarray:
    if not t > 0:
        raise ValueError("t must be positive")
    return window.weight(grid.radius / (2.0 * t))


def flux_deviation(psi: WaveFunction, rho: float, t: float) -> list[WaveFunction]:
    """Components of ``Psi'(|D|^2) D psi - (x / 2t) psi``."""
    if not t > 0:
        raise ValueError("t must be positive")
    grid = psi.grid
    sym = FractionalSymbol(rho)
    dpsi = sym(grid.momentum_sq, 1)
    coeffs = forward(psi.values)
    out = []
    for xi, x in zip(grid.momenta, grid.coords):
        vals = inverse(dpsi * xi * coeffs) - x / (2.0 * t) * psi.values
        out.append(WaveFunction(grid, vals))
    return out


def speed_range(h: Hamiltonian, f: SmoothCutoff) -> tuple[float, float]:
    """Min and max of ``2|xi| Psi'(|xi|^2)`` over lattice modes with kinetic energy in ``supp f``."""
    s = h.grid.momentum_sq
    lam = h.kinetic
    inside = (lam > f.a) & (lam < f.b)
    if not np.any(inside):
        raise ValueError("no lattice mode has kinetic energy inside supp f")
    speed = 2.0 * np.sqrt(s) * h.symbol(s, 1)
    return float(speed[inside].min()), float(speed[inside].max())


def min_group_speed(rho: float, f: SmoothCutoff) -> float:
    """``v_min`` over the continuum ``Psi(|xi|^2) in supp f``; the speed is increasing in energy."""
    sym = FractionalSymbol(rho)
    lam = max(f.a, 0.0)
    return float(sym.group_velocity(sym.momentum_at_energy(lam)))


# ---------------------------------------------------------------------------
# localizer R(x) = r(|x|^2)

class RFunction:
    """Convex radial localizer with ``r = theta^2/4`` near 0 and ``r = s/2`` for ``s > theta^2``.

    ``r'(s) = S((s - m)/w) / 2`` with ``w = 3 theta^2 / 8``; the shift ``m`` is
    found by bisection so that ``r`` joins ``s/2`` continuously at ``theta^2``.
    """

    def __init__(self, theta: float):
        if not theta > 0:
            raise ValueError("theta must be positive")
        self.theta = float(theta)
        th2 = self.theta ** 2
        self.w = 3.0 * th2 / 8.0
        self.start = th2 / 4.0

        def excess(m):
            # S vanishes below m >= theta^2/4, so the area starts at u = 0
            area = 0.5 * self.w * self._step_integral((th2 - m) / self.w)
            return self.start + area - th2 / 2.0

        # r' must vanish below theta^2/4 and equal 1/2 above theta^2
        self.m = optimize.bisect(excess, self.start, th2 - self.w, xtol=1e-15 * th2, maxiter=200)

    @staticmethod
    def _step_integral(u: float) -> float:
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return u - 0.5
        val, _ = integrate.quad(smooth_step, 0.0, u, epsabs=1e-15, epsrel=1e-14)
        return val

    def r(self, s):
        s_arr = np.asarray(s, dtype=float)
        u = (s_arr - self.m) / self.w
        # int_0^u S = u - 1/2 once u >= 1, since S(v) + S(1 - v) = 1
        integ = np.vectorize(self._step_integral, otypes=[float])(u)
        out = self.start + 0.5 * self.w * integ
        return out if out.ndim else float(out)

    def dr(self, s):
        return 0.5 * smooth_step((np.asarray(s, dtype=float) - self.m) / self.w)

    def d2r(self, s):
        return 0.5 * smooth_step_derivative((np.asarray(s, dtype=float) - self.m) / self.w) / self.w

    def closure_defect(self) -> float:
        return abs(self.r(self.theta ** 2) - self.theta ** 2 / 2.0)

    def R(self, x):
        """``r(|x|^2)`` for points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        return self.r(np.sum(x * x, axis=-1))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1)
        return 2.0 * np.asarray(self.dr(s))[..., None] * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1)
        n = x.shape[-1]
        eye = np.eye(n)
        return (2.0 * np.asarray(self.dr(s))[..., None, None] * eye
                + 4.0 * np.asarray(self.d2r(s))[..., None, None] * x[..., :, None] * x[..., None, :])


# ---------------------------------------------------------------------------
# reports

@dataclass(eq=False)
class ExperimentReport:
    times: np.ndarray
    integrand: np.ndarray
    cumulative: np.ndarray
    boundary_mass: np.ndarray
    metadata: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.flags

    def cumulative_at(self, t: float) -> float:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if idx.size == 0:
            raise KeyError(f"t={t:g} is not a grid point of this report")
        return float(self.cumulative[idx[0]])

    def plateau_excess(self, T: float) -> float:
        """``I(2T)/I(T) - 1``."""
        base = self.cumulative_at(T)
        if base <= 0.0:
            raise ZeroDivisionError("I(T) vanishes; the plateau ratio is undefined")
        return self.cumulative_at(2.0 * T) / base - 1.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(REPORT_MAGIC + "\n")
        for key, val in self.metadata.items():
            buf.write(f"# {key}={val}\n")
        for flag in self.flags:
            buf.write(f"# flag={flag}\n")
        buf.write(",".join(REPORT_COLUMNS) + "\n")
        for row in zip(self.times, self.integrand, self.cumulative, self.boundary_mass):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        lines = text.splitlines()
        if not lines or lines[0].strip() != REPORT_MAGIC:
            raise ReportFormatError(f"missing {REPORT_MAGIC!r} header")
        meta, flags, i = {}, [], 1
        while i < len(lines) and lines[i].startswith("#"):
            body = lines[i][1:].strip()
            key, sep, val = body.partition("=")
            if not sep:
                raise ReportFormatError(f"bad metadata line {lines[i]!r}")
            if key == "flag":
                flags.append(val)
            else:
                meta[key] = val
            i += 1
        if i >= len(lines) or tuple(c.strip() for c in lines[i].split(",")) != REPORT_COLUMNS:
            raise ReportFormatError("column header must be " + ",".join(REPORT_COLUMNS))
        rows = []
        for ln in lines[i + 1:]:
            if not ln.strip():
                continue
            parts = ln.split(",")
            if len(parts) != len(REPORT_COLUMNS):
                raise ReportFormatError(f"row has {len(parts)} fields: {ln!r}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ReportFormatError(f"non-numeric row {ln!r}") from exc
        arr = np.array(rows, dtype=float).reshape(-1, len(REPORT_COLUMNS))
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], meta, flags)


def log_time_grid(t_end: float, marks: Sequence[float] = (), per_decade: int = PER_DECADE,
                  t_start: float = 1.0) -> np.ndarray:
    """Geometric grid on ``[t_start, t_end]`` containing every mark exactly."""
    if not t_end > t_start > 0:
        raise ValueError("need 0 < t_start < t_end")
    pts = sorted({float(t_start), float(t_end)} | {float(m) for m in marks if t_start < m < t_end})
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, math.ceil(per_decade * math.log10(b / a) - 1e-9))
        seg = a * (b / a) ** (np.arange(1, n + 1) / n)
        seg[-1] = b
        out.extend(seg.tolist())
    return np.array(out)


def _cumulative_log_trapezoid(times: np.ndarray, vals: np.ndarray) -> np.ndarray:
    if times.size == 0:
        return np.zeros(0)
    steps = np.diff(np.log(times)) * 0.5 * (vals[1:] + vals[:-1])
    return np.concatenate([[0.0], np.cumsum(steps)])


# ---------------------------------------------------------------------------
# evolved, energy-filtered states

def _filtered_states(h: Hamiltonian, f: Callable, phi: WaveFunction, times: np.ndarray,
                     decomp: SpectralDecomposition | None, dt: float,
                     cheb_degree: int) -> Iterator[tuple[float, WaveFunction, float]]:
    """Yield ``(t, f(H) exp(-itH) phi, boundary mass of exp(-itH) phi)``."""
    grid = h.grid
    if h.free:
        coeffs = forward(phi.values)
        fw = np.asarray(f(h.kinetic), dtype=float) * np.ones(grid.shape)
        for t in times:
            prop = np.exp(-1j * t * h.kinetic) * coeffs
            full = WaveFunction(grid, inverse(prop))
            yield t, WaveFunction(grid, inverse(fw * prop)), boundary_mass(full)
        return
    if decomp is not None:
        U = decomp.eigenvectors
        c = U.conj().T @ phi.flat()
        fw = np.asarray(f(decomp.eigenvalues), dtype=float) * np.ones(len(decomp))
        for t in times:
            ph = np.exp(-1j * t * decomp.eigenvalues) * c
            full = WaveFunction.from_flat(grid, U @ ph)
            yield t, WaveFunction.from_flat(grid, U @ (fw * ph)), boundary_mass(full)
        return
    # scalable path: f(H) commutes with the propagator, so filter first
    filt = f_of_H_chebyshev(h, f, cheb_degree)(phi)
    trace = evolve_split_step(h, filt, float(times[-1]), dt, record_times=np.concatenate([[0.0], times]))
    for t, psi, bm in zip(trace.times[1:], trace.states[1:], trace.boundary_mass[1:]):
        yield t, psi, bm


def _check_point_spectrum(h: Hamiltonian, f: SmoothCutoff, decomp: SpectralDecomposition | None,
                          meta: dict) -> None:
    if h.free:
        meta["sigma_pp_check"] = "free"
        return
    if decomp is None:
        meta["sigma_pp_check"] = "skipped (no decomposition)"
        return
    pp = point_spectrum_candidates(decomp)
    if not avoids_point_spectrum(f, pp, f.support):
        bad = [float(e) for e in pp if f.a < e < f.b]
        raise PointSpectrumOverlapError(f"supp f meets computed point spectrum at {bad}")
    meta["sigma_pp_check"] = f"passed ({pp.size} candidates)"


def _resolve_decomp(h: Hamiltonian, decomp):
    if h.free or decomp is not None:
        return decomp
    if h.grid.size <= DENSE_CAP:
        return decompose(h)
    return None


def _run_integral(h: Hamiltonian, f: SmoothCutoff, phi: WaveFunction, times: np.ndarray,
                  integrand: Callable[[float, WaveFunction], float], meta: dict,
                  decomp, dt: float, cheb_degree: int) -> ExperimentReport:
    ts, vals, bms, flags = [], [], [], []
    for t, psi, bm in _filtered_states(h, f, phi, times, decomp, dt, cheb_degree):
        ts.append(t)
        vals.append(integrand(t, psi))
        bms.append(bm)
        if bm > BOUNDARY_MASS_BUDGET:
            flags.append(f"boundary mass {bm:.3e} above {BOUNDARY_MASS_BUDGET:g} at t={t:g}")
            break
    ts, vals = np.array(ts), np.array(vals)
    return ExperimentReport(ts, vals, _cumulative_log_trapezoid(ts, vals), np.array(bms), meta, flags)


def _base_meta(kind: str, h: Hamiltonian, f: SmoothCutoff, times: np.ndarray) -> dict:
    g = h.grid
    return {
        "kind": kind,
        "rho": repr(h.rho),
        "grid": f"dim={g.dim} n_points={g.n_points} half_width={g.half_width!r}",
        "cutoff": ",".join(repr(v) for v in f.as_tuple()),
        "t_range": f"{times[0]!r},{times[-1]!r}",
        "points_per_decade": str(PER_DECADE),
    }


def _default_times(T: float, schedule) -> np.ndarray:
    if schedule is not None:
        return np.asarray(schedule, dtype=float)
    return log_time_grid(2.0 * T, marks=(T,))


def minimal_bound_integral(h: Hamiltonian, f: SmoothCutoff, theta0: float | None, phi: WaveFunction,
                           T: float, schedule=None, decomp=None, dt: float = 0.01,
                           cheb_degree: int = 2000) -> ExperimentReport:
    """``int_1^t ||F(|x|/2t < theta0) f(H) e^{-itH} phi||^2 dt/t`` on a log grid up to ``2T``.

    ``theta0=None`` selects ``0.1 v_min`` with ``v_min`` the smallest group
    speed on ``supp f``.
    """
    if f.a < 0:
        raise ValueError("f must be supported in (0, inf)")
    times = _default_times(T, schedule)
    meta = _base_meta("minimal", h, f, times)
    decomp = _resolve_decomp(h, decomp)
    _check_point_spectrum(h, f, decomp, meta)
    if theta0 is None:
        theta0 = 0.1 * min_group_speed(h.rho, f)
    if theta0 < 0:
        raise ValueError("theta0 must be nonnegative")
    meta["theta0"] = repr(float(theta0))
    r = h.grid.radius
    vol = h.grid.cell_volume

    def integrand(t, psi):
        # half-open like every sharp window: theta0 = 0 selects nothing
        w = r < 2.0 * t * theta0
        return float(np.sum(np.abs(psi.values[w]) ** 2) * vol)

    return _run_integral(h, f, phi, times, integrand, meta, decomp, dt, cheb_degree)


def maximal_bound_integral(h: Hamiltonian, f: SmoothCutoff, Theta: float, theta: float,
                           phi: WaveFunction, T: float, schedule=None, decomp=None,
                           dt: float = 0.01, cheb_degree: int = 2000) -> ExperimentReport:
    """Mass in ``Theta <= |x|/2t <= theta``; requires ``Theta`` above the speed bound ``C_f``."""
    _, c_f = speed_range(h, f)
    if not Theta > c_f:
        raise ValueError(f"Theta={Theta!r} must exceed C_f={c_f!r}")
    if not theta > Theta:
        raise ValueError("theta must exceed Theta")
    times = _default_times(T, schedule)
    meta = _base_meta("maximal", h, f, times)
    meta["Theta"] = repr(float(Theta))
    meta["theta"] = repr(float(theta))
    meta["C_f"] = repr(c_f)
    decomp = _resolve_decomp(h, decomp)
    window = VelocityWindow(Theta, theta)
    vol = h.grid.cell_volume

    def integrand(t, psi):
        w = radial_cutoff(h.grid, t, window)
        return float(np.sum(w * np.abs(psi.values) ** 2) * vol)

    return _run_integral(h, f, phi, times, integrand, meta, decomp, dt, cheb_degree)


def middle_bound_integral(h: Hamiltonian, f: SmoothCutoff, theta1: float, theta2: float,
                          phi: WaveFunction, T: float, schedule=None, decomp=None,
                          dt: float = 0.01, cheb_degree: int = 2000) -> ExperimentReport:
    """Flux deviation ``Psi'(|D|^2) D - x/2t`` measured inside ``theta1 <= |x|/2t <= theta2``."""
    if not (0.0 < theta1 < theta2):
        raise ValueError("need 0 < theta1 < theta2")
    times = _default_times(T, schedule)
    meta = _base_meta("middle", h, f, times)
    meta["theta1"] = repr(float(theta1))
    meta["theta2"] = repr(float(theta2))
    decomp = _resolve_decomp(h, decomp)
    _check_point_spectrum(h, f, decomp, meta)
    window = VelocityWindow(theta1, theta2)
    vol = h.grid.cell_volume

    def integrand(t, psi):
        w = radial_cutoff(h.grid, t, window)
        return float(sum(np.sum(w * np.abs(c.values) ** 2) for c in flux_deviation(psi, h.rho, t)) * vol)

    return _run_integral(h, f, phi, times, integrand, meta, decomp, dt, cheb_degree)


# ---------------------------------------------------------------------------
# leading-order commutator expansion

@dataclass
class RemainderFit:
    times: np.ndarray
    norms: np.ndarray
    slope: float
    at_floor: bool

    @property
    def reliable(self) -> bool:
        return not self.at_floor


def commutator_remainder_decay(chi: SmoothCutoff, rho: float, t_list: Sequence[float],
                               grid: GridSpec | None = None) -> RemainderFit:
    """Norm of ``[Psi(|D|^2), chi_t] - [|D|^2, chi_t] Psi'(|D|^2)`` with ``chi_t = chi(|x|/2t)``.

    The norm is restricted to interior states (supported off the outer
    shell of the box), where the affine coordinate is a faithful model of
    the line.  The log-log slope against ``t`` is fitted by least squares.
    """
    t_arr = np.asarray(t_list, dtype=float)
    if t_arr.size < 5:
        raise ValueError("need at least 5 times")
    if grid is None:
        grid = GridSpec(1, 256, 40.0)
    if grid.size > DENSE_CAP:
        raise ValueError(f"dense size cap exceeded: {grid.size} > {DENSE_CAP}")
    sym = FractionalSymbol(rho)
    s = grid.momentum_sq
    P = multiplier_matrix(grid, sym(s))
    L2 = multiplier_matrix(grid, s)
    dP = multiplier_matrix(grid, sym(s, 1))
    interior = ~grid.shell_mask.reshape(-1)
    r = grid.radius.reshape(-1)
    norms = []
    for t in t_arr:
        c = chi(r / (2.0 * t))
        comm_p = P * c[None, :] - c[:, None] * P
        comm_l = L2 * c[None, :] - c[:, None] * L2
        rem = comm_p - comm_l @ dP
        norms.append(float(np.linalg.norm(rem[:, interior], 2)))
    norms = np.array(norms)
    at_floor = bool(np.any(norms < REMAINDER_FLOOR))
    slope = float("nan") if at_floor else float(np.polyfit(np.log(t_arr), np.log(norms), 1)[0])
    return RemainderFit(t_arr, norms, slope, at_floor)


# ---------------------------------------------------------------------------
# Heisenberg derivative probes

@dataclass
class HeisenbergSamples:
    times: np.ndarray
    derivative: np.ndarray

    def max_after(self, t_min: float) -> float:
        sel = self.times >= t_min
        return float(self.derivative[sel].max()) if np.any(sel) else -math.inf


def heisenberg_probe(observable: Callable[[float, WaveFunction], WaveFunction], trace,
                     max_step: float = 0.1) -> HeisenbergSamples:
    """Central differences of ``<psi(t), P(t) psi(t)>`` along a recorded trace.

    ``observable(t, psi)`` returns ``P(t) psi``.
    """
    if not trace.valid:
        raise ValueError(f"trace is flagged: {trace.flags}")
    times = np.asarray(trace.times, dtype=float)
    if times.size < 3:
        raise ValueError("need at least 3 recorded times")
    steps = np.diff(times)
    if np.max(np.abs(steps)) > max_step * (1.0 + 1e-9):
        raise ValueError(f"recording step {np.max(np.abs(steps)):g} exceeds {max_step:g}")
    expect = np.array([inner(psi, observable(t, psi)).real for t, psi in zip(times, trace.states)])
    deriv = (expect[2:] - expect[:-2]) / (times[2:] - times[:-2])
    return HeisenbergSamples(times[1:-1], deriv)


def escape_observable(window_low: float, width: float) -> Callable[[float, WaveFunction], WaveFunction]:
    """``X(|x|/2t)`` with a smooth step rising from ``window_low`` to ``window_low + width``."""
    if not width > 0:
        raise ValueError("width must be positive")

    def apply(t, psi):
        u = psi.grid.radius / (2.0 * t)
        return position_multiply(psi, smooth_step((u - window_low) / width))

    return apply
