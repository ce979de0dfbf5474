"""Command-line runner: ``velobound run|validate|plot``.

Exit codes: 0 success, 1 assertion failure, 2 parse error, 3 validation
error, 4 runtime flag (boundary mass or non-finite values).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenarios
from .calculus import SmoothCutoff, parse_cutoff
from .hamiltonian import (
    DENSE_CAP,
    Hamiltonian,
    decompose,
    point_spectrum_candidates,
    point_spectrum_report,
    relative_bound_probe,
)
from .mourre import (
    build_conjugate,
    commutator_iHA,
    dilation_commutator_check,
    free_commutator_symbol,
    interior_packets,
    mourre_lower_bound,
)
from .observables import (
    ExperimentReport,
    ReportFormatError,
    commutator_remainder_decay,
    log_time_grid,
    maximal_bound_integral,
    middle_bound_integral,
    minimal_bound_integral,
    speed_range,
)
from .plotting import report_svg
from .potentials import (
    LongRangePart,
    PotentialError,
    PotentialSpec,
    ShortRangePart,
    SingularPart,
    admissibility_check,
    sample_singular,
)
from .propagator import (
    centroid_velocity,
    evolve_exact,
    evolve_exact_trace,
    evolve_free,
    evolve_split_step,
)
from .spectral import (
    SHELL_FRACTION,
    FractionalSymbol,
    GridSpec,
    WaveFunction,
    forward,
    multiplier_matrix,
)

EXIT_OK, EXIT_ASSERT, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3, 4

KINDS = ("evolve", "spectrum", "mourre", "minimal", "maximal", "middle", "remainder",
         "relbound", "admissibility", "dilation")
DENSE_KINDS = ("spectrum", "mourre", "dilation")

POTENTIAL_KEYS = {
    "sing_kappa", "sing_epsilon", "sing_cutoff_radius", "sing_gamma", "sing_mollify_radius",
    "short_amplitude", "short_gamma", "short_profile", "short_radius",
    "long_amplitude", "long_gamma", "growth",
}


class ConfigParseError(Exception):
    pass


class ConfigValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    name: str
    grid: GridSpec
    rho: float
    potential: PotentialSpec
    state: dict
    cutoffs: dict
    kind: str
    params: dict
    out_dir: Path
    formats: tuple[str, ...]
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def param(self, key, default=None, conv=float):
        if key not in self.params:
            return default
        try:
            return conv(self.params[key])
        except ValueError as exc:
            raise ConfigParseError(f"[experiment] {key}: cannot parse {self.params[key]!r}") from exc


def _num(section: str, key: str, text: str, conv=float):
    try:
        return conv(text)
    except ValueError as exc:
        raise ConfigParseError(f"[{section}] {key}: cannot parse {text!r}") from exc


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.replace(";", ",").split(",") if p.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _potential(sec: dict) -> PotentialSpec:
    unknown = set(sec) - POTENTIAL_KEYS
    if unknown:
        raise ConfigValidationError(f"[potential] unknown keys: {sorted(unknown)}")
    num = lambda k: _num("potential", k, sec[k])  # noqa: E731
    try:
        sing = short = long = None
        if "sing_kappa" in sec:
            moll = sec.get("sing_mollify_radius")
            sing = SingularPart(num("sing_kappa"),
                                num("sing_epsilon") if "sing_epsilon" in sec else 0.0,
                                num("sing_cutoff_radius") if "sing_cutoff_radius" in sec else 1.0,
                                num("sing_gamma") if "sing_gamma" in sec else 2.0,
                                None if moll is None else _num("potential", "sing_mollify_radius", moll))
        if "short_amplitude" in sec:
            short = ShortRangePart(num("short_amplitude"),
                                   num("short_gamma") if "short_gamma" in sec else 2.0,
                                   sec.get("short_profile", "power").strip(),
                                   num("short_radius") if "short_radius" in sec else 1.0)
        if "long_amplitude" in sec:
            long = LongRangePart(num("long_amplitude"), num("long_gamma") if "long_gamma" in sec else 0.5)
        growth = num("growth") if "growth" in sec else None
        return PotentialSpec(sing, short, long, growth=growth)
    except PotentialError as exc:
        raise ConfigValidationError(f"[potential] {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    # keys are case-sensitive: T, Theta and theta are distinct parameters
    parser.optionxform = str
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0]) from exc
    for sec in ("grid", "symbol", "experiment"):
        if not parser.has_section(sec):
            raise ConfigParseError(f"missing section [{sec}]")
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    g = sections["grid"]
    for key in ("n_points", "half_width"):
        if key not in g:
            raise ConfigParseError(f"[grid] missing key {key}")
    dim = _num("grid", "dim", g.get("dim", "1"), int)
    n_points = _num("grid", "n_points", g["n_points"], int)
    half_width = _num("grid", "half_width", g["half_width"])
    try:
        grid = GridSpec(dim, n_points, half_width)
    except ValueError as exc:
        raise ConfigValidationError(f"[grid] {exc}") from exc
    if "rho" not in sections["symbol"]:
        raise ConfigParseError("[symbol] missing key rho")
    rho = _num("symbol", "rho", sections["symbol"]["rho"])
    if not (0.0 < rho <= 1.0):
        raise ConfigValidationError(f"[symbol] rho must lie in (0, 1], got {rho}")
    potential = _potential(sections.get("potential", {}))

    cut_sec = sections.get("cutoff", {})
    cutoffs = {}
    for key, val in cut_sec.items():
        if val.strip().lower() == "full":
            cutoffs[key] = scenarios.full_band_cutoff(grid, rho)
            continue
        try:
            cutoffs[key] = parse_cutoff(val)
        except ValueError as exc:
            if "cutoff needs a <" in str(exc):
                raise ConfigValidationError(f"[cutoff] {key}: {exc}") from exc
            raise ConfigParseError(f"[cutoff] {key}: {exc}") from exc

    exp = dict(sections["experiment"])
    kind = exp.pop("kind", None)
    if kind is None:
        raise ConfigParseError("[experiment] missing key kind")
    kind = kind.strip()
    if kind not in KINDS:
        raise ConfigValidationError(f"[experiment] kind must be one of {KINDS}, got {kind!r}")
    seed = _num("experiment", "seed", exp.pop("seed", "0"), int)

    out = sections.get("output", {})
    out_dir = Path(out.get("directory", "out"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    formats = tuple(f.strip() for f in out.get("formats", "csv").split(",") if f.strip())
    bad = set(formats) - {"csv", "svg"}
    if bad or "csv" not in formats:
        raise ConfigValidationError(f"[output] formats must include csv and be a subset of csv,svg: {formats}")
    name = out.get("name", path.stem)
    return ExperimentConfig(name, grid, rho, potential, sections.get("state", {}), cutoffs, kind, exp,
                            out_dir, formats, seed, sections)


# ---------------------------------------------------------------------------
# states

def _state_probes(cfg: ExperimentConfig) -> list[scenarios.Probe]:
    st = cfg.state
    kind = st.get("kind", "packet").strip()
    if kind == "family":
        widths = _floats(st["widths"]) if "widths" in st else scenarios.PROBE_WIDTHS
        momenta = _floats(st["momenta"]) if "momenta" in st else scenarios.PROBE_MOMENTA
        return scenarios.probe_family(widths, momenta)
    if kind == "packet":
        c = _num("state", "center", st.get("center", "0"))
        k = _num("state", "momentum", st.get("momentum", "0"))
        w = _num("state", "width", st.get("width", "1"))
        if not w > 0:
            raise ConfigValidationError("[state] width must be positive")
        return [scenarios.Probe("p", c, k, w)]
    if kind == "eigenvector":
        return []
    raise ConfigValidationError(f"[state] kind must be packet, family or eigenvector, got {kind!r}")


def _states(cfg: ExperimentConfig, h: Hamiltonian, decomp=None) -> list[tuple[str, WaveFunction]]:
    st = cfg.state
    if st.get("kind", "packet").strip() == "eigenvector":
        idx = _num("state", "index", st.get("index", "0"), int)
        if decomp is None:
            decomp = decompose(h)
        return [("v", decomp.state(idx))]
    return [(p.label, p.state(cfg.grid)) for p in _state_probes(cfg)]


def _occupied_speed(cfg: ExperimentConfig, probes: list[scenarios.Probe]) -> float:
    """Largest lattice group speed carrying at least 1e-12 of any probe's momentum mass."""
    sym = FractionalSymbol(cfg.rho)
    speed = 2.0 * np.sqrt(cfg.grid.momentum_sq) * sym(cfg.grid.momentum_sq, 1)
    v = 0.0
    for p in probes:
        dens = np.abs(forward(p.state(cfg.grid).values)) ** 2
        occ = dens >= 1e-12 * dens.sum()
        v = max(v, float(speed[occ].max()))
    return v


# ---------------------------------------------------------------------------
# validation

def _threads() -> int:
    raw = os.environ.get("VELOBOUND_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigValidationError(f"VELOBOUND_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigValidationError(f"VELOBOUND_THREADS must be a positive integer, got {raw!r}")
    return n


def _cutoff(cfg: ExperimentConfig, key: str) -> SmoothCutoff:
    if key not in cfg.cutoffs:
        raise ConfigValidationError(f"[cutoff] {key} is required for kind={cfg.kind}")
    return cfg.cutoffs[key]


def _t_end(cfg: ExperimentConfig) -> float | None:
    if cfg.kind == "evolve":
        return abs(cfg.param("t_final", 5.0))
    if cfg.kind in ("minimal", "middle"):
        return 2.0 * cfg.param("T", 50.0)
    if cfg.kind == "maximal":
        return cfg.param("T", 100.0)
    return None


def validate(cfg: ExperimentConfig) -> list[str]:
    """Check cross-module preconditions; returns informational notes."""
    notes = []
    _threads()
    dense_needed = cfg.kind in DENSE_KINDS
    if cfg.kind == "evolve":
        method = cfg.params.get("method", "split_step").strip()
        if method not in ("split_step", "dense", "free"):
            raise ConfigValidationError(f"[experiment] method must be split_step, dense or free, got {method!r}")
        if method == "free" and not cfg.potential.is_zero:
            raise ConfigValidationError("method=free requires a vanishing potential")
        dense_needed = method == "dense" or cfg.param("check_convergence", False, _bool)
        if not cfg.param("dt", 1e-3) > 0:
            raise ConfigValidationError("[experiment] dt must be positive")
    if cfg.kind in ("minimal", "maximal", "middle") and not cfg.potential.is_zero:
        notes.append("non-free dynamics: dense path" if cfg.grid.size <= DENSE_CAP else
                     "non-free dynamics: split-step with Chebyshev filter")
    if dense_needed and cfg.grid.size > DENSE_CAP:
        raise ConfigValidationError(
            f"dense size cap exceeded: grid has {cfg.grid.size} points > {DENSE_CAP} for kind={cfg.kind}")
    if cfg.kind == "mourre":
        l1, l2 = cfg.param("lambda1"), cfg.param("lambda2")
        if l1 is None or l2 is None or not (0.0 < l1 < l2):
            raise ConfigValidationError("[experiment] mourre needs 0 < lambda1 < lambda2")
        g = _cutoff(cfg, "g")
        if g.a < l1 or g.b > l2:
            raise ConfigValidationError("[cutoff] g must be supported inside (lambda1, lambda2)")
    if cfg.kind in ("minimal", "middle", "maximal"):
        f = _cutoff(cfg, "f")
        if cfg.kind == "minimal" and f.a < 0:
            raise ConfigValidationError("[cutoff] f must be supported in (0, inf) for kind=minimal")
        if not cfg.param("T", 1.0) > 1.0:
            raise ConfigValidationError("[experiment] T must exceed 1")
        if cfg.state.get("kind", "packet").strip() == "eigenvector" and not cfg.grid.size <= DENSE_CAP:
            raise ConfigValidationError("eigenvector states need a dense decomposition")
    if cfg.kind == "dilation" and not cfg.potential.long_range_only:
        raise ConfigValidationError("kind=dilation requires a purely long-range potential")
    if cfg.kind == "relbound" and cfg.potential.sing is not None:
        verdict = admissibility_check(cfg.potential.sing, cfg.rho, cfg.grid.dim)
        if not verdict.admissible:
            raise ConfigValidationError(f"singular part is not admissible: {verdict.reason}")
    if cfg.kind == "admissibility" and cfg.potential.sing is None:
        raise ConfigValidationError("kind=admissibility needs a singular part in [potential]")
    if cfg.kind == "remainder":
        times = _remainder_times(cfg)
        if times.size < 5:
            raise ConfigValidationError("[experiment] remainder needs at least 5 times")
        chi = _cutoff(cfg, "chi")
        reach = 2.0 * float(times.max()) * max(abs(chi.a), abs(chi.b))
        if reach > (1.0 - SHELL_FRACTION) * cfg.grid.half_width:
            raise ConfigValidationError(
                f"domain too small: chi(|x|/2t) reaches |x|={reach:g} beyond the interior "
                f"{(1 - SHELL_FRACTION) * cfg.grid.half_width:g}")
    t_end = _t_end(cfg)
    if t_end is not None and cfg.state.get("kind", "packet").strip() != "eigenvector":
        probes = _state_probes(cfg)
        v_max = _occupied_speed(cfg, probes)
        offset = max(abs(p.center) for p in probes)
        reach = offset + v_max * t_end
        room = (1.0 - SHELL_FRACTION) * cfg.grid.half_width
        if reach > room:
            raise ConfigValidationError(
                f"horizon/domain incompatible: packets reach |x|={reach:.4g} (v_max={v_max:.4g}, "
                f"t_end={t_end:g}) beyond the interior {room:.4g}")
        notes.append(f"horizon ok: reach {reach:.4g} <= {room:.4g}")
    return notes


def _remainder_times(cfg: ExperimentConfig) -> np.ndarray:
    t_min = cfg.param("t_min", 2.0)
    t_max = cfg.param("t_max", 8.0)
    n = cfg.param("n_times", 5, int)
    if not (0 < t_min < t_max):
        raise ConfigValidationError("[experiment] need 0 < t_min < t_max")
    return np.geomspace(t_min, t_max, n)


# ---------------------------------------------------------------------------
# runners: each returns (files {name: text}, lines, runtime_flags)

@dataclass
class Outcome:
    files: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)
    runtime_flags: list = field(default_factory=list)
    failed: bool = False

    def check(self, ok: bool, ac: int, text: str) -> None:
        self.lines.append(f"{'PASS' if ok else 'FAIL'} AC{ac} {text}")
        if not ok:
            self.failed = True

    def info(self, text: str) -> None:
        self.lines.append(f"INFO {text}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _hamiltonian(cfg: ExperimentConfig) -> Hamiltonian:
    try:
        return Hamiltonian.build(cfg.grid, cfg.rho, None if cfg.potential.is_zero else cfg.potential)
    except PotentialError as exc:
        raise ConfigValidationError(f"[potential] {exc}") from exc


def run_evolve(cfg: ExperimentConfig, out: Outcome) -> None:
    h = _hamiltonian(cfg)
    method = cfg.params.get("method", "split_step").strip()
    t_final = cfg.param("t_final", 5.0)
    dt = cfg.param("dt", 1e-3)
    n_rec = cfg.param("n_records", 11, int)
    times = np.linspace(0.0, t_final, n_rec)
    states = _states(cfg, h)
    for label, psi0 in states:
        if method == "split_step":
            trace = evolve_split_step(h, psi0, t_final, dt, record_times=times)
        elif method == "free":
            trace = evolve_free(h, psi0, times)
        else:
            trace = evolve_exact_trace(decompose(h), psi0, times)
        suffix = f"_{label}" if len(states) > 1 else ""
        out.files[f"{cfg.name}{suffix}_trace.csv"] = trace.to_csv(h)
        out.runtime_flags += trace.flags
        if cfg.param("check_convergence", False, _bool):
            ref = evolve_exact(decompose(h), psi0, t_final)
            e1 = (evolve_split_step(h, psi0, t_final, dt).states[-1] - ref).norm()
            e2 = (evolve_split_step(h, psi0, t_final, dt / 2).states[-1] - ref).norm()
            tol = cfg.param("error_tol", 1e-6)
            out.check(e1 <= tol, 3, f"split-step error {e1:.3e} <= {tol:g} at dt={dt:g}")
            ratio = e1 / e2
            out.check(abs(ratio - 4.0) <= 0.8, 3, f"error ratio {ratio:.4f} within 4 +- 20%")
        if cfg.param("check_velocity", False, _bool):
            if cfg.grid.dim != 1:
                raise ConfigValidationError("check_velocity is implemented for dim=1")
            k0 = _num("state", "momentum", cfg.state.get("momentum", "0"))
            expect = float(FractionalSymbol(cfg.rho).group_velocity(k0))
            slope = float(centroid_velocity(trace)[0])
            rel = abs(slope - expect) / abs(expect)
            out.check(rel <= 0.02, 4, f"centroid slope {slope:.6f} vs 2 xi Psi' = {expect:.6f} (rel {rel:.2e})")


def run_spectrum(cfg: ExperimentConfig, out: Outcome) -> None:
    h = _hamiltonian(cfg)
    d = decompose(h)
    out.files[f"{cfg.name}_eigenvalues.csv"] = _csv_text(
        ["index", "eigenvalue"], [(j, float(e)) for j, e in enumerate(d.eigenvalues)])
    if cfg.param("check_free", False, _bool):
        if not h.free:
            raise ConfigValidationError("check_free requires a vanishing potential")
        expect = np.sort(h.kinetic.reshape(-1))
        err = float(np.max(np.abs(d.eigenvalues - expect)))
        out.check(err <= 1e-10, 2, f"free spectrum error {err:.2e} <= 1e-10 (rho={cfg.rho:g})")
    if cfg.param("refine", False, _bool):
        fine_grid = cfg.grid.refined()
        if fine_grid.size > DENSE_CAP:
            raise ConfigValidationError(f"refined grid exceeds the dense cap {DENSE_CAP}")
        fine = decompose(Hamiltonian.build(fine_grid, cfg.rho,
                                           None if cfg.potential.is_zero else cfg.potential))
        rep = point_spectrum_report(d, fine)
        out.files[f"{cfg.name}_bound_states.csv"] = _csv_text(
            ["index", "coarse", "fine", "drift"],
            [(j, float(a), float(b), float(c)) for j, (a, b, c) in
             enumerate(zip(rep.bound_states, rep.fine_bound_states, rep.drift))])
        tol = cfg.param("drift_tol", 0.05)
        ok = rep.count > 0 and rep.bound_states.size == rep.fine_bound_states.size and rep.max_drift <= tol
        out.check(ok, 11, f"{rep.count} bound states, max drift {rep.max_drift:.2e} <= {tol:g}")


def run_mourre(cfg: ExperimentConfig, out: Outcome) -> None:
    h = _hamiltonian(cfg)
    l1, l2 = cfg.param("lambda1"), cfg.param("lambda2")
    A = build_conjugate(cfg.grid, cfg.rho, cfg.params.get("conjugate", "A_rho").strip())
    d = decompose(h)
    rep = mourre_lower_bound(h, A, (l1, l2), _cutoff(cfg, "g"), d, point_spectrum_candidates(d))
    out.files[f"{cfg.name}_mourre.csv"] = rep.to_csv()
    out.info(f"c_theory={rep.c_theory:.6f} observed_min={rep.observed_min:.6f} "
             f"sub_window=({rep.sub_window[0]:g}, {rep.sub_window[1]:g})")
    closed = 2.0 * l1 / (1.0 + l2) ** ((1.0 - cfg.rho) / cfg.rho)
    tol = cfg.param("margin_tol", 0.05)
    ok = rep.c_theory == closed and rep.observed_min >= rep.localized_bound - tol
    out.check(ok, 6, f"localized minimum {rep.observed_min:.6f} >= {rep.localized_bound:.6f} - {tol:g}")
    if cfg.param("check_free_identity", False, _bool):
        if not h.free:
            raise ConfigValidationError("check_free_identity requires a vanishing potential")
        C, _ = commutator_iHA(h.dense(), A.dense)
        M = multiplier_matrix(cfg.grid, free_commutator_symbol(cfg.grid, cfg.rho, A.kind))
        worst = 0.0
        for psi in interior_packets(cfg.grid, width=cfg.param("packet_width", None)):
            v = psi.flat()
            lhs, rhs = np.vdot(v, C @ v).real, np.vdot(v, M @ v).real
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
        out.check(worst <= 1e-6, 5, f"free commutator form vs multiplier rel err {worst:.2e} <= 1e-6")


def _integral_reports(cfg: ExperimentConfig, threads: int) -> list[tuple[str, ExperimentReport]]:
    h = _hamiltonian(cfg)
    f = _cutoff(cfg, "f")
    T = cfg.param("T", 100.0 if cfg.kind == "maximal" else 50.0)
    decomp = None if h.free else (decompose(h) if cfg.grid.size <= DENSE_CAP else None)
    states = _states(cfg, h, decomp)
    dt = cfg.param("dt", 0.01)
    if cfg.kind == "minimal":
        theta0 = cfg.param("theta0", None)
        job = lambda phi: minimal_bound_integral(h, f, theta0, phi, T, decomp=decomp, dt=dt)  # noqa: E731
    elif cfg.kind == "maximal":
        _, c_f = speed_range(h, f)
        Theta = cfg.param("Theta", scenarios.MAXIMAL_FACTOR * c_f)
        theta = cfg.param("theta", 1.5 * Theta)
        if not Theta > c_f:
            raise ConfigValidationError(f"Theta={Theta!r} must exceed C_f={c_f!r}")
        sched = log_time_grid(T)
        job = lambda phi: maximal_bound_integral(h, f, Theta, theta, phi, T, schedule=sched,  # noqa: E731
                                                 decomp=decomp, dt=dt)
    else:
        v_lo, v_hi = speed_range(h, f)
        theta1 = cfg.param("theta1", 0.25 * v_lo)
        theta2 = cfg.param("theta2", v_hi)
        job = lambda phi: middle_bound_integral(h, f, theta1, theta2, phi, T, decomp=decomp, dt=dt)  # noqa: E731
    with ThreadPoolExecutor(max_workers=min(threads, max(len(states), 1))) as pool:
        reports = list(pool.map(job, [phi for _, phi in states]))
    out = []
    for (label, _), rep in zip(states, reports):
        rep.metadata["state"] = label
        rep.metadata["seed"] = str(cfg.seed)
        out.append((label, rep))
    return out


def run_integral(cfg: ExperimentConfig, out: Outcome, threads: int) -> None:
    T = cfg.param("T", 100.0 if cfg.kind == "maximal" else 50.0)
    for label, rep in _integral_reports(cfg, threads):
        stem = f"{cfg.name}_{label}"
        out.files[stem + ".csv"] = rep.to_csv()
        if "svg" in cfg.formats:
            out.files[stem + ".svg"] = report_svg(rep)
        if rep.flags:
            out.runtime_flags += [f"{label}: {fl}" for fl in rep.flags]
            continue
        bm = float(rep.boundary_mass.max()) if rep.boundary_mass.size else 0.0
        if cfg.kind == "maximal":
            tol = cfg.param("integral_tol", 1e-6)
            val = rep.cumulative_at(T)
            out.check(val <= tol and bm <= 1e-8, 7,
                      f"maximal[{label}] I({T:g}) = {val:.2e} <= {tol:g}, boundary mass {bm:.1e}")
        else:
            tol = cfg.param("plateau_tol", 0.05 if cfg.kind == "minimal" else 0.1)
            base = rep.cumulative_at(T)
            if base <= 0:
                out.check(False, 7, f"{cfg.kind}[{label}] I({T:g}) vanishes; plateau undefined")
                continue
            exc = rep.plateau_excess(T)
            out.check(exc <= tol and bm <= 1e-8, 7,
                      f"{cfg.kind}[{label}] I(2T)/I(T) - 1 = {exc:.2e} <= {tol:g}, boundary mass {bm:.1e}")


def run_remainder(cfg: ExperimentConfig, out: Outcome) -> None:
    fit = commutator_remainder_decay(_cutoff(cfg, "chi"), cfg.rho, _remainder_times(cfg), cfg.grid)
    out.files[f"{cfg.name}_remainder.csv"] = _csv_text(
        ["t", "norm"], [(float(t), float(n)) for t, n in zip(fit.times, fit.norms)])
    if cfg.rho == 1.0:
        out.check(fit.at_floor, 8, f"rho=1 remainder at floor (max {fit.norms.max():.2e})")
    else:
        lim = cfg.param("slope_max", -1.8)
        ok = fit.reliable and fit.slope <= lim
        out.check(ok, 8, f"log-log slope {fit.slope:.4f} <= {lim:g} (rho={cfg.rho:g})")


def run_relbound(cfg: ExperimentConfig, out: Outcome) -> None:
    h = _hamiltonian(cfg)
    deltas = _floats(cfg.params.get("deltas", ",".join(map(str, scenarios.RELBOUND_DELTAS))))
    sing = cfg.potential.sing
    field_ = np.zeros(cfg.grid.shape) if sing is None else sample_singular(sing, cfg.grid)
    pts = relative_bound_probe(h, field_, deltas, sing_spec=sing, seed=cfg.seed)
    out.files[f"{cfg.name}_relbound.csv"] = _csv_text(
        ["delta", "epsilon_eff", "c_eff", "epsilon_bound"],
        [(p.delta, p.epsilon_eff, p.c_eff, p.epsilon_bound) for p in pts])
    eps = [p.epsilon_eff for p in pts]
    if sing is None:
        ok = all(p.epsilon_eff == 0.0 and p.c_eff == 0.0 for p in pts)
        out.check(ok, 9, "vanishing singular part gives (0, 0) at every delta")
    else:
        order = np.argsort(deltas)[::-1]
        seq = [eps[i] for i in order]
        ok = all(b < a for a, b in zip(seq[:-1], seq[1:]))
        out.check(ok, 9, "epsilon_eff strictly decreasing as delta shrinks: "
                  + " > ".join(f"{e:.4g}" for e in seq))


def run_admissibility(cfg: ExperimentConfig, out: Outcome) -> None:
    sing = cfg.potential.sing
    v = admissibility_check(sing, cfg.rho, cfg.grid.dim)
    fmt = lambda x: "" if x is None else repr(float(x))  # noqa: E731
    out.files[f"{cfg.name}_admissibility.csv"] = _csv_text(
        ["epsilon", "rho", "dim", "admissible", "p_low", "p_high", "p_exact", "reason"],
        [(float(sing.epsilon), float(cfg.rho), cfg.grid.dim, int(v.admissible), fmt(v.p_low),
          fmt(v.p_high), fmt(v.p_exact), v.reason)])
    if "expect_admissible" in cfg.params:
        ok = v.admissible == cfg.param("expect_admissible", conv=_bool)
        for key in ("p_low", "p_high", "p_exact"):
            if f"expect_{key}" in cfg.params:
                ok = ok and getattr(v, key) == cfg.param(f"expect_{key}")
        out.check(ok, 10, f"(eps={sing.epsilon:g}, rho={cfg.rho:g}, n={cfg.grid.dim}) -> "
                  f"admissible={v.admissible} p=({fmt(v.p_low)}, {fmt(v.p_high)}) exact={fmt(v.p_exact)}")
    else:
        out.info(f"admissible={v.admissible}: {v.reason}")


def run_dilation(cfg: ExperimentConfig, out: Outcome) -> None:
    h = _hamiltonian(cfg)
    width = cfg.param("packet_width", None)
    resid, ok = dilation_commutator_check(h, cfg.potential.long, interior_packets(cfg.grid, width=width))
    out.files[f"{cfg.name}_dilation.csv"] = _csv_text(["residual", "scalar_inequality"], [(resid, int(ok))])
    out.info(f"dilation residual {resid:.3e}; scalar inequality holds: {ok}")


def execute(cfg: ExperimentConfig) -> Outcome:
    threads = _threads()
    out = Outcome()
    with np.errstate(all="ignore"):
        if cfg.kind == "evolve":
            run_evolve(cfg, out)
        elif cfg.kind == "spectrum":
            run_spectrum(cfg, out)
        elif cfg.kind == "mourre":
            run_mourre(cfg, out)
        elif cfg.kind in ("minimal", "maximal", "middle"):
            run_integral(cfg, out, threads)
        elif cfg.kind == "remainder":
            run_remainder(cfg, out)
        elif cfg.kind == "relbound":
            run_relbound(cfg, out)
        elif cfg.kind == "admissibility":
            run_admissibility(cfg, out)
        else:
            run_dilation(cfg, out)
    return out


# ---------------------------------------------------------------------------
# entry points

def _load_and_validate(path) -> tuple[ExperimentConfig, list[str]]:
    cfg = load_config(path)
    notes = validate(cfg)
    return cfg, notes


def cmd_validate(args) -> int:
    cfg, notes = _load_and_validate(args.config)
    print(f"OK {cfg.name}: kind={cfg.kind} grid=({cfg.grid.dim}, {cfg.grid.n_points}, "
          f"{cfg.grid.half_width:g}) rho={cfg.rho:g}")
    for n in notes:
        print(f"INFO {n}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, notes = _load_and_validate(args.config)
    if args.output_dir is not None:
        cfg.out_dir = Path(args.output_dir)
    try:
        outcome = execute(cfg)
    except FloatingPointError as exc:
        print(f"RUNTIME {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(outcome.files):
        (cfg.out_dir / name).write_text(outcome.files[name])
    for line in outcome.lines:
        print(line)
    for flag in outcome.runtime_flags:
        print(f"RUNTIME {flag}")
    if outcome.runtime_flags:
        return EXIT_RUNTIME
    return EXIT_ASSERT if outcome.failed else EXIT_OK


def cmd_plot(args) -> int:
    src = Path(args.csv)
    try:
        report = ExperimentReport.from_csv(src.read_text())
    except OSError as exc:
        print(f"error: cannot read {src}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ReportFormatError as exc:
        print(f"error: {src}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    dest = Path(args.output) if args.output else src.with_suffix(".svg")
    dest.write_text(report_svg(report))
    print(f"wrote {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="velobound", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment declared in a config file")
    r.add_argument("config")
    r.add_argument("--output-dir", default=None, help="override [output] directory")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="parse and validate a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    pl = sub.add_parser("plot", help="render a report CSV as an SVG line plot")
    pl.add_argument("csv")
    pl.add_argument("-o", "--output", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
