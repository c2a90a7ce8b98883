"""Config grammar, validation report, output formats, and the command line.

Config files are flat, line-oriented `section.key = value` text with `#`
comments, order-insensitive keys, and strict rejection of unknown or
duplicate keys.  All outputs are deterministic byte-for-byte: diagnostics
CSV with 17-significant-digit floats, one CSV matrix per snapshot field
(top row first), and optional 16-bit big-endian P5 heatmaps with the scaling
range in a text sidecar.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .errors import (AdmissibilityError, BracketError, ConfigError, DomainError,
                     FatalSolverError, IoError, SolverError)
from .functionals import DiagnosticsRow, State, dm_mean, mass_mu
from .grid_ops import Grid, assemble_masses, assemble_stiffness, build_grid
from .potentials import (CoercivityReport, CompatReport, LatentHeat, Potential,
                         check_coercivity, check_compatibility)
from .stationary import HypothesisReport, StationaryResult, hypothesis_report, solve_stationary
from .timestepper import (HeatSource, Model, StepperConfig, integrate_homogeneous,
                          make_source, preset_field, run)

_PRESET_KINDS = ("constant", "sinusoid", "tanh_stripe", "random")
_POTENTIAL_KINDS = ("logarithmic", "quartic")
LOCK_NAME = ".lock"


@dataclass(frozen=True)
class DomainCfg:
    lx: float
    ly: float
    nx: int
    ny: int


@dataclass(frozen=True)
class TimeCfg:
    dt: float
    t_end: float
    snapshot_every: int
    min_dt: float


@dataclass(frozen=True)
class PotentialCfg:
    kind: str
    delta: float


@dataclass(frozen=True)
class LatentCfg:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class SourceCfg:
    kind: str
    amplitude: float
    kx: int
    omega: float


@dataclass(frozen=True)
class InitCfg:
    theta_kind: str
    theta_value: float
    theta_amplitude: float
    theta_kx: int
    theta_width: float
    chi_kind: str
    chi_value: float
    chi_amplitude: float
    chi_kx: int
    chi_width: float
    seed: int


@dataclass(frozen=True)
class SolverCfg:
    newton_tol: float
    newton_max_iter: int
    cg_tol: float
    guard_eps: float


@dataclass(frozen=True)
class OutputCfg:
    dir: str
    write_pgm: bool


@dataclass(frozen=True)
class Config:
    domain: DomainCfg
    time: TimeCfg
    potential_bulk: PotentialCfg
    potential_surf: PotentialCfg
    latent_bulk: LatentCfg
    latent_surf: LatentCfg
    source: SourceCfg
    init: InitCfg
    solver: SolverCfg
    output: OutputCfg


_REQUIRED = object()
_DT_FRACTION = object()

# name, type, default, bound check, bound message; order fixes serialization.
_SCHEMA = (
    ("domain.lx", "float", _REQUIRED, lambda v: v > 0.0, "must be positive"),
    ("domain.ly", "float", _REQUIRED, lambda v: v > 0.0, "must be positive"),
    ("domain.nx", "int", _REQUIRED, lambda v: v >= 4, "must be at least 4"),
    ("domain.ny", "int", _REQUIRED, lambda v: v >= 2, "must be at least 2"),
    ("time.dt", "float", _REQUIRED, lambda v: v > 0.0, "must be positive"),
    ("time.t_end", "float", _REQUIRED, lambda v: v >= 0.0, "must be nonnegative"),
    ("time.snapshot_every", "int", 0, lambda v: v >= 0, "must be nonnegative"),
    ("time.min_dt", "float", _DT_FRACTION, lambda v: v > 0.0, "must be positive"),
    ("potential_bulk.kind", "str", _REQUIRED,
     lambda v: v in _POTENTIAL_KINDS, "must be one of " + "/".join(_POTENTIAL_KINDS)),
    ("potential_bulk.delta", "float", 0.0, lambda v: v >= 0.0, "must be nonnegative"),
    ("potential_surf.kind", "str", _REQUIRED,
     lambda v: v in _POTENTIAL_KINDS, "must be one of " + "/".join(_POTENTIAL_KINDS)),
    ("potential_surf.delta", "float", 0.0, lambda v: v >= 0.0, "must be nonnegative"),
    ("latent_bulk.a", "float", _REQUIRED, None, ""),
    ("latent_bulk.b", "float", _REQUIRED, None, ""),
    ("latent_bulk.c", "float", _REQUIRED, None, ""),
    ("latent_surf.a", "float", _REQUIRED, None, ""),
    ("latent_surf.b", "float", _REQUIRED, None, ""),
    ("latent_surf.c", "float", _REQUIRED, None, ""),
    ("source.kind", "str", "zero",
     lambda v: v in ("zero", "sinusoid"), "must be zero or sinusoid"),
    ("source.amplitude", "float", 0.0, None, ""),
    ("source.kx", "int", 1, None, ""),
    ("source.omega", "float", 0.0, None, ""),
    ("init.theta_kind", "str", "constant",
     lambda v: v in _PRESET_KINDS, "must be one of " + "/".join(_PRESET_KINDS)),
    ("init.theta_value", "float", 1.0, None, ""),
    ("init.theta_amplitude", "float", 0.0, None, ""),
    ("init.theta_kx", "int", 1, None, ""),
    ("init.theta_width", "float", 0.1, lambda v: v > 0.0, "must be positive"),
    ("init.chi_kind", "str", "constant",
     lambda v: v in _PRESET_KINDS, "must be one of " + "/".join(_PRESET_KINDS)),
    ("init.chi_value", "float", 0.0, None, ""),
    ("init.chi_amplitude", "float", 0.0, None, ""),
    ("init.chi_kx", "int", 1, None, ""),
    ("init.chi_width", "float", 0.1, lambda v: v > 0.0, "must be positive"),
    ("init.seed", "int", 0, lambda v: v >= 0, "must be nonnegative"),
    ("solver.newton_tol", "float", 1.0e-10, lambda v: v > 0.0, "must be positive"),
    ("solver.newton_max_iter", "int", 50, lambda v: v >= 1, "must be at least 1"),
    ("solver.cg_tol", "float", 1.0e-10, lambda v: v > 0.0, "must be positive"),
    ("solver.guard_eps", "float", 1.0e-12, lambda v: 0.0 < v < 1.0, "must lie in (0, 1)"),
    ("output.dir", "str", "out", None, ""),
    ("output.write_pgm", "bool", False, None, ""),
)

_SECTIONS = (
    ("domain", DomainCfg), ("time", TimeCfg),
    ("potential_bulk", PotentialCfg), ("potential_surf", PotentialCfg),
    ("latent_bulk", LatentCfg), ("latent_surf", LatentCfg),
    ("source", SourceCfg), ("init", InitCfg),
    ("solver", SolverCfg), ("output", OutputCfg),
)


def _convert(name: str, typ: str, text: str, line_no: int):
    try:
        if typ == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if typ == "int":
            return int(text, 10)
        if typ == "bool":
            if text not in ("true", "false"):
                raise ValueError
            return text == "true"
        return text
    except ValueError:
        raise ConfigError(
            f"line {line_no}: key '{name}' expects a {typ}, got '{text}'") from None


def parse_config(text: str) -> Config:
    """Parse config text; ConfigError carries the line number of the offence."""
    raw: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {line_no}: expected 'section.key = value'")
        key, _, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if key in raw:
            raise ConfigError(f"line {line_no}: duplicate key '{key}'")
        raw[key] = (val, line_no)

    known = {entry[0] for entry in _SCHEMA}
    for key, (_, line_no) in raw.items():
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown key '{key}'")

    values: dict[str, object] = {}
    for name, typ, default, _, _ in _SCHEMA:
        if name in raw:
            values[name] = _convert(name, typ, *raw[name])
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{name}'")
        elif default is _DT_FRACTION:
            values[name] = values["time.dt"] / 1024.0
        else:
            values[name] = default

    for name, _, _, check, msg in _SCHEMA:
        if check is not None and not check(values[name]):
            raise ConfigError(f"{name} = {values[name]}: {msg}")
    if values["time.min_dt"] > values["time.dt"]:
        raise ConfigError("time.min_dt must not exceed time.dt")

    sections = {}
    for sec_name, cls in _SECTIONS:
        prefix = sec_name + "."
        kw = {name[len(prefix):]: v for name, v in values.items()
              if name.startswith(prefix)}
        sections[sec_name] = cls(**kw)
    return Config(**sections)


def serialize_config(c: Config) -> str:
    """Emit text that parses back to an identical Config (floats via repr)."""
    lines = []
    for name, typ, _, _, _ in _SCHEMA:
        sec, _, key = name.partition(".")
        v = getattr(getattr(c, sec), key)
        if typ == "float":
            out = repr(float(v))
        elif typ == "bool":
            out = "true" if v else "false"
        else:
            out = str(v)
        lines.append(f"{name} = {out}")
    return "\n".join(lines) + "\n"


def _make_potential(pc: PotentialCfg) -> Potential:
    if pc.kind == "logarithmic":
        return Potential.logarithmic(pc.delta)
    return Potential.quartic(pc.delta)


def build_model(c: Config) -> Model:
    g = build_grid(c.domain.lx, c.domain.ly, c.domain.nx, c.domain.ny)
    return Model(
        grid=g, masses=assemble_masses(g), stiffness=assemble_stiffness(g),
        p_bulk=_make_potential(c.potential_bulk),
        p_surf=_make_potential(c.potential_surf),
        l_bulk=LatentHeat(c.latent_bulk.a, c.latent_bulk.b, c.latent_bulk.c),
        l_surf=LatentHeat(c.latent_surf.a, c.latent_surf.b, c.latent_surf.c),
    )


def build_stepper_config(c: Config) -> StepperConfig:
    return StepperConfig(
        tau=c.time.dt, newton_tol=c.solver.newton_tol,
        newton_max_iter=c.solver.newton_max_iter, guard_eps=c.solver.guard_eps,
        min_tau=c.time.min_dt, cg_tol=c.solver.cg_tol,
    )


def build_initial_state(c: Config, model: Model) -> State:
    """Fields from the init presets; theta seeds with seed, chi with seed + 1."""
    ic = c.init
    g = model.grid
    theta = preset_field(g, ic.theta_kind, value=ic.theta_value,
                         amplitude=ic.theta_amplitude, kx=ic.theta_kx,
                         width=ic.theta_width, seed=ic.seed)
    chi = preset_field(g, ic.chi_kind, value=ic.chi_value,
                       amplitude=ic.chi_amplitude, kx=ic.chi_kx,
                       width=ic.chi_width, seed=ic.seed + 1)
    with np.errstate(divide="ignore"):
        u = -1.0 / theta
    return State(0.0, u, chi)


def build_source(c: Config, model: Model) -> HeatSource | None:
    sc = c.source
    return make_source(model.grid, model.masses, sc.kind, sc.amplitude, sc.kx, sc.omega)


@dataclass
class ValidationReport:
    """Mandatory checks plus informational flags; ok requires all mandatory ones."""

    ok: bool
    compatibility: CompatReport | None
    compatibility_error: str | None
    coercivity: CoercivityReport
    initial_state_error: str | None
    mu0: float | None
    hypotheses: HypothesisReport
    source_projected_mean: float

    def render(self) -> str:
        lines = []
        if self.compatibility_error is not None:
            lines.append(f"compatibility: FAIL ({self.compatibility_error})")
        elif not self.compatibility.ok:
            lines.append("compatibility: FAIL (no admissible constants found)")
        else:
            cr = self.compatibility
            lines.append(f"compatibility: ok (c_s={cr.c_s:.6g}, C_s={cr.big_c_s:.6g})")
        lines.append("coercivity: ok" if self.coercivity.ok else "coercivity: FAIL")
        if self.initial_state_error is not None:
            lines.append(f"initial state: FAIL ({self.initial_state_error})")
            lines.append("mass admissibility: FAIL (no valid initial state)")
        else:
            lines.append("initial state: ok")
            h = self.hypotheses
            verdict = "ok" if h.mass_admissible else "FAIL"
            lines.append(f"mass admissibility: {verdict} (mu0={self.mu0:.10g}, "
                         f"lower bound={h.mass_lower_bound:.10g})")
        lines.append(f"source projected mean: {self.source_projected_mean:.3e}")
        h = self.hypotheses
        lines.append(f"info: mass above upper latent bound: "
                     f"{'yes' if h.mass_dominates else 'no'} "
                     f"(upper bound={h.mass_upper_bound:.10g})")
        lines.append(f"info: separating latent slope: "
                     f"{'yes' if h.slope_separates else 'no'} "
                     f"(margin={h.slope_margin:.6g})")
        lines.append(f"overall: {'ok' if self.ok else 'FAIL'}")
        return "\n".join(lines)


def validate_config(c: Config) -> ValidationReport:
    """Run every pre-flight check; never raises, failures land in the report."""
    model = build_model(c)
    ok = True

    compat = None
    compat_err = None
    try:
        compat = check_compatibility(model.p_bulk, model.p_surf)
        ok = ok and compat.ok
    except DomainError as exc:
        compat_err = str(exc)
        ok = False

    coerc = check_coercivity(model.p_bulk, model.p_surf, model.l_bulk, model.l_surf)
    ok = ok and coerc.ok

    source = build_source(c, model)
    projected = source.projected_mean if source is not None else 0.0

    state_err = None
    mu0 = None
    try:
        s0 = build_initial_state(c, model)
        s0.validate(model.p_bulk, model.p_surf, model.surf_mask)
        mu0 = mass_mu(s0, model.l_bulk, model.l_surf, model.masses)
    except (DomainError, ConfigError) as exc:
        state_err = str(exc)
        ok = False

    hyp = hypothesis_report(model, mu0 if mu0 is not None else -math.inf)
    if mu0 is None or not hyp.mass_admissible:
        ok = False

    return ValidationReport(
        ok=ok, compatibility=compat, compatibility_error=compat_err,
        coercivity=coerc, initial_state_error=state_err, mu0=mu0,
        hypotheses=hyp, source_projected_mean=projected,
    )


CSV_HEADER = ("step,time,mu,energy,entropy,dissipation_cum,source_cum,"
              "energy_id_residual,theta_min,theta_max,chi_min,chi_max,"
              "u_spatial_std,newton_iters_chi,newton_iters_theta")


def format_diagnostics_row(row: DiagnosticsRow) -> str:
    floats = (row.t, row.mu, row.energy, row.entropy, row.dissipation_cum,
              row.source_cum, row.energy_id_residual, row.theta_min, row.theta_max,
              row.chi_min, row.chi_max, row.u_spatial_std)
    cells = [str(row.step)]
    cells += [f"{v:.16e}" for v in floats]
    cells += [str(row.newton_iters_chi), str(row.newton_iters_theta)]
    return ",".join(cells)


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write '{path}': {exc}") from exc


def _write_bytes(path: str, blob: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write '{path}': {exc}") from exc


def write_diagnostics(rows, path: str) -> None:
    lines = [CSV_HEADER]
    lines += [format_diagnostics_row(r) for r in rows]
    _write_text(path, "\n".join(lines) + "\n")


def write_snapshot(field: np.ndarray, grid: Grid, path: str) -> None:
    """One CSV matrix, ny+1 rows of nx values, top boundary row (j = ny) first."""
    z = grid.reshape(np.asarray(field, dtype=float))
    lines = [",".join(f"{v:.16e}" for v in z[j]) for j in range(grid.ny, -1, -1)]
    _write_text(path, "\n".join(lines) + "\n")


def write_pgm(field: np.ndarray, grid: Grid, path: str) -> None:
    """Binary P5, 16-bit big-endian, linear min-max scaling; the (min, max)
    pair lands in a `.range.txt` sidecar.  A constant field maps to 0."""
    z = grid.reshape(np.asarray(field, dtype=float))[::-1]
    lo, hi = float(z.min()), float(z.max())
    if hi > lo:
        samples = np.round((z - lo) / (hi - lo) * 65535.0).astype(">u2")
    else:
        samples = np.zeros(z.shape, dtype=">u2")
    header = f"P5\n{grid.nx} {grid.ny + 1}\n65535\n".encode("ascii")
    _write_bytes(path, header + samples.tobytes())
    _write_text(os.path.splitext(path)[0] + ".range.txt", f"{lo:.16e} {hi:.16e}\n")


@contextlib.contextmanager
def _output_lock(out_dir: str):
    """Single writer per output directory, enforced by an exclusive lock file."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory '{out_dir}': {exc}") from exc
    lock_path = os.path.join(out_dir, LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise IoError(f"output directory '{out_dir}' is locked by another run "
                      f"(remove {lock_path} if stale)") from None
    except OSError as exc:
        raise IoError(f"cannot lock output directory '{out_dir}': {exc}") from exc
    try:
        os.close(fd)
        yield out_dir
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock_path)


def _snapshot_writer(c: Config, model: Model):
    out_dir = c.output.dir

    def emit(step: int, s: State) -> None:
        for name, field in (("theta", s.theta), ("chi", s.chi)):
            write_snapshot(field, model.grid, os.path.join(out_dir, f"{name}_{step}.csv"))
            if c.output.write_pgm:
                write_pgm(field, model.grid, os.path.join(out_dir, f"{name}_{step}.pgm"))

    return emit


def _stationary_summary(r: StationaryResult) -> str:
    h = r.hypothesis_report
    lines = [
        f"theta_inf = {r.theta_inf:.16e}",
        f"u_inf = {r.u_inf:.16e}",
        f"mu_target = {r.mu_target:.16e}",
        f"phase_residual = {r.phase_residual:.3e}",
        f"mass_gap = {r.mass_gap:.3e}",
        f"separation = {r.separation:.6e}",
        f"mass_admissible = {'yes' if h.mass_admissible else 'no'} "
        f"(lower bound {h.mass_lower_bound:.10g})",
        f"mass_above_upper_bound = {'yes' if h.mass_dominates else 'no'} "
        f"(upper bound {h.mass_upper_bound:.10g})",
        f"separating_slope = {'yes' if h.slope_separates else 'no'} "
        f"(margin {h.slope_margin:.6g})",
    ]
    return "\n".join(lines) + "\n"


def _cmd_check(c: Config) -> int:
    report = validate_config(c)
    print(report.render())
    return 0 if report.ok else 3


def _cmd_simulate(c: Config) -> int:
    report = validate_config(c)
    if not report.ok:
        print(report.render(), file=sys.stderr)
        return 3
    model = build_model(c)
    s0 = build_initial_state(c, model)
    source = build_source(c, model)
    cfg = build_stepper_config(c)
    with _output_lock(c.output.dir) as out_dir:
        rows, _ = run(model, cfg, s0, c.time.t_end, source=source,
                      snapshot_every=c.time.snapshot_every,
                      on_snapshot=_snapshot_writer(c, model))
        write_diagnostics(rows, os.path.join(out_dir, "diagnostics.csv"))
    print(f"simulate: {len(rows) - 1} steps to t = {rows[-1].t:.6g}, "
          f"mu drift {abs(rows[-1].mu - rows[0].mu):.3e}")
    return 0


def _cmd_stationary(c: Config) -> int:
    report = validate_config(c)
    if not report.ok:
        print(report.render(), file=sys.stderr)
        return 3
    model = build_model(c)
    s0 = build_initial_state(c, model)
    mu_target = mass_mu(s0, model.l_bulk, model.l_surf, model.masses)
    theta0 = dm_mean(s0.theta, model.masses)
    result = solve_stationary(mu_target, (theta0 / 4.0, theta0 * 4.0),
                              [s0.chi], model, tol=c.solver.newton_tol)
    summary = _stationary_summary(result)
    with _output_lock(c.output.dir) as out_dir:
        write_snapshot(result.chi_inf, model.grid, os.path.join(out_dir, "chi_inf.csv"))
        if c.output.write_pgm:
            write_pgm(result.chi_inf, model.grid, os.path.join(out_dir, "chi_inf.pgm"))
        _write_text(os.path.join(out_dir, "stationary_summary.txt"), summary)
    print(summary, end="")
    return 0


def _cmd_ode(c: Config) -> int:
    if c.init.theta_kind != "constant" or c.init.chi_kind != "constant":
        raise ConfigError("the ode command requires constant init presets")
    model_pot = _make_potential(c.potential_bulk)
    lat = LatentHeat(c.latent_bulk.a, c.latent_bulk.b, c.latent_bulk.c)
    t, theta, chi = integrate_homogeneous(
        c.init.theta_value, c.init.chi_value, model_pot, lat,
        tau_ref=c.time.dt, t_end=c.time.t_end)
    lines = ["t,theta,chi"]
    lines += [f"{ti:.16e},{th:.16e},{ch:.16e}" for ti, th, ch in zip(t, theta, chi)]
    with _output_lock(c.output.dir) as out_dir:
        _write_text(os.path.join(out_dir, "ode.csv"), "\n".join(lines) + "\n")
    print(f"ode: {len(t)} samples to t = {t[-1]:.6g}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "stationary": _cmd_stationary,
    "check": _cmd_check,
    "ode": _cmd_ode,
}


def load_config(path: str) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    return parse_config(text)


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pfstrip",
        description="Phase-field simulator on a periodic strip with coupled "
                    "dynamic boundary conditions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("simulate", "time-step the coupled system and write diagnostics"),
        ("stationary", "solve the steady-state system at the initial mass"),
        ("check", "print the config validation report"),
        ("ode", "integrate the spatially homogeneous reduction"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--output", default=None, help="override output.dir")
    args = parser.parse_args(argv)

    try:
        c = load_config(args.config)
        if args.output is not None:
            c = replace(c, output=replace(c.output, dir=args.output))
        return _COMMANDS[args.command](c)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, FatalSolverError, BracketError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AdmissibilityError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())
