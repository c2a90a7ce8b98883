"""Config grammar, validation report, output formats, and CLI exit codes."""

import os
import textwrap

import numpy as np
import pytest

from pfstrip import build_grid
from pfstrip.errors import ConfigError, IoError
from pfstrip.functionals import DiagnosticsRow
from pfstrip.io_cli import (CSV_HEADER, cli_main, format_diagnostics_row,
                            parse_config, serialize_config, validate_config,
                            write_pgm, write_snapshot)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

MINIMAL = textwrap.dedent("""\
    domain.lx = 1.0
    domain.ly = 1.0
    domain.nx = 8
    domain.ny = 4
    time.dt = 0.01
    time.t_end = 0.0
    potential_bulk.kind = logarithmic
    potential_bulk.delta = 1.0
    potential_surf.kind = logarithmic
    potential_surf.delta = 1.0
    latent_bulk.a = -0.5
    latent_bulk.b = 0.0
    latent_bulk.c = 0.0
    latent_surf.a = -0.5
    latent_surf.b = 0.0
    latent_surf.c = 0.0
    """)


def with_lines(*extra):
    """MINIMAL plus overrides; an override replaces an existing key in place."""
    lines = MINIMAL.splitlines()
    for item in extra:
        key = item.split("=")[0].strip()
        hits = [i for i, l in enumerate(lines) if l.split("=")[0].strip() == key]
        if hits:
            lines[hits[0]] = item
        else:
            lines.append(item)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- parsing


def test_minimal_config_defaults():
    c = parse_config(MINIMAL)
    assert (c.domain.lx, c.domain.ly, c.domain.nx, c.domain.ny) == (1.0, 1.0, 8, 4)
    assert c.time.snapshot_every == 0
    assert c.time.min_dt == 0.01 / 1024.0
    assert (c.source.kind, c.source.amplitude) == ("zero", 0.0)
    assert (c.source.kx, c.source.omega) == (1, 0.0)
    assert (c.init.theta_kind, c.init.theta_value) == ("constant", 1.0)
    assert (c.init.chi_kind, c.init.chi_value) == ("constant", 0.0)
    assert (c.init.theta_amplitude, c.init.chi_amplitude) == (0.0, 0.0)
    assert (c.init.theta_kx, c.init.chi_kx) == (1, 1)
    assert (c.init.theta_width, c.init.chi_width) == (0.1, 0.1)
    assert c.init.seed == 0
    assert (c.solver.newton_tol, c.solver.newton_max_iter) == (1.0e-10, 50)
    assert (c.solver.cg_tol, c.solver.guard_eps) == (1.0e-10, 1.0e-12)
    assert (c.output.dir, c.output.write_pgm) == ("out", False)


def test_parse_comments_and_spacing():
    text = MINIMAL.replace("domain.nx = 8", "  domain.nx=8   # columns")
    assert parse_config(text).domain.nx == 8


def test_parse_bound_violation():
    with pytest.raises(ConfigError, match="domain.nx.*at least 4"):
        parse_config(MINIMAL.replace("domain.nx = 8", "domain.nx = 3"))


def test_parse_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate key 'domain.lx'"):
        parse_config(MINIMAL + "domain.lx = 2.0\n")


def test_parse_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'domain.nz'"):
        parse_config(MINIMAL + "domain.nz = 8\n")


def test_parse_type_error_carries_line_number():
    with pytest.raises(ConfigError, match="line 3.*expects a int.*'eight'"):
        parse_config(MINIMAL.replace("domain.nx = 8", "domain.nx = eight"))


def test_parse_missing_required_key():
    text = "\n".join(l for l in MINIMAL.splitlines() if not l.startswith("time.dt"))
    with pytest.raises(ConfigError, match="missing required key 'time.dt'"):
        parse_config(text)


def test_parse_min_dt_above_dt():
    with pytest.raises(ConfigError, match="min_dt must not exceed"):
        parse_config(with_lines("time.min_dt = 0.02"))


def test_serialize_round_trip():
    c = parse_config(with_lines("init.chi_kind = tanh_stripe",
                                "init.chi_amplitude = 0.4",
                                "source.kind = sinusoid",
                                "source.amplitude = 0.25",
                                "output.write_pgm = true"))
    assert parse_config(serialize_config(c)) == c


# ------------------------------------------------------------- validation


def test_validate_minimal_ok():
    rep = validate_config(parse_config(MINIMAL))
    assert rep.ok
    assert rep.compatibility.ok and rep.compatibility.c_s == 1.0
    assert rep.coercivity.ok
    assert rep.initial_state_error is None
    assert rep.mu0 == pytest.approx(3.0)
    assert "overall: ok" in rep.render()


def test_validate_quartic_bulk_log_surface_ok():
    text = MINIMAL.replace("potential_bulk.kind = logarithmic",
                           "potential_bulk.kind = quartic")
    rep = validate_config(parse_config(text))
    assert rep.ok and rep.compatibility.ok


def test_validate_log_bulk_quartic_surface_rejected():
    text = MINIMAL.replace("potential_surf.kind = logarithmic",
                           "potential_surf.kind = quartic")
    rep = validate_config(parse_config(text))
    assert not rep.ok
    assert "must be contained in" in rep.compatibility_error
    assert "compatibility: FAIL" in rep.render()


def test_validate_mean_mode_source_is_reported():
    # kx = 0 keeps the projected mean; the report must expose it.
    rep = validate_config(parse_config(with_lines(
        "source.kind = sinusoid", "source.amplitude = 0.5", "source.kx = 0")))
    assert rep.ok
    assert rep.source_projected_mean == pytest.approx(0.5)


def test_validate_bad_initial_state():
    rep = validate_config(parse_config(with_lines("init.chi_value = 1.5")))
    assert not rep.ok
    assert rep.initial_state_error is not None
    assert "initial state: FAIL" in rep.render()


# ---------------------------------------------------------- output formats


def test_csv_header():
    assert CSV_HEADER == ("step,time,mu,energy,entropy,dissipation_cum,source_cum,"
                          "energy_id_residual,theta_min,theta_max,chi_min,chi_max,"
                          "u_spatial_std,newton_iters_chi,newton_iters_theta")


def test_format_diagnostics_row():
    row = DiagnosticsRow(step=3, t=0.25, mu=1.0, energy=-2.0, entropy=0.5,
                         dissipation_cum=0.0, source_cum=0.0,
                         energy_id_residual=1.0e-15, theta_min=0.9, theta_max=1.1,
                         chi_min=-0.5, chi_max=0.5, u_spatial_std=0.01,
                         newton_iters_chi=4, newton_iters_theta=5)
    cells = format_diagnostics_row(row).split(",")
    assert len(cells) == 15
    assert cells[0] == "3"
    assert cells[1] == "2.5000000000000000e-01"
    assert cells[3] == "-2.0000000000000000e+00"
    assert cells[-2:] == ["4", "5"]


def test_snapshot_matches_golden(tmp_path):
    g = build_grid(1.0, 1.0, 4, 2)
    field = np.arange(12, dtype=float) * 0.25 - 1.0
    path = tmp_path / "snap.csv"
    write_snapshot(field, g, str(path))
    with open(os.path.join(GOLDEN, "snapshot_4x2.csv"), "rb") as fh:
        assert path.read_bytes() == fh.read()


def test_snapshot_top_row_first(tmp_path):
    g = build_grid(1.0, 1.0, 4, 2)
    field = np.arange(12, dtype=float)
    path = tmp_path / "snap.csv"
    write_snapshot(field, g, str(path))
    rows = path.read_text().splitlines()
    assert len(rows) == 3
    assert rows[0].split(",")[0] == "8.0000000000000000e+00"
    assert rows[2].split(",")[0] == "0.0000000000000000e+00"


def test_pgm_grammar(tmp_path):
    g = build_grid(1.0, 1.0, 4, 2)
    field = np.arange(12, dtype=float) * 0.25 - 1.0
    path = tmp_path / "field.pgm"
    write_pgm(field, g, str(path))
    blob = path.read_bytes()
    header = b"P5\n4 3\n65535\n"
    assert blob.startswith(header)
    payload = blob[len(header):]
    assert len(payload) == 2 * 12
    samples = np.frombuffer(payload, dtype=">u2").reshape(3, 4)
    assert samples[0, 3] == 65535  # max lives on the top boundary row (j = 2)
    assert samples[2, 0] == 0
    sidecar = (tmp_path / "field.range.txt").read_text()
    assert sidecar == "-1.0000000000000000e+00 1.7500000000000000e+00\n"


def test_pgm_constant_field(tmp_path):
    g = build_grid(1.0, 1.0, 4, 2)
    path = tmp_path / "flat.pgm"
    write_pgm(np.full(12, 7.0), g, str(path))
    blob = path.read_bytes()
    samples = np.frombuffer(blob[len(b"P5\n4 3\n65535\n"):], dtype=">u2")
    assert not samples.any()
    assert (tmp_path / "flat.range.txt").read_text().split() == [
        "7.0000000000000000e+00", "7.0000000000000000e+00"]


# -------------------------------------------------------------------- CLI


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cli_check_example_config(capsys):
    code = cli_main(["check", "--config",
                     os.path.join(os.path.dirname(GOLDEN), "..", "configs", "example.cfg")])
    assert code == 0
    out = capsys.readouterr().out
    assert "overall: ok" in out


def test_cli_simulate_zero_horizon(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL)
    out_dir = tmp_path / "out"
    assert cli_main(["simulate", "--config", cfg, "--output", str(out_dir)]) == 0
    lines = (out_dir / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 2 and lines[1].startswith("0,")
    assert not (out_dir / ".lock").exists()
    assert "simulate: 0 steps" in capsys.readouterr().out


def test_cli_malformed_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "domain.lx 1.0\n")
    assert cli_main(["simulate", "--config", cfg]) == 1
    assert "expected 'section.key = value'" in capsys.readouterr().err


def test_cli_missing_config_file(tmp_path, capsys):
    assert cli_main(["check", "--config", str(tmp_path / "no.cfg")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_cli_validation_failure_exits_3(tmp_path, capsys):
    text = MINIMAL.replace("potential_surf.kind = logarithmic",
                           "potential_surf.kind = quartic")
    cfg = write_cfg(tmp_path, text)
    out_dir = tmp_path / "out"
    assert cli_main(["simulate", "--config", cfg, "--output", str(out_dir)]) == 3
    assert "compatibility: FAIL" in capsys.readouterr().err
    assert not out_dir.exists()


def test_cli_stationary_inadmissible_mass(tmp_path, capsys):
    # lambda(r) = -r^2 on quartic potentials: mu0 = 3 (0.5 - 9) sits far
    # below the lower bound of -3, so validation refuses to run the solve.
    text = textwrap.dedent("""\
        domain.lx = 1.0
        domain.ly = 1.0
        domain.nx = 8
        domain.ny = 4
        time.dt = 0.01
        time.t_end = 0.0
        potential_bulk.kind = quartic
        potential_bulk.delta = 1.0
        potential_surf.kind = quartic
        potential_surf.delta = 1.0
        latent_bulk.a = 1.0
        latent_bulk.b = 0.0
        latent_bulk.c = 0.0
        latent_surf.a = 1.0
        latent_surf.b = 0.0
        latent_surf.c = 0.0
        init.theta_value = 0.5
        init.chi_value = 3.0
        """)
    cfg = write_cfg(tmp_path, text)
    code = cli_main(["stationary", "--config", cfg, "--output", str(tmp_path / "out")])
    assert code == 3
    assert "mass admissibility: FAIL" in capsys.readouterr().err


def test_cli_stationary_writes_outputs(tmp_path, capsys):
    text = with_lines("init.chi_value = 0.2", "output.write_pgm = true")
    cfg = write_cfg(tmp_path, text)
    out_dir = tmp_path / "out"
    assert cli_main(["stationary", "--config", cfg, "--output", str(out_dir)]) == 0
    assert (out_dir / "chi_inf.csv").exists()
    assert (out_dir / "chi_inf.pgm").exists()
    summary = (out_dir / "stationary_summary.txt").read_text()
    assert summary == capsys.readouterr().out
    assert summary.splitlines()[0].startswith("theta_inf = ")
    assert "mass_admissible = yes" in summary


def test_cli_solver_failure_exits_2(tmp_path, capsys):
    # One Newton iteration cannot resolve a stripe, and min_dt = dt leaves
    # the stepper no room to retry.
    text = with_lines("time.t_end = 0.01",
                      "init.chi_kind = tanh_stripe",
                      "init.chi_amplitude = 0.5",
                      "init.chi_width = 0.2",
                      "solver.newton_max_iter = 1",
                      "time.min_dt = 0.01")
    cfg = write_cfg(tmp_path, text)
    assert cli_main(["simulate", "--config", cfg, "--output", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_locked_output_dir(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL)
    out_dir = tmp_path / "busy"
    out_dir.mkdir()
    (out_dir / ".lock").touch()
    assert cli_main(["simulate", "--config", cfg, "--output", str(out_dir)]) == 2
    assert "locked by another run" in capsys.readouterr().err
    assert (out_dir / ".lock").exists()  # a foreign lock is never removed


def test_cli_ode_command(tmp_path, capsys):
    text = with_lines("time.t_end = 0.1", "init.theta_value = 2.0",
                      "init.chi_value = 0.3")
    cfg = write_cfg(tmp_path, text)
    out_dir = tmp_path / "out"
    assert cli_main(["ode", "--config", cfg, "--output", str(out_dir)]) == 0
    lines = (out_dir / "ode.csv").read_text().splitlines()
    assert lines[0] == "t,theta,chi"
    assert len(lines) > 2
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 2.0
    assert "samples to t = 0.1" in capsys.readouterr().out


def test_cli_ode_rejects_nonconstant_presets(tmp_path, capsys):
    text = with_lines("init.chi_kind = tanh_stripe", "init.chi_amplitude = 0.3")
    cfg = write_cfg(tmp_path, text)
    assert cli_main(["ode", "--config", cfg, "--output", str(tmp_path / "o")]) == 1
    assert "constant init presets" in capsys.readouterr().err


def test_cli_runs_are_byte_identical(tmp_path):
    text = with_lines("time.t_end = 0.05",
                      "time.snapshot_every = 2",
                      "init.theta_kind = random",
                      "init.theta_amplitude = 0.1",
                      "init.chi_kind = random",
                      "init.chi_amplitude = 0.3",
                      "init.seed = 7",
                      "output.write_pgm = true")
    cfg = write_cfg(tmp_path, text)
    dirs = (tmp_path / "a", tmp_path / "b")
    for d in dirs:
        assert cli_main(["simulate", "--config", cfg, "--output", str(d)]) == 0
    names = sorted(os.listdir(dirs[0]))
    assert names == sorted(os.listdir(dirs[1]))
    assert "diagnostics.csv" in names and "theta_2.pgm" in names
    for name in names:
        a = (dirs[0] / name).read_bytes()
        b = (dirs[1] / name).read_bytes()
        assert a == b, name
