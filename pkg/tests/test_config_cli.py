import csv
import json
import math

import pytest

from kpo_ising.cli import build_parser, emit_results, main
from kpo_ising.config import COMMANDS, ConfigError, parse_config
from kpo_ising.experiments import CSV_HEADERS, PointResult, SweepResult, SweepSpec
from kpo_ising.model import FAST_TIMING, SystemParams

# A short, small run: every CLI command finishes in seconds with this.
TINY = """
[run]
profile = reduced

[schedule]
ramp_up_us = 0.2
plateau_us = 0.1
readout_delay_us = 0.0
readout_window_us = 0.1

[integrator]
cutoff = 6
sample_interval_us = 0.05

[grid]
alpha_max = 3.0
step = 0.5
"""


def test_paper_preset_resolves_to_defaults():
    cfg = parse_config("[run]\ncommand = evolve\n")
    assert cfg.params() == SystemParams()
    assert cfg.spec.base()[2].dim_per_mode == 24


def test_fast_preset_schedule():
    cfg = parse_config("[run]\npreset = fast\n", command="evolve")
    params, schedule, _ = cfg.spec.resolve(0.0)
    assert params.delta_L == -20.0 and params.delta_R == -20.0
    assert (schedule.ramp_up, schedule.plateau, schedule.readout_delay, schedule.readout_window) == tuple(FAST_TIMING.values())


def test_dephasing_above_internal_loss_rejected():
    text = "[run]\ncommand = evolve\n\n[params]\ngamma_L_mhz_over_2pi = 0.2\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "x.ini")
    assert exc.value.line == 5 and "x.ini:5" in str(exc.value)


def test_positive_kerr_rejected_with_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("[run]\ncommand = evolve\n[params]\nkerr_R_mhz_over_2pi = 3\n")
    assert exc.value.line == 4 and "negative" in str(exc.value)


def test_schedule_window_rejected():
    text = "[run]\ncommand = evolve\n[schedule]\nplateau_us = 1.0\nreadout_window_us = 1.0\n"
    with pytest.raises(ConfigError, match="plateau") as exc:
        parse_config(text)
    assert exc.value.line in (4, 5)


@pytest.mark.parametrize("text,line", [
    ("[run]\ncommand = evolve\n[bogus]\nx = 1\n", 3),
    ("[run]\ncommand = evolve\ncolour = red\n", 3),
    ("[run]\ncommand = evolve\n[params]\ng_mhz = 7\n", 4),
    ("[run]\ncommand = evolve\n[params]\ng_mhz_over_2pi = seven\n", 4),
    ("[run]\ncommand = teleport\n", 2),
    ("[run]\ncommand = sweep-kappa\n[sweep]\npoints = 0, 4\n", 4),
    ("[run]\ncommand = evolve\n[grid]\nstep = 0.7\n", 4),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line


def test_cli_overrides_win():
    cfg = parse_config(TINY, command="sweep-theta", profile="paper", threads=2, dt_ns=0.05, cutoff=10)
    assert cfg.spec.profile == "paper" and cfg.threads == 2
    assert cfg.settings.dt_ns == 0.05 and cfg.spec.base()[2].dim_per_mode == 10


@pytest.mark.parametrize("command", COMMANDS)
def test_round_trip(command):
    text = TINY + "\n[params]\ntheta_p_rad = 0.5\ngamma_R_mhz_over_2pi = 0.01\n"
    if command == "sweep-kappa":
        text += "\n[sweep]\npoints = 0, 1.5\nfamilies_mhz_over_2pi = 0, 0.02\n"
    cfg = parse_config(text, command=command)
    again = parse_config(cfg.to_text())
    assert again.resolved() == cfg.resolved()
    assert again.to_text() == cfg.to_text()


def test_parser_has_every_command():
    parser = build_parser()
    for cmd in COMMANDS:
        args = parser.parse_args([cmd, "--out", "x", "--profile", "reduced", "--threads", "2", "--dt-ns", "0.1", "--cutoff", "8"])
        assert args.command == cmd and args.threads == 2 and args.dt_ns == 0.1 and args.cutoff == 8


def _write_tiny(tmp_path, extra=""):
    path = tmp_path / "run.ini"
    path.write_text(TINY + extra)
    return path


def test_sweep_cli_outputs_and_rerun(tmp_path):
    cfg = _write_tiny(tmp_path, "\n[sweep]\npoints = 0, 3.141592653589793\n")
    out = tmp_path / "a"
    assert main(["sweep-theta", "--config", str(cfg), "--out", str(out)]) == 0
    text = (out / "theta_sweep.csv").read_text()
    assert text.splitlines()[0] == "theta_p_rad,correlation,n_L,n_R"
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 2 and all(0 <= float(r["correlation"]) <= 1 for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["invariants"]["all_passed"]
    assert manifest["cutoff"] == 6 and manifest["grid_step"] == 0.5 and manifest["dt_ns_used"]
    again = tmp_path / "b"
    assert main(["sweep-theta", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "theta_sweep.csv").read_bytes() == (out / "theta_sweep.csv").read_bytes()
    assert (again / "config.ini").read_bytes() == (out / "config.ini").read_bytes()


def test_evolve_and_qfunc_cli(tmp_path):
    cfg = _write_tiny(tmp_path)
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "trajectory.csv").read_text().startswith("time_us,n_L,n_R,trace\n")
    corr = (tmp_path / "e" / "correlation.csv").read_text().splitlines()
    assert corr[0] == "time_us,xi_plus,xi_minus,p_plus" and len(corr) == 4
    assert main(["qfunc", "--config", str(cfg), "--out", str(tmp_path / "q")]) == 0
    assert (tmp_path / "q" / "qgrid.csv").read_text().startswith("alpha_L,alpha_R,value\n")


def test_spectrum_and_metapotential_cli(tmp_path):
    cfg = _write_tiny(tmp_path, "\n[spectrum]\nn_points = 5\nlevels = 3\n\n[metapotential]\nx_max = 1.0\nstep = 0.5\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "spectrum.csv").read_text().startswith("p_L_MHz,level,energy_MHz,is_tracked,gap_MHz\n")
    assert main(["metapotential", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    lines = (tmp_path / "m" / "metapotential.csv").read_text().splitlines()
    assert lines[0] == "re_x,im_x,value" and len(lines) == 26


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[params]\ngamma_L_mhz_over_2pi = 0.2\n")
    assert main(["evolve", "--config", str(bad)]) == 2
    assert "bad.ini:2" in capsys.readouterr().err
    assert main(["evolve", "--config", str(tmp_path / "missing.ini")]) == 2


def test_failed_point_sets_exit_code(tmp_path):
    cfg = parse_config(TINY, command="sweep-theta")
    ok = PointResult(0.0, 0.6, 1.0, 1.0, 0.1, diagnostics={"dt_us": 2e-4, "max_trace_error": 0.0, "max_hermiticity_error": 0.0})
    bad = PointResult(1.0, math.nan, math.nan, math.nan, 0.0, status="failed", error="trace drifted")
    res = SweepResult(cfg.spec.replace(points=(0.0, 1.0)), [ok, bad])
    manifest = emit_results(cfg, tmp_path, res)
    assert not manifest["invariants"]["all_passed"] and manifest["invariants"]["failed_points"] == [1.0]
    assert (tmp_path / "theta_sweep.csv").read_text().splitlines()[0] == CSV_HEADERS["theta_p"]
