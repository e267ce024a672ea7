"""Command-line entry point: ``kpo-ising <command> [options]``.

Every run writes its CSVs, a ``manifest.json`` with the resolved parameters,
integrator settings and invariant summaries, and a ``config.ini`` that
re-runs it (``--config`` also accepts the manifest itself).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .engine import InvariantViolation, evolve
from .experiments import (
    CSV_HEADERS,
    ResultCache,
    SweepResult,
    run_fast_schedule,
    sample_interval_for,
    sweep_gamma,
    sweep_kappa_scale,
    sweep_theta_p,
)
from .observables import correlation_over_readout, husimi_q_real_slice, metapotential
from .spectrum import pump_spectrum

log = logging.getLogger("kpo_ising")

CSV_NAMES = {"sweep-theta": "theta_sweep.csv", "fast": "fast_theta_sweep.csv", "sweep-gamma": "gamma_sweep.csv", "sweep-kappa": "kappa_sweep.csv"}


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def emit_results(cfg: RunConfig, out: Path, results=None, extra: dict | None = None) -> dict:
    """Write CSVs (sweeps), ``manifest.json`` and ``config.ini``; return the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "code_version": __version__,
        "command": cfg.command,
        "resolved": cfg.resolved(),
        "config_text": cfg.to_text(),
        "dt_ns_requested": cfg.settings.dt_ns,
        "cutoff": cfg.spec.base()[2].dim_per_mode,
        "grid_alpha_max": cfg.settings.grid.alpha_max,
        "grid_step": cfg.settings.grid.step,
    }
    if results is not None:
        sweeps = results if isinstance(results, list) else [results]
        rows = [row for s in sweeps for row in s.csv_rows()]
        _write_csv(out / CSV_NAMES[cfg.command], CSV_HEADERS[sweeps[0].spec.axis], rows)
        points = [pt for s in sweeps for pt in s.manifest()["points"]]
        failed = [p["axis_value"] for p in points if p["status"] != "ok"]
        ok_points = [p for p in points if p["status"] == "ok"]
        manifest["points"] = points
        manifest["dt_ns_used"] = sorted({p["dt_us"] * 1e3 for p in ok_points})
        manifest["invariants"] = {
            "all_passed": not failed,
            "failed_points": failed,
            "max_trace_error": max((p["max_trace_error"] for p in ok_points), default=None),
            "max_hermiticity_error": max((p["max_hermiticity_error"] for p in ok_points), default=None),
        }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(cfg.to_text())
    return manifest


def _run_sweep(cfg: RunConfig, cache):
    kw = dict(threads=cfg.threads, cache=cache)
    if cfg.command == "sweep-theta":
        return sweep_theta_p(cfg.spec, **kw)
    if cfg.command == "sweep-gamma":
        return sweep_gamma(cfg.spec, **kw)
    if cfg.command == "sweep-kappa":
        return sweep_kappa_scale(cfg.spec, families=cfg.families, **kw)
    return run_fast_schedule(cfg.spec, **kw)


def _single_run(cfg: RunConfig):
    params, schedule, cutoff = cfg.spec.resolve(cfg.spec.points[0])
    si = sample_interval_for(schedule, cfg.settings)
    dt = None if cfg.settings.dt_ns is None else cfg.settings.dt_ns * 1e-3
    traj = evolve(None, params, schedule, cutoff, sample_interval=si, dt=dt, store_window=(schedule.readout_start, schedule.readout_stop))
    return params, schedule, cutoff, traj


def _trajectory_extra(traj) -> dict:
    st = traj.step_stats
    return {
        "dt_ns_used": [st.dt * 1e3],
        "n_steps": st.n_steps,
        "invariants": {"all_passed": True, "max_trace_error": st.max_trace_error, "max_hermiticity_error": st.max_hermiticity_error},
    }


def run(cfg: RunConfig, out: Path, cache=None) -> int:
    """Execute a resolved config; return the process exit code."""
    if cfg.is_sweep:
        results = _run_sweep(cfg, cache)
        manifest = emit_results(cfg, out, results)
        return 0 if manifest["invariants"]["all_passed"] else 1

    if cfg.command == "spectrum":
        params, _, cutoff = cfg.spec.resolve(cfg.spec.points[0])
        sweep = pump_spectrum(params, cutoff, cfg.spectrum_p_max, cfg.spectrum_points, cfg.spectrum_levels)
        out.mkdir(parents=True, exist_ok=True)
        sweep.to_csv(out / "spectrum.csv")
        emit_results(cfg, out, extra={"gap_minima_MHz": [float(p) for p in sweep.gap_minima()]})
        return 0

    if cfg.command == "metapotential":
        params, schedule, _ = cfg.spec.resolve(cfg.spec.points[0])
        n = int(round(cfg.metapotential_x_max / cfg.metapotential_step))
        axis = np.arange(-n, n + 1) * cfg.metapotential_step
        x = axis[:, None] + 1j * axis[None, :]
        v = metapotential(x, schedule.p_max_L, params.kerr_L, params.g, params.theta_p, params.alpha_target_R, cfg.metapotential_kerr_units)
        out.mkdir(parents=True, exist_ok=True)
        rows = [[_fmt(x[j, k].real), _fmt(x[j, k].imag), _fmt(v[j, k])] for j in range(axis.size) for k in range(axis.size)]
        _write_csv(out / "metapotential.csv", "re_x,im_x,value", rows)
        emit_results(cfg, out)
        return 0

    try:
        params, schedule, cutoff, traj = _single_run(cfg)
    except InvariantViolation as exc:
        log.error("%s", exc)
        emit_results(cfg, out, extra={"invariants": {"all_passed": False, "error": str(exc)}})
        return 1
    out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "evolve":
        _write_csv(out / "trajectory.csv", "time_us,n_L,n_R,trace",
                   [[_fmt(t), _fmt(a), _fmt(b), _fmt(c)] for t, a, b, c in zip(traj.times, traj.n_L, traj.n_R, traj.trace)])
        rec = correlation_over_readout(traj, schedule, cfg.settings.grid)
        _write_csv(out / "correlation.csv", "time_us,xi_plus,xi_minus,p_plus",
                   [[_fmt(t), _fmt(a), _fmt(b), _fmt(c)] for t, a, b, c in zip(rec.times, rec.xi_plus, rec.xi_minus, rec.p_plus)])
        emit_results(cfg, out, extra={"correlation": rec.readout_average, **_trajectory_extra(traj)})
    else:  # qfunc
        q = husimi_q_real_slice(traj.state_at(traj.state_times[-1]), cfg.settings.grid, cutoff)
        q.to_csv(out / "qgrid.csv")
        emit_results(cfg, out, extra={"qgrid_time_us": float(traj.state_times[-1]), **_trajectory_extra(traj)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpo-ising", description="Two coupled Kerr parametric oscillators: master-equation runs and sweeps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config, or a manifest.json to re-run")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--profile", choices=("reduced", "paper"), help="reduced: small amplitudes, 12 levels per mode")
    common.add_argument("--threads", type=int, help="worker processes for sweep points")
    common.add_argument("--dt-ns", type=float, help="RK4 step in ns (default: 0.2 ns or the stability bound)")
    common.add_argument("--cutoff", type=int, help="Fock levels per mode")
    common.add_argument("--cache", type=Path, help="directory caching per-point sweep results")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "evolve": "single run: photon numbers, trace and readout correlation",
        "sweep-theta": "correlation versus relative pump phase",
        "sweep-gamma": "correlation versus pure dephasing rate",
        "sweep-kappa": "correlation versus photon-loss scale, per dephasing family",
        "fast": "pump-phase sweep with the detuned fast schedule",
        "spectrum": "top eigenenergies versus pump and vacuum-branch tracking",
        "qfunc": "Husimi Q on the real slice at the end of the readout window",
        "metapotential": "classical metapotential of the L oscillator on a complex grid",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def load_config_text(path: Path) -> str:
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)["config_text"]
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    text, source = "", "<empty>"
    if args.config is not None:
        try:
            text, source = load_config_text(args.config), str(args.config)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 2
    try:
        cfg = parse_config(text, source, command=args.command, profile=args.profile, threads=args.threads, dt_ns=args.dt_ns, cutoff=args.cutoff)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cache = ResultCache(args.cache) if args.cache else None
    try:
        return run(cfg, args.out, cache)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
