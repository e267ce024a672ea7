"""Parameter sweeps: pump phase, dephasing rate, loss scale and the fast schedule.

Each sweep point is one master-equation run followed by the readout-window
correlation. Points are independent; they run sequentially or in a process
pool and are assembled by axis value. A point's result is a pure function of
its resolved parameters and integrator settings, so results can be cached on
disk under a hash of those inputs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import InvariantViolation, evolve
from .fock import FockCutoff
from .model import FAST_TIMING, PAPER_TIMING, PROFILE_CUTOFF, PumpSchedule, SystemParams, schedule_for
from .observables import DEFAULT_GRID, GridSpec, correlation_over_readout, time_average
from .spectrum import opposite_correlation_population

log = logging.getLogger(__name__)

AXES = ("theta_p", "gamma", "kappa_scale")
KAPPA_BASE = (1.00, 0.86)  # MHz, total loss at unit scale (L, R)
KAPPA_SCALE_RANGE = (0.0, 3.0)

DEFAULT_THETA_POINTS = tuple(k * math.pi / 8 for k in range(17))
DEFAULT_GAMMA_POINTS = tuple(g / 1000 for g in (0, 5, 15, 25, 35.8, 45, 60))  # MHz
DEFAULT_KAPPA_POINTS = (0.0, 1.0, 2.0, 3.0)
DEFAULT_KAPPA_FAMILIES = tuple(g / 1000 for g in (0, 15, 35.8, 60))  # MHz

CSV_HEADERS = {
    "theta_p": "theta_p_rad,correlation,n_L,n_R",
    "gamma": "gamma_MHz,correlation,n_L,n_R",
    "kappa_scale": "gamma_MHz,kappa_scale,correlation,n_L,n_R,opposite_population",
}

_PARAM_FIELDS = {f.name for f in dataclasses.fields(SystemParams)}
_TIMING_FIELDS = {"ramp_up", "plateau", "readout_delay", "readout_window"}


@dataclass(frozen=True)
class RunSettings:
    """Integrator and readout settings shared by every point of a sweep.

    ``dt_ns`` ``None`` means the engine default; ``sample_interval`` ``None``
    means ``min(0.02 µs, readout_window / 20)``; ``cutoff`` ``None`` means the
    profile default.
    """

    dt_ns: float | None = None
    sample_interval: float | None = None
    grid: GridSpec = DEFAULT_GRID
    cutoff: int | None = None

    def to_dict(self) -> dict:
        return {
            "dt_ns": self.dt_ns,
            "sample_interval_us": self.sample_interval,
            "grid_alpha_max": self.grid.alpha_max,
            "grid_step": self.grid.step,
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSettings":
        return cls(
            dt_ns=d.get("dt_ns"),
            sample_interval=d.get("sample_interval_us"),
            grid=GridSpec(d.get("grid_alpha_max", DEFAULT_GRID.alpha_max), d.get("grid_step", DEFAULT_GRID.step)),
            cutoff=d.get("cutoff"),
        )


@dataclass(frozen=True)
class SweepSpec:
    preset: str = "paper"
    axis: str = "theta_p"
    points: tuple = DEFAULT_THETA_POINTS
    overrides: dict = field(default_factory=dict)
    profile: str = "paper"
    settings: RunSettings = RunSettings()

    def __post_init__(self):
        if self.preset not in ("paper", "fast"):
            raise ValueError(f"preset must be 'paper' or 'fast', got {self.preset!r}")
        if self.profile not in PROFILE_CUTOFF:
            raise ValueError(f"profile must be one of {sorted(PROFILE_CUTOFF)}, got {self.profile!r}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError("points must be nonempty")
        if not all(math.isfinite(p) for p in pts):
            raise ValueError("points must be finite")
        if len(set(pts)) != len(pts):
            raise ValueError("points must be distinct")
        if self.axis == "gamma" and min(pts) < 0:
            raise ValueError("dephasing rates must be nonnegative")
        if self.axis == "kappa_scale":
            lo, hi = KAPPA_SCALE_RANGE
            if min(pts) < lo or max(pts) > hi:
                raise ValueError(f"kappa_scale points must lie in [{lo}, {hi}]")
        unknown = set(self.overrides) - _PARAM_FIELDS - _TIMING_FIELDS
        if unknown:
            raise ValueError(f"unknown override keys: {sorted(unknown)}")

    def base(self) -> tuple[SystemParams, dict, FockCutoff]:
        """Parameters, timing and cutoff before the axis value is applied."""
        params = SystemParams(delta_L=-20.0, delta_R=-20.0) if self.preset == "fast" else SystemParams()
        timing = dict(FAST_TIMING if self.preset == "fast" else PAPER_TIMING)
        if self.profile == "reduced":
            params = params.replace(alpha_target_L=1.6, alpha_target_R=1.5)
        params = params.replace(**{k: v for k, v in self.overrides.items() if k in _PARAM_FIELDS})
        timing.update({k: v for k, v in self.overrides.items() if k in _TIMING_FIELDS})
        cutoff = FockCutoff(self.settings.cutoff or PROFILE_CUTOFF[self.profile])
        return params, timing, cutoff

    def resolve(self, value: float) -> tuple[SystemParams, PumpSchedule, FockCutoff]:
        params, timing, cutoff = self.base()
        if self.axis == "theta_p":
            params = params.replace(theta_p=value)
        elif self.axis == "gamma":
            params = params.replace(gamma_L=value, gamma_R=value)
        else:
            params = params.replace(kappa_total_L=value * KAPPA_BASE[0], kappa_total_R=value * KAPPA_BASE[1])
        return params, schedule_for(params, **timing), cutoff

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "axis": self.axis,
            "points": list(self.points),
            "overrides": dict(self.overrides),
            "profile": self.profile,
            "settings": self.settings.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(
            preset=d["preset"], axis=d["axis"], points=tuple(d["points"]),
            overrides=dict(d.get("overrides", {})), profile=d.get("profile", "paper"),
            settings=RunSettings.from_dict(d.get("settings", {})),
        )

    def replace(self, **changes) -> "SweepSpec":
        return dataclasses.replace(self, **changes)


@dataclass
class PointResult:
    axis_value: float
    correlation: float
    n_L: float
    n_R: float
    runtime: float
    status: str = "ok"
    error: str | None = None
    times: list = field(default_factory=list)
    p_plus: list = field(default_factory=list)
    opposite_population: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PointResult":
        return cls(**d)


def sample_interval_for(schedule: PumpSchedule, settings: RunSettings) -> float:
    if settings.sample_interval is not None:
        return settings.sample_interval
    if schedule.readout_window > 0:
        return min(0.02, schedule.readout_window / 20)
    return 0.02


def run_point(
    params: SystemParams,
    schedule: PumpSchedule,
    cutoff: FockCutoff,
    settings: RunSettings = RunSettings(),
    final_population: bool = False,
) -> PointResult:
    """One vacuum-start run and its readout-window correlation.

    The run stops at the end of the readout window unless ``final_population``
    asks for the end-of-plateau population of the even-parity
    opposite-correlation eigenstate.
    """
    started = time.perf_counter()
    si = sample_interval_for(schedule, settings)
    window = (schedule.readout_start, schedule.readout_stop)
    t_end = schedule.duration if final_population else schedule.readout_stop
    dt = None if settings.dt_ns is None else settings.dt_ns * 1e-3
    traj = evolve(None, params, schedule, cutoff, sample_interval=si, dt=dt, store_window=window, t_end=t_end)
    rec = correlation_over_readout(traj, schedule, settings.grid)
    inside = (traj.times >= window[0] - 1e-9) & (traj.times <= window[1] + 1e-9)
    n_L = time_average(traj.times[inside], traj.n_L[inside])
    n_R = time_average(traj.times[inside], traj.n_R[inside])
    opposite = None
    if final_population:
        p_L, p_R = schedule.pumps(t_end)
        opposite = opposite_correlation_population(traj.final_state, params, p_L, p_R, cutoff, grid=settings.grid).population
    stats = traj.step_stats
    return PointResult(
        axis_value=float("nan"),
        correlation=rec.readout_average,
        n_L=n_L,
        n_R=n_R,
        runtime=time.perf_counter() - started,
        times=[float(t) for t in rec.times],
        p_plus=[float(p) for p in rec.p_plus],
        opposite_population=opposite,
        diagnostics={
            "dt_us": stats.dt,
            "max_stable_dt_us": stats.max_stable_dt,
            "n_steps": stats.n_steps,
            "sample_interval_us": si,
            "t_end_us": t_end,
            "max_trace_error": stats.max_trace_error,
            "max_hermiticity_error": stats.max_hermiticity_error,
        },
    )


class ResultCache:
    """JSON files keyed by a hash of everything a point result depends on."""

    def __init__(self, directory):
        self.directory = Path(directory)

    @staticmethod
    def key(params, schedule, cutoff, settings, final_population) -> str:
        payload = {
            "params": params.to_dict(),
            "schedule": schedule.to_dict(),
            "cutoff": cutoff.dim_per_mode,
            "settings": settings.to_dict(),
            "final_population": final_population,
            "version": __version__,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def get(self, key: str) -> PointResult | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        return PointResult.from_dict(json.loads(path.read_text()))

    def put(self, key: str, result: PointResult) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self.directory / f"{key}.json.tmp"
        tmp.write_text(json.dumps(result.to_dict(), sort_keys=True))
        os.replace(tmp, self.directory / f"{key}.json")


def default_cache() -> ResultCache | None:
    d = os.environ.get("KPO_ISING_CACHE")
    return ResultCache(d) if d else None


def _job(args) -> PointResult:
    value, params, schedule, cutoff, settings, final_population, cache_dir = args
    cache = ResultCache(cache_dir) if cache_dir else None
    key = ResultCache.key(params, schedule, cutoff, settings, final_population) if cache else None
    if cache:
        hit = cache.get(key)
        if hit is not None:
            hit.axis_value = value
            return hit
    try:
        res = run_point(params, schedule, cutoff, settings, final_population)
    except (InvariantViolation, ValueError, ArithmeticError) as exc:
        log.warning("point %s failed: %s", value, exc)
        return PointResult(value, float("nan"), float("nan"), float("nan"), 0.0, status="failed", error=str(exc))
    res.axis_value = value
    if cache:
        cache.put(key, res)
    return res


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list

    @property
    def ok(self) -> bool:
        return all(p.ok for p in self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.axis_value for p in self.points])

    @property
    def correlations(self) -> np.ndarray:
        return np.array([p.correlation for p in self.points])

    def at(self, value: float) -> PointResult:
        for p in self.points:
            if abs(p.axis_value - value) < 1e-12:
                return p
        raise KeyError(value)

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for p in self.points:
            if self.spec.axis == "kappa_scale":
                gamma = self.spec.overrides.get("gamma_L", self.spec.base()[0].gamma_L)
                opp = "" if p.opposite_population is None else _fmt(p.opposite_population)
                rows.append([_fmt(gamma), _fmt(p.axis_value), _fmt(p.correlation), _fmt(p.n_L), _fmt(p.n_R), opp])
            else:
                rows.append([_fmt(p.axis_value), _fmt(p.correlation), _fmt(p.n_L), _fmt(p.n_R)])
        return rows

    def manifest(self) -> dict:
        resolved = []
        for p in self.points:
            params, schedule, cutoff = self.spec.resolve(p.axis_value)
            resolved.append({
                "axis_value": p.axis_value,
                "status": p.status,
                "error": p.error,
                "runtime_s": p.runtime,
                "params": params.to_dict(),
                "schedule": schedule.to_dict(),
                "cutoff": cutoff.dim_per_mode,
                **p.diagnostics,
            })
        return {"spec": self.spec.to_dict(), "points": resolved}


def _fmt(x: float) -> str:
    return repr(float(x))


def run_sweep(
    spec: SweepSpec,
    threads: int = 1,
    cache: ResultCache | None = None,
    final_population=lambda value: False,
) -> SweepResult:
    """Run every point of ``spec``; failed points are kept with ``status='failed'``."""
    cache = cache if cache is not None else default_cache()
    cache_dir = str(cache.directory) if cache else None
    jobs = []
    for v in spec.points:
        params, schedule, cutoff = spec.resolve(v)
        jobs.append((v, params, schedule, cutoff, spec.settings, bool(final_population(v)), cache_dir))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    by_value = {r.axis_value: r for r in results}
    return SweepResult(spec, [by_value[v] for v in spec.points])


def sweep_theta_p(spec: SweepSpec | None = None, **kw) -> SweepResult:
    spec = spec or SweepSpec(axis="theta_p")
    if spec.axis != "theta_p":
        raise ValueError("sweep_theta_p needs axis 'theta_p'")
    return run_sweep(spec, **kw)


def sweep_gamma(spec: SweepSpec | None = None, **kw) -> SweepResult:
    spec = spec or SweepSpec(axis="gamma", points=DEFAULT_GAMMA_POINTS)
    if spec.axis != "gamma":
        raise ValueError("sweep_gamma needs axis 'gamma'")
    if spec.base()[0].theta_p != 0:
        raise ValueError("the dephasing sweep runs at theta_p = 0")
    return run_sweep(spec, **kw)


def sweep_kappa_scale(
    spec: SweepSpec | None = None,
    families=DEFAULT_KAPPA_FAMILIES,
    **kw,
) -> list[SweepResult]:
    """One loss-scale sweep per dephasing rate in ``families`` (MHz).

    Points at zero loss also report the final-time population of the
    even-parity opposite-correlation eigenstate.
    """
    spec = spec or SweepSpec(axis="kappa_scale", points=DEFAULT_KAPPA_POINTS)
    if spec.axis != "kappa_scale":
        raise ValueError("sweep_kappa_scale needs axis 'kappa_scale'")
    out = []
    for g in families:
        fam = spec.replace(overrides={**spec.overrides, "gamma_L": g, "gamma_R": g})
        out.append(run_sweep(fam, final_population=lambda m: m == 0, **kw))
    return out


def run_fast_schedule(spec: SweepSpec | None = None, **kw) -> SweepResult:
    spec = spec or SweepSpec(preset="fast", axis="theta_p")
    if spec.preset != "fast" or spec.axis != "theta_p":
        raise ValueError("run_fast_schedule needs the fast preset and axis 'theta_p'")
    return run_sweep(spec, **kw)
