"""INI-style run configuration.

Frequencies are ordinary frequencies in MHz and carry the key suffix
``_mhz_over_2pi``; times carry ``_us`` (or ``_ns`` for the RK4 step); angles
carry ``_rad``. Example::

    [run]
    command = sweep-theta
    preset = paper
    profile = reduced

    [params]
    gamma_L_mhz_over_2pi = 0.0358
    theta_p_rad = 0

    [sweep]
    points = 0, 1.5707963267948966, 3.141592653589793

Unknown sections or keys are rejected, and every error names the offending line.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

from .experiments import (
    DEFAULT_GAMMA_POINTS,
    DEFAULT_KAPPA_FAMILIES,
    DEFAULT_KAPPA_POINTS,
    DEFAULT_THETA_POINTS,
    RunSettings,
    SweepSpec,
)
from .model import PROFILE_CUTOFF, SystemParams
from .observables import DEFAULT_GRID, GridSpec

COMMANDS = ("evolve", "sweep-theta", "sweep-gamma", "sweep-kappa", "fast", "spectrum", "qfunc", "metapotential")
SWEEP_AXIS = {"sweep-theta": "theta_p", "sweep-gamma": "gamma", "sweep-kappa": "kappa_scale", "fast": "theta_p"}
DEFAULT_POINTS = {
    "sweep-theta": DEFAULT_THETA_POINTS,
    "sweep-gamma": DEFAULT_GAMMA_POINTS,
    "sweep-kappa": DEFAULT_KAPPA_POINTS,
    "fast": DEFAULT_THETA_POINTS,
}

_FREQ_FIELDS = (
    "delta_L", "delta_R", "kerr_L", "kerr_R", "g",
    "kappa_e_L", "kappa_e_R", "kappa_i_meas_L", "kappa_i_meas_R",
    "gamma_L", "gamma_R", "kappa_total_L", "kappa_total_R",
)
PARAM_KEYS = {f"{f}_mhz_over_2pi": f for f in _FREQ_FIELDS}
PARAM_KEYS.update({"theta_p_rad": "theta_p", "alpha_target_L": "alpha_target_L", "alpha_target_R": "alpha_target_R"})
SCHEDULE_KEYS = {f"{f}_us": f for f in ("ramp_up", "plateau", "readout_delay", "readout_window")}

SECTIONS = {
    "run": {"command", "preset", "profile", "threads"},
    "params": set(PARAM_KEYS),
    "schedule": set(SCHEDULE_KEYS),
    "integrator": {"dt_ns", "sample_interval_us", "cutoff"},
    "grid": {"alpha_max", "step"},
    "sweep": {"points", "families_mhz_over_2pi"},
    "spectrum": {"n_points", "levels", "p_max_mhz_over_2pi"},
    "metapotential": {"x_max", "step", "kerr_units"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    """Closed description of one CLI run."""

    command: str
    spec: SweepSpec
    threads: int = 1
    families: tuple = DEFAULT_KAPPA_FAMILIES
    spectrum_points: int = 81
    spectrum_levels: int = 8
    spectrum_p_max: float | None = None
    metapotential_x_max: float = 3.0
    metapotential_step: float = 0.05
    metapotential_kerr_units: bool = False

    @property
    def settings(self) -> RunSettings:
        return self.spec.settings

    def params(self) -> SystemParams:
        return self.spec.base()[0]

    @property
    def is_sweep(self) -> bool:
        return self.command in SWEEP_AXIS

    def resolved(self) -> dict:
        """Canonical closed parameter set: everything a run depends on."""
        specs = [self.spec]
        if self.command == "sweep-kappa":
            specs = [self.spec.replace(overrides={**self.spec.overrides, "gamma_L": f, "gamma_R": f}) for f in self.families]
        runs = []
        for sp in specs:
            for v in sp.points:
                params, schedule, cutoff = sp.resolve(v)
                runs.append({"axis_value": v, "params": params.to_dict(), "schedule": schedule.to_dict(), "cutoff": cutoff.dim_per_mode})
        out = {
            "command": self.command,
            "preset": self.spec.preset,
            "profile": self.spec.profile,
            "axis": self.spec.axis if self.is_sweep else None,
            "settings": self.settings.to_dict(),
            "runs": runs,
        }
        if self.command == "spectrum":
            out["spectrum"] = {"n_points": self.spectrum_points, "levels": self.spectrum_levels, "p_max": self.spectrum_p_max}
        if self.command == "metapotential":
            out["metapotential"] = {"x_max": self.metapotential_x_max, "step": self.metapotential_step, "kerr_units": self.metapotential_kerr_units}
        return out

    def to_text(self) -> str:
        """Fully explicit config text; parsing it yields the same :meth:`resolved` set."""
        if self.is_sweep:
            params, timing, cutoff = self.spec.base()
        else:
            params, _, cutoff = self.spec.resolve(self.spec.points[0])
            timing = self.spec.base()[1]
        s = self.spec.settings
        lines = [
            "[run]",
            f"command = {self.command}",
            f"preset = {self.spec.preset}",
            f"profile = {self.spec.profile}",
            f"threads = {self.threads}",
            "",
            "[params]",
        ]
        for key, name in PARAM_KEYS.items():
            v = getattr(params, name)
            if v is not None:
                lines.append(f"{key} = {v!r}")
        lines += ["", "[schedule]"]
        lines += [f"{key} = {float(timing[name])!r}" for key, name in SCHEDULE_KEYS.items()]
        lines += ["", "[integrator]"]
        if s.dt_ns is not None:
            lines.append(f"dt_ns = {s.dt_ns!r}")
        if s.sample_interval is not None:
            lines.append(f"sample_interval_us = {s.sample_interval!r}")
        lines.append(f"cutoff = {cutoff.dim_per_mode}")
        lines += ["", "[grid]", f"alpha_max = {s.grid.alpha_max!r}", f"step = {s.grid.step!r}"]
        if self.is_sweep:
            lines += ["", "[sweep]", "points = " + ", ".join(repr(p) for p in self.spec.points)]
            if self.command == "sweep-kappa":
                lines.append("families_mhz_over_2pi = " + ", ".join(repr(float(f)) for f in self.families))
        lines += ["", "[spectrum]", f"n_points = {self.spectrum_points}", f"levels = {self.spectrum_levels}"]
        if self.spectrum_p_max is not None:
            lines.append(f"p_max_mhz_over_2pi = {self.spectrum_p_max!r}")
        lines += [
            "", "[metapotential]",
            f"x_max = {self.metapotential_x_max!r}",
            f"step = {self.metapotential_step!r}",
            f"kerr_units = {str(self.metapotential_kerr_units).lower()}",
            "",
        ]
        return "\n".join(lines)


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` and ``(section, "")`` to 1-based line numbers."""
    where = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]$", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, ""), n)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), n)
    return where


def _float(value: str, key: str, line: int | None, source: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}", line, source) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key}: must be finite, got {value!r}", line, source)
    return x


def _int(value: str, key: str, line: int | None, source: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}", line, source) from None


def _floats(value: str, key: str, line: int | None, source: str) -> tuple:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers", line, source)
    return tuple(_float(v, key, line, source) for v in items)


def parse_config(text: str, source: str = "<config>", command: str | None = None, **cli) -> RunConfig:
    """Validate config text into a :class:`RunConfig`.

    ``command`` and keyword overrides (``profile``, ``threads``, ``dt_ns``,
    ``cutoff``) come from the command line and win over the file.
    """
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), source) from None

    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")), source)
        for key in cp[sec]:
            if key not in SECTIONS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), source)

    def get(sec, key):
        if cp.has_section(sec) and key in cp[sec]:
            return cp[sec][key].strip(), lines.get((sec, key))
        return None, None

    cmd_text, cmd_line = get("run", "command")
    command = command or cmd_text
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {command!r}", cmd_line, source)
    preset, preset_line = get("run", "preset")
    preset = preset or ("fast" if command == "fast" else "paper")
    if preset not in ("paper", "fast"):
        raise ConfigError(f"preset must be 'paper' or 'fast', got {preset!r}", preset_line, source)
    if command == "fast" and preset != "fast":
        raise ConfigError("command 'fast' requires preset = fast", preset_line, source)
    profile, profile_line = get("run", "profile")
    profile = cli.get("profile") or profile or "paper"
    if profile not in PROFILE_CUTOFF:
        raise ConfigError(f"profile must be one of {sorted(PROFILE_CUTOFF)}, got {profile!r}", profile_line, source)
    threads_text, threads_line = get("run", "threads")
    threads = cli.get("threads") or (_int(threads_text, "threads", threads_line, source) if threads_text else 1)
    if threads < 1:
        raise ConfigError("threads must be >= 1", threads_line, source)

    overrides, origin = {}, {}
    for key, name in PARAM_KEYS.items():
        v, ln = get("params", key)
        if v is not None:
            overrides[name] = _float(v, key, ln, source)
            origin[name] = ln
    for key, name in SCHEDULE_KEYS.items():
        v, ln = get("schedule", key)
        if v is not None:
            overrides[name] = _float(v, key, ln, source)
            origin[name] = ln

    dt_text, dt_line = get("integrator", "dt_ns")
    dt_ns = cli.get("dt_ns") if cli.get("dt_ns") is not None else (_float(dt_text, "dt_ns", dt_line, source) if dt_text else None)
    if dt_ns is not None and dt_ns <= 0:
        raise ConfigError("dt_ns must be positive", dt_line, source)
    si_text, si_line = get("integrator", "sample_interval_us")
    si = _float(si_text, "sample_interval_us", si_line, source) if si_text else None
    if si is not None and si <= 0:
        raise ConfigError("sample_interval_us must be positive", si_line, source)
    cut_text, cut_line = get("integrator", "cutoff")
    cutoff = cli.get("cutoff") or (_int(cut_text, "cutoff", cut_line, source) if cut_text else None)
    if cutoff is not None and cutoff < 2:
        raise ConfigError("cutoff must be >= 2", cut_line, source)
    gmax, gmax_line = get("grid", "alpha_max")
    gstep, gstep_line = get("grid", "step")
    try:
        grid = GridSpec(
            _float(gmax, "alpha_max", gmax_line, source) if gmax else DEFAULT_GRID.alpha_max,
            _float(gstep, "step", gstep_line, source) if gstep else DEFAULT_GRID.step,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), gstep_line or gmax_line, source) from None
    settings = RunSettings(dt_ns=dt_ns, sample_interval=si, grid=grid, cutoff=cutoff)

    pts_text, pts_line = get("sweep", "points")
    points = _floats(pts_text, "points", pts_line, source) if pts_text else DEFAULT_POINTS.get(command, (0.0,))
    fam_text, fam_line = get("sweep", "families_mhz_over_2pi")
    families = _floats(fam_text, "families_mhz_over_2pi", fam_line, source) if fam_text else DEFAULT_KAPPA_FAMILIES
    axis = SWEEP_AXIS.get(command, "theta_p")
    if command not in SWEEP_AXIS:
        # single-run commands take theta_p from [params] as their only point
        points = (overrides.pop("theta_p", 0.0),)
        origin.pop("theta_p", None)

    try:
        spec = SweepSpec(preset=preset, axis=axis, points=points, overrides=overrides, profile=profile, settings=settings)
        spec.resolve(spec.points[0])
    except ValueError as exc:
        msg = str(exc)
        line = next((origin[n] for n in origin if re.search(rf"\b{re.escape(n)}\b", msg)), None)
        if line is None and "point" in msg:
            line = pts_line
        if line is None and "readout" in msg:
            line = next((origin[n] for n in ("readout_delay", "readout_window", "plateau") if n in origin), None)
        raise ConfigError(msg, line, source) from None

    kwargs = {}
    for key, attr, conv in (("n_points", "spectrum_points", _int), ("levels", "spectrum_levels", _int), ("p_max_mhz_over_2pi", "spectrum_p_max", _float)):
        v, ln = get("spectrum", key)
        if v is not None:
            kwargs[attr] = conv(v, key, ln, source)
    for key, attr in (("x_max", "metapotential_x_max"), ("step", "metapotential_step")):
        v, ln = get("metapotential", key)
        if v is not None:
            kwargs[attr] = _float(v, key, ln, source)
    v, ln = get("metapotential", "kerr_units")
    if v is not None:
        if v.lower() not in ("true", "false"):
            raise ConfigError(f"kerr_units must be true or false, got {v!r}", ln, source)
        kwargs["metapotential_kerr_units"] = v.lower() == "true"
    return RunConfig(command=command, spec=spec, threads=threads, families=families, **kwargs)


