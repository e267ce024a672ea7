"""Physical parameters, pump schedules and the rotating-frame Hamiltonian.

Units: every frequency/rate in :class:`SystemParams` and :class:`PumpSchedule`
is an ordinary frequency in MHz (the ``X/2pi`` value), every time is in
microseconds. The factor ``2*pi`` is applied only when operators are built
(:func:`hamiltonian_at`, :func:`hamiltonian_parts`) and inside the dissipator.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fock import FockCutoff, annihilation, embed_mode

TWO_PI = 2.0 * math.pi


def half_angle_phase(theta_p: float) -> complex:
    """``exp(-i theta_p / 2)``, exact at integer multiples of pi."""
    q = theta_p / math.pi
    if float(q).is_integer():
        return (1.0 + 0j, -1j, -1.0 + 0j, 1j)[int(q) % 4]
    return complex(math.cos(theta_p / 2), -math.sin(theta_p / 2))


@dataclass(frozen=True)
class SystemParams:
    delta_L: float = 0.0
    delta_R: float = 0.0
    kerr_L: float = -10.4
    kerr_R: float = -10.3
    g: float = 7.35
    kappa_e_L: float = 0.82
    kappa_e_R: float = 0.63
    kappa_i_meas_L: float = 0.18
    kappa_i_meas_R: float = 0.23
    gamma_L: float = 0.0358
    gamma_R: float = 0.0358
    theta_p: float = 0.0
    alpha_target_L: float = 2.8
    alpha_target_R: float = 2.5
    # Total photon loss rate set directly, bypassing kappa_e + kappa_i_meas - 2 gamma.
    kappa_total_L: float | None = None
    kappa_total_R: float | None = None

    def __post_init__(self):
        for name in ("kerr_L", "kerr_R"):
            if not getattr(self, name) < 0:
                raise ValueError(f"{name} must be negative, got {getattr(self, name)}")
        if self.g < 0:
            raise ValueError(f"g must be nonnegative, got {self.g}")
        for m in ("L", "R"):
            for name in (f"kappa_e_{m}", f"kappa_i_meas_{m}", f"gamma_{m}"):
                if getattr(self, name) < 0:
                    raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
            override = getattr(self, f"kappa_total_{m}")
            if override is None:
                internal = self.kappa_internal(m)
                if internal < -1e-12:
                    raise ValueError(
                        f"actual internal loss kappa_i_meas_{m} - 2*gamma_{m} = {internal:.6g} MHz is negative"
                    )
            elif override < 0:
                raise ValueError(f"kappa_total_{m} must be nonnegative, got {override}")
        for name in ("alpha_target_L", "alpha_target_R"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def kappa_internal(self, mode: str) -> float:
        """Actual internal loss ``kappa_i_meas - 2 gamma`` (MHz)."""
        return getattr(self, f"kappa_i_meas_{mode}") - 2.0 * getattr(self, f"gamma_{mode}")

    def kappa_total(self, mode: str) -> float:
        override = getattr(self, f"kappa_total_{mode}")
        if override is not None:
            return override
        return getattr(self, f"kappa_e_{mode}") + max(self.kappa_internal(mode), 0.0)

    def mode(self, m: str) -> dict:
        """Per-oscillator view: delta, kerr, kappa (total), gamma, alpha."""
        return {
            "delta": getattr(self, f"delta_{m}"),
            "kerr": getattr(self, f"kerr_{m}"),
            "kappa": self.kappa_total(m),
            "gamma": getattr(self, f"gamma_{m}"),
            "alpha": getattr(self, f"alpha_target_{m}"),
        }

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PumpSchedule:
    """Trapezoidal pump envelope with a readout window on the plateau."""

    ramp_up: float = 3.0
    plateau: float = 2.8
    readout_delay: float = 0.5
    readout_window: float = 1.0
    p_max_L: float = 0.0
    p_max_R: float = 0.0

    def __post_init__(self):
        for name in ("ramp_up", "plateau", "readout_delay", "readout_window"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.readout_delay + self.readout_window > self.plateau + 1e-12:
            raise ValueError(
                f"readout_delay + readout_window = {self.readout_delay + self.readout_window} µs "
                f"exceeds the plateau of {self.plateau} µs"
            )
        if self.p_max_L < 0 or self.p_max_R < 0:
            raise ValueError("pump amplitudes must be nonnegative")

    @property
    def duration(self) -> float:
        return self.ramp_up + self.plateau

    @property
    def readout_start(self) -> float:
        return self.ramp_up + self.readout_delay

    @property
    def readout_stop(self) -> float:
        return self.ramp_up + self.readout_delay + self.readout_window

    def envelope(self, t: float) -> float:
        """Normalized pump envelope in [0, 1]; falls back down after the plateau."""
        if t <= 0:
            return 0.0
        if t < self.ramp_up:
            return t / self.ramp_up
        if t <= self.duration:
            return 1.0
        if self.ramp_up == 0:
            return 0.0
        return max(0.0, 1.0 - (t - self.duration) / self.ramp_up)

    def pumps(self, t: float) -> tuple[float, float]:
        e = self.envelope(t)
        return self.p_max_L * e, self.p_max_R * e

    def replace(self, **changes) -> "PumpSchedule":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class IsingSpinPair(NamedTuple):
    s_L: int
    s_R: int


SPIN_CONFIGURATIONS = tuple(IsingSpinPair(a, b) for a, b in itertools.product((1, -1), repeat=2))


def pump_amplitudes_from_alpha(params: SystemParams) -> tuple[float, float]:
    """Pump amplitudes ``p = |K| alpha^2`` reproducing the target amplitudes (MHz)."""
    return (
        abs(params.kerr_L) * params.alpha_target_L**2,
        abs(params.kerr_R) * params.alpha_target_R**2,
    )


def oscillation_amplitude(p: float, delta: float, kerr: float) -> float:
    """Coherent amplitude estimate ``sqrt((p + delta)/|K|)``; zero below threshold."""
    return math.sqrt(max(p + delta, 0.0) / abs(kerr))


def schedule_for(params: SystemParams, **timing) -> PumpSchedule:
    p_L, p_R = pump_amplitudes_from_alpha(params)
    return PumpSchedule(p_max_L=p_L, p_max_R=p_R, **timing)


def effective_coupling(params: SystemParams) -> float:
    """Ising coupling ``J = 2 cos(theta_p/2) g alpha_L alpha_R`` in MHz."""
    cos_half = half_angle_phase(params.theta_p).real + 0.0  # no negative zero
    return 2.0 * cos_half * params.g * params.alpha_target_L * params.alpha_target_R


def ising_energy(params: SystemParams, spins: IsingSpinPair | tuple[int, int]) -> float:
    s_L, s_R = spins
    if s_L not in (1, -1) or s_R not in (1, -1):
        raise ValueError(f"spins must be +1 or -1, got {spins}")
    return -effective_coupling(params) * s_L * s_R


def ising_minimizers(params: SystemParams) -> list[IsingSpinPair]:
    energies = {s: ising_energy(params, s) for s in SPIN_CONFIGURATIONS}
    e_min = min(energies.values())
    return [s for s, e in energies.items() if e == e_min]


class HamiltonianParts(NamedTuple):
    """``H(t) = static + e(t) * pump`` in angular units (rad/µs)."""

    static: np.ndarray
    pump: np.ndarray


def hamiltonian_parts(params: SystemParams, schedule: PumpSchedule, cutoff: FockCutoff) -> HamiltonianParts:
    a = annihilation(cutoff)
    ad = a.conj().T
    kerr_term = ad @ ad @ a @ a
    n = ad @ a
    squeeze = ad @ ad + a @ a
    static = np.zeros((cutoff.joint_dim,) * 2, dtype=complex)
    pump = np.zeros_like(static)
    for m, p_max in (("L", schedule.p_max_L), ("R", schedule.p_max_R)):
        k = getattr(params, f"kerr_{m}")
        delta = getattr(params, f"delta_{m}")
        static += embed_mode(0.5 * k * kerr_term + delta * n, m, cutoff)
        pump += embed_mode(0.5 * p_max * squeeze, m, cutoff)
    a_L = embed_mode(a, "L", cutoff)
    a_R = embed_mode(a, "R", cutoff)
    ph = half_angle_phase(params.theta_p)
    hop = ph * a_L.conj().T @ a_R
    static += params.g * (hop + hop.conj().T)
    return HamiltonianParts(TWO_PI * static, TWO_PI * pump)


def hamiltonian_with_pumps(params: SystemParams, p_L: float, p_R: float, cutoff: FockCutoff) -> np.ndarray:
    """Hamiltonian (rad/µs) for fixed instantaneous pump amplitudes in MHz."""
    parts = hamiltonian_parts(params, PumpSchedule(p_max_L=p_L, p_max_R=p_R, readout_delay=0, readout_window=0), cutoff)
    return parts.static + parts.pump


def hamiltonian_at(params: SystemParams, schedule: PumpSchedule, t: float, cutoff: FockCutoff) -> np.ndarray:
    """Rotating-frame Hamiltonian ``H(t)/hbar`` on the joint space, in rad/µs."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    parts = hamiltonian_parts(params, schedule, cutoff)
    return parts.static + schedule.envelope(t) * parts.pump


# Presets -----------------------------------------------------------------

PAPER_TIMING = dict(ramp_up=3.0, plateau=2.8, readout_delay=0.5, readout_window=1.0)
FAST_TIMING = dict(ramp_up=0.1, plateau=0.2, readout_delay=0.0, readout_window=0.2)

PROFILE_CUTOFF = {"paper": 24, "reduced": 12}


def paper_params(**overrides) -> SystemParams:
    return SystemParams().replace(**overrides)


def fast_params(**overrides) -> SystemParams:
    return SystemParams(delta_L=-20.0, delta_R=-20.0).replace(**overrides)


def reduced_params(**overrides) -> SystemParams:
    return SystemParams(alpha_target_L=1.6, alpha_target_R=1.5).replace(**overrides)


def preset(name: str, profile: str = "paper") -> tuple[SystemParams, PumpSchedule, FockCutoff]:
    """Resolve a named preset to ``(params, schedule, cutoff)``.

    ``profile="reduced"`` swaps in the small-amplitude targets (1.6, 1.5) and
    a 12-level cutoff, keeping every rate of the named preset.
    """
    if name == "paper":
        params, timing = SystemParams(), PAPER_TIMING
    elif name == "fast":
        params, timing = fast_params(), FAST_TIMING
    else:
        raise ValueError(f"unknown preset {name!r}; expected 'paper' or 'fast'")
    if profile == "reduced":
        params = params.replace(alpha_target_L=1.6, alpha_target_R=1.5)
    elif profile != "paper":
        raise ValueError(f"unknown profile {profile!r}; expected 'paper' or 'reduced'")
    return params, schedule_for(params, **timing), FockCutoff(PROFILE_CUTOFF[profile])
