"""Phase-space and photon-number observables of two-oscillator states.

The Husimi function is evaluated on the real-amplitude slice
``Q(a_L, a_R) = <a_L, a_R| rho |a_L, a_R>``. By default the coherent states are
the exact (untruncated) ones projected onto the Fock cutoff, which gives the
exact Q of the truncated density matrix at every grid point, including
amplitudes the cutoff cannot represent. ``renormalized=True`` switches to
renormalized truncated coherent states and raises
:class:`~kpo_ising.fock.TruncationTooSmall` where those are inaccurate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fock import FockCutoff, coherent_amplitudes, coherent_state
from .model import PumpSchedule, half_angle_phase


class WindowNotCovered(ValueError):
    """The trajectory holds no stored states spanning the readout window."""


@dataclass(frozen=True)
class GridSpec:
    """Square grid on the real axes, symmetric about zero."""

    alpha_max: float = 6.0
    step: float = 0.25

    def __post_init__(self):
        if not (self.alpha_max > 0 and self.step > 0):
            raise ValueError("alpha_max and step must be positive")
        k = self.alpha_max / self.step
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"step {self.step} does not divide alpha_max {self.alpha_max}")

    @property
    def alpha_min(self) -> float:
        return -self.alpha_max

    @property
    def axis(self) -> np.ndarray:
        k = int(round(self.alpha_max / self.step))
        return np.arange(-k, k + 1) * self.step

    def refined(self) -> "GridSpec":
        return GridSpec(self.alpha_max, self.step / 2)

    def covers(self, alpha: float) -> bool:
        return self.alpha_max >= abs(alpha) - 1e-12


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True)
class QGrid:
    alpha_min: float
    alpha_max: float
    step: float
    values: np.ndarray = field(repr=False)  # values[j, k] at (axis[j], axis[k]) = (alpha_L, alpha_R)

    @property
    def axis(self) -> np.ndarray:
        return GridSpec(self.alpha_max, self.step).axis

    def peak(self) -> tuple[float, float]:
        j, k = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.axis[j]), float(self.axis[k])

    def quadrant_masses(self) -> dict[str, float]:
        """Trapezoidal Q mass per quadrant; points on an axis are split evenly."""
        w = _trapezoid_weights(self.axis, self.step)
        mass = w[:, None] * w[None, :] * self.values
        a = self.axis
        sl = np.sign(a)[:, None] * np.ones_like(a)[None, :]
        sr = np.ones_like(a)[:, None] * np.sign(a)[None, :]
        out = {}
        for name, (x, y) in {"I": (1, 1), "II": (-1, 1), "III": (-1, -1), "IV": (1, -1)}.items():
            share = 0.5 * (1 + x * sl) * 0.5 * (1 + y * sr)
            out[name] = float(np.sum(mass * share))
        return out

    def to_csv(self, path) -> None:
        a = self.axis
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha_L", "alpha_R", "value"])
            for j in range(a.size):
                for k in range(a.size):
                    w.writerow([repr(float(a[j])), repr(float(a[k])), repr(float(self.values[j, k]))])


def _trapezoid_weights(axis: np.ndarray, step: float) -> np.ndarray:
    w = np.full(axis.size, step)
    w[0] = w[-1] = 0.5 * step
    return w


def coherent_rows(grid: GridSpec, cutoff: FockCutoff, renormalized: bool = False) -> np.ndarray:
    """Row ``j`` holds the Fock amplitudes of the coherent state at ``grid.axis[j]`` (real)."""
    d = cutoff.dim_per_mode
    if renormalized:
        return np.stack([coherent_state(a, cutoff).amplitudes.real for a in grid.axis])
    return np.stack([coherent_amplitudes(a, d)[0].real for a in grid.axis])


def _q_values(rho: np.ndarray, rows: np.ndarray, d: int) -> np.ndarray:
    # Q[a, b] = sum c[a,n] c[b,m] rho[(n,m),(p,q)] c[a,p] c[b,q] with real c
    t = (rows @ rho.reshape(d, d**3)).reshape(-1, d, d, d)  # [a, m, p, q]
    t = np.einsum("ampq,ap->amq", t, rows)
    t = t @ rows.T  # [a, m, b]
    q = np.einsum("amb,bm->ab", t, rows)
    return q.real


def husimi_q_real_slice(rho: np.ndarray, grid: GridSpec, cutoff: FockCutoff, renormalized: bool = False) -> QGrid:
    d = cutoff.dim_per_mode
    rho = np.asarray(rho)
    if rho.shape != (d * d, d * d):
        raise ValueError(f"rho shape {rho.shape} does not match cutoff {d}")
    rows = coherent_rows(grid, cutoff, renormalized)
    values = _q_values(rho, rows, d)
    assert values.min() > -1e-10 * max(values.max(), 1.0), "negative Husimi value"
    return QGrid(grid.alpha_min, grid.alpha_max, grid.step, values)


def pure_state_qfunction(psi: np.ndarray, grid: GridSpec, cutoff: FockCutoff) -> QGrid:
    d = cutoff.dim_per_mode
    rows = coherent_rows(grid, cutoff)
    amp = rows @ np.asarray(psi).reshape(d, d) @ rows.T
    return QGrid(grid.alpha_min, grid.alpha_max, grid.step, np.abs(amp) ** 2)


def xi_weight(a_L: np.ndarray, a_R: np.ndarray) -> np.ndarray:
    """Amplitude weight of the same/different-phase integrals."""
    return np.abs(a_L) + np.abs(a_R)


def xi_from_q(q: QGrid) -> tuple[float, float]:
    a = q.axis
    w = _trapezoid_weights(a, q.step)
    weight = w[:, None] * w[None, :] * xi_weight(a[:, None], a[None, :]) * q.values
    sign = np.sign(a)[:, None] * np.sign(a)[None, :]
    same = np.sum(weight[sign > 0]) + 0.5 * np.sum(weight[sign == 0])
    diff = np.sum(weight[sign < 0]) + 0.5 * np.sum(weight[sign == 0])
    return float(same), float(diff)


def xi_amplitudes(rho: np.ndarray, grid: GridSpec, cutoff: FockCutoff) -> tuple[float, float]:
    """``(xi_plus, xi_minus)``: weighted Q mass in quadrants I+III and II+IV."""
    return xi_from_q(husimi_q_real_slice(rho, grid, cutoff))


def same_phase_probability(xi_plus: float, xi_minus: float) -> float:
    total = xi_plus + xi_minus
    if not total > 0:
        raise ValueError("xi_plus + xi_minus must be positive")
    return xi_plus / total


class CorrelationRecord(NamedTuple):
    times: np.ndarray
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    p_plus: np.ndarray
    readout_average: float


def time_average(times: np.ndarray, values: np.ndarray) -> float:
    if times.size == 1:
        return float(values[0])
    return float(np.trapezoid(values, times) / (times[-1] - times[0]))


def correlation_over_readout(traj, schedule: PumpSchedule, grid: GridSpec = DEFAULT_GRID) -> CorrelationRecord:
    """Same-phase probability at every stored state in the readout window and its time average."""
    t0, t1 = schedule.readout_start, schedule.readout_stop
    st = np.asarray(traj.state_times)
    inside = (st >= t0 - 1e-9) & (st <= t1 + 1e-9)
    if not inside.any() or st[inside].min() > t0 + 1e-9 or st[inside].max() < t1 - 1e-9:
        raise WindowNotCovered(f"stored states do not span the readout window [{t0}, {t1}] µs")
    idx = np.flatnonzero(inside)
    times = st[idx]
    xp, xm = np.zeros(idx.size), np.zeros(idx.size)
    for n, i in enumerate(idx):
        xp[n], xm[n] = xi_amplitudes(traj.states[i], grid, traj.cutoff)
    p = xp / (xp + xm)
    return CorrelationRecord(times, xp, xm, p, time_average(times, p))


def mean_photon_numbers(rho: np.ndarray, cutoff: FockCutoff) -> tuple[float, float]:
    d = cutoff.dim_per_mode
    pops = np.real(np.diag(rho)).reshape(d, d)
    n = np.arange(d)
    return float(pops.sum(axis=1) @ n), float(pops.sum(axis=0) @ n)


def flip_mode_sign(rho: np.ndarray, mode: str, cutoff: FockCutoff) -> np.ndarray:
    """Conjugate ``rho`` by the parity of one mode (``a -> -a`` for that mode)."""
    d = cutoff.dim_per_mode
    s = (-1.0) ** np.arange(d)
    if mode == "L":
        sign = np.repeat(s, d)
    elif mode == "R":
        sign = np.tile(s, d)
    else:
        raise ValueError(f"mode must be 'L' or 'R', got {mode!r}")
    return sign[:, None] * rho * sign[None, :]


def metapotential(x, p: float, kerr: float, g: float, theta_p: float, alpha_R: complex, in_kerr_units: bool = False):
    """Classical rotating-frame energy of the L oscillator with the R amplitude frozen."""
    x = np.asarray(x, dtype=complex)
    ph = half_angle_phase(theta_p)
    drive = g * (ph * alpha_R * np.conj(x) + np.conj(ph * alpha_R) * x)
    value = 0.5 * kerr * np.abs(x) ** 4 + 0.5 * p * 2.0 * np.real(x * x) + drive.real
    if in_kerr_units:
        value = value / abs(kerr)
    return value if value.ndim else float(value)
