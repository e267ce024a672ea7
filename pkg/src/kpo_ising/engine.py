"""Master-equation integration for the two-oscillator density matrix.

The production path (:func:`evolve`) never forms the joint Liouvillian. It
stores the density matrix as its two total-parity blocks: the Hamiltonian
conserves ``(n_L + n_R) mod 2``, photon loss maps one block onto the other,
and dephasing is diagonal, so coherences between the blocks of a state that
starts in the vacuum stay exactly zero. :func:`lindblad_rhs` is the dense,
structure-agnostic reference used to validate the blocked kernel.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .fock import FockCutoff, annihilation, embed_mode, hermiticity_error
from .model import TWO_PI, PumpSchedule, SystemParams, hamiltonian_parts

log = logging.getLogger(__name__)

DEFAULT_DT = 2e-4  # µs (0.2 ns)
RK4_IMAG_LIMIT = 2.0 * math.sqrt(2.0)
STABILITY_SAFETY = 0.9

TRACE_TOL = 1e-7
HERMITIAN_TOL = 1e-9
POSITIVITY_TOL = -1e-6


class InvariantViolation(RuntimeError):
    def __init__(self, time: float, message: str):
        super().__init__(f"t = {time:.6f} µs: {message}")
        self.time = time


class StepTooLarge(ValueError):
    """Requested RK4 step is outside the stability region for this problem."""


def vacuum(cutoff: FockCutoff) -> np.ndarray:
    rho = np.zeros((cutoff.joint_dim,) * 2, dtype=complex)
    rho[0, 0] = 1.0
    return rho


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho: np.ndarray, t: float = 0.0, trace_tol=TRACE_TOL, herm_tol=HERMITIAN_TOL):
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise InvariantViolation(t, f"trace {tr.real:.12f}{tr.imag:+.3e}j deviates from 1 by more than {trace_tol}")
    herr = hermiticity_error(rho)
    if herr > herm_tol:
        raise InvariantViolation(t, f"Hermiticity error {herr:.3e} exceeds {herm_tol}")


def _dissipation_rates(params: SystemParams) -> dict[str, tuple[float, float]]:
    """Angular ``(kappa_a, gamma)`` per mode."""
    return {m: (TWO_PI * params.kappa_total(m), TWO_PI * getattr(params, f"gamma_{m}")) for m in ("L", "R")}


def lindblad_rhs(rho: np.ndarray, H: np.ndarray, params: SystemParams, cutoff: FockCutoff) -> np.ndarray:
    """Dense right-hand side ``-i[H, rho] + L[rho]`` for an arbitrary matrix ``rho``.

    ``H`` is in rad/µs (as returned by :func:`~kpo_ising.model.hamiltonian_at`);
    the loss and dephasing rates from ``params`` are converted to the same units.
    """
    rho = np.asarray(rho)
    if rho.shape != H.shape or rho.shape != (cutoff.joint_dim,) * 2:
        raise ValueError(f"shape mismatch: rho {rho.shape}, H {H.shape}, joint dim {cutoff.joint_dim}")
    out = -1j * (H @ rho - rho @ H)
    a = annihilation(cutoff)
    for m, (kappa, gamma) in _dissipation_rates(params).items():
        am = embed_mode(a, m, cutoff)
        ad = am.conj().T
        nm = ad @ am
        if kappa:
            am_rho = am @ rho
            out += 0.5 * kappa * ((am_rho @ ad - ad @ am_rho) + (am @ (rho @ ad) - (rho @ ad) @ am))
        if gamma:
            n_rho = nm @ rho
            rho_n = rho @ nm
            out += gamma * ((n_rho @ nm - nm @ n_rho) + (nm @ rho_n - rho_n @ nm))
    return out


def _diagonals(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and per-row values of the nonzero diagonals of ``M``."""
    rows, cols = np.nonzero(M)
    offs = np.unique(cols - rows)
    n = M.shape[0]
    h = np.zeros((offs.size, n), dtype=complex)
    for q, o in enumerate(offs):
        i = np.arange(max(0, -o), min(n, n - o))
        h[q, i] = M[i, i + o]
    return offs.astype(np.int64), h


def _runs(mask: np.ndarray, key: np.ndarray | None = None) -> list[tuple[int, int, int]]:
    """Maximal ``[start, stop)`` stretches where ``mask`` holds and ``key`` is constant."""
    key = np.zeros(mask.size, dtype=np.int64) if key is None else key
    runs = []
    j = 0
    n = mask.size
    while j < n:
        if not mask[j]:
            j += 1
            continue
        k = j + 1
        while k < n and mask[k] and key[k] == key[j]:
            k += 1
        runs.append((j, k, int(key[j])))
        j = k
    return runs


def _bridge(mask: np.ndarray, gap: int) -> np.ndarray:
    """Fill interior ``False`` stretches shorter than ``gap``."""
    out = mask.copy()
    on = np.flatnonzero(mask)
    for a, b in zip(on[:-1], on[1:]):
        if 1 < b - a <= gap:
            out[a:b] = True
    return out


def _pack_runs(run_lists: list[list[tuple[int, int, int]]], width: int) -> np.ndarray:
    size = max(1, max((len(r) for r in run_lists), default=0))
    out = np.zeros((len(run_lists), size, width), dtype=np.int64)
    for q, runs in enumerate(run_lists):
        for r, run in enumerate(runs):
            out[q, r] = run[:width]
    return out


@dataclass
class _Block:
    index: np.ndarray  # natural joint indices of the block's basis states
    energy: np.ndarray
    decay: np.ndarray
    n_L: np.ndarray
    n_R: np.ndarray
    gamma_L: float
    gamma_R: float
    offs: np.ndarray
    h_static: np.ndarray
    h_pump: np.ndarray
    src: np.ndarray
    coef: np.ndarray

    def kernel_tables(self):
        active = (self.h_static != 0) | (self.h_pump != 0)
        # bridge short zero gaps: multiplying a few zeros beats per-run overhead
        yrun = _pack_runs([_runs(_bridge(a, 16)) for a in active], 2)
        jrun = _pack_runs(
            [_runs(c != 0, s - np.arange(s.size)) for s, c in zip(self.src, self.coef)], 3
        )
        return (
            self.energy, self.decay, self.n_L, self.n_R, self.gamma_L, self.gamma_R, self.offs,
            self.h_static.real.copy(), self.h_static.imag.copy(),
            self.h_pump.real.copy(), self.h_pump.imag.copy(),
            yrun, self.src, self.coef, jrun,
        )

    def scratch(self):
        n = self.index.size
        nd = self.offs.size
        mats = [np.zeros((n, n)) for _ in range(6)]
        return (np.zeros((nd, n)), np.zeros((nd, n)), np.zeros(n), np.zeros(n), *mats)

    def generator_diagonal(self) -> np.ndarray:
        """Elementwise part ``G[i, j]`` of the generator acting on ``rho[i, j]``."""
        deph = 2.0 * (self.gamma_L * np.outer(self.n_L, self.n_L) + self.gamma_R * np.outer(self.n_R, self.n_R))
        return -1j * (self.energy[:, None] - self.energy[None, :]) - 0.5 * (self.decay[:, None] + self.decay[None, :]) + deph


class BlockedLiouvillian:
    """Master-equation generator restricted to the two parity blocks.

    ``H(t) = static + e(t) * pump`` where ``e`` is the schedule envelope.
    Block states are ``(re, im)`` pairs of which only the upper triangle is
    meaningful; :meth:`join` rebuilds the full Hermitian matrix.
    """

    def __init__(self, params: SystemParams, schedule: PumpSchedule, cutoff: FockCutoff):
        self.params = params
        self.schedule = schedule
        self.cutoff = cutoff
        d = cutoff.dim_per_mode
        n = np.arange(d)
        self.n_L = np.repeat(n, d).astype(float)
        self.n_R = np.tile(n, d).astype(float)
        parity = (self.n_L + self.n_R).astype(int) % 2
        self.index = [np.flatnonzero(parity == b) for b in (0, 1)]
        position = np.empty(cutoff.joint_dim, dtype=np.int64)
        for idx in self.index:
            position[idx] = np.arange(idx.size)

        parts = hamiltonian_parts(params, schedule, cutoff)
        self.parts = parts
        if np.any(np.diag(parts.pump) != 0):
            raise AssertionError("pump term is expected to be purely off-diagonal")
        rates = _dissipation_rates(params)
        (kap_L, gam_L), (kap_R, gam_R) = rates["L"], rates["R"]
        nL, nR = self.n_L, self.n_R
        energy = np.diag(parts.static).real.copy()
        decay = kap_L * nL + kap_R * nR + 2.0 * (gam_L * nL**2 + gam_R * nR**2)
        static_off = parts.static - np.diag(np.diag(parts.static))

        jump_tables = []
        for m, kap, nm in (("L", kap_L, nL), ("R", kap_R, nR)):
            step = d if m == "L" else 1
            valid = nm + 1 < d
            target = np.where(valid, np.arange(cutoff.joint_dim) + step, 0)
            c = np.where(valid, math.sqrt(kap) * np.sqrt(nm + 1), 0.0)
            jump_tables.append((target, c))

        self.blocks = []
        for idx in self.index:
            sub_static = static_off[np.ix_(idx, idx)]
            sub_pump = parts.pump[np.ix_(idx, idx)]
            offs, _ = _diagonals((sub_static != 0) | (sub_pump != 0))
            h_static = np.array([_diagonal(sub_static, o) for o in offs]).reshape(offs.size, idx.size)
            h_pump = np.array([_diagonal(sub_pump, o) for o in offs]).reshape(offs.size, idx.size)
            src = np.stack([position[t[idx]] for t, _ in jump_tables]).astype(np.int64)
            coef = np.stack([c[idx] for _, c in jump_tables]).astype(float)
            self.blocks.append(
                _Block(idx, energy[idx], decay[idx], nL[idx].copy(), nR[idx].copy(), gam_L, gam_R,
                       offs, h_static, h_pump, src, coef)
            )
        self._tables = None
        self._scratch = None

    # conversion -----------------------------------------------------------
    def split(self, rho: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        rho = np.asarray(rho, dtype=complex)
        leak = rho.copy()
        blocks = []
        for idx in self.index:
            sub = rho[np.ix_(idx, idx)]
            blocks.append((np.ascontiguousarray(sub.real), np.ascontiguousarray(sub.imag)))
            leak[np.ix_(idx, idx)] = 0
        if np.any(np.abs(leak) > 1e-14):
            raise ValueError("state has coherences between photon-number parities; not supported by the blocked engine")
        return blocks

    @staticmethod
    def hermitian_block(block) -> np.ndarray:
        R, I = block
        upper = np.triu(R + 1j * I)
        return upper + np.triu(upper, 1).conj().T

    def join(self, blocks) -> np.ndarray:
        rho = np.zeros((self.cutoff.joint_dim,) * 2, dtype=complex)
        for idx, blk in zip(self.index, blocks):
            rho[np.ix_(idx, idx)] = self.hermitian_block(blk)
        return rho

    # dynamics --------------------------------------------------------------
    def _prepare(self):
        if self._tables is None:
            self._tables = [b.kernel_tables() for b in self.blocks]
            self._scratch = [b.scratch() for b in self.blocks]
        return self._tables, self._scratch

    def rhs(self, blocks, t: float) -> list[tuple[np.ndarray, np.ndarray]]:
        """Upper-triangle time derivative of each block (lower triangle zero)."""
        tables, scratch = self._prepare()
        e = self.schedule.envelope(t)
        out = []
        for b in (0, 1):
            T, S = tables[b], scratch[b]
            _kernels.current_pumps(T[7], T[8], T[9], T[10], e, S[0], S[1])
            oR = np.zeros_like(blocks[b][0])
            oI = np.zeros_like(blocks[b][1])
            _kernels.derivative(*blocks[b], *blocks[1 - b], T, S[0], S[1], S[2], S[3], oR, oI)
            out.append((oR, oI))
        return out

    def step(self, blocks, t: float, dt: float):
        tables, scratch = self._prepare()
        env = self.schedule.envelope
        (Ra, Ia), (Rb, Ib) = blocks
        _kernels.rk4_step(
            Ra, Ia, Rb, Ib, dt, env(t), env(t + 0.5 * dt), env(t + dt),
            tables[0], tables[1], scratch[0], scratch[1],
        )

    def spectral_radius(self) -> float:
        """Upper estimate of |eigenvalue| of the generator over the schedule (rad/µs)."""
        decay = max(float(np.max(blk.decay)) for blk in self.blocks)
        radius = 0.0
        for e in (0.0, 1.0):
            H = self.parts.static + e * self.parts.pump
            for idx in self.index:
                w = np.linalg.eigvalsh(H[np.ix_(idx, idx)])
                radius = max(radius, w[-1] - w[0])
        return math.hypot(radius, decay)

    def max_stable_dt(self) -> float:
        return STABILITY_SAFETY * RK4_IMAG_LIMIT / self.spectral_radius()

    # observables on blocks ---------------------------------------------------
    def trace(self, blocks) -> float:
        return float(sum(np.trace(R) for R, _ in blocks))

    def photon_numbers(self, blocks) -> tuple[float, float]:
        nL = sum(float(np.diag(R) @ self.n_L[idx]) for (R, _), idx in zip(blocks, self.index))
        nR = sum(float(np.diag(R) @ self.n_R[idx]) for (R, _), idx in zip(blocks, self.index))
        return nL, nR

    def min_eigenvalue(self, blocks) -> float:
        return min(float(np.linalg.eigvalsh(self.hermitian_block(b))[0]) for b in blocks)


def _diagonal(M: np.ndarray, o: int) -> np.ndarray:
    n = M.shape[0]
    out = np.zeros(n, dtype=complex)
    i = np.arange(max(0, -o), min(n, n - o))
    out[i] = M[i, i + o]
    return out


@dataclass
class StepStats:
    dt: float
    n_steps: int
    max_stable_dt: float
    max_trace_error: float = 0.0
    max_hermiticity_error: float = 0.0
    min_eigenvalue: float | None = None
    wall_time: float = 0.0


@dataclass
class Trajectory:
    """Sampled evolution.

    ``times`` covers every sample; ``states`` holds full density matrices only
    for samples inside the stored window (``state_times``). Per-sample photon
    numbers and trace, and the final state, are always kept.
    """

    times: np.ndarray
    n_L: np.ndarray
    n_R: np.ndarray
    trace: np.ndarray
    state_times: np.ndarray
    states: list[np.ndarray] = field(repr=False)
    step_stats: StepStats
    cutoff: FockCutoff
    sample_interval: float
    last_state: np.ndarray = field(repr=False, default=None)

    def state_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.state_times - t)))
        if abs(self.state_times[i] - t) > 1e-9:
            raise KeyError(f"no stored state at t = {t}")
        return self.states[i]

    @property
    def final_state(self) -> np.ndarray:
        """State at the last sample, kept even when outside the stored window."""
        return self.last_state


def sample_times(duration: float, sample_interval: float) -> np.ndarray:
    if sample_interval <= 0:
        raise ValueError("sample_interval must be positive")
    k = int(math.floor(duration / sample_interval + 1e-9))
    times = np.arange(k + 1) * sample_interval
    if duration - times[-1] > 1e-9:
        times = np.append(times, duration)
    return times


def evolve(
    rho0: np.ndarray | None,
    params: SystemParams,
    schedule: PumpSchedule,
    cutoff: FockCutoff,
    sample_interval: float = 0.02,
    dt: float | None = None,
    store_window: tuple[float, float] | None = None,
    monitor_positivity: bool = False,
    t_end: float | None = None,
) -> Trajectory:
    """Integrate the master equation with fixed-step classical RK4.

    Parameters
    ----------
    rho0 : initial density matrix (joint vacuum when ``None``).
    sample_interval : spacing of recorded samples, µs.
    dt : RK4 step in µs. ``None`` picks ``min(0.2 ns, stability bound)``; an
        explicit step beyond the stability bound raises :class:`StepTooLarge`.
        The step is shrunk so that it divides every sample interval.
    store_window : keep full states only for samples in ``[t0, t1]``;
        ``None`` keeps all of them.
    t_end : stop time; defaults to the end of the pump plateau.
    """
    import time as _time

    liou = BlockedLiouvillian(params, schedule, cutoff)
    if rho0 is None:
        rho0 = vacuum(cutoff)
    check_density_matrix(rho0, 0.0)
    blocks = liou.split(rho0)

    dt_stable = liou.max_stable_dt()
    if dt is None:
        dt_max = min(DEFAULT_DT, dt_stable)
    else:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if dt > dt_stable:
            raise StepTooLarge(
                f"dt = {dt * 1e3:.4f} ns exceeds the RK4 stability bound {dt_stable * 1e3:.4f} ns "
                f"at cutoff {cutoff.dim_per_mode}"
            )
        dt_max = dt
    duration = schedule.duration if t_end is None else t_end
    times = sample_times(duration, sample_interval)
    n_sub = max(1, math.ceil(sample_interval / dt_max - 1e-9))
    dt_used = sample_interval / n_sub

    stats = StepStats(dt=dt_used, n_steps=0, max_stable_dt=dt_stable)
    n_L, n_R, traces, state_times, states = [], [], [], [], []
    started = _time.perf_counter()

    def record(t):
        tr = liou.trace(blocks)
        err = abs(tr - 1.0)
        stats.max_trace_error = max(stats.max_trace_error, err)
        if err > TRACE_TOL:
            raise InvariantViolation(t, f"trace drifted to {tr:.12f} (error {err:.3e})")
        herr = max(hermiticity_error(liou.hermitian_block(b)) for b in blocks)
        stats.max_hermiticity_error = max(stats.max_hermiticity_error, herr)
        if herr > HERMITIAN_TOL:
            raise InvariantViolation(t, f"Hermiticity error {herr:.3e}")
        if monitor_positivity:
            lam = liou.min_eigenvalue(blocks)
            stats.min_eigenvalue = lam if stats.min_eigenvalue is None else min(stats.min_eigenvalue, lam)
            if lam < POSITIVITY_TOL:
                warnings.warn(f"t = {t:.4f} µs: smallest eigenvalue {lam:.3e} below {POSITIVITY_TOL}", RuntimeWarning)
        nl, nr = liou.photon_numbers(blocks)
        n_L.append(nl)
        n_R.append(nr)
        traces.append(tr)
        if store_window is None or store_window[0] - 1e-9 <= t <= store_window[1] + 1e-9:
            state_times.append(t)
            states.append(liou.join(blocks))

    record(0.0)
    for k in range(1, len(times)):
        t0, t1 = times[k - 1], times[k]
        steps = n_sub if abs((t1 - t0) - sample_interval) < 1e-12 else max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
        h = (t1 - t0) / steps
        for s in range(steps):
            liou.step(blocks, t0 + s * h, h)
        stats.n_steps += steps
        record(float(t1))
    stats.wall_time = _time.perf_counter() - started
    log.debug("evolve: %d steps of %.4g ns in %.1f s", stats.n_steps, dt_used * 1e3, stats.wall_time)
    return Trajectory(
        times=times, n_L=np.array(n_L), n_R=np.array(n_R), trace=np.array(traces),
        state_times=np.array(state_times), states=states, step_stats=stats,
        cutoff=cutoff, sample_interval=sample_interval, last_state=liou.join(blocks),
    )


def steady_state_check(traj: Trajectory, window: tuple[float, float], rel_tol: float = 0.01) -> bool:
    """True iff both mean photon numbers vary by less than ``rel_tol`` over ``window``."""
    t0, t1 = window
    mask = (traj.times >= t0 - 1e-9) & (traj.times <= t1 + 1e-9)
    if not mask.any():
        raise ValueError(f"window {window} contains no samples")
    for n in (traj.n_L[mask], traj.n_R[mask]):
        spread = n.max() - n.min()
        scale = max(abs(n).max(), 1e-12)
        if n.max() == 0 and n.min() == 0:
            continue
        if spread / scale >= rel_tol:
            return False
    return True
