"""Instantaneous eigenenergies versus pump amplitude and vacuum-branch tracking.

The Hamiltonian conserves total photon parity, so every diagonalization is
done per parity block: eigenvectors then carry a definite parity even where
levels of opposite parity cross exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fock import FockCutoff, joint_index, total_parity
from .model import TWO_PI, SystemParams, hamiltonian_with_pumps
from .observables import DEFAULT_GRID, GridSpec, QGrid, pure_state_qfunction, same_phase_probability, xi_from_q

MIN_OVERLAP = 0.5


class BranchAmbiguous(RuntimeError):
    def __init__(self, pump: float, overlap: float):
        super().__init__(f"p_L = {pump:.6g} MHz: best overlap with the tracked branch is {overlap:.3f} < {MIN_OVERLAP}")
        self.pump = pump
        self.overlap = overlap


class Eigenpairs(NamedTuple):
    """Eigenvalues (rad/µs) in descending order; ``vectors[:, k]`` pairs with ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray
    parity: np.ndarray


def top_eigenpairs(H: np.ndarray, k: int | None = None, cutoff: FockCutoff | None = None) -> Eigenpairs:
    """The ``k`` largest eigenpairs of a Hermitian matrix.

    With ``cutoff`` given, ``H`` is diagonalized in its two photon-parity blocks
    and each eigenvector gets a definite parity; otherwise parity is ``-1``.
    """
    n = H.shape[0]
    k = n if k is None else k
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if cutoff is None:
        w, v = np.linalg.eigh(H)
        par = np.full(n, -1)
    else:
        parity = total_parity(cutoff)
        ws, vs, ps = [], [], []
        for b in (0, 1):
            idx = np.flatnonzero(parity == b)
            if np.any(H[np.ix_(idx, np.flatnonzero(parity != b))]):
                raise ValueError("Hamiltonian mixes photon-number parities")
            wb, vb = np.linalg.eigh(H[np.ix_(idx, idx)])
            full = np.zeros((n, idx.size), dtype=complex)
            full[idx] = vb
            ws.append(wb)
            vs.append(full)
            ps.append(np.full(idx.size, b))
        w, v, par = np.concatenate(ws), np.concatenate(vs, axis=1), np.concatenate(ps)
    order = np.argsort(-w, kind="stable")[:k]
    return Eigenpairs(w[order], v[:, order], par[order])


def pump_ratio(params: SystemParams) -> float:
    """``p_R / p_L`` matching the pump amplitudes that realize the target amplitudes."""
    num = abs(params.kerr_R) * params.alpha_target_R**2
    den = abs(params.kerr_L) * params.alpha_target_L**2
    if den == 0:
        raise ValueError("alpha_target_L must be nonzero to fix the pump ratio")
    return num / den


@dataclass
class SpectrumSweep:
    """Energies in MHz (ordinary frequency)."""

    pump_points: np.ndarray
    levels: np.ndarray  # [point, level], descending
    branch_id: np.ndarray  # rank of the tracked state among all levels
    branch_energy: np.ndarray
    overlaps: np.ndarray  # |<prev|current>| of the tracked state
    gaps: np.ndarray  # distance to the nearest same-parity level
    vectors: list = field(repr=False, default_factory=list)  # tracked eigenvector per point

    def gap_minima(self) -> np.ndarray:
        """Pump values at interior local minima of the tracked gap."""
        g = self.gaps
        i = np.flatnonzero((g[1:-1] < g[:-2]) & (g[1:-1] <= g[2:])) + 1
        return self.pump_points[i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p_L_MHz", "level", "energy_MHz", "is_tracked", "gap_MHz"])
            for j, p in enumerate(self.pump_points):
                for lvl, e in enumerate(self.levels[j]):
                    tracked = int(lvl == self.branch_id[j])
                    w.writerow([repr(float(p)), lvl, repr(float(e)), tracked, repr(float(self.gaps[j])) if tracked else ""])
                if self.branch_id[j] >= self.levels.shape[1]:
                    w.writerow([repr(float(p)), int(self.branch_id[j]), repr(float(self.branch_energy[j])), 1, repr(float(self.gaps[j]))])


def _full_spectrum(params: SystemParams, p_L: float, ratio: float, cutoff: FockCutoff) -> Eigenpairs:
    H = hamiltonian_with_pumps(params, p_L, ratio * p_L, cutoff)
    return top_eigenpairs(H, None, cutoff)


def vacuum_level(eig: Eigenpairs, cutoff: FockCutoff) -> int:
    """Index (descending rank) of the eigenvector with the largest vacuum overlap."""
    return int(np.argmax(np.abs(eig.vectors[joint_index(0, 0, cutoff)])))


def track_vacuum_branch(
    params: SystemParams,
    pump_points,
    cutoff: FockCutoff,
    k: int = 8,
    ratio: float | None = None,
) -> SpectrumSweep:
    """Follow the eigenstate continuously connected to the vacuum at zero pump.

    At each point the tracked state is the eigenvector with the largest
    overlap with the previous one; :class:`BranchAmbiguous` is raised when that
    overlap falls below ``MIN_OVERLAP``.
    """
    pumps = np.asarray(pump_points, dtype=float)
    if pumps.ndim != 1 or pumps.size == 0 or pumps[0] != 0 or np.any(np.diff(pumps) <= 0):
        raise ValueError("pump_points must start at 0 and increase strictly")
    ratio = pump_ratio(params) if ratio is None else ratio
    levels, ids, energies, overlaps, gaps, vecs = [], [], [], [], [], []
    prev = None
    for p in pumps:
        eig = _full_spectrum(params, p, ratio, cutoff)
        if prev is None:
            j = vacuum_level(eig, cutoff)
            ov = float(abs(eig.vectors[joint_index(0, 0, cutoff), j]))
        else:
            o = np.abs(prev.conj() @ eig.vectors)
            j = int(np.argmax(o))
            ov = float(o[j])
            if ov < MIN_OVERLAP:
                raise BranchAmbiguous(p, ov)
        prev = eig.vectors[:, j]
        same = np.flatnonzero(eig.parity == eig.parity[j])
        others = eig.values[same[same != j]]
        gap = float(np.min(np.abs(others - eig.values[j]))) if others.size else np.inf
        levels.append(eig.values[:k] / TWO_PI)
        ids.append(j)
        energies.append(eig.values[j] / TWO_PI)
        overlaps.append(ov)
        gaps.append(gap / TWO_PI)
        vecs.append(prev)
    return SpectrumSweep(pumps, np.array(levels), np.array(ids), np.array(energies), np.array(overlaps), np.array(gaps), vecs)


def pump_spectrum(
    params: SystemParams,
    cutoff: FockCutoff,
    p_max: float | None = None,
    n_points: int = 81,
    k: int = 8,
    refine: bool = True,
) -> SpectrumSweep:
    """Sweep ``p_L`` over ``[0, p_max]``; optionally halve the spacing around gap minima."""
    ratio = pump_ratio(params)
    if p_max is None:
        p_max = abs(params.kerr_L) * params.alpha_target_L**2
    pumps = np.linspace(0.0, p_max, n_points)
    sweep = track_vacuum_branch(params, pumps, cutoff, k, ratio)
    if refine and n_points > 2:
        h = pumps[1] - pumps[0]
        extra = []
        for pm in sweep.gap_minima():
            extra += [pm - h / 2, pm + h / 2]
        if extra:
            pumps = np.unique(np.concatenate([pumps, np.clip(extra, 0, p_max)]))
            sweep = track_vacuum_branch(params, pumps, cutoff, k, ratio)
    return sweep


def eigenstate_qfunction(vector: np.ndarray, grid: GridSpec, cutoff: FockCutoff) -> QGrid:
    v = np.asarray(vector)
    norm = np.linalg.norm(v)
    if abs(norm - 1) > 1e-8:
        raise ValueError(f"vector must be normalized, norm = {norm}")
    return pure_state_qfunction(v, grid, cutoff)


class StatePopulation(NamedTuple):
    population: float
    energy_MHz: float
    level: int
    same_phase_probability: float


def opposite_correlation_population(
    rho: np.ndarray,
    params: SystemParams,
    p_L: float,
    p_R: float,
    cutoff: FockCutoff,
    k: int = 8,
    grid: GridSpec = DEFAULT_GRID,
) -> StatePopulation:
    """Population of the highest even-parity eigenstate whose Q favours opposite phases.

    Searches the ``k`` highest eigenstates of the Hamiltonian at the given pumps.
    """
    eig = top_eigenpairs(hamiltonian_with_pumps(params, p_L, p_R, cutoff), k, cutoff)
    for lvl in range(k):
        if eig.parity[lvl] != 0:
            continue
        v = eig.vectors[:, lvl]
        pp = same_phase_probability(*xi_from_q(pure_state_qfunction(v, grid, cutoff)))
        if pp < 0.5:
            pop = float(np.real(v.conj() @ rho @ v))
            return StatePopulation(pop, float(eig.values[lvl] / TWO_PI), lvl, pp)
    raise ValueError(f"no even-parity opposite-correlation state among the top {k} levels")
