"""Truncated Fock-space operators for one and two bosonic modes.

The joint space of the two oscillators is always ordered L-major: the joint
basis index of |n_L>|n_R> is ``n_L * dim + n_R``. Nothing else in the package
is allowed to assume a different ordering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MODES = ("L", "R")


class TruncationTooSmall(ValueError):
    """The Fock cutoff cannot represent the requested coherent state."""


@dataclass(frozen=True)
class FockCutoff:
    dim_per_mode: int

    def __post_init__(self):
        if int(self.dim_per_mode) != self.dim_per_mode or self.dim_per_mode < 2:
            raise ValueError(f"dim_per_mode must be an integer >= 2, got {self.dim_per_mode!r}")

    @property
    def joint_dim(self) -> int:
        return self.dim_per_mode**2

    @staticmethod
    def required_for(alpha: complex) -> int:
        """Smallest per-mode dimension satisfying ``dim >= ceil(|a|^2 + 5|a|)``."""
        r = abs(alpha)
        return max(2, math.ceil(r * r + 5 * r))

    @classmethod
    def for_alpha(cls, *alphas: complex) -> "FockCutoff":
        return cls(max(cls.required_for(a) for a in alphas))

    def admits(self, alpha: complex) -> bool:
        return self.dim_per_mode >= self.required_for(alpha)


def _dim(cutoff: FockCutoff | int) -> int:
    return cutoff.dim_per_mode if isinstance(cutoff, FockCutoff) else FockCutoff(cutoff).dim_per_mode


def annihilation(cutoff: FockCutoff | int) -> np.ndarray:
    """Annihilation operator with ``a[n-1, n] = sqrt(n)``."""
    d = _dim(cutoff)
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)


def creation(cutoff: FockCutoff | int) -> np.ndarray:
    return annihilation(cutoff).conj().T


def number(cutoff: FockCutoff | int) -> np.ndarray:
    d = _dim(cutoff)
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def embed_mode(op: np.ndarray, mode: str, cutoff: FockCutoff | int) -> np.ndarray:
    """Lift a single-mode operator to the joint space (``op ⊗ I`` for L, ``I ⊗ op`` for R)."""
    d = _dim(cutoff)
    op = np.asarray(op)
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match cutoff {d}")
    eye = np.eye(d)
    if mode == "L":
        return np.kron(op, eye)
    if mode == "R":
        return np.kron(eye, op)
    raise ValueError(f"mode must be 'L' or 'R', got {mode!r}")


def mode_operators(cutoff: FockCutoff | int) -> dict[str, np.ndarray]:
    """Joint-space annihilation operators ``{"L": a_L, "R": a_R}``."""
    a = annihilation(cutoff)
    return {m: embed_mode(a, m, cutoff) for m in MODES}


def fock_state(n: int, cutoff: FockCutoff | int) -> np.ndarray:
    d = _dim(cutoff)
    if not 0 <= n < d:
        raise ValueError(f"level {n} outside cutoff {d}")
    v = np.zeros(d, dtype=complex)
    v[n] = 1.0
    return v


def joint_index(n_L: int, n_R: int, cutoff: FockCutoff | int) -> int:
    d = _dim(cutoff)
    return n_L * d + n_R


def product_state(psi_L: np.ndarray, psi_R: np.ndarray) -> np.ndarray:
    return np.kron(psi_L, psi_R)


def total_parity(cutoff: FockCutoff | int) -> np.ndarray:
    """Parity ``(n_L + n_R) mod 2`` of every joint basis state."""
    n = np.arange(_dim(cutoff))
    return ((n[:, None] + n[None, :]) % 2).ravel()


@dataclass(frozen=True)
class CoherentState:
    """Normalized truncated coherent state.

    ``norm_deficit`` is ``1 - ||c||`` of the truncated (un-renormalized)
    amplitudes, i.e. how much of the state fell outside the cutoff.
    """

    alpha: complex
    amplitudes: np.ndarray = field(repr=False)
    norm_deficit: float

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


def coherent_amplitudes(alpha: complex, dim: int) -> tuple[np.ndarray, float]:
    """Raw amplitudes ``exp(-|a|^2/2) a^n / sqrt(n!)`` and their norm."""
    n = np.arange(dim)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    mag = abs(alpha)
    if mag == 0:
        c = np.zeros(dim, dtype=complex)
        c[0] = 1.0
        return c, 1.0
    log_abs = -0.5 * mag * mag + n * math.log(mag) - 0.5 * log_fact
    phase = np.exp(1j * n * np.angle(alpha))
    c = np.exp(log_abs) * phase
    return c, float(np.linalg.norm(c))


def coherent_state(alpha: complex, cutoff: FockCutoff | int, min_norm: float = 0.999) -> CoherentState:
    d = _dim(cutoff)
    c, norm = coherent_amplitudes(alpha, d)
    if norm < min_norm:
        raise TruncationTooSmall(
            f"coherent state alpha={alpha} keeps norm {norm:.6f} < {min_norm} at dim {d}; "
            f"need dim >= {FockCutoff.required_for(alpha)}"
        )
    return CoherentState(complex(alpha), c / norm, 1.0 - norm)


def coherent_matrix(alphas: np.ndarray, cutoff: FockCutoff | int, min_norm: float = 0.999) -> np.ndarray:
    """Rows are the renormalized coherent states for each entry of ``alphas``."""
    return np.stack([coherent_state(a, cutoff, min_norm).amplitudes for a in np.ravel(alphas)])


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    return hermiticity_error(op) <= tol


def hermiticity_error(op: np.ndarray) -> float:
    """Relative Frobenius norm of the anti-Hermitian part."""
    norm = np.linalg.norm(op)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(op - op.conj().T) / norm)
