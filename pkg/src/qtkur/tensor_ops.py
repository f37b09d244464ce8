"""Dense operator algebra on tensor-product Hilbert spaces.

Operators are plain complex ``numpy`` arrays of shape ``(D, D)``; most
functions also accept stacks of shape ``(..., D, D)``.  Vectorization is
row-major throughout: ``vec(A) = A.reshape(-1)``, hence

    vec(A X B) = (A ⊗ Bᵀ) vec(X).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

LOG_FLOOR = 1e-14
PSD_TOL = 1e-8


class NonPhysicalStateError(ValueError):
    """Raised when a density matrix has clearly negative eigenvalues."""


@dataclass(frozen=True)
class TensorSpace:
    dims: tuple[int, ...]

    def __init__(self, dims: Sequence[int]):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ValueError("TensorSpace needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def identity(self) -> np.ndarray:
        return np.eye(self.total_dim, dtype=complex)

    def check_index(self, i: int) -> int:
        if not 0 <= i < len(self.dims):
            raise ValueError(f"subsystem index {i} out of range for dims {self.dims}")
        return i


class HermitianSpectrum(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns


def hermitian_spectrum(a: np.ndarray) -> HermitianSpectrum:
    w, v = np.linalg.eigh(a)
    return HermitianSpectrum(w[..., ::-1], v[..., ::-1])


def embed_local(op: np.ndarray, i: int, space: TensorSpace) -> np.ndarray:
    """Return ``I ⊗ ... ⊗ op ⊗ ... ⊗ I`` with ``op`` in slot ``i``."""
    space.check_index(i)
    op = np.asarray(op, dtype=complex)
    d = space.dims[i]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match subsystem {i} of dims {space.dims}")
    left = int(np.prod(space.dims[:i]))
    right = int(np.prod(space.dims[i + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def partial_trace(m: np.ndarray, keep: int, space: TensorSpace) -> np.ndarray:
    """Reduced operator on subsystem ``keep``; accepts leading batch axes."""
    space.check_index(keep)
    dims = space.dims
    n = len(dims)
    m = np.asarray(m)
    batch = m.shape[:-2]
    if m.shape[-2:] != (space.total_dim, space.total_dim):
        raise ValueError(f"operator shape {m.shape[-2:]} does not match dims {dims}")
    t = m.reshape(batch + dims + dims)
    row = list(_LETTERS[:n])
    col = list(row)
    col[keep] = _LETTERS[n]
    spec = "..." + "".join(row) + "".join(col) + "->..." + row[keep] + col[keep]
    return np.einsum(spec, t)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def log_on_support(rho: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    """Matrix logarithm restricted to eigenvalues above ``floor``.

    Eigenvalues at or below the floor contribute zero (the 0·ln 0 = 0
    convention).  Works on stacks.
    """
    w, v = np.linalg.eigh(hermitize(np.asarray(rho, dtype=complex)))
    if np.any(w < -PSD_TOL):
        raise NonPhysicalStateError(f"density matrix has eigenvalue {w.min():.3e}")
    logw = np.where(w > floor, np.log(np.where(w > floor, w, 1.0)), 0.0)
    return (v * logw[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def entropy_from_eigenvalues(w: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    safe = np.where(w > floor, w, 1.0)
    return -np.sum(np.where(w > floor, w * np.log(safe), 0.0), axis=-1)


def von_neumann_entropy(rho: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    w = np.linalg.eigvalsh(hermitize(np.asarray(rho, dtype=complex)))
    if np.any(w < -PSD_TOL):
        raise NonPhysicalStateError(f"density matrix has eigenvalue {w.min():.3e}")
    return entropy_from_eigenvalues(w, floor)


def vectorize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {m.shape}")
    return m.reshape(m.shape[:-2] + (-1,))


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    n2 = v.shape[-1]
    d = int(round(np.sqrt(n2)))
    if d * d != n2:
        raise ValueError(f"vector length {n2} is not a perfect square")
    return v.reshape(v.shape[:-1] + (d, d))


def sandwich_super(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> A X B`` acting on row-major vectors."""
    return np.kron(a, np.asarray(b).T)


def left_super(a: np.ndarray) -> np.ndarray:
    return np.kron(a, np.eye(a.shape[0]))


def right_super(b: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(b.shape[0]), np.asarray(b).T)


def check_density_matrix(rho: np.ndarray, dim: int | None = None, tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"density matrix dimension {rho.shape[0]} != {dim}")
    if np.linalg.norm(rho - rho.conj().T) > tol:
        raise NonPhysicalStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise NonPhysicalStateError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    wmin = np.linalg.eigvalsh(hermitize(rho)).min()
    if wmin < -tol:
        raise NonPhysicalStateError(f"density matrix has eigenvalue {wmin:.3e}")
    return rho
