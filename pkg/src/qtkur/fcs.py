"""Finite-time counting statistics of jump currents.

Means and covariances come from the derivative hierarchy of the tilted
master equation.  With ``σ^a = ∂ρ_u/∂(iu_a)`` at ``u = 0``:

    σ̇^a  = 𝓛σ^a + 𝒥^a ρ,        𝒥^a X = Σ_k c^a_k L_k X L_k†
    σ̇^ab = 𝓛σ^ab + 𝒥^a σ^b + 𝒥^b σ^a + 𝒥^ab ρ

Only traces of the second-order blocks are needed, and ``tr 𝓛X = 0``, so
the default path integrates the scalars ``q^ab = tr σ^ab`` instead of full
operators.  The full operator path is kept for small models.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
import scipy.linalg

from .model import CurrentSpec, LindbladModel, generator_matrix
from .propagate import DEFAULT_DT, ScaleSchedule, StepSizeError, n_steps_for, rk4_linear, split_schedule
from .tensor_ops import check_density_matrix, devectorize, vectorize

DEFAULT_U_STEP = 1e-3


@dataclass(frozen=True)
class CumulantResult:
    names: tuple[str, ...]
    means: np.ndarray
    covariance: np.ndarray

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    def mean(self, i: int = 0) -> float:
        return float(self.means[i])

    def variance(self, i: int = 0) -> float:
        return float(self.covariance[i, i])


@dataclass(frozen=True)
class MomentHierarchyState:
    """Final hierarchy blocks; ``second`` is keyed by index pairs ``(a, b)`` with ``a <= b``."""

    rho: np.ndarray
    first: tuple[np.ndarray, ...]
    second: dict


def _pairs(m: int) -> list[tuple[int, int]]:
    return list(combinations_with_replacement(range(m), 2))


def _hierarchy_blocks(
    model: LindbladModel,
    weights: np.ndarray,
    scale: np.ndarray,
    full: bool,
) -> np.ndarray:
    """Dissipative part of the hierarchy matrix for channel scales ``scale``.

    Linear in ``scale``; the Hamiltonian part is added separately.
    """
    n = model.dim ** 2
    m = len(weights)
    pairs = _pairs(m)
    p = len(pairs)
    second = n if full else 1
    size = n * (1 + m) + p * second
    out = np.zeros((size, size), dtype=complex)
    gen = np.tensordot(scale, model.dissipator_supers, axes=1)
    jumps = model.jump_supers
    ja = [np.tensordot(scale * w, jumps, axes=1) for w in weights]
    for blk in range(1 + m + (p if full else 0)):
        sl = slice(blk * n, (blk + 1) * n)
        out[sl, sl] = gen
    for a in range(m):
        out[n * (1 + a):n * (2 + a), :n] = ja[a]
    vi = vectorize(np.eye(model.dim))
    base = n * (1 + m)
    for j, (a, b) in enumerate(pairs):
        jab = np.tensordot(scale * weights[a] * weights[b], jumps, axes=1)
        if full:
            rows = slice(base + j * n, base + (j + 1) * n)
            out[rows, n * (1 + b):n * (2 + b)] += ja[a]
            out[rows, n * (1 + a):n * (2 + a)] += ja[b]
            out[rows, :n] += jab
        else:
            r = base + j
            out[r, n * (1 + b):n * (2 + b)] += vi @ ja[a]
            out[r, n * (1 + a):n * (2 + a)] += vi @ ja[b]
            out[r, :n] += vi @ jab
    return out


def _hamiltonian_blocks(model: LindbladModel, m: int, full: bool) -> np.ndarray:
    n = model.dim ** 2
    p = len(_pairs(m))
    n_op = 1 + m + (p if full else 0)
    size = n * (1 + m) + p * (n if full else 1)
    out = np.zeros((size, size), dtype=complex)
    for blk in range(n_op):
        out[blk * n:(blk + 1) * n, blk * n:(blk + 1) * n] = model.hamiltonian_super
    return out


def weight_matrix(model: LindbladModel, currents: Sequence[CurrentSpec]) -> np.ndarray:
    return np.array([model.current_weights(c) for c in currents]).reshape(len(currents), model.n_channels)


def finite_time_cumulants(
    model: LindbladModel,
    currents: Sequence[CurrentSpec] | CurrentSpec,
    rho0: np.ndarray,
    tau: float,
    dt: float = DEFAULT_DT,
    scale: np.ndarray | ScaleSchedule | None = None,
    full_second_order: bool = False,
    return_state: bool = False,
):
    """Means and covariance matrix of time-integrated currents over ``[0, τ]``.

    ``scale`` rescales channel dissipators (and jump terms) constantly or
    along a tabulated schedule.  With ``return_state`` the final
    :class:`MomentHierarchyState` is returned as well; that requires
    ``full_second_order`` for the second-order blocks to be operators.
    """
    if isinstance(currents, CurrentSpec):
        currents = [currents]
    currents = list(currents)
    if not currents:
        raise ValueError("at least one current is required")
    rho0 = check_density_matrix(rho0, model.dim)
    steps = n_steps_for(tau, dt)
    w = weight_matrix(model, currents)
    m = len(currents)
    pairs = _pairs(m)
    n = model.dim ** 2
    ham = _hamiltonian_blocks(model, m, full_second_order)
    y0 = np.zeros(ham.shape[0], dtype=complex)
    y0[:n] = vectorize(rho0)
    blocks = lambda s: _hierarchy_blocks(model, w, s, full_second_order)  # noqa: E731
    if isinstance(scale, ScaleSchedule):
        fixed, parts, coeff = split_schedule(scale, blocks)
        y = rk4_linear(ham + fixed, y0, steps, dt, parts=parts, coeff=coeff)
    else:
        s = np.ones(model.n_channels) if scale is None else np.asarray(scale, dtype=float)
        y = rk4_linear(ham + blocks(s), y0, steps, dt)
    if not np.all(np.isfinite(y)):
        raise StepSizeError("moment hierarchy diverged; reduce dt")
    vi = vectorize(np.eye(model.dim))
    first = [y[n * (1 + a):n * (2 + a)] for a in range(m)]
    means = np.array([(vi @ f).real for f in first])
    base = n * (1 + m)
    if full_second_order:
        sec = {pr: y[base + j * n:base + (j + 1) * n] for j, pr in enumerate(pairs)}
        q = {pr: (vi @ v).real for pr, v in sec.items()}
    else:
        q = {pr: y[base + j].real for j, pr in enumerate(pairs)}
    second_moment = np.empty((m, m))
    for (a, b), v in q.items():
        second_moment[a, b] = second_moment[b, a] = v
    cov = second_moment - np.outer(means, means)
    cov = 0.5 * (cov + cov.T)
    result = CumulantResult(tuple(c.name for c in currents), means, cov)
    if not return_state:
        return result
    state = MomentHierarchyState(
        devectorize(y[:n]),
        tuple(devectorize(f) for f in first),
        {pr: devectorize(v) for pr, v in sec.items()} if full_second_order else {},
    )
    return result, state


def tilted_generator(model: LindbladModel, current: CurrentSpec, u: float) -> np.ndarray:
    """Vectorized generator with each jump term multiplied by ``exp(i u c_k)``."""
    c = model.current_weights(current)
    factor = np.exp(1j * u * c) - 1.0
    return generator_matrix(model) + np.tensordot(factor, model.jump_supers, axes=1)


def generating_function(model: LindbladModel, current: CurrentSpec, rho0: np.ndarray, tau: float, u: float) -> complex:
    """``Z(u) = tr[exp(𝓛_u τ) ρ0]`` by dense matrix exponential."""
    vi = vectorize(np.eye(model.dim))
    return complex(vi @ (scipy.linalg.expm(tilted_generator(model, current, u) * tau) @ vectorize(rho0)))


def tilted_oracle_moments(
    model: LindbladModel,
    current: CurrentSpec,
    rho0: np.ndarray,
    tau: float,
    u_step: float = DEFAULT_U_STEP,
) -> tuple[float, float]:
    """Mean and variance from five-point finite differences of ``ln Z(u)``."""
    if model.dim ** 2 > 1024:
        raise ValueError(f"dense matrix exponential too large: D^2 = {model.dim ** 2} > 1024")
    rho0 = check_density_matrix(rho0, model.dim)
    h = float(u_step)
    # differencing ln Z removes the fast phase exp(i u <J>) that limits the stencil on Z itself
    k = {j: np.log(generating_function(model, current, rho0, tau, j * h)) for j in (-2, -1, 0, 1, 2)}
    d1 = (-k[2] + 8 * k[1] - 8 * k[-1] + k[-2]) / (12 * h)
    d2 = (-k[2] + 16 * k[1] - 30 * k[0] + 16 * k[-1] - k[-2]) / (12 * h * h)
    return float((-1j * d1).real), float((-d2).real)
