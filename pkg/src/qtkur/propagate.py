"""Fixed-step RK4 propagation, stationary states and Gibbs certification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg

from .model import LindbladModel, generator_apply, generator_matrix
from .tensor_ops import check_density_matrix, devectorize, hermitize, vectorize

DEFAULT_DT = 1e-3
TRACE_DRIFT_LIMIT = 1e-5
UNIQUENESS_GAP = 1e-8


class StepSizeError(RuntimeError):
    """Integration went unstable; the step is too large."""


class DegenerateSteadyStateError(RuntimeError):
    """The generator has more than one zero mode."""


@dataclass(frozen=True)
class StateTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_steps + 1, D, D)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def tau(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SteadyStateResult:
    state: np.ndarray
    residual: float


def n_steps_for(tau: float, dt: float) -> int:
    if not (tau > 0 and dt > 0):
        raise ValueError(f"tau and dt must be positive, got tau={tau}, dt={dt}")
    if dt > tau:
        raise ValueError(f"dt={dt} exceeds tau={tau}")
    n = int(round(tau / dt))
    if abs(n * dt - tau) > 1e-9 * tau:
        raise ValueError(f"tau={tau} is not an integer multiple of dt={dt}")
    return n


def time_grid(tau: float, dt: float) -> np.ndarray:
    n = n_steps_for(tau, dt)
    return np.linspace(0.0, tau, n + 1)


def rk4_step_matrix(m: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for ``y' = M y`` as the matrix ``Σ_{n≤4} (hM)^n/n!``."""
    hm = h * m
    eye = np.eye(m.shape[0], dtype=hm.dtype)
    return eye + hm @ (eye + hm @ (eye + hm @ (eye + hm / 4) / 3) / 2)


@dataclass(frozen=True)
class ScaleSchedule:
    """Per-channel dissipator scale tabulated on a uniform grid, linearly interpolated."""

    times: np.ndarray
    values: np.ndarray  # (n_times, n_channels)

    def at(self, t: float) -> np.ndarray:
        h = self.times[1] - self.times[0]
        x = (t - self.times[0]) / h
        i = min(max(int(np.floor(x)), 0), len(self.times) - 2)
        w = x - i
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def varying(self) -> np.ndarray:
        """Channel indices whose scale is not constant over the grid."""
        return np.flatnonzero(np.ptp(self.values, axis=0) > 0)


def rk4_linear(
    m0: np.ndarray,
    y0: np.ndarray,
    n_steps: int,
    dt: float,
    store: bool = False,
    parts: np.ndarray | None = None,
    coeff: Callable[[float], np.ndarray] | None = None,
) -> np.ndarray:
    """Integrate ``y' = (M0 + Σ_j coeff_j(t) parts_j) y`` with classical RK4.

    Without ``parts`` the system is autonomous and one precomputed step
    matrix is iterated.  Returns the final vector, or all ``n_steps + 1``
    grid values if ``store``.
    """
    y = np.array(y0, dtype=complex)
    out = np.empty((n_steps + 1,) + y.shape, dtype=complex) if store else None
    if store:
        out[0] = y
    if parts is None or len(parts) == 0:
        p = rk4_step_matrix(np.asarray(m0), dt)
        if not store:
            return np.linalg.matrix_power(p, n_steps) @ y
        for n in range(n_steps):
            y = p @ y
            out[n + 1] = y
        return out

    def rhs(t, v):
        return m0 @ v + coeff(t) @ (parts @ v)

    for n in range(n_steps):
        t = n * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if store:
            out[n + 1] = y
    return out if store else y


def split_schedule(
    schedule: ScaleSchedule, blocks: Callable[[np.ndarray], np.ndarray]
) -> tuple[np.ndarray, np.ndarray, Callable[[float], np.ndarray]]:
    """Split a matrix that is linear in the channel scales into fixed and varying parts.

    ``blocks(s)`` must return the dissipative (scale-linear) part for scale
    vector ``s``.  Returns ``(fixed, parts, coeff)`` for :func:`rk4_linear`.
    """
    var = schedule.varying()
    s_fixed = schedule.values[0].copy()
    s_fixed[var] = 0.0
    fixed = blocks(s_fixed)
    parts = []
    for k in var:
        e = np.zeros(schedule.values.shape[1])
        e[k] = 1.0
        parts.append(blocks(e))
    parts = np.array(parts).reshape((len(var),) + fixed.shape)
    return fixed, parts, lambda t: schedule.at(t)[var]


def simpson(values: np.ndarray, dt: float) -> np.ndarray:
    """Composite Simpson rule along the first axis of a uniform grid."""
    values = np.asarray(values)
    if values.shape[0] < 3:
        return scipy.integrate.trapezoid(values, dx=dt, axis=0)
    return scipy.integrate.simpson(values, dx=dt, axis=0)


def _check_trajectory(states: np.ndarray) -> None:
    tr = np.einsum("nii->n", states)
    drift = np.max(np.abs(tr - tr[0]))
    if not np.isfinite(drift) or drift > TRACE_DRIFT_LIMIT:
        raise StepSizeError(f"trace drift {drift:.3e} exceeds {TRACE_DRIFT_LIMIT}; reduce dt")


def evolve(
    model: LindbladModel,
    rho0: np.ndarray,
    tau: float,
    dt: float = DEFAULT_DT,
    scale: np.ndarray | ScaleSchedule | None = None,
) -> StateTrajectory:
    """Propagate the master equation on the grid ``0, dt, ..., tau``.

    ``scale`` multiplies each channel's dissipator, either constantly or via
    a tabulated schedule (used for the perturbed auxiliary dynamics).
    """
    rho0 = check_density_matrix(rho0, model.dim)
    n = n_steps_for(tau, dt)
    if isinstance(scale, ScaleSchedule):
        diss = lambda s: np.tensordot(s, model.dissipator_supers, axes=1)  # noqa: E731
        fixed, parts, coeff = split_schedule(scale, diss)
        vecs = rk4_linear(model.hamiltonian_super + fixed, vectorize(rho0), n, dt, True, parts, coeff)
    else:
        vecs = rk4_linear(generator_matrix(model, scale), vectorize(rho0), n, dt, store=True)
    states = devectorize(vecs)
    _check_trajectory(states)
    return StateTrajectory(np.linspace(0.0, tau, n + 1), states)


def stationary_trajectory(rho: np.ndarray, tau: float, dt: float) -> StateTrajectory:
    """Constant trajectory backed by a single state (zero-stride broadcast)."""
    times = time_grid(tau, dt)
    return StateTrajectory(times, np.broadcast_to(rho, (len(times),) + rho.shape))


def is_stationary(traj: StateTrajectory, tol: float = 1e-12) -> bool:
    states = traj.states
    if states.strides[0] == 0:
        return True
    return float(np.max(np.abs(states - states[0]))) <= tol


def collapse_if_stationary(traj: StateTrajectory, tol: float = 1e-12) -> StateTrajectory:
    """Replace a trajectory that never leaves its initial state by the exact constant one."""
    if traj.states.strides[0] == 0 or not is_stationary(traj, tol):
        return traj
    return StateTrajectory(traj.times, np.broadcast_to(traj.states[0], traj.states.shape))


def steady_state(model: LindbladModel) -> SteadyStateResult:
    """Unique stationary state from the trace-augmented least-squares system."""
    g = generator_matrix(model)
    sv = np.linalg.svd(g, compute_uv=False)
    if len(sv) > 1 and sv[-2] <= UNIQUENESS_GAP * max(1.0, sv[0]):
        raise DegenerateSteadyStateError(
            f"generator zero eigenspace is degenerate (second-smallest singular value {sv[-2]:.3e})"
        )
    d = model.dim
    a = np.vstack([g, vectorize(np.eye(d))[None, :]])
    b = np.zeros(d * d + 1, dtype=complex)
    b[-1] = 1.0
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    rho = hermitize(devectorize(x))
    rho = rho / np.trace(rho).real
    residual = float(np.linalg.norm(generator_apply(model, rho)))
    return SteadyStateResult(rho, residual)


def gibbs_state(h_beta: np.ndarray) -> np.ndarray:
    """``exp(-H_β) / tr exp(-H_β)`` for a dimensionless Hermitian ``H_β``."""
    w, v = np.linalg.eigh(hermitize(np.asarray(h_beta, dtype=complex)))
    p = np.exp(-(w - w.min()))
    p /= p.sum()
    return (v * p) @ v.conj().T


def gibbs_check(model: LindbladModel, pi: np.ndarray) -> float:
    """Frobenius norm of the generator applied to ``pi``."""
    pi = check_density_matrix(pi, model.dim)
    return float(np.linalg.norm(generator_apply(model, pi)))


def expm_evolve(model: LindbladModel, rho0: np.ndarray, t: float) -> np.ndarray:
    """Exact propagation by a dense matrix exponential (reference path for tests)."""
    g = generator_matrix(model)
    return devectorize(scipy.linalg.expm(g * t) @ vectorize(np.asarray(rho0, dtype=complex)))
