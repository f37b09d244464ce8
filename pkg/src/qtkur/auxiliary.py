"""Auxiliary θ-perturbed dynamics and the resulting correction terms.

Every subsystem channel is rescaled as ``L_k -> √(1 + ℓ_k θ) L_k`` with

    ℓ_k(t) = (r_k - r_k*) / (r_k + r_k*)

frozen along the unperturbed trajectory.  The first-order state response
``φ_t = ∂_θ ρ_t`` obeys ``φ̇ = 𝓛φ + Σ ℓ_k D_k ρ_t`` with ``φ_0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fcs import finite_time_cumulants
from .model import CurrentSpec, LindbladModel, generator_matrix
from .propagate import ScaleSchedule, StateTrajectory, evolve, rk4_linear, rk4_step_matrix, simpson
from .tensor_ops import devectorize, vectorize

ELL_FLOOR = 1e-14
J_ZERO = 1e-12
MAX_THETA = 1e-3


class UndefinedCorrectionError(ValueError):
    """The mean current vanishes, so the relative correction is undefined."""


@dataclass(frozen=True)
class EllSchedule:
    times: np.ndarray
    subsystem: int
    channels: np.ndarray  # model channel indices
    values: np.ndarray  # (n_times, n_channels_in_subsystem)

    def full(self, n_channels: int) -> np.ndarray:
        """(n_times, n_channels) array with zeros outside the subsystem."""
        out = np.zeros((len(self.times), n_channels))
        out[:, self.channels] = self.values
        return out

    @property
    def is_constant(self) -> bool:
        return bool(np.all(np.ptp(self.values, axis=0) == 0)) if self.values.size else True


@dataclass(frozen=True)
class ResponseTrajectory:
    times: np.ndarray
    phi: np.ndarray  # (n_times, D, D)


@dataclass(frozen=True)
class CorrectionResult:
    j_avg: float
    j_phi: float
    delta: float
    j_star: float
    delta_prime: float
    qfi: float
    j_diff: float = float("nan")
    j_phi_diff: float = float("nan")

    @property
    def corrected_mean(self) -> float:
        """``⟨J⟩ + ⟨J⟩_φ``: the θ-derivative of the perturbed mean."""
        return self.j_avg + self.j_phi


def _ell_from_rates(rates: np.ndarray, idx: np.ndarray, rev: np.ndarray) -> np.ndarray:
    r = rates[:, idx]
    rr = rates[:, rev[idx]]
    s = r + rr
    ok = s >= ELL_FLOOR
    return np.where(ok, (r - rr) / np.where(ok, s, 1.0), 0.0)


def ell_schedule(model: LindbladModel, traj: StateTrajectory, subsystem: int = 0) -> EllSchedule:
    """ℓ coefficients of every channel of ``subsystem`` along ``traj``."""
    model.require_paired([subsystem])
    idx = model.subsystem_indices(subsystem)
    states = traj.states
    if states.strides[0] == 0:
        vals = np.broadcast_to(_ell_from_rates(model.rates(states[:1]), idx, model.reverse_index), (len(states), len(idx)))
    else:
        vals = _ell_from_rates(model.rates(states), idx, model.reverse_index)
    return EllSchedule(traj.times, subsystem, idx, np.asarray(vals))


def _source_super(model: LindbladModel, ell_row: np.ndarray, channels: np.ndarray) -> np.ndarray:
    return np.tensordot(ell_row, model.dissipator_supers[channels], axes=1)


def solve_phi(model: LindbladModel, traj: StateTrajectory, ells: EllSchedule) -> ResponseTrajectory:
    """RK4 solution of the response equation on the trajectory grid.

    The pair ``(ρ, φ)`` is integrated as one linear system so that each
    step is exactly RK4 on the joint dynamics; the stored ``ρ_t`` supply
    the source.
    """
    if len(ells.times) != len(traj.times) or not np.allclose(ells.times, traj.times, rtol=0, atol=1e-12):
        raise ValueError("ℓ schedule and trajectory grids do not match")
    n = model.dim ** 2
    dt = traj.dt
    steps = len(traj.times) - 1
    g = generator_matrix(model)
    rho_vec = vectorize(traj.states)
    phi = np.zeros((steps + 1, n), dtype=complex)
    if ells.is_constant:
        joint = np.zeros((2 * n, 2 * n), dtype=complex)
        joint[:n, :n] = g
        joint[n:, n:] = g
        joint[n:, :n] = _source_super(model, ells.values[0], ells.channels)
        p = rk4_step_matrix(joint, dt)
        pg, c = p[n:, n:], p[n:, :n]
        stationary = traj.states.strides[0] == 0
        src = c @ rho_vec[0]
        for k in range(steps):
            phi[k + 1] = pg @ phi[k] + (src if stationary else c @ rho_vec[k])
    else:
        base = np.zeros((2 * n, 2 * n), dtype=complex)
        base[:n, :n] = g
        base[n:, n:] = g
        active = np.flatnonzero(np.any(ells.values != 0, axis=0))
        parts = np.zeros((len(active), 2 * n, 2 * n), dtype=complex)
        for j, a in enumerate(active):
            parts[j, n:, :n] = model.dissipator_supers[ells.channels[a]]
        sched = ScaleSchedule(ells.times, ells.values[:, active])
        y0 = np.concatenate([rho_vec[0], np.zeros(n, dtype=complex)])
        joint = rk4_linear(base, y0, steps, dt, store=True, parts=parts, coeff=sched.at)
        phi = joint[:, n:]
    return ResponseTrajectory(traj.times, devectorize(phi))


def _linear_functional(ops: np.ndarray, weights: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``Σ_k w_k tr(O_k X_t)`` for every ``X_t``."""
    d = ops.shape[-1]
    combo = np.tensordot(weights, ops, axes=1)
    return (np.swapaxes(states, -1, -2).reshape(len(states), d * d) @ combo.reshape(d * d))


def correction_and_qfi(
    model: LindbladModel,
    traj: StateTrajectory,
    phi: ResponseTrajectory,
    ells: EllSchedule,
    current: CurrentSpec,
) -> CorrectionResult:
    """⟨J⟩, ⟨J⟩_φ, δ, the diffusion-unraveling pair (⟨J⟩_*, δ′) and the Fisher information.

    δ is NaN when ``|⟨J⟩| ≤ 1e-12``; δ′ is NaN when the diffusion-unraveled
    mean vanishes.
    """
    c = model.current_weights(current)
    support = np.flatnonzero(c)
    if np.any(model.subsystem_of[support] != ells.subsystem):
        raise ValueError(f"current {current.name!r} has weights outside subsystem {ells.subsystem}")
    dt = traj.dt
    stationary = traj.states.strides[0] == 0
    states = traj.states[:1] if stationary else traj.states

    def integrate(y):
        y = np.real(y)
        return float(y[0] * traj.tau) if stationary else float(simpson(y, dt))

    ell_full = ells.full(model.n_channels)[: len(states)]
    rates = model.rates(states)
    A = model.rate_operators
    L = model.operators
    herm = L + np.conj(np.swapaxes(L, -1, -2))
    j_avg = integrate(rates @ c)
    j_phi = float(simpson(np.real(_linear_functional(A, c, phi.phi)), dt))
    qfi = integrate(np.sum(ell_full ** 2 * rates, axis=1))
    # diffusion unraveling: homodyne-type currents Σ c tr[(L + L†) X]
    x_rho = np.real(np.einsum("kij,tji->tk", herm, states))
    j_diff = integrate(x_rho @ c)
    j_star = integrate(np.sum(c * (ell_full / 2 - 1.0) * x_rho, axis=1))
    j_phi_diff = float(simpson(np.real(_linear_functional(herm, c, phi.phi)), dt))
    delta = j_phi / j_avg if abs(j_avg) > J_ZERO else float("nan")
    delta_prime = (j_star + j_phi_diff) / j_diff if abs(j_diff) > J_ZERO else float("nan")
    return CorrectionResult(j_avg, j_phi, delta, j_star, delta_prime, qfi, j_diff, j_phi_diff)


def perturbation_schedule(model: LindbladModel, ells: EllSchedule, theta: float) -> ScaleSchedule:
    """Channel scales ``1 + ℓ(t) θ`` for the perturbed dynamics."""
    if abs(theta) > MAX_THETA:
        raise ValueError(f"|theta| = {abs(theta)} exceeds {MAX_THETA}")
    scale = 1.0 + theta * ells.full(model.n_channels)
    if np.any(scale <= 0):
        raise ValueError(f"theta = {theta} makes a channel scale non-positive")
    return ScaleSchedule(ells.times, scale)


def perturbed_mean(
    model: LindbladModel,
    rho0: np.ndarray,
    traj: StateTrajectory,
    ells: EllSchedule,
    current: CurrentSpec,
    theta: float,
    unraveling: str = "jump",
) -> float:
    """Mean current of the θ-perturbed dynamics with frozen ℓ schedule."""
    sched = perturbation_schedule(model, ells, theta)
    tau, dt = traj.tau, traj.dt
    if unraveling == "jump":
        return finite_time_cumulants(model, current, rho0, tau, dt, scale=sched).mean()
    if unraveling == "diffusion":
        pert = evolve(model, rho0, tau, dt, scale=sched)
        c = model.current_weights(current)
        L = model.operators
        herm = L + np.conj(np.swapaxes(L, -1, -2))
        x = np.real(np.einsum("kij,tji->tk", herm, pert.states))
        amp = np.sqrt(sched.values)
        return float(simpson(np.sum(c * amp * x, axis=1), dt))
    raise ValueError(f"unknown unraveling {unraveling!r}; expected 'jump' or 'diffusion'")


@dataclass(frozen=True)
class FiniteThetaResult:
    derivative: float
    predicted: float
    relative_error: float


def finite_theta_check(
    model: LindbladModel,
    rho0: np.ndarray,
    tau: float,
    current: CurrentSpec,
    theta: float = 1e-4,
    dt: float = 1e-3,
    subsystem: int | None = None,
    unraveling: str = "jump",
    traj: StateTrajectory | None = None,
) -> FiniteThetaResult:
    """Central difference of the perturbed mean against ``⟨J⟩ + ⟨J⟩_φ``.

    For ``unraveling="diffusion"`` the prediction is ``⟨J⟩ + ⟨J⟩_* + ⟨J⟩_φ``
    with the homodyne-type current.
    """
    if theta == 0 or abs(theta) > MAX_THETA:
        raise ValueError(f"theta must satisfy 0 < |theta| <= {MAX_THETA}, got {theta}")
    if subsystem is None:
        subsystem = model.current_subsystem(current)
    traj = traj or evolve(model, rho0, tau, dt)
    ells = ell_schedule(model, traj, subsystem)
    phi = solve_phi(model, traj, ells)
    corr = correction_and_qfi(model, traj, phi, ells, current)
    plus = perturbed_mean(model, rho0, traj, ells, current, theta, unraveling)
    minus = perturbed_mean(model, rho0, traj, ells, current, -theta, unraveling)
    deriv = (plus - minus) / (2 * theta)
    if unraveling == "jump":
        pred = corr.j_avg + corr.j_phi
    else:
        pred = corr.j_diff + corr.j_star + corr.j_phi_diff
    scale = max(abs(pred), abs(deriv))
    err = abs(deriv - pred) / scale if scale > 0 else 0.0
    return FiniteThetaResult(deriv, pred, err)
