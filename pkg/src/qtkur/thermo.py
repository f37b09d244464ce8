"""Entropy production, information flow, heat and activity of each subsystem.

All rates use the exact derivative ``ρ̇ = 𝓛ρ``.  Per channel ``k`` with
dissipator ``D_k`` and jump rate ``r_k = tr(L_k ρ L_k†)``:

    partial EP         Ṡᵢᵗᵒᵗ = Σ_{k∈i} [-tr(D_kρ ln ρ) + Δs_k r_k]
    subsystem entropy  Ṡᵢ    = -tr(ρ̇ᵢ ln ρᵢ)
    information flow   İᵢ    = Ṡᵢ + Σ_{k∈i} tr(D_kρ ln ρ)
    local entropy      Σ̇ᵢ    = Ṡᵢ + Σ_{k∈i} Δs_k r_k
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import LindbladModel, generator_apply
from .propagate import StateTrajectory, simpson
from .tensor_ops import (
    LOG_FLOOR,
    PSD_TOL,
    NonPhysicalStateError,
    TensorSpace,
    hermitize,
    partial_trace,
    von_neumann_entropy,
)

CHUNK = 1024
SPECTRAL_RTOL = 1e-7


@dataclass(frozen=True)
class ThermoRates:
    """Instantaneous rates; per-subsystem arrays are indexed by subsystem."""

    s_dot_tot: np.ndarray
    i_dot: np.ndarray
    sigma_dot: np.ndarray
    s_dot_sub: np.ndarray
    activity: np.ndarray
    entropy_flow: np.ndarray  # Σ_{k∈i} Δs_k r_k
    heat: dict
    s_dot: float
    s_dot_env: float
    s_dot_total: float
    i_dot_total: float
    spectral_s_dot_tot: np.ndarray | None = None

    @property
    def spectral_mismatch(self) -> float:
        """Largest relative disagreement between the spectral and operator partial EP."""
        if self.spectral_s_dot_tot is None:
            return float("nan")
        ok = np.isfinite(self.spectral_s_dot_tot)
        if not np.any(ok):
            return float("nan")
        diff = np.abs(self.spectral_s_dot_tot[ok] - self.s_dot_tot[ok])
        scale = np.maximum(np.abs(self.s_dot_tot[ok]), 1e-300)
        return float(np.max(np.where(diff == 0, 0.0, diff / scale)))


@dataclass(frozen=True)
class ThermoAccumulants:
    """Time integrals over ``[0, τ]`` for one subsystem (``k_B = 1``)."""

    subsystem: int
    tau: float
    delta_s1_tot: float
    a1: float
    sigma1: float
    i1: float
    entropy_flow1: float
    heat: dict

    def rate(self, name: str) -> float:
        """Time average ``(1/τ)∫ ... dt`` of an accumulated quantity."""
        return getattr(self, name) / self.tau


def _log_and_spectrum(rho: np.ndarray, floor: float):
    w, v = np.linalg.eigh(hermitize(rho))
    if np.any(w < -PSD_TOL):
        raise NonPhysicalStateError(f"density matrix has eigenvalue {w.min():.3e}")
    logw = np.where(w > floor, np.log(np.where(w > floor, w, 1.0)), 0.0)
    log = (v * logw[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return log, w, v


def _spectral_partial_ep(model: LindbladModel, w: np.ndarray, v: np.ndarray, subsystems, floor: float) -> np.ndarray:
    """Partial EP from transition weights ``w^{nm}_k = |<n|L_k|m>|²`` in the eigenbasis of ρ."""
    vh = np.conj(np.swapaxes(v, -1, -2))
    ops = vh[:, None] @ model.operators[None] @ v[:, None]  # (T, K, D, D), [n, m] = <n|L|m>
    wt = np.abs(ops) ** 2
    p = np.clip(w, 0.0, None)
    out = np.full((len(w), model.space.n_subsystems), np.nan)
    rev = model.reverse_index
    for i in subsystems:
        tot = np.zeros(len(w))
        for k in model.subsystem_indices(i):
            a = wt[:, k] * p[:, None, :]  # w^{nm}_k p_m
            b = np.swapaxes(wt[:, rev[k]], -1, -2) * p[:, :, None]  # w^{mn}_{k*} p_n
            mask = (a > floor) & (b > floor)
            ratio = np.where(mask, a / np.where(mask, b, 1.0), 1.0)
            tot += np.sum(np.where(mask, a * np.log(ratio), 0.0), axis=(-1, -2))
        out[:, i] = tot
    return out


def _rates_batch(
    model: LindbladModel,
    rho: np.ndarray,
    subsystems: Iterable[int],
    spectral: bool,
    floor: float,
) -> dict:
    space = model.space
    n_sub = space.n_subsystems
    t = rho.shape[0]
    log, w, v = _log_and_spectrum(rho, floor)
    rho_dot = generator_apply(model, rho)
    L = model.operators
    Ld = np.conj(np.swapaxes(L, -1, -2))
    rates = model.rates(rho)  # (T, K)
    # tr(D_k ρ ln ρ) = tr(ρ L† ln ρ L) - tr(L†L ρ ln ρ)
    d = model.dim
    rho_t = np.swapaxes(rho, -1, -2).reshape(t, 1, d * d)
    pulled = (Ld[None] @ log[:, None] @ L[None]).reshape(t, -1, d * d)
    sandwich = np.sum(pulled * rho_t, axis=-1).real
    rho_log_t = np.swapaxes(rho @ log, -1, -2).reshape(t, d * d)
    anti = (rho_log_t @ model.rate_operators.reshape(-1, d * d).T).real
    diss_log = sandwich - anti
    ds = model.delta_s
    sub_of = model.subsystem_of
    s_sub = np.zeros((t, n_sub))
    tot = np.zeros((t, n_sub))
    info = np.zeros((t, n_sub))
    sig = np.zeros((t, n_sub))
    act = np.zeros((t, n_sub))
    flow = np.zeros((t, n_sub))
    for i in range(n_sub):
        rho_i = partial_trace(rho, i, space)
        rdot_i = partial_trace(rho_dot, i, space)
        log_i, _, _ = _log_and_spectrum(rho_i, floor)
        s_sub[:, i] = -np.einsum("tij,tji->t", rdot_i, log_i).real
        mask = sub_of == i
        flow[:, i] = rates[:, mask] @ ds[mask]
        dl = diss_log[:, mask].sum(axis=1)
        tot[:, i] = -dl + flow[:, i]
        info[:, i] = s_sub[:, i] + dl
        sig[:, i] = s_sub[:, i] + flow[:, i]
        act[:, i] = rates[:, mask].sum(axis=1)
    s_dot = -np.einsum("tij,tji->t", rho_dot, log).real
    env = rates @ ds
    heat = {}
    for rid, res in model.reservoirs.items():
        mask = np.array([ch.reservoir == rid for ch in model.channels], dtype=bool)
        heat[rid] = rates[:, mask] @ ds[mask] / res.beta
    out = dict(
        s_dot_tot=tot,
        i_dot=info,
        sigma_dot=sig,
        s_dot_sub=s_sub,
        activity=act,
        entropy_flow=flow,
        heat=heat,
        s_dot=s_dot,
        s_dot_env=env,
        s_dot_total=s_dot + env,
        i_dot_total=s_sub.sum(axis=1) - s_dot,
    )
    if spectral:
        out["spectral"] = _spectral_partial_ep(model, w, v, list(subsystems), floor)
    return out


def _requested(model: LindbladModel, subsystems) -> list[int]:
    if subsystems is None:
        subs = [i for i in range(model.space.n_subsystems) if len(model.subsystem_indices(i))]
    else:
        subs = [model.space.check_index(i) for i in subsystems]
    model.require_paired(subs)
    return subs


def rates_at(
    model: LindbladModel,
    rho: np.ndarray,
    subsystems: Iterable[int] | None = None,
    spectral: bool = True,
    floor: float = LOG_FLOOR,
) -> ThermoRates:
    """All thermodynamic rates at a single state.

    ``subsystems`` lists those whose channels must be reverse-paired
    (default: every subsystem that has channels).  With ``spectral`` the
    partial EP is also evaluated from eigenbasis transition weights.
    """
    subs = _requested(model, subsystems)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"state shape {rho.shape} does not match model dimension {model.dim}")
    b = _rates_batch(model, rho[None], subs, spectral, floor)
    return ThermoRates(
        s_dot_tot=b["s_dot_tot"][0],
        i_dot=b["i_dot"][0],
        sigma_dot=b["sigma_dot"][0],
        s_dot_sub=b["s_dot_sub"][0],
        activity=b["activity"][0],
        entropy_flow=b["entropy_flow"][0],
        heat={k: float(v[0]) for k, v in b["heat"].items()},
        s_dot=float(b["s_dot"][0]),
        s_dot_env=float(b["s_dot_env"][0]),
        s_dot_total=float(b["s_dot_total"][0]),
        i_dot_total=float(b["i_dot_total"][0]),
        spectral_s_dot_tot=b["spectral"][0] if spectral else None,
    )


def rate_series(
    model: LindbladModel,
    states: np.ndarray,
    subsystems: Iterable[int] | None = None,
    floor: float = LOG_FLOOR,
) -> dict:
    """Rates at every state of a stack, evaluated chunk by chunk."""
    subs = _requested(model, subsystems)
    states = np.asarray(states)
    parts = [_rates_batch(model, states[s:s + CHUNK], subs, False, floor) for s in range(0, len(states), CHUNK)]
    out = {}
    for key in parts[0]:
        if key == "heat":
            out[key] = {r: np.concatenate([p[key][r] for p in parts]) for r in parts[0][key]}
        else:
            out[key] = np.concatenate([p[key] for p in parts])
    return out


def _is_constant(states: np.ndarray) -> bool:
    return states.strides[0] == 0


def accumulate(model: LindbladModel, traj: StateTrajectory, subsystem: int = 0) -> ThermoAccumulants:
    """Simpson integrals of partial EP, activity, Σ̇, İ and heat for one subsystem."""
    model.space.check_index(subsystem)
    states = traj.states
    dt = traj.dt
    if _is_constant(states):
        # stationary broadcast trajectory: constant integrands
        series = rate_series(model, states[:1], [subsystem])
        integ = lambda y: float(y[0]) * traj.tau  # noqa: E731
    else:
        series = rate_series(model, states, [subsystem])
        integ = lambda y: float(simpson(y, dt))  # noqa: E731
    sub_res = {ch.reservoir for ch in model.channels if ch.subsystem == subsystem and ch.reservoir is not None}
    return ThermoAccumulants(
        subsystem=subsystem,
        tau=traj.tau,
        delta_s1_tot=integ(series["s_dot_tot"][:, subsystem]),
        a1=integ(series["activity"][:, subsystem]),
        sigma1=integ(series["sigma_dot"][:, subsystem]),
        i1=integ(series["i_dot"][:, subsystem]),
        entropy_flow1=integ(series["entropy_flow"][:, subsystem]),
        heat={r: integ(series["heat"][r]) for r in sorted(sub_res) if r in series["heat"]},
    )


def mutual_information(rho: np.ndarray, space: TensorSpace) -> float:
    """Multipartite mutual information ``Σᵢ S(ρᵢ) - S(ρ)``."""
    rho = np.asarray(rho, dtype=complex)
    parts = sum(float(von_neumann_entropy(partial_trace(rho, i, space))) for i in range(space.n_subsystems))
    return parts - float(von_neumann_entropy(rho))


def coherence(rho: np.ndarray, kind: str = "squared") -> float:
    """Off-diagonal weight of ``rho`` in the product basis.

    ``kind="squared"`` gives ``Σ_{m≠n} |ρ_mn|²``; ``kind="l1"`` gives the
    conventional l1 norm ``Σ_{m≠n} |ρ_mn|``.
    """
    rho = np.asarray(rho)
    off = np.abs(rho - np.diag(np.diag(rho)))
    if kind == "squared":
        return float(np.sum(off ** 2))
    if kind == "l1":
        return float(np.sum(off))
    raise ValueError(f"unknown coherence kind {kind!r}; expected 'squared' or 'l1'")


coherence_l1 = coherence
