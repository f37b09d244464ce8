"""Quantum-jump Monte Carlo unraveling with per-trajectory counter-based streams.

First-order scheme on a fixed grid: in each step channel ``k`` fires with
probability ``‖L_k ψ‖² dt``; otherwise ``ψ`` evolves under
``exp(-i H_eff dt)`` and is renormalized.  One uniform per step decides both
whether and which channel jumps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .model import CurrentSpec, LindbladModel
from .propagate import StepSizeError, n_steps_for
from .tensor_ops import check_density_matrix

JUMP_PROBABILITY_CAP = 0.05
DRAW_BLOCK = 1000


@dataclass(frozen=True)
class JumpRecords:
    """All jumps of an ensemble as parallel arrays, ordered by trajectory then time."""

    n_traj: int
    traj_index: np.ndarray
    time: np.ndarray
    channel: np.ndarray  # model channel index
    channel_ids: tuple[str, ...]
    channel_subsystem: np.ndarray

    def counts(self, subsystem: int | None = None) -> np.ndarray:
        """Jump count per trajectory, optionally restricted to one subsystem."""
        mask = np.ones(len(self.channel), dtype=bool)
        if subsystem is not None:
            mask = self.channel_subsystem[self.channel] == subsystem
        return np.bincount(self.traj_index[mask], minlength=self.n_traj)

    def write(self, path: str | Path) -> None:
        """Plain-text dump, one ``trajectory_index,time,channel_id`` line per jump."""
        with open(path, "w") as fh:
            for i, t, k in zip(self.traj_index, self.time, self.channel):
                fh.write(f"{i},{t:.17g},{self.channel_ids[k]}\n")


@dataclass(frozen=True)
class TrajectoryEstimate:
    n_traj: int
    mean: float
    variance: float
    std_error_mean: float
    std_error_var: float
    seed: int
    values: np.ndarray
    records: JumpRecords
    final_states: np.ndarray | None = None  # ensemble mean of |ψ><ψ| at τ
    final_states_se: np.ndarray | None = None


def jackknife_mean_var(x: np.ndarray) -> tuple[float, float, float, float]:
    """Sample mean and variance with jackknife standard errors."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("jackknife needs at least 3 samples")
    mean = float(x.mean())
    y = x - mean
    var = float(y @ y / (n - 1))
    se_mean = float(np.sqrt(var / n))
    s, q = y.sum(), y @ y
    loo = (q - y * y - (s - y) ** 2 / (n - 1)) / (n - 2)
    se_var = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return mean, var, se_mean, se_var


def _streams(seed: int, lo: int, hi: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i]))) for i in range(lo, hi)]


def sample_current(
    model: LindbladModel,
    rho0: np.ndarray,
    tau: float,
    current: CurrentSpec,
    n_traj: int,
    seed: int,
    dt: float = 1e-3,
    batch: int = 10000,
    final_states: bool = False,
) -> TrajectoryEstimate:
    """Mean and variance of ``current`` over ``n_traj`` unraveled trajectories.

    Trajectory ``i`` draws from its own stream seeded by ``(seed, i)``: first
    one uniform for the initial eigenstate of ``rho0``, then one per step.
    Results are therefore independent of ``batch``.
    """
    if n_traj < 3:
        raise ValueError("n_traj must be >= 3")
    rho0 = check_density_matrix(rho0, model.dim)
    steps = n_steps_for(tau, dt)
    c_all = model.current_weights(current)
    active = np.flatnonzero([np.any(op) for op in model.operators])
    ops = model.operators[active]
    k_act, d = len(active), model.dim
    c = c_all[active]
    heff = model.hamiltonian - 0.5j * np.sum(model.rate_operators[active], axis=0)
    u_step_t = scipy.linalg.expm(-1j * heff * dt).T
    lcat = np.concatenate([op.T for op in ops], axis=1) if k_act else np.zeros((d, 0), dtype=complex)
    w, v = np.linalg.eigh(0.5 * (rho0 + rho0.conj().T))
    p0 = np.clip(w, 0.0, None)
    cum0 = np.cumsum(p0 / p0.sum())

    values = np.zeros(n_traj)
    rec_i, rec_t, rec_k = [], [], []
    rho_sum = np.zeros((d, d), dtype=complex) if final_states else None
    rho_sq = np.zeros((d, d)) if final_states else None
    for lo in range(0, n_traj, batch):
        hi = min(lo + batch, n_traj)
        b = hi - lo
        gens = _streams(seed, lo, hi)
        u0 = np.array([g.random() for g in gens])
        idx = np.minimum(np.searchsorted(cum0, u0, side="right"), d - 1)
        psi = v[:, idx].T.copy()
        acc = np.zeros(b)
        for start in range(0, steps, DRAW_BLOCK):
            m = min(DRAW_BLOCK, steps - start)
            draws = np.stack([g.random(m) for g in gens], axis=1)
            for j in range(m):
                n = start + j
                if k_act:
                    lpsi = (psi @ lcat).reshape(b, k_act, d)
                    prob = np.sum(lpsi.real ** 2 + lpsi.imag ** 2, axis=2) * dt
                    total = prob.sum(axis=1)
                    if total.max() > JUMP_PROBABILITY_CAP:
                        raise StepSizeError(
                            f"jump probability {total.max():.3f} per step exceeds {JUMP_PROBABILITY_CAP}; reduce dt"
                        )
                    u = draws[j]
                    jump = np.flatnonzero(u < total)
                else:
                    jump = np.zeros(0, dtype=int)
                psi = psi @ u_step_t
                if len(jump):
                    cum = np.cumsum(prob[jump], axis=1)
                    ch = np.minimum(np.argmax(cum > u[jump, None], axis=1), k_act - 1)
                    new = lpsi[jump, ch]
                    psi[jump] = new
                    acc[jump] += c[ch]
                    rec_i.append(lo + jump)
                    rec_t.append(np.full(len(jump), (n + 1) * dt))
                    rec_k.append(active[ch])
                psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        values[lo:hi] = acc
        if final_states:
            outer = psi[:, :, None] * psi.conj()[:, None, :]
            rho_sum += outer.sum(axis=0)
            rho_sq += (np.abs(outer) ** 2).sum(axis=0)

    if rec_i:
        ti, tt, tk = np.concatenate(rec_i), np.concatenate(rec_t), np.concatenate(rec_k)
        order = np.lexsort((tt, ti))
        ti, tt, tk = ti[order], tt[order], tk[order]
    else:
        ti = np.zeros(0, dtype=int)
        tt = np.zeros(0)
        tk = np.zeros(0, dtype=int)
    records = JumpRecords(n_traj, ti, tt, tk, tuple(ch.id for ch in model.channels), model.subsystem_of.copy())
    mean, var, se_m, se_v = jackknife_mean_var(values)
    fs = fs_se = None
    if final_states:
        fs = rho_sum / n_traj
        fs_se = np.sqrt(np.clip(rho_sq / n_traj - np.abs(fs) ** 2, 0.0, None) / (n_traj - 1))
    return TrajectoryEstimate(n_traj, mean, var, se_m, se_v, seed, values, records, fs, fs_se)


@dataclass(frozen=True)
class ActivityEstimate:
    mean: float
    std_error: float
    variance: float


def activity_estimate(records: JumpRecords, subsystem: int = 0) -> ActivityEstimate:
    """Mean number of jumps of ``subsystem`` channels per trajectory."""
    counts = records.counts(subsystem).astype(float)
    mean, var, se, _ = jackknife_mean_var(counts)
    return ActivityEstimate(mean, se, var)
