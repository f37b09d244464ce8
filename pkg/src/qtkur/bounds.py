"""Uncertainty-relation right-hand sides, quality factors and application metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fcs import CumulantResult
from .thermo import ThermoAccumulants

SLACK = 1e-9
CRAMER_RAO_RTOL = 1e-7
EQUILIBRIUM_TOL = 1e-12
NEWTON_MAX_ITER = 50
F_INVERSE_RTOL = 1e-12
PINV_RCOND = 1e-12


def _x_tanh_x(y: float) -> float:
    return y * np.tanh(y)


def f_inverse(x: float) -> float:
    """Inverse of ``y tanh(y)`` on ``y >= 0``.

    Newton from ``max(√x, x)`` (both lower bounds of the root), falling
    back to bisection if Newton stalls.
    """
    x = float(x)
    if not x >= 0:
        raise ValueError(f"f_inverse needs x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x > 40.0:
        # tanh(y) = 1 to double precision beyond y ~ 19
        return x
    y = max(np.sqrt(x), x)
    for _ in range(NEWTON_MAX_ITER):
        t = np.tanh(y)
        g = y * t - x
        dg = t + y * (1.0 - t * t)
        step = g / dg
        y_new = y - step
        if y_new <= 0 or not np.isfinite(y_new):
            break
        if abs(step) <= F_INVERSE_RTOL * y_new * 0.1:
            return float(y_new)
        y = y_new
    return _bisect_f_inverse(x)


def _bisect_f_inverse(x: float) -> float:
    lo, hi = 0.0, max(np.sqrt(x), x) + 1.0
    while _x_tanh_x(hi) < x:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _x_tanh_x(mid) < x:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def fisher_upper_bound(delta_s_tot: float, activity: float) -> float:
    """``(ΔS)²/(4A) · f(ΔS/(2A))⁻²``: the entropy/activity cap on the Fisher information."""
    if not activity > 0:
        raise ValueError(f"activity must be > 0, got {activity}")
    ds = max(float(delta_s_tot), 0.0)
    if ds == 0.0:
        return 0.0
    y = f_inverse(ds / (2.0 * activity))
    return ds * ds / (4.0 * activity * y * y)


def tkur_rhs(delta_s_tot: float, activity: float, delta: float) -> float:
    """``(1+δ)² · 4A/ΔS² · f(ΔS/2A)²``; ``+inf`` when ΔS ≤ 1e-12."""
    if not activity > 0:
        raise ValueError(f"activity must be > 0, got {activity}")
    if np.isnan(delta):
        return float("nan")
    pre = (1.0 + delta) ** 2
    if delta_s_tot <= EQUILIBRIUM_TOL:
        return 0.0 if pre == 0.0 else float("inf")
    return pre / fisher_upper_bound(delta_s_tot, activity)


def tur_rhs(sigma: float, info: float, delta: float) -> float:
    """``2(1+δ)²/(Σ - I)``; ``+inf`` when Σ - I ≤ 1e-12."""
    if np.isnan(delta):
        return float("nan")
    pre = (1.0 + delta) ** 2
    gap = sigma - info
    if gap <= EQUILIBRIUM_TOL:
        return 0.0 if pre == 0.0 else float("inf")
    return 2.0 * pre / gap


class BoundDataError(ValueError):
    """Inputs contradict the second law with information (Σ - I ≤ 0 at a nonzero current)."""


def quality_factors(rel_fluct: float, delta: float, sigma: float, info: float) -> tuple[float, float]:
    """``F = rel_fluct (Σ - I)/(1+δ)²`` and ``F' = rel_fluct (Σ - I)``."""
    gap = sigma - info
    if gap <= 0:
        raise BoundDataError(f"Sigma - I = {gap:.3e} must be > 0")
    f_prime = rel_fluct * gap
    pre = (1.0 + delta) ** 2
    f = f_prime / pre if pre > 0 else float("inf")
    return float(f), float(f_prime)


@dataclass
class BoundReport:
    j_mean: float
    j_var: float
    rel_fluct: float
    tkur_rhs: float
    tur_rhs: float
    f1: float
    f1_prime: float
    margin_tkur: float
    margin_tur: float
    delta: float
    qfi: float
    fisher_bound: float
    cramer_rao_margin: float
    fisher_chain_margin: float
    accumulants: ThermoAccumulants
    vacuous: bool
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.vacuous or not self.failures


def evaluate_bounds(
    j_mean: float,
    j_var: float,
    j_phi: float,
    qfi: float,
    acc: ThermoAccumulants,
) -> BoundReport:
    """All single-current checks for one evaluation point.

    The point is vacuous when ``ΔS ≤ 1e-12`` and ``|⟨J⟩| ≤ 1e-12``.
    ``failures`` names every violated inequality.
    """
    ds, a1 = acc.delta_s1_tot, acc.a1
    vacuous = ds <= EQUILIBRIUM_TOL and abs(j_mean) <= EQUILIBRIUM_TOL
    nan = float("nan")
    delta = j_phi / j_mean if abs(j_mean) > EQUILIBRIUM_TOL else nan
    rel = j_var / j_mean ** 2 if j_mean != 0 else float("inf")
    fb = fisher_upper_bound(ds, a1) if a1 > 0 else nan
    cr_lhs = j_var * qfi
    cr_rhs = (j_mean + j_phi) ** 2
    cr_margin = cr_lhs - cr_rhs * (1 - CRAMER_RAO_RTOL)
    chain_margin = fb - qfi
    failures = []
    if cr_margin < 0:
        failures.append("cramer_rao")
    if not chain_margin >= -SLACK:
        failures.append("fisher_chain")
    if ds < -SLACK:
        failures.append("partial_ep_negative")
    if vacuous or np.isnan(delta) or a1 <= 0:
        t_rhs = tkur_rhs(ds, a1, delta) if a1 > 0 else nan
        u_rhs = tur_rhs(acc.sigma1, acc.i1, delta)
        return BoundReport(j_mean, j_var, rel, t_rhs, u_rhs, nan, nan, nan, nan, delta, qfi, fb,
                           cr_margin, chain_margin, acc, vacuous, failures if not vacuous else [])
    t_rhs = tkur_rhs(ds, a1, delta)
    u_rhs = tur_rhs(acc.sigma1, acc.i1, delta)
    try:
        f1, f1p = quality_factors(rel, delta, acc.sigma1, acc.i1)
    except BoundDataError:
        f1 = f1p = nan
        failures.append("second_law_gap")
    m_tkur = rel - t_rhs
    m_tur = rel - u_rhs
    if not m_tkur >= -SLACK:
        failures.append("tkur")
    if not t_rhs >= u_rhs - SLACK:
        failures.append("tkur_below_tur")
    if not m_tur >= -SLACK:
        failures.append("tur")
    if not f1 >= 2 - SLACK:
        failures.append("quality_factor")
    return BoundReport(j_mean, j_var, rel, t_rhs, u_rhs, f1, f1p, m_tkur, m_tur, delta, qfi, fb,
                       cr_margin, chain_margin, acc, vacuous, failures)


@dataclass(frozen=True)
class MultiCurrentReport:
    jvec: np.ndarray
    xi: np.ndarray
    lhs: float
    rhs: float
    z_opt: np.ndarray
    lam: float
    condition_number: float
    singular: bool
    single_lhs: np.ndarray

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + SLACK

    @property
    def dominates(self) -> bool:
        return bool(np.all(self.lhs >= self.single_lhs - SLACK * max(1.0, abs(self.lhs))))


def multidim_tkur(
    cumulants: CumulantResult,
    j_phi: Sequence[float],
    delta_s_tot: float,
    activity: float,
) -> MultiCurrentReport:
    """Optimal linear combination of currents for the entropy/activity bound.

    ``j_phi[i]`` is the response correction of current ``i``; the corrected
    means form ``ȷ``.  A singular covariance falls back to a pseudo-inverse
    with relative cutoff 1e-12.
    """
    xi = np.asarray(cumulants.covariance, dtype=float)
    jvec = np.asarray(cumulants.means, dtype=float) + np.asarray(j_phi, dtype=float)
    sv = np.linalg.svd(xi, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    singular = not sv[-1] > PINV_RCOND * sv[0]
    inv = np.linalg.pinv(xi, rcond=PINV_RCOND) if singular else np.linalg.inv(xi)
    w = inv @ jvec
    lhs = float(jvec @ w)
    z = w / lhs if lhs != 0 else np.full_like(w, np.nan)
    lam = 1.0 / lhs if lhs != 0 else float("inf")
    diag = np.diag(xi)
    single = np.where(diag > 0, jvec ** 2 / np.where(diag > 0, diag, 1.0), 0.0)
    rhs = fisher_upper_bound(delta_s_tot, activity)
    return MultiCurrentReport(jvec, xi, lhs, rhs, z, lam, cond, singular, single)


@dataclass(frozen=True)
class EngineMetrics:
    eta: float
    tradeoff_rhs: float
    applicable: bool
    holds: bool


def engine_metrics(
    minus_beta_q: float,
    minus_i_dot: float,
    j_mean: float,
    j_var: float,
    delta: float,
) -> EngineMetrics:
    """Information-to-heat efficiency and the current/fluctuation/efficiency trade-off.

    ``minus_beta_q`` is ``-Σ_α β_α Q̇_α`` over the subsystem's reservoirs
    and ``j_mean``/``j_var`` belong to the rescaled heat current.  Outside
    the engine regime (either sign negative) metrics are NaN.
    """
    nan = float("nan")
    if not (minus_beta_q > 0 and minus_i_dot > 0) or np.isnan(delta):
        return EngineMetrics(nan, nan, False, True)
    eta = minus_beta_q / minus_i_dot
    pre = 2.0 * (1.0 + delta) ** 2 * eta
    rhs = j_var * (1.0 - eta) / pre if pre > 0 else float("inf")
    holds = eta <= 1 + SLACK and abs(j_mean) <= rhs + SLACK
    return EngineMetrics(float(eta), float(rhs), True, bool(holds))


@dataclass(frozen=True)
class ClockMetrics:
    inverse_fano: float
    sigma_tick: float
    bound: float
    applicable: bool
    holds: bool


def clock_metrics(mean: float, var: float, delta_s_tot: float, delta: float) -> ClockMetrics:
    """Tick accuracy ``mean/var``, entropy per tick and the accuracy bound ``σ_tick / (2(1+δ)²)``."""
    nan = float("nan")
    if not mean > 0 or np.isnan(delta):
        return ClockMetrics(mean / var if var > 0 else nan, nan, nan, False, True)
    n_acc = mean / var if var > 0 else float("inf")
    sigma_tick = delta_s_tot / mean
    pre = 2.0 * (1.0 + delta) ** 2
    bound = sigma_tick / pre if pre > 0 else float("inf")
    return ClockMetrics(float(n_acc), float(sigma_tick), float(bound), True, bool(n_acc <= bound + SLACK))
