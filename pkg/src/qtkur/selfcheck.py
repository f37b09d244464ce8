"""Aggregated invariant checks, each reported with its measured slack.

Slack is ``tolerance - error`` for agreement checks and the inequality
margin for bounds, so a check passes exactly when its slack is nonnegative.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import zoo
from .auxiliary import correction_and_qfi, ell_schedule, finite_theta_check, solve_phi
from .bounds import evaluate_bounds, fisher_upper_bound
from .fcs import finite_time_cumulants, tilted_oracle_moments
from .model import LindbladModel, CurrentSpec, validate
from .modelio import ModelFormatError, load_model
from .propagate import gibbs_check, stationary_trajectory, steady_state
from .tensor_ops import (
    TensorSpace,
    devectorize,
    embed_local,
    kron_all,
    partial_trace,
    sandwich_super,
    vectorize,
)
from .thermo import accumulate, mutual_information, rates_at


@dataclass(frozen=True)
class CheckResult:
    name: str
    slack: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.slack >= 0)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{tag}  {self.name:<40s} slack={self.slack:+.3e}{extra}"


def _agree(name: str, got: float, want: float, rtol: float, detail: str = "") -> CheckResult:
    err = abs(got - want) / max(abs(want), 1e-300)
    return CheckResult(name, rtol - err, detail or f"rel_err={err:.2e}")


def _tensor_checks(rng: np.random.Generator) -> list[CheckResult]:
    space = TensorSpace([2, 3])
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    ra = a @ a.conj().T
    rb = b @ b.conj().T
    ra, rb = ra / np.trace(ra), rb / np.trace(rb)
    prod = kron_all([ra, rb])
    err_pt = max(np.abs(partial_trace(prod, 0, space) - ra).max(), np.abs(partial_trace(prod, 1, space) - rb).max())
    comm = embed_local(a, 0, space) @ embed_local(b, 1, space) - embed_local(b, 1, space) @ embed_local(a, 0, space)
    x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    p = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    q = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    err_vec = np.abs(sandwich_super(p, q) @ vectorize(x) - vectorize(p @ x @ q)).max()
    err_round = np.abs(devectorize(vectorize(x)) - x).max()
    return [
        CheckResult("tensor: partial trace of product", 1e-12 - err_pt, f"err={err_pt:.2e}"),
        CheckResult("tensor: local operators commute", 1e-12 - np.abs(comm).max(), f"err={np.abs(comm).max():.2e}"),
        CheckResult("tensor: vec(AXB) = (A (x) B^T) vec(X)", 1e-10 - err_vec, f"err={err_vec:.2e}"),
        CheckResult("tensor: vectorize round trip", 1e-15 - err_round, f"err={err_round:.2e}"),
    ]


def _model_checks(label: str, model: LindbladModel, currents: list[CurrentSpec], subsystem: int,
                  oracle: bool = True) -> list[CheckResult]:
    out = []
    problems = validate(model, currents)
    out.append(CheckResult(f"{label}: local detailed balance", 0.0 if not problems else -float(len(problems)),
                           "; ".join(problems) if problems else "0 violations"))
    if problems:
        return out
    ss = steady_state(model)
    out.append(CheckResult(f"{label}: steady-state residual", 1e-10 - ss.residual, f"residual={ss.residual:.2e}"))
    rho = ss.state
    subs = sorted({int(s) for s in model.subsystem_of})
    r = rates_at(model, rho, subs)
    decomp = float(np.max(np.abs(r.s_dot_tot - (r.sigma_dot - r.i_dot))[subs]))
    out.append(CheckResult(f"{label}: partial EP = Sigma - I", 1e-12 - decomp, f"err={decomp:.2e}"))
    out.append(CheckResult(f"{label}: partial EP nonnegative", float(np.min(r.s_dot_tot[subs])) + 1e-12,
                           f"min={np.min(r.s_dot_tot[subs]):.3e}"))
    scale = max(1e-12, float(np.max(np.abs(r.s_dot_tot[subs]))))
    mism = float(np.nanmax(np.abs(r.spectral_s_dot_tot[subs] - r.s_dot_tot[subs]))) / scale
    out.append(CheckResult(f"{label}: spectral partial EP", 1e-7 - mism, f"rel_err={mism:.2e}"))
    mi = mutual_information(rho, model.space)
    out.append(CheckResult(f"{label}: mutual information >= 0", mi + 1e-9, f"I={mi:.3e}"))
    if not currents:
        return out
    cur = currents[0]
    tau, dt = 10.0, 1e-3
    cum = finite_time_cumulants(model, cur, rho, tau, dt)
    if oracle and model.dim ** 2 <= 1024:
        om, ov = tilted_oracle_moments(model, cur, rho, tau)
        scale_m = max(abs(om), abs(cum.mean()))
        err_m = abs(cum.mean() - om) / scale_m if scale_m > 1e-12 else abs(cum.mean() - om)
        err_v = abs(cum.variance() - ov) / abs(ov)
        out.append(CheckResult(f"{label}: FCS mean vs tilted oracle", 1e-6 - err_m, f"rel_err={err_m:.2e}"))
        out.append(CheckResult(f"{label}: FCS variance vs tilted oracle", 1e-6 - err_v, f"rel_err={err_v:.2e}"))
    traj = stationary_trajectory(rho, tau, dt)
    acc = accumulate(model, traj, subsystem)
    ells = ell_schedule(model, traj, subsystem)
    phi = solve_phi(model, traj, ells)
    corr = correction_and_qfi(model, traj, phi, ells, cur)
    rep = evaluate_bounds(cum.mean(), cum.variance(), corr.j_phi, corr.qfi, acc)
    lhs = cum.variance() * corr.qfi
    rhs = corr.corrected_mean ** 2
    out.append(CheckResult(f"{label}: Cramer-Rao", (lhs - rhs * (1 - 1e-7)) / max(rhs, 1e-300) if rhs > 0 else lhs,
                           f"var*I0={lhs:.4e} (J+Jphi)^2={rhs:.4e}"))
    fb = fisher_upper_bound(acc.delta_s1_tot, acc.a1)
    out.append(CheckResult(f"{label}: Fisher chain", fb - corr.qfi + 1e-9, f"I0={corr.qfi:.4e} cap={fb:.4e}"))
    if not rep.vacuous and np.isfinite(rep.tkur_rhs):
        out.append(CheckResult(f"{label}: TKUR", rep.rel_fluct - rep.tkur_rhs + 1e-9,
                               f"rel_fluct={rep.rel_fluct:.4e} rhs={rep.tkur_rhs:.4e}"))
        out.append(CheckResult(f"{label}: TKUR >= TUR", rep.tkur_rhs - rep.tur_rhs + 1e-9,
                               f"tkur={rep.tkur_rhs:.4e} tur={rep.tur_rhs:.4e}"))
    return out


def _gibbs_checks() -> list[CheckResult]:
    out = []
    for family, axis in (("demon", "mu1L"), ("clock", "beta_h")):
        base = zoo.default_params(family)
        x = zoo.equilibrium_locator(family, axis, base)
        p = zoo.with_axis(family, base, axis, x)
        model, _ = zoo.build(family, p)
        res = gibbs_check(model, zoo.gibbs_for(family, p))
        out.append(CheckResult(f"{family}: Gibbs stationary at {axis}={x:g}", 1e-9 - res, f"residual={res:.2e}"))
        rho = steady_state(model).state
        r = rates_at(model, rho, [zoo.bound_subsystem(family)])
        i = zoo.bound_subsystem(family)
        worst = max(abs(r.i_dot[i]), abs(r.sigma_dot[i]), abs(r.s_dot_tot[i]))
        out.append(CheckResult(f"{family}: rates vanish at {axis}={x:g}", 1e-8 - worst, f"max={worst:.2e}"))
    return out


def _counting_checks() -> list[CheckResult]:
    model, cur = zoo.poisson_model(1.0)
    rho = np.eye(2) / 2
    cum = finite_time_cumulants(model, cur, rho, 10.0, 1e-3)
    out = [
        _agree("Poisson: mean = rate*tau", cum.mean(), 10.0, 1e-8),
        _agree("Poisson: variance = rate*tau", cum.variance(), 10.0, 1e-8),
    ]
    model, cur = zoo.build_demon()
    rho = steady_state(model).state
    ft = finite_theta_check(model, rho, 10.0, cur, 1e-4, 1e-3, 0)
    out.append(CheckResult("demon: finite-theta derivative", 1e-3 - ft.relative_error, f"rel_err={ft.relative_error:.2e}"))
    return out


def builtin_checks() -> Iterable[Callable[[], list[CheckResult]]]:
    rng = np.random.default_rng(20240601)
    yield lambda: _tensor_checks(rng)
    yield _counting_checks
    demon, jd = zoo.build_demon()
    yield lambda: _model_checks("demon", demon, [jd], 0)
    clock, jc = zoo.build_clock()
    yield lambda: _model_checks("clock", clock, [jc], 2)
    for seed in range(3):
        m, curs = zoo.random_model(seed)
        yield lambda m=m, curs=curs, seed=seed: _model_checks(f"random[{seed}]", m, curs[:1], m.current_subsystem(curs[0]))
    yield _gibbs_checks


def model_file_checks(path: str | Path) -> list[CheckResult]:
    try:
        doc = load_model(path)
    except (OSError, ModelFormatError) as exc:
        return [CheckResult(f"{path}: load", -1.0, str(exc))]
    subs = [doc.model.current_subsystem(c) for c in doc.currents] or [0]
    try:
        return _model_checks(str(path), doc.model, doc.currents, subs[0])
    except Exception as exc:  # report rather than abort the suite
        return [CheckResult(f"{path}: evaluation", -1.0, f"{type(exc).__name__}: {exc}")]


def run_selfcheck(model_files: Iterable[str] = (), stream=None, builtin: bool = True) -> list[CheckResult]:
    """Run every check, printing one line each; returns all results."""
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    results: list[CheckResult] = []
    groups = list(builtin_checks()) if builtin else []
    groups += [lambda p=p: model_file_checks(p) for p in model_files]
    for group in groups:
        for res in group():
            results.append(res)
            stream.write(res.line() + "\n")
            stream.flush()
    n_fail = sum(not r.passed for r in results)
    stream.write(f"{len(results) - n_fail}/{len(results)} checks passed in {time.perf_counter() - t0:.1f} s\n")
    return results
