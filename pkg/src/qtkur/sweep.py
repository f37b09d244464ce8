"""Config-driven parameter sweeps: one full bound evaluation per axis value."""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import zoo
from .auxiliary import correction_and_qfi, ell_schedule, finite_theta_check, solve_phi
from .bounds import clock_metrics, engine_metrics, evaluate_bounds, multidim_tkur
from .fcs import finite_time_cumulants
from .mcjump import activity_estimate, sample_current
from .model import CurrentSpec, LindbladModel, entropy_flow_current, pair_basis_currents, validate
from .modelio import load_model
from .propagate import collapse_if_stationary, evolve, steady_state
from .thermo import accumulate, coherence, rates_at

COLUMNS = (
    "j_mean", "j_var", "rel_fluct", "sigma1_dot", "i1_dot", "s1tot_dot", "Sigma1", "I1", "DeltaS1tot",
    "A1", "delta", "delta_prime", "qfi", "f1", "f1_prime", "tkur_rhs", "tur_rhs", "coherence", "eta",
    "fano_inv", "sigma_tick", "multidim_lhs", "multidim_rhs",
)
STEADY_RESIDUAL_TOL = 1e-10
SPECTRAL_TOL = 1e-7
THETA_TOL = 1e-3
MC_SIGMAS = 3.0
WORKERS_ENV = "QTKUR_WORKERS"


class ConfigError(ValueError):
    """Invalid sweep configuration; the message carries file, line and field."""


@dataclass(frozen=True)
class MCOptions:
    n_traj: int
    seed: int
    dt: float | None = None


@dataclass(frozen=True)
class SweepConfig:
    family: str
    axis: str
    values: tuple[float, ...]
    tau: float
    dt: float
    outputs: tuple[str, ...] = COLUMNS
    params: dict = field(default_factory=dict)
    model_file: str | None = None
    current: str | None = None
    multidim: bool = False
    mc_check: MCOptions | None = None
    finite_theta_check: float | None = None
    coherence_kind: str = "squared"
    engine: bool | None = None
    output: str | None = None
    base_dir: str = "."


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _line_index(node, path=(), out=None) -> dict:
    """Map field paths to 1-based source lines from a composed YAML node tree."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            sub = path + (str(k.value),)
            out[sub] = k.start_mark.line + 1
            _line_index(v, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, source: str, lines: dict):
        self.source, self.lines = source, lines

    def error(self, path: tuple, msg: str) -> ConfigError:
        line = None
        p = tuple(path)
        while line is None and p is not None:
            line = self.lines.get(p)
            p = p[:-1] if p else None
        name = ".".join(str(x) for x in path) or "<root>"
        return ConfigError(f"{self.source}:{line or 1}: field '{name}': {msg}")


def _finite_number(ctx, path, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ctx.error(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ctx.error(path, f"expected a finite number, got {v!r}")
    return float(v)


def parse_config(text: str, source: str = "<config>", base_dir: str = ".") -> SweepConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    ctx = _Ctx(source, _line_index(node) if node is not None else {})
    if not isinstance(data, dict):
        raise ctx.error((), "expected a mapping at top level")
    known = {"family", "axis", "values", "tau", "dt", "outputs", "params", "model_file", "current", "options",
             "output", "name", "description"}
    for key in data:
        if key not in known:
            raise ctx.error((key,), f"unknown field; expected one of {sorted(known)}")
    for key in ("family", "axis", "values", "tau", "dt"):
        if key not in data:
            raise ctx.error((), f"missing required field {key!r}")
    family = data["family"]
    if family not in zoo.FAMILIES + ("custom",):
        raise ctx.error(("family",), f"expected demon, clock or custom, got {family!r}")
    model_file = data.get("model_file")
    if family == "custom" and not model_file:
        raise ctx.error(("model_file",), "required when family is 'custom'")
    axis = data["axis"]
    if not isinstance(axis, str):
        raise ctx.error(("axis",), "expected a parameter name")
    if axis != "tau":
        if family == "demon" and axis not in zoo.demon_axes():
            raise ctx.error(("axis",), f"unknown demon axis {axis!r}; expected one of {list(zoo.demon_axes()) + ['tau']}")
        if family == "clock" and axis not in zoo.clock_axes():
            raise ctx.error(("axis",), f"unknown clock axis {axis!r}; expected one of {list(zoo.clock_axes()) + ['tau']}")
        if family == "custom":
            raise ctx.error(("axis",), "custom models support only the 'tau' axis")
    raw = data["values"]
    if isinstance(raw, dict):
        for key in ("start", "stop", "count"):
            if key not in raw:
                raise ctx.error(("values",), f"range needs {key!r}")
        count = raw["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ctx.error(("values", "count"), f"expected a positive integer, got {count!r}")
        start = _finite_number(ctx, ("values", "start"), raw["start"])
        stop = _finite_number(ctx, ("values", "stop"), raw["stop"])
        values = tuple(float(x) for x in np.linspace(start, stop, count))
    elif isinstance(raw, list):
        if not raw:
            raise ctx.error(("values",), "must be nonempty")
        values = tuple(_finite_number(ctx, ("values", i), v) for i, v in enumerate(raw))
    else:
        raise ctx.error(("values",), "expected a list or a {start, stop, count} range")
    tau = _finite_number(ctx, ("tau",), data["tau"])
    if tau <= 0:
        raise ctx.error(("tau",), "must be > 0")
    dt = _finite_number(ctx, ("dt",), data["dt"])
    if dt <= 0 or dt > tau:
        raise ctx.error(("dt",), "must satisfy 0 < dt <= tau")
    outputs = data.get("outputs", list(COLUMNS))
    if not isinstance(outputs, list) or not outputs:
        raise ctx.error(("outputs",), "expected a nonempty list of column names")
    for i, col in enumerate(outputs):
        if col not in COLUMNS:
            raise ctx.error(("outputs", i), f"unknown column {col!r}")
    params = data.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ctx.error(("params",), "expected a mapping")
    if family in zoo.FAMILIES:
        try:
            zoo.params_from_dict(family, params)
        except (TypeError, ValueError) as exc:
            raise ctx.error(("params",), str(exc)) from None
    opts = data.get("options", {}) or {}
    if not isinstance(opts, dict):
        raise ctx.error(("options",), "expected a mapping")
    known_opts = {"multidim", "mc_check", "finite_theta_check", "coherence", "engine"}
    for key in opts:
        if key not in known_opts:
            raise ctx.error(("options", key), f"unknown option; expected one of {sorted(known_opts)}")
    multidim = opts.get("multidim", False)
    if not isinstance(multidim, bool):
        raise ctx.error(("options", "multidim"), "expected true or false")
    mc = opts.get("mc_check", "off")
    mc_opts = None
    if mc not in ("off", False, None):
        if not isinstance(mc, dict) or "n_traj" not in mc or "seed" not in mc:
            raise ctx.error(("options", "mc_check"), "expected 'off' or {n_traj, seed}")
        n = mc["n_traj"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 100:
            raise ctx.error(("options", "mc_check", "n_traj"), "expected an integer >= 100")
        seed = mc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ctx.error(("options", "mc_check", "seed"), "expected a nonnegative integer")
        mdt = mc.get("dt")
        mc_opts = MCOptions(n, seed, None if mdt is None else _finite_number(ctx, ("options", "mc_check", "dt"), mdt))
    theta = opts.get("finite_theta_check", "off")
    if theta in ("off", False, None):
        theta = None
    else:
        theta = _finite_number(ctx, ("options", "finite_theta_check"), theta)
        if not 0 < abs(theta) <= 1e-3:
            raise ctx.error(("options", "finite_theta_check"), "expected 'off' or 0 < |theta| <= 1e-3")
    kind = opts.get("coherence", "squared")
    if kind not in ("squared", "l1"):
        raise ctx.error(("options", "coherence"), "expected 'squared' or 'l1'")
    engine = opts.get("engine")
    if engine is not None and not isinstance(engine, bool):
        raise ctx.error(("options", "engine"), "expected true or false")
    return SweepConfig(
        family=family, axis=axis, values=values, tau=tau, dt=dt, outputs=tuple(outputs), params=params,
        model_file=model_file, current=data.get("current"), multidim=multidim, mc_check=mc_opts,
        finite_theta_check=theta, coherence_kind=kind, engine=engine, output=data.get("output"),
        base_dir=base_dir,
    )


def load_config(path: str | Path) -> SweepConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path), str(path.parent))


# ---------------------------------------------------------------------------
# evaluation of one point
# ---------------------------------------------------------------------------


def point_model(cfg: SweepConfig, value: float) -> tuple[LindbladModel, CurrentSpec, int, float]:
    """Model, current, bound subsystem and observation time at one axis value."""
    tau = value if cfg.axis == "tau" else cfg.tau
    if cfg.family == "custom":
        doc = load_model(Path(cfg.base_dir) / cfg.model_file)
        if not doc.currents:
            raise ValueError(f"model file {cfg.model_file} defines no currents")
        cur = doc.currents[0]
        if cfg.current is not None:
            matches = [c for c in doc.currents if c.name == cfg.current]
            if not matches:
                raise ValueError(f"model file has no current named {cfg.current!r}")
            cur = matches[0]
        return doc.model, cur, doc.model.current_subsystem(cur), tau
    params = zoo.params_from_dict(cfg.family, cfg.params)
    if cfg.axis != "tau":
        params = zoo.with_axis(cfg.family, params, cfg.axis, value)
    model, cur = zoo.build(cfg.family, params)
    return model, cur, zoo.bound_subsystem(cfg.family), tau


def _proportional(model: LindbladModel, a: CurrentSpec, b: CurrentSpec) -> float | None:
    """Factor ``s`` with ``weights(b) = s·weights(a)``, or None."""
    wa, wb = model.current_weights(a), model.current_weights(b)
    k = np.flatnonzero(wa)
    if len(k) == 0:
        return None
    s = wb[k[0]] / wa[k[0]]
    return float(s) if np.allclose(wb, s * wa, rtol=0, atol=1e-14) else None


def evaluate_point(cfg: SweepConfig, value: float) -> dict[str, Any]:
    """All output columns plus ``flags`` (list) and ``failed`` (bool) for one axis value."""
    nan = float("nan")
    row: dict[str, Any] = {c: nan for c in COLUMNS}
    flags: list[str] = []
    try:
        model, cur, sub, tau = point_model(cfg, value)
        problems = validate(model, [cur])
        if problems:
            raise ValueError("invalid model: " + "; ".join(problems))
        ss = steady_state(model)
        if ss.residual > STEADY_RESIDUAL_TOL:
            flags.append("fail:steady-residual")
        rho = ss.state
        traj = collapse_if_stationary(evolve(model, rho, tau, cfg.dt))
        engine = cfg.engine if cfg.engine is not None else cfg.family == "demon"
        heat = entropy_flow_current(model, sub, "heat") if engine else None
        currents = [cur]
        heat_scale = None
        if heat is not None and heat.weights:
            heat_scale = _proportional(model, cur, heat)
            if heat_scale is None:
                currents.append(heat)
        cum = finite_time_cumulants(model, currents, rho, tau, cfg.dt)
        acc = accumulate(model, traj, sub)
        ells = ell_schedule(model, traj, sub)
        phi = solve_phi(model, traj, ells)
        corr = correction_and_qfi(model, traj, phi, ells, cur)
        mean, var = cum.mean(0), cum.variance(0)
        rep = evaluate_bounds(mean, var, corr.j_phi, corr.qfi, acc)
        inst = rates_at(model, rho, [sub])
        if inst.spectral_mismatch > SPECTRAL_TOL and abs(inst.s_dot_tot[sub]) > 1e-12:
            flags.append("fail:spectral-check")
        row.update(
            j_mean=mean, j_var=var, rel_fluct=rep.rel_fluct,
            sigma1_dot=acc.rate("sigma1"), i1_dot=acc.rate("i1"), s1tot_dot=acc.rate("delta_s1_tot"),
            Sigma1=acc.sigma1, I1=acc.i1, DeltaS1tot=acc.delta_s1_tot, A1=acc.a1,
            delta=rep.delta, delta_prime=corr.delta_prime, qfi=corr.qfi,
            f1=rep.f1, f1_prime=rep.f1_prime, tkur_rhs=rep.tkur_rhs, tur_rhs=rep.tur_rhs,
            coherence=coherence(rho, cfg.coherence_kind),
        )
        if rep.vacuous:
            flags.append("vacuous-equilibrium")
        flags.extend(f"fail:{f}" for f in rep.failures)
        clk = clock_metrics(mean, var, acc.delta_s1_tot, rep.delta)
        row.update(fano_inv=clk.inverse_fano, sigma_tick=clk.sigma_tick)
        if clk.applicable and not clk.holds and not rep.vacuous:
            flags.append("fail:clock-bound")
        if heat is not None and heat.weights:
            if heat_scale is not None:
                h_mean, h_var, h_phi = heat_scale * mean, heat_scale ** 2 * var, heat_scale * corr.j_phi
            else:
                h_mean, h_var = cum.mean(1), cum.variance(1)
                h_phi = correction_and_qfi(model, traj, phi, ells, heat).j_phi
            h_delta = h_phi / h_mean if abs(h_mean) > 1e-12 else nan
            eng = engine_metrics(-acc.rate("entropy_flow1"), -acc.rate("i1"), h_mean, h_var, h_delta)
            row["eta"] = eng.eta
            if eng.applicable and not eng.holds and not rep.vacuous:
                flags.append("fail:engine-tradeoff")
        if cfg.multidim and not rep.vacuous:
            basis = pair_basis_currents(model, sub)
            mcum = finite_time_cumulants(model, basis, rho, tau, cfg.dt)
            phis = [correction_and_qfi(model, traj, phi, ells, b).j_phi for b in basis]
            md = multidim_tkur(mcum, phis, acc.delta_s1_tot, acc.a1)
            row.update(multidim_lhs=md.lhs, multidim_rhs=md.rhs)
            if md.singular:
                flags.append("pinv")
            if not md.holds:
                flags.append("fail:multidim")
            single = (mean + corr.j_phi) ** 2 / var if var > 0 else 0.0
            if not (md.dominates and md.lhs >= single - 1e-9 * max(1.0, md.lhs)):
                flags.append("fail:multidim-dominance")
        if cfg.finite_theta_check is not None and not rep.vacuous:
            ft = finite_theta_check(model, rho, tau, cur, cfg.finite_theta_check, cfg.dt, sub, traj=traj)
            flags.append(f"finite-theta-dev={ft.relative_error:.3e}")
            if not ft.relative_error <= THETA_TOL:
                flags.append("fail:finite-theta")
        if cfg.mc_check is not None:
            mc = cfg.mc_check
            est = sample_current(model, rho, tau, cur, mc.n_traj, mc.seed, mc.dt or cfg.dt)
            act = activity_estimate(est.records, sub)
            for name, got, se, want in (
                ("mean", est.mean, est.std_error_mean, mean),
                ("var", est.variance, est.std_error_var, var),
                ("activity", act.mean, act.std_error, acc.a1),
            ):
                if not abs(got - want) <= MC_SIGMAS * se:
                    flags.append(f"fail:mc-{name}")
            flags.append("mc-checked")
    except Exception as exc:  # per-row isolation: report and continue
        msg = str(exc).replace(",", ";").replace("\n", " ")[:200]
        flags.append(f"error:{type(exc).__name__}:{msg}")
    row["flags"] = flags
    row["failed"] = any(f.startswith(("fail:", "error:")) for f in flags)
    return row


# ---------------------------------------------------------------------------
# sweeps and CSV
# ---------------------------------------------------------------------------


def format_value(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.16e}"


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _eval_star(args):
    return evaluate_point(*args)


def run_points(cfg: SweepConfig, workers: int | None = None) -> list[dict]:
    """Evaluate every axis value; results follow axis order."""
    workers = workers or _worker_count()
    jobs = [(cfg, v) for v in cfg.values]
    if workers <= 1 or len(jobs) == 1:
        return [evaluate_point(c, v) for c, v in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_eval_star, jobs))


def rows_to_csv(cfg: SweepConfig, rows: list[dict]) -> str:
    header = [cfg.axis] + list(cfg.outputs) + ["flags"]
    lines = [",".join(header)]
    for v, row in zip(cfg.values, rows):
        cells = [format_value(v)] + [format_value(row[c]) for c in cfg.outputs] + [";".join(row["flags"])]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepResult:
    rows: list
    csv: str
    n_failed: int
    n_errors: int

    @property
    def exit_status(self) -> int:
        """0 if all rows pass or are vacuous, 1 on any bound failure, 2 on row errors only."""
        if self.n_failed:
            return 1
        return 2 if self.n_errors else 0


def run_sweep(cfg: SweepConfig, output: str | Path | None = None, workers: int | None = None) -> SweepResult:
    rows = run_points(cfg, workers)
    text = rows_to_csv(cfg, rows)
    out = output or cfg.output
    if out:
        path = Path(out)
        if not path.is_absolute() and output is None:
            path = Path(cfg.base_dir) / path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    n_err = sum(any(f.startswith("error:") for f in r["flags"]) for r in rows)
    n_fail = sum(any(f.startswith("fail:") for f in r["flags"]) for r in rows)
    return SweepResult(rows, text, n_fail, n_err)


def with_values(cfg: SweepConfig, values) -> SweepConfig:
    return replace(cfg, values=tuple(float(v) for v in values))


def print_summary(res: SweepResult, stream=None) -> None:
    stream = stream or sys.stderr
    n = len(res.rows)
    vac = sum("vacuous-equilibrium" in r["flags"] for r in res.rows)
    stream.write(f"{n} rows, {vac} vacuous, {res.n_failed} failing, {res.n_errors} errors\n")
