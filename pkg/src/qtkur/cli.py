"""Command-line entry point: ``qtkur {validate,steady,sweep,traj,selfcheck}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import zoo
from .fcs import finite_time_cumulants
from .mcjump import activity_estimate, sample_current
from .model import validate
from .modelio import ModelFormatError, load_model
from .propagate import collapse_if_stationary, evolve, gibbs_check, steady_state
from .selfcheck import run_selfcheck
from .sweep import ConfigError, point_model, format_value, load_config, print_summary, run_sweep
from .thermo import accumulate, coherence, rates_at

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _load(path: str):
    try:
        return load_model(path)
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc.strerror}") from None


def cmd_validate(args) -> int:
    doc = _load(args.model)
    problems = validate(doc.model, doc.currents)
    for p in problems:
        print(f"violation: {p}")
    if not problems:
        print(f"ok: {len(doc.model.channels)} channels, {len(doc.currents)} currents, dims {list(doc.model.space.dims)}")
    return EXIT_FAIL if problems else EXIT_OK


def cmd_steady(args) -> int:
    doc = _load(args.model)
    model = doc.model
    ss = steady_state(model)
    rho = ss.state
    subs = sorted({int(s) for s in model.subsystem_of})
    r = rates_at(model, rho, subs, spectral=False)
    out = {
        "residual": ss.residual,
        "populations": np.real(np.diag(rho)).tolist(),
        "coherence": coherence(rho),
        "coherence_l1": coherence(rho, "l1"),
        "subsystems": {
            str(i): {
                "s_dot_tot": float(r.s_dot_tot[i]),
                "sigma_dot": float(r.sigma_dot[i]),
                "i_dot": float(r.i_dot[i]),
                "activity": float(r.activity[i]),
            }
            for i in subs
        },
        "currents": {c.name: float(model.rates(rho) @ model.current_weights(c)) for c in doc.currents},
    }
    if doc.family is not None:
        out["gibbs_residual"] = gibbs_check(model, zoo.gibbs_for(doc.family, doc.params))
    if args.state:
        out["state"] = [[[float(z.real), float(z.imag)] for z in row] for row in rho]
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    res = run_sweep(cfg, output=args.output, workers=args.workers)
    if not (args.output or cfg.output):
        sys.stdout.write(res.csv)
    print_summary(res)
    for v, row in zip(cfg.values, res.rows):
        bad = [f for f in row["flags"] if f.startswith(("fail:", "error:"))]
        if bad:
            sys.stderr.write(f"{cfg.axis}={v:g}: {' '.join(bad)}\n")
    return res.exit_status


TRAJ_COLUMNS = ("mc_mean", "mc_mean_se", "mc_var", "mc_var_se", "fcs_mean", "fcs_var",
                "mc_activity", "mc_activity_se", "activity", "n_traj", "seed")


def cmd_traj(args) -> int:
    """Monte Carlo estimates at each axis value against the deterministic pipeline."""
    cfg = load_config(args.config)
    mc = cfg.mc_check
    n_traj = args.n_traj or (mc.n_traj if mc else 1000)
    seed = args.seed if args.seed is not None else (mc.seed if mc else 0)
    dt_mc = (mc.dt if mc and mc.dt else None) or cfg.dt
    lines = [",".join((cfg.axis,) + TRAJ_COLUMNS)]
    worst = EXIT_OK
    for i, v in enumerate(cfg.values):
        model, cur, sub, tau = point_model(cfg, v)
        rho = steady_state(model).state
        est = sample_current(model, rho, tau, cur, n_traj, seed, dt_mc)
        act = activity_estimate(est.records, sub)
        cum = finite_time_cumulants(model, cur, rho, tau, cfg.dt)
        acc = accumulate(model, collapse_if_stationary(evolve(model, rho, tau, cfg.dt)), sub)
        vals = (est.mean, est.std_error_mean, est.variance, est.std_error_var, cum.mean(), cum.variance(),
                act.mean, act.std_error, acc.a1, n_traj, seed)
        lines.append(",".join([format_value(v)] + [format_value(x) for x in vals]))
        for got, se, want in ((est.mean, est.std_error_mean, cum.mean()), (est.variance, est.std_error_var, cum.variance()),
                              (act.mean, act.std_error, acc.a1)):
            if abs(got - want) > 3 * se:
                worst = EXIT_FAIL
        if args.records:
            rec_dir = Path(args.records)
            rec_dir.mkdir(parents=True, exist_ok=True)
            est.records.write(rec_dir / f"jumps_{i:03d}.txt")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return worst


def cmd_selfcheck(args) -> int:
    results = run_selfcheck(args.model or (), builtin=not args.models_only)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtkur", description="Uncertainty-relation checks for multipartite open quantum systems.")
    sub = ap.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("validate", help="check channel pairing, detailed balance and currents of a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("steady", help="steady state and instantaneous rates of a model file (JSON)")
    p.add_argument("model")
    p.add_argument("--state", action="store_true", help="include the full density matrix")
    p.set_defaults(func=cmd_steady)
    p = sub.add_parser("sweep", help="run a config-driven parameter sweep and emit CSV")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV path (default: config 'output' field, else stdout)")
    p.add_argument("-w", "--workers", type=int, help="worker processes (default: $QTKUR_WORKERS or 1)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("traj", help="quantum-jump Monte Carlo at each axis value of a config")
    p.add_argument("config")
    p.add_argument("-o", "--output")
    p.add_argument("--n-traj", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--records", help="directory for raw jump-record dumps")
    p.set_defaults(func=cmd_traj)
    p = sub.add_parser("selfcheck", help="run the built-in invariant checks")
    p.add_argument("--model", action="append", help="also check this model file (repeatable)")
    p.add_argument("--models-only", action="store_true", help="skip the built-in checks")
    p.set_defaults(func=cmd_selfcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
