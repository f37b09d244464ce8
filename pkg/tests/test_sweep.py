import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from qtkur import zoo
from qtkur.modelio import save_model
from qtkur.sweep import (
    COLUMNS,
    ConfigError,
    MCOptions,
    format_value,
    load_config,
    parse_config,
    run_points,
    run_sweep,
    with_values,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
BASE = "family: demon\naxis: mu1L\nvalues: [0]\ntau: 1\ndt: 1.0e-3\n"


@pytest.mark.parametrize("text,line,field", [
    (BASE.replace("values: [0]", "values: []"), 3, "values"),
    (BASE.replace("values: [0]", "values: [0, .nan]"), 3, "values.1"),
    (BASE.replace("values: [0]", "values: {start: 0, stop: 1}"), 3, "values"),
    (BASE.replace("dt: 1.0e-3", "dt: 5"), 5, "dt"),
    (BASE.replace("tau: 1", "tau: -1"), 4, "tau"),
    (BASE.replace("family: demon", "family: laser"), 1, "family"),
    (BASE + "outputs: [j_mean, nope]\n", 6, "outputs.1"),
    (BASE + "colour: red\n", 6, "colour"),
    (BASE + "options:\n  finite_theta_check: 0.5\n", 7, "options.finite_theta_check"),
    (BASE + "options:\n  mc_check: {n_traj: 5, seed: 1}\n", 7, "options.mc_check.n_traj"),
    (BASE + "options:\n  coherence: l2\n", 7, "options.coherence"),
])
def test_config_errors_name_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "c.yaml")
    assert str(err.value).startswith(f"c.yaml:{line}: field '{field}'")


def test_range_values_and_options():
    cfg = parse_config(BASE.replace("values: [0]", "values: {start: 0, stop: 2, count: 5}")
                       + "options:\n  mc_check: {n_traj: 100, seed: 3}\n  coherence: l1\n")
    assert cfg.values == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert cfg.mc_check == MCOptions(100, 3, None)
    assert cfg.coherence_kind == "l1"


def test_custom_family_requires_model_file():
    with pytest.raises(ConfigError, match="model_file"):
        parse_config(BASE.replace("family: demon", "family: custom").replace("mu1L", "tau"))


def test_custom_model_file_sweeps_tau(tmp_path):
    model, cur = zoo.build_demon()
    save_model(tmp_path / "m.json", model, [cur])
    (tmp_path / "c.yaml").write_text(
        "family: custom\nmodel_file: m.json\naxis: tau\nvalues: [1, 2]\ntau: 1\ndt: 1.0e-3\noutputs: [j_mean, j_var]\n")
    cfg = load_config(tmp_path / "c.yaml")
    rows = run_points(cfg)
    ref = run_points(parse_config(BASE.replace("values: [0]", "values: [0]") + "outputs: [j_mean, j_var]\n"))
    assert rows[0]["j_mean"] == pytest.approx(ref[0]["j_mean"], rel=1e-12)
    assert rows[1]["j_mean"] == pytest.approx(2 * rows[0]["j_mean"], rel=1e-9)


def test_format_value_spelling():
    assert format_value(float("nan")) == "nan"
    assert format_value(math.inf) == "inf" and format_value(-math.inf) == "-inf"
    assert float(format_value(0.1)) == 0.1
    assert format_value(1.0) == "1.0000000000000000e+00"


def test_csv_header_and_rows():
    cfg = parse_config(BASE.replace("[0]", "[0, 30]"))
    res = run_sweep(cfg)
    lines = res.csv.splitlines()
    assert lines[0] == ",".join(("mu1L",) + COLUMNS + ("flags",))
    assert len(lines) == 3
    cells = lines[2].split(",")
    assert "vacuous-equilibrium" in cells[-1].split(";")
    assert res.exit_status == 0


def test_sweep_is_byte_identical_across_runs_and_workers():
    cfg = parse_config(BASE.replace("[0]", "[0, 10]") + "outputs: [j_mean, delta, qfi]\n")
    a = run_sweep(cfg, workers=1).csv
    b = run_sweep(cfg, workers=1).csv
    c = run_sweep(cfg, workers=2).csv
    assert a == b == c


def test_workers_from_environment(monkeypatch):
    cfg = parse_config(BASE + "outputs: [j_mean]\n")
    monkeypatch.setenv("QTKUR_WORKERS", "x")
    with pytest.raises(ConfigError, match="QTKUR_WORKERS"):
        run_points(cfg)
    monkeypatch.setenv("QTKUR_WORKERS", "2")
    assert run_points(with_values(cfg, [0, 1]))[0]["j_mean"] == run_points(cfg, workers=1)[0]["j_mean"]


def test_row_errors_are_isolated():
    cfg = parse_config("family: demon\naxis: gamma2\nvalues: [1, -1, 2]\ntau: 1\ndt: 1.0e-3\noutputs: [j_mean]\n")
    res = run_sweep(cfg)
    assert [any(f.startswith("error:") for f in r["flags"]) for r in res.rows] == [False, True, False]
    assert math.isnan(res.rows[1]["j_mean"])
    assert res.exit_status == 2


def test_output_relative_to_config(tmp_path):
    (tmp_path / "c.yaml").write_text(BASE + "outputs: [j_mean]\noutput: out/x.csv\n")
    res = run_sweep(load_config(tmp_path / "c.yaml"))
    assert (tmp_path / "out" / "x.csv").read_text() == res.csv


def test_optional_checks_flag_rows():
    cfg = parse_config(BASE + "options:\n  finite_theta_check: 1.0e-4\n  mc_check: {n_traj: 300, seed: 1}\n"
                       "  multidim: true\n")
    row = run_points(cfg)[0]
    assert "mc-checked" in row["flags"]
    assert any(f.startswith("finite-theta-dev=") for f in row["flags"])
    assert not any(f.startswith(("fail:", "error:")) for f in row["flags"])
    assert 0 < row["multidim_lhs"] <= row["multidim_rhs"] * (1 + 1e-9)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_run_reduced(path):
    cfg = load_config(path)
    cfg = with_values(cfg, [cfg.values[len(cfg.values) // 3]])
    if cfg.mc_check:
        cfg = replace(cfg, mc_check=replace(cfg.mc_check, n_traj=200))
    res = run_sweep(replace(cfg, output=None))
    row = res.rows[0]
    assert res.exit_status == 0, row["flags"]
    assert all(np.isfinite(row[c]) or c in ("delta_prime", "sigma_tick", "fano_inv", "eta",
                                            "multidim_lhs", "multidim_rhs") for c in cfg.outputs)
