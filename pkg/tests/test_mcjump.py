import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtkur import zoo
from qtkur.mcjump import activity_estimate, jackknife_mean_var, sample_current
from qtkur.propagate import StepSizeError, evolve, steady_state


def test_poisson_counts_within_three_sigma():
    model, cur = zoo.poisson_model(1.0)
    est = sample_current(model, np.eye(2) / 2, 2.0, cur, 10_000, seed=3)
    # first-order grid: per-step jump probability is rate*dt exactly
    assert abs(est.mean - 2.0) <= 3 * est.std_error_mean
    assert abs(est.variance - 2.0) <= 3 * est.std_error_var
    assert np.all(est.values == est.records.counts())


def test_seed_reproducibility_and_batch_independence():
    model, curs = zoo.random_model(1)
    rho = steady_state(model).state
    a = sample_current(model, rho, 1.0, curs[0], 60, seed=11, batch=60)
    b = sample_current(model, rho, 1.0, curs[0], 60, seed=11, batch=7)
    c = sample_current(model, rho, 1.0, curs[0], 60, seed=12)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.records.time, b.records.time)
    assert np.array_equal(a.records.channel, b.records.channel)
    assert not np.array_equal(a.records.time, c.records.time)


def test_prefix_of_ensemble_is_stable():
    model, curs = zoo.random_model(0)
    rho = steady_state(model).state
    small = sample_current(model, rho, 1.0, curs[0], 20, seed=5)
    big = sample_current(model, rho, 1.0, curs[0], 40, seed=5)
    assert np.array_equal(small.values, big.values[:20])


def test_no_active_channels():
    model, cur = zoo.poisson_model(0.0)
    est = sample_current(model, np.eye(2) / 2, 1.0, cur, 10, seed=0)
    assert est.mean == 0.0 and est.variance == 0.0
    assert len(est.records.time) == 0


def test_records_ordering_and_dump(tmp_path):
    model, curs = zoo.random_model(2)
    rho = steady_state(model).state
    est = sample_current(model, rho, 2.0, curs[0], 30, seed=1)
    rec = est.records
    key = rec.traj_index * 1e6 + rec.time
    assert np.all(np.diff(key) >= 0)
    assert np.all((rec.time > 0) & (rec.time <= 2.0 + 1e-12))
    path = tmp_path / "jumps.txt"
    rec.write(path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(rec.time)
    i, t, k = lines[0].split(",")
    assert int(i) == rec.traj_index[0] and float(t) == rec.time[0] and k == rec.channel_ids[rec.channel[0]]


def test_ensemble_final_state_matches_master_equation():
    model, curs = zoo.random_model(0)
    rho0 = np.diag(np.arange(1.0, model.dim + 1))
    rho0 /= np.trace(rho0)
    est = sample_current(model, rho0, 1.0, curs[0], 3000, seed=2, final_states=True)
    want = evolve(model, rho0, 1.0, 1e-3).states[-1]
    z = np.abs(est.final_states - want) / np.maximum(est.final_states_se, 1e-3)
    assert z.max() < 5.0


def test_step_cap_raises():
    model, cur = zoo.poisson_model(100.0)
    with pytest.raises(StepSizeError):
        sample_current(model, np.eye(2) / 2, 1.0, cur, 5, seed=0, dt=1e-3)


def test_activity_counts_subsystem_jumps(demon):
    model, cur, rho = demon
    est = sample_current(model, rho, 1.0, cur, 50, seed=4)
    act = activity_estimate(est.records, 0)
    assert act.mean == pytest.approx(est.records.counts(0).mean())
    assert np.all(est.records.counts(0) + est.records.counts(1) == est.records.counts())


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=40))
def test_jackknife_matches_sample_moments(xs):
    x = np.array(xs)
    mean, var, se_m, se_v = jackknife_mean_var(x)
    assert mean == pytest.approx(x.mean(), abs=1e-9)
    assert var == pytest.approx(x.var(ddof=1), rel=1e-9, abs=1e-9)
    assert se_m == pytest.approx(np.sqrt(x.var(ddof=1) / len(x)), rel=1e-9, abs=1e-12)
    loo = np.array([np.delete(x, i).var(ddof=1) for i in range(len(x))])
    n = len(x)
    assert se_v == pytest.approx(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)), rel=1e-6, abs=1e-6)


def test_jackknife_rejects_tiny_samples():
    with pytest.raises(ValueError):
        jackknife_mean_var([1.0, 2.0])
