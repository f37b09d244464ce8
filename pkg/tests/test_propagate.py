import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtkur import zoo
from qtkur.model import LindbladModel, generator_apply
from qtkur.propagate import (
    DegenerateSteadyStateError,
    ScaleSchedule,
    StepSizeError,
    collapse_if_stationary,
    evolve,
    expm_evolve,
    gibbs_check,
    gibbs_state,
    is_stationary,
    n_steps_for,
    rk4_linear,
    rk4_step_matrix,
    simpson,
    stationary_trajectory,
    steady_state,
    time_grid,
)
from qtkur.tensor_ops import TensorSpace

from conftest import random_state


def test_grid_helpers():
    assert n_steps_for(10.0, 1e-3) == 10000
    assert len(time_grid(1.0, 0.25)) == 5
    with pytest.raises(ValueError):
        n_steps_for(1.0, 0.3)
    with pytest.raises(ValueError):
        n_steps_for(-1.0, 0.1)
    with pytest.raises(ValueError):
        n_steps_for(0.1, 1.0)


def test_rk4_step_matrix_is_fourth_order_taylor():
    m = np.array([[0.0, 1.0], [-1.0, 0.0]])
    h = 0.1
    want = sum(np.linalg.matrix_power(h * m, n) / math.factorial(n) for n in range(5))
    assert np.allclose(rk4_step_matrix(m, h), want, atol=1e-15)


def test_rk4_linear_time_dependent_matches_scalar_oracle():
    # y' = (a + b t) y  =>  y = exp(a t + b t^2 / 2)
    a, b = -0.3, 0.8
    times = np.linspace(0, 1, 101)
    sched = ScaleSchedule(times, (b * times)[:, None])
    y = rk4_linear(np.array([[a]]), np.array([1.0]), 100, 0.01, parts=np.array([[[1.0]]]), coeff=sched.at)
    assert abs(y[0] - np.exp(a + b / 2)) < 1e-9


def test_two_level_relaxation_matches_closed_form():
    gu, gd = 0.4, 1.1
    model = zoo.two_level_model(gu, gd)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    traj = evolve(model, rho0, 2.0, 1e-3)
    p1 = gu / (gu + gd) * (1 - np.exp(-(gu + gd) * traj.times))
    assert np.max(np.abs(traj.states[:, 1, 1].real - p1)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rk4_trajectory_matches_matrix_exponential(seed):
    model, _ = zoo.random_model(seed)
    rho0 = random_state(np.random.default_rng(seed), model.dim)
    traj = evolve(model, rho0, 1.0, 1e-3)
    assert np.allclose(traj.states[-1], expm_evolve(model, rho0, 1.0), atol=1e-10)


def test_trajectory_preserves_trace_and_hermiticity(clock):
    model, _, _ = clock
    rho0 = np.eye(model.dim) / model.dim
    traj = evolve(model, rho0, 1.0, 5e-4)
    tr = np.einsum("tii->t", traj.states)
    assert np.max(np.abs(tr - 1)) < 1e-12
    assert np.allclose(traj.states, np.conj(np.swapaxes(traj.states, 1, 2)), atol=1e-12)


def test_unstable_step_raises():
    model = zoo.two_level_model(400.0, 400.0)
    with pytest.raises(StepSizeError):
        evolve(model, np.diag([1.0, 0.0]), 1.0, 0.01)


def test_steady_state_two_level_closed_form():
    gu, gd = 0.25, 3.0
    ss = steady_state(zoo.two_level_model(gu, gd))
    assert np.isclose(ss.state[1, 1].real, gu / (gu + gd), atol=1e-14)
    assert ss.residual < 1e-14


def test_steady_state_zoo_residuals(demon, clock):
    for model, _, rho in (demon, clock):
        assert np.linalg.norm(generator_apply(model, rho)) <= 1e-10
        assert np.isclose(np.trace(rho).real, 1.0)
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-12


def test_steady_state_degenerate_raises():
    model = LindbladModel(TensorSpace([2]), np.diag([0.0, 1.0]), [])
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(model)


def test_stationary_trajectory_helpers(demon):
    model, _, rho = demon
    traj = evolve(model, rho, 0.1, 1e-3)
    assert is_stationary(traj)
    col = collapse_if_stationary(traj)
    assert col.states.strides[0] == 0
    assert np.array_equal(col.states[5], rho)
    st_traj = stationary_trajectory(rho, 0.1, 1e-3)
    assert is_stationary(st_traj) and len(st_traj) == 101
    moving = evolve(model, np.eye(9) / 9, 0.1, 1e-3)
    assert collapse_if_stationary(moving) is moving


def test_simpson_exact_for_cubic():
    t = np.linspace(0, 2, 21)
    assert np.isclose(simpson(t ** 3, 0.1), 4.0, atol=1e-12)
    assert np.isclose(simpson(np.array([1.0, 3.0]), 1.0), 2.0)


def test_gibbs_states(demon):
    pi = gibbs_state(np.diag([0.0, np.log(2.0)]))
    assert np.allclose(np.diag(pi).real, [2 / 3, 1 / 3])
    p = zoo.with_axis("demon", zoo.default_params("demon"), "mu1L", 30.0)
    model, _ = zoo.build_demon(p)
    assert gibbs_check(model, zoo.demon_gibbs_state(p)) <= 1e-9
    assert gibbs_check(demon[0], zoo.demon_gibbs_state(zoo.default_params("demon"))) > 1e-3
