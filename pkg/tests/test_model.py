import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtkur import zoo
from qtkur.model import (
    CurrentSpec,
    JumpChannel,
    LindbladModel,
    Reservoir,
    UnpairedChannelError,
    entropy_flow_current,
    generator_apply,
    generator_matrix,
    pair_basis_currents,
    validate,
)
from qtkur.tensor_ops import TensorSpace, devectorize, vectorize

from conftest import random_state


def _flip_pair(model, idx):
    """Copy of ``model`` with the Δs of channel ``idx`` and its partner negated."""
    rev = model.reverse_index[idx]
    chans = []
    for k, ch in enumerate(model.channels):
        ds = -ch.delta_s if k in (idx, rev) else ch.delta_s
        chans.append(JumpChannel(ch.id, ch.subsystem, ch.reservoir, ch.operator, ds, ch.reverse_id))
    return LindbladModel(model.space, model.hamiltonian, chans, model.reservoirs.values())


def test_zoo_models_validate(demon, clock):
    assert validate(demon[0], [demon[1]]) == []
    assert validate(clock[0], [clock[1]]) == []


def test_delta_s_sign_flip_is_reported_with_channel_names(demon):
    model = demon[0]
    k = model.index_of("in_2L_down")
    assert model.delta_s[k] != 0
    problems = validate(_flip_pair(model, k))
    assert len(problems) == 1
    assert "in_2L_down" in problems[0] and "out_2L_down" in problems[0]
    assert "local detailed balance" in problems[0]


def test_non_antisymmetric_delta_s_reported():
    model = zoo.two_level_model(0.5, 2.0)
    up, down = model.channels
    bad = LindbladModel(model.space, model.hamiltonian,
                        [up, JumpChannel("down", 0, None, down.operator, down.delta_s + 0.1, "up")])
    msg = " ".join(validate(bad))
    assert "antisymmetric" in msg and "'up'" in msg


def test_missing_reverse_and_nonmutual_pairing():
    op = np.array([[0, 1], [0, 0]], dtype=complex)
    space = TensorSpace([2])
    m = LindbladModel(space, np.zeros((2, 2)), [JumpChannel("a", 0, None, op, 0.0, "ghost")])
    assert "does not exist" in validate(m)[0]
    chans = [
        JumpChannel("a", 0, None, op, 0.0, "b"),
        JumpChannel("b", 0, None, op.T, 0.0, "c"),
        JumpChannel("c", 0, None, op.T, 0.0, "b"),
    ]
    assert any("not mutual" in p for p in validate(LindbladModel(space, np.zeros((2, 2)), chans)))


def test_non_hermitian_hamiltonian_reported():
    m = LindbladModel(TensorSpace([2]), np.array([[0, 1], [0, 0]]), [])
    assert "Hermitian" in validate(m)[0]


def test_constructor_rejects_bad_input():
    space = TensorSpace([2])
    op = np.zeros((2, 2))
    with pytest.raises(ValueError):
        LindbladModel(space, np.zeros((3, 3)), [])
    with pytest.raises(ValueError):
        LindbladModel(space, np.zeros((2, 2)), [JumpChannel("a", 0, None, op), JumpChannel("a", 0, None, op)])
    with pytest.raises(ValueError):
        LindbladModel(space, np.zeros((2, 2)), [JumpChannel("a", 0, None, np.zeros((3, 3)))])
    with pytest.raises(ValueError):
        LindbladModel(space, np.zeros((2, 2)), [JumpChannel("a", 1, None, op)])
    with pytest.raises(ValueError):
        Reservoir("r", beta=0.0)


def test_current_weights_enforce_antisymmetry(demon):
    model = demon[0]
    with pytest.raises(ValueError, match="antisymmetry"):
        model.current_weights(CurrentSpec("bad", {"in_1L_up": 1.0}))
    with pytest.raises(KeyError):
        model.current_weights(CurrentSpec("bad", {"nope": 1.0}))
    assert validate(model, [CurrentSpec("bad", {"in_1L_up": 1.0})]) != []


def test_current_subsystem(demon, clock):
    assert demon[0].current_subsystem(demon[1]) == 0
    assert clock[0].current_subsystem(clock[1]) == 2


def test_require_paired():
    model, _ = zoo.ring_model()
    with pytest.raises(UnpairedChannelError):
        model.require_paired([0])


def test_two_level_rates_match_populations():
    model = zoo.two_level_model(0.3, 1.7)
    rho = np.diag([0.6, 0.4]).astype(complex)
    # r_up = γ↑ p0, r_down = γ↓ p1
    assert np.allclose(model.rates(rho), [0.3 * 0.6, 1.7 * 0.4])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_generator_preserves_trace_and_hermiticity(seed):
    model, _ = zoo.random_model(seed)
    rng = np.random.default_rng(seed)
    rho = random_state(rng, model.dim)
    out = generator_apply(model, rho)
    assert abs(np.trace(out)) < 1e-10
    assert np.allclose(out, out.conj().T, atol=1e-10)
    assert np.allclose(devectorize(generator_matrix(model) @ vectorize(rho)), out, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_models_satisfy_detailed_balance(seed):
    model, currents = zoo.random_model(seed)
    assert validate(model, currents) == []


def test_scaled_generator_is_linear_in_scale(demon):
    model = demon[0]
    s = np.linspace(0.5, 1.5, model.n_channels)
    g0 = generator_matrix(model, np.zeros(model.n_channels))
    direct = g0 + np.tensordot(s, model.dissipator_supers, axes=1)
    assert np.allclose(generator_matrix(model, s), direct)


def test_pair_basis_and_entropy_flow_currents(demon):
    model = demon[0]
    basis = pair_basis_currents(model, 0)
    # dot 1 has 8 channels (4 pairs); 1L_down and 1R_up have zero rate
    assert len(basis) == 2
    for cur in basis:
        c = model.current_weights(cur)
        assert sorted(c[c != 0]) == [-1.0, 1.0]
    assert len(pair_basis_currents(model, 0, drop_inactive=False)) == 4
    flow = entropy_flow_current(model, 1)
    c = model.current_weights(flow)
    idx = model.subsystem_indices(1)
    assert np.allclose(c[idx], -model.delta_s[idx])
