from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtkur import zoo
from qtkur.model import validate
from qtkur.propagate import gibbs_check, steady_state
from qtkur.tensor_ops import TensorSpace, embed_local


def test_demon_structure(demon):
    model, cur, _ = demon
    assert model.space.dims == (3, 3) and model.dim == 9
    assert model.n_channels == 16
    assert dict(cur.weights) == {"in_1L_up": 1.0, "in_1R_up": 1.0, "out_1L_up": -1.0, "out_1R_up": -1.0}


def test_demon_rates_are_fermi_weighted():
    p = replace(zoo.DemonParams(), eps1=5.0)
    model, _ = zoo.build_demon(p)
    empty = np.zeros((9, 9), dtype=complex)
    empty[0, 0] = 1.0
    r = model.rates(empty)
    f = 1 / (np.exp(p.beta * (5.0 - p.mu["1L"])) + 1)
    assert np.isclose(r[model.index_of("in_1L_up")], p.gamma["1L_up"] * f)
    assert r[model.index_of("out_1L_up")] == 0.0
    assert np.isclose(model.channel("in_1L_up").delta_s, -p.beta * (5.0 - p.mu["1L"]))


def test_demon_interaction_conserves_dot_occupation():
    p = zoo.DemonParams()
    h_int = zoo.demon_hamiltonian(p) - zoo.demon_hamiltonian(replace(p, J=0.0))
    space = TensorSpace([3, 3])
    n1 = embed_local(np.diag([0.0, 1.0, 1.0]), 0, space)
    assert np.abs(h_int @ n1 - n1 @ h_int).max() <= 1e-12
    assert np.abs(h_int).max() > 0


def test_clock_structure(clock):
    model, cur, _ = clock
    assert model.space.dims == (2, 2, 4) and model.dim == 16
    assert dict(cur.weights) == {"w_tick": 1.0, "w_reset": -1.0}
    assert [ch.subsystem for ch in model.channels] == [0, 0, 1, 1, 2, 2]


def test_clock_interaction_is_resonant():
    p = zoo.ClockParams()
    h = zoo.clock_hamiltonian(p)
    h0 = zoo.clock_hamiltonian(replace(p, g=0.0))
    assert np.abs(h @ h0 - h0 @ h).max() <= 1e-12


def test_clock_rejects_off_resonance():
    with pytest.raises(ValueError, match="resonance"):
        zoo.ClockParams(E_h=2.5)
    with pytest.raises(ValueError):
        zoo.ClockParams(d=1)


def test_equilibrium_locator():
    assert zoo.equilibrium_locator("demon", "mu1L") == 30.0
    assert np.isclose(zoo.equilibrium_locator("clock", "beta_h"), 0.55)
    with pytest.raises(ValueError):
        zoo.equilibrium_locator("clock", "g")
    with pytest.raises(ValueError):
        zoo.equilibrium_locator("demon", "J")
    assert zoo.equilibrium_locator("clock", "beta_w") < 0  # no physical balance at defaults


@pytest.mark.parametrize("family,axis,base", [
    ("demon", "mu1L", zoo.DemonParams()),
    ("demon", "mu.2R", zoo.DemonParams()),
    ("clock", "beta_h", zoo.ClockParams()),
    # balance on these axes needs a hot reservoir colder than default
    ("clock", "beta_c", zoo.ClockParams(beta_h=2.0)),
    ("clock", "beta_w", zoo.ClockParams(beta_h=2.0)),
])
def test_gibbs_state_is_stationary_at_balance(family, axis, base):
    p = zoo.with_axis(family, base, axis, zoo.equilibrium_locator(family, axis, base))
    model, _ = zoo.build(family, p)
    assert gibbs_check(model, zoo.gibbs_for(family, p)) <= 1e-9
    ss = steady_state(model).state
    assert np.allclose(ss, zoo.gibbs_for(family, p), atol=1e-9)


def test_gibbs_state_not_stationary_off_balance(demon, clock):
    assert gibbs_check(demon[0], zoo.demon_gibbs_state(zoo.DemonParams())) > 0.1
    assert gibbs_check(clock[0], zoo.clock_gibbs_state(zoo.ClockParams())) > 0.1


@settings(max_examples=15, deadline=None)
@given(mu=st.floats(0, 60), gamma2=st.floats(0.1, 100), J=st.floats(0.5, 40))
def test_demon_sweep_parameters_validate(mu, gamma2, J):
    p = zoo.with_axis("demon", zoo.DemonParams(J=J), "mu1L", mu)
    p = zoo.with_axis("demon", p, "gamma2", gamma2)
    model, cur = zoo.build_demon(p)
    assert validate(model, [cur]) == []


@settings(max_examples=15, deadline=None)
@given(bc=st.floats(0.2, 3), bh=st.floats(1e-3, 1.05), bw=st.floats(0.02, 0.5), gch=st.floats(0.1, 20))
def test_clock_sweep_parameters_validate(bc, bh, bw, gch):
    p = zoo.ClockParams(beta_c=bc, beta_h=bh, beta_w=bw)
    p = zoo.with_axis("clock", p, "gamma_ch", gch)
    model, cur = zoo.build_clock(p)
    assert validate(model, [cur]) == []


def test_with_axis_semantics():
    p = zoo.with_axis("demon", zoo.DemonParams(), "mu1L", 12.0)
    assert p.mu["1L"] == 12.0 and p.mu["1R"] == -12.0
    g = zoo.with_axis("demon", zoo.DemonParams(), "gamma2", 7.0).gamma
    assert g["2L_down"] == g["2R_up"] == 7.0 and g["2L_up"] == g["2R_down"] == 0.0
    assert g["1L_up"] == 1.0
    c = zoo.with_axis("clock", zoo.ClockParams(), "E_c", 2.0)
    assert c.E_h == 3.0
    c = zoo.with_axis("clock", zoo.ClockParams(), "gamma_ch", 4.0)
    assert c.gamma_c == c.gamma_h == 4.0 and c.gamma_w == 1.0
    with pytest.raises(ValueError):
        zoo.with_axis("demon", zoo.DemonParams(), "nope", 1.0)


def test_params_dict_round_trip():
    p = zoo.params_from_dict("demon", {"J": 3.0, "mu": {"1L": 4.0}})
    assert p.J == 3.0 and p.mu["1L"] == 4.0 and p.mu["2R"] == 30.0
    assert zoo.params_from_dict("demon", zoo.params_to_dict(p)) == p
    with pytest.raises(ValueError):
        zoo.params_from_dict("clock", {"bogus": 1})
    with pytest.raises(ValueError):
        zoo.DemonParams(gamma={**zoo.DemonParams().gamma, "1L_up": -1.0})
