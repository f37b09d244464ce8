"""Benchmark models: spin-polarized double-dot demon, autonomous clock, and small test systems."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .model import CurrentSpec, JumpChannel, LindbladModel, Reservoir
from .propagate import gibbs_state
from .tensor_ops import TensorSpace, embed_local

# ---------------------------------------------------------------------------
# demon: two exchange-coupled dots, each with basis {empty, up, down}
# ---------------------------------------------------------------------------

SPINS = ("up", "down")
LEADS = ("1L", "1R", "2L", "2R")
_DOT_STATE = {"up": 1, "down": 2}


def _default_mu() -> dict[str, float]:
    return {"1L": 0.0, "1R": 0.0, "2L": -30.0, "2R": 30.0}


def _default_gamma() -> dict[str, float]:
    g = {f"{lead}_{s}": 1.0 for lead in LEADS for s in SPINS}
    for key in ("1L_down", "1R_up", "2L_up", "2R_down"):
        g[key] = 0.0
    return g


@dataclass(frozen=True)
class DemonParams:
    """Parameters of the double-dot demon; ``gamma`` keys are ``"<lead>_<spin>"``."""

    beta: float = 0.01
    J: float = 10.0
    eps1: float = 0.0
    eps2: float = 0.0
    mu: dict = field(default_factory=_default_mu)
    gamma: dict = field(default_factory=_default_gamma)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if set(self.mu) != set(LEADS):
            raise ValueError(f"mu must have exactly the leads {LEADS}, got {sorted(self.mu)}")
        expected = {f"{lead}_{s}" for lead in LEADS for s in SPINS}
        if set(self.gamma) != expected:
            raise ValueError(f"gamma keys must be {sorted(expected)}, got {sorted(self.gamma)}")
        bad = [k for k, v in self.gamma.items() if v < 0]
        if bad:
            raise ValueError(f"negative rates for {bad}")

    def eps(self, dot: int) -> float:
        return self.eps1 if dot == 1 else self.eps2


def _dot_ops() -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    ann = {}
    for s, k in _DOT_STATE.items():
        a = np.zeros((3, 3), dtype=complex)
        a[0, k] = 1.0
        ann[s] = a
    num = {s: ann[s].conj().T @ ann[s] for s in SPINS}
    return ann, num


def fermi(x: float) -> float:
    """``1 / (exp(x) + 1)`` evaluated without overflow."""
    if x >= 0:
        e = np.exp(-x)
        return float(e / (1.0 + e))
    return float(1.0 / (np.exp(x) + 1.0))


def demon_hamiltonian(p: DemonParams) -> np.ndarray:
    space = TensorSpace([3, 3])
    ann, num = _dot_ops()
    h = np.zeros((9, 9), dtype=complex)
    for i, dot in enumerate((1, 2)):
        h += p.eps(dot) * embed_local(num["up"] + num["down"], i, space)
    # d†_{1↑} d_{1↓} d†_{2↓} d_{2↑}
    flip = np.kron(ann["up"].conj().T @ ann["down"], ann["down"].conj().T @ ann["up"])
    h += 0.5 * p.J * (flip + flip.conj().T)
    return h


def demon_channel_id(direction: str, lead: str, spin: str) -> str:
    return f"{direction}_{lead}_{spin}"


def build_demon(p: DemonParams | None = None) -> tuple[LindbladModel, CurrentSpec]:
    """Demon model and the spin-up particle current into dot 1 (subsystem 0)."""
    p = p or DemonParams()
    space = TensorSpace([3, 3])
    ann, _ = _dot_ops()
    channels = []
    reservoirs = []
    for lead in LEADS:
        dot = int(lead[0])
        i = dot - 1
        mu = p.mu[lead]
        reservoirs.append(Reservoir(lead, p.beta, mu))
        x = p.beta * (p.eps(dot) - mu)
        f = fermi(x)
        for s in SPINS:
            g = p.gamma[f"{lead}_{s}"]
            d = embed_local(ann[s], i, space)
            cin, cout = demon_channel_id("in", lead, s), demon_channel_id("out", lead, s)
            channels.append(JumpChannel(cin, i, lead, np.sqrt(g * f) * d.conj().T, -x, cout))
            channels.append(JumpChannel(cout, i, lead, np.sqrt(g * (1.0 - f)) * d, x, cin))
    model = LindbladModel(space, demon_hamiltonian(p), channels, reservoirs)
    weights = {}
    for lead in ("1L", "1R"):
        weights[demon_channel_id("in", lead, "up")] = 1.0
        weights[demon_channel_id("out", lead, "up")] = -1.0
    return model, CurrentSpec("J1", weights)


def _spin_chemical_potentials(p: DemonParams) -> dict[tuple[int, str], float]:
    """Chemical potential of the single lead coupled to each (dot, spin); NaN if ambiguous."""
    out = {}
    for dot in (1, 2):
        for s in SPINS:
            mus = [p.mu[lead] for lead in LEADS if int(lead[0]) == dot and p.gamma[f"{lead}_{s}"] > 0]
            out[(dot, s)] = mus[0] if len(set(mus)) == 1 else float("nan")
    return out


def demon_gibbs_state(p: DemonParams) -> np.ndarray:
    """``exp[-β(H₀ - Σ μ n)]`` normalized, with spin-resolved chemical potentials."""
    space = TensorSpace([3, 3])
    _, num = _dot_ops()
    mus = _spin_chemical_potentials(p)
    if any(np.isnan(v) for v in mus.values()):
        raise ValueError("each (dot, spin) must couple to leads with a single chemical potential")
    h = np.zeros((9, 9), dtype=complex)
    for i, dot in enumerate((1, 2)):
        for s in SPINS:
            h += (p.eps(dot) - mus[(dot, s)]) * embed_local(num[s], i, space)
    return gibbs_state(p.beta * h)


# ---------------------------------------------------------------------------
# clock: hot qubit, cold qubit, d-level ladder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClockParams:
    beta_c: float = 1.0
    beta_h: float = 1e-3
    beta_w: float = 0.1
    E_c: float = 1.0
    E_h: float = 2.0
    E_w: float = 1.0
    g: float = 5.0
    gamma_c: float = 1.0
    gamma_h: float = 1.0
    gamma_w: float = 1.0
    d: int = 4

    def __post_init__(self):
        if abs(self.E_h - (self.E_c + self.E_w)) > 1e-12:
            raise ValueError(f"resonance requires E_h = E_c + E_w, got {self.E_h} vs {self.E_c + self.E_w}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"ladder dimension must be an integer >= 2, got {self.d}")
        for name in ("beta_c", "beta_h", "beta_w"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("gamma_c", "gamma_h", "gamma_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


CLOCK_LADDER = 2


def _clock_local(p: ClockParams):
    sigma = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
    n_q = sigma.conj().T @ sigma
    d = int(p.d)
    n_ladder = np.diag(np.arange(d, dtype=float)).astype(complex)
    return sigma, n_q, n_ladder


def clock_hamiltonian(p: ClockParams) -> np.ndarray:
    d = int(p.d)
    space = TensorSpace([2, 2, d])
    sigma, n_q, n_ladder = _clock_local(p)
    h = p.E_h * embed_local(n_q, 0, space) + p.E_c * embed_local(n_q, 1, space)
    h = h + p.E_w * embed_local(n_ladder, 2, space)
    raise_ladder = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        raise_ladder[k, k - 1] = 1.0  # σ_k† = |k><k-1|
    term = np.kron(np.kron(sigma, sigma.conj().T), raise_ladder)  # σ_h σ_c† Σ σ_k†
    return h + p.g * (term + term.conj().T)


def build_clock(p: ClockParams | None = None) -> tuple[LindbladModel, CurrentSpec]:
    """Clock model and the tick current on the ladder (subsystem 2)."""
    p = p or ClockParams()
    d = int(p.d)
    space = TensorSpace([2, 2, d])
    sigma, _, _ = _clock_local(p)
    channels = []
    for i, name, beta, gap, gam in ((0, "h", p.beta_h, p.E_h, p.gamma_h), (1, "c", p.beta_c, p.E_c, p.gamma_c)):
        s = embed_local(sigma, i, space)
        x = beta * gap
        channels.append(JumpChannel(f"{name}_down", i, name, np.sqrt(gam) * s, x, f"{name}_up"))
        channels.append(JumpChannel(f"{name}_up", i, name, np.sqrt(gam * np.exp(-x)) * s.conj().T, -x, f"{name}_down"))
    reset = np.zeros((d, d), dtype=complex)
    reset[d - 1, 0] = 1.0  # σ_w = |d-1><0|
    sw = embed_local(reset, 2, space)
    x = p.beta_w * (d - 1) * p.E_w
    channels.append(JumpChannel("w_reset", 2, "w", np.sqrt(p.gamma_w) * sw, -x, "w_tick"))
    channels.append(JumpChannel("w_tick", 2, "w", np.sqrt(p.gamma_w * np.exp(x)) * sw.conj().T, x, "w_reset"))
    reservoirs = [Reservoir("h", p.beta_h), Reservoir("c", p.beta_c), Reservoir("w", p.beta_w)]
    model = LindbladModel(space, clock_hamiltonian(p), channels, reservoirs)
    return model, CurrentSpec("Jw", {"w_tick": 1.0, "w_reset": -1.0})


def clock_gibbs_state(p: ClockParams) -> np.ndarray:
    d = int(p.d)
    space = TensorSpace([2, 2, d])
    _, n_q, n_ladder = _clock_local(p)
    hb = p.beta_h * p.E_h * embed_local(n_q, 0, space) + p.beta_c * p.E_c * embed_local(n_q, 1, space)
    hb = hb + p.beta_w * p.E_w * embed_local(n_ladder, 2, space)
    return gibbs_state(hb)


# ---------------------------------------------------------------------------
# parameter axes and the balance condition
# ---------------------------------------------------------------------------

FAMILIES = ("demon", "clock")


def default_params(family: str):
    if family == "demon":
        return DemonParams()
    if family == "clock":
        return ClockParams()
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def build(family: str, params) -> tuple[LindbladModel, CurrentSpec]:
    if family == "demon":
        return build_demon(params)
    if family == "clock":
        return build_clock(params)
    raise ValueError(f"unknown model family {family!r}")


def gibbs_for(family: str, params) -> np.ndarray:
    return demon_gibbs_state(params) if family == "demon" else clock_gibbs_state(params)


def bound_subsystem(family: str) -> int:
    return 0 if family == "demon" else CLOCK_LADDER


def params_from_dict(family: str, data: dict[str, Any]):
    base = default_params(family)
    known = {f.name for f in fields(base)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {family} parameters: {sorted(unknown)}")
    data = dict(data)
    if family == "demon":
        for key in ("mu", "gamma"):
            if key in data:
                merged = dict(getattr(base, key))
                merged.update({k: float(v) for k, v in data[key].items()})
                data[key] = merged
    return replace(base, **data)


def params_to_dict(params) -> dict[str, Any]:
    out = {}
    for f in fields(params):
        v = getattr(params, f.name)
        out[f.name] = dict(v) if isinstance(v, dict) else v
    return out


def demon_axes() -> tuple[str, ...]:
    return ("mu1L", "gamma2", "J", "beta", "eps1", "eps2") + tuple(f"mu.{k}" for k in LEADS) + tuple(
        f"gamma.{lead}_{s}" for lead in LEADS for s in SPINS
    )


def clock_axes() -> tuple[str, ...]:
    return tuple(f.name for f in fields(ClockParams)) + ("gamma_ch",)


def with_axis(family: str, params, axis: str, value: float):
    """Return ``params`` with one sweep coordinate set.

    Compound axes: demon ``mu1L`` sets μ1L = -μ1R = value; demon ``gamma2``
    sets every nonzero dot-2 rate to value; clock ``gamma_ch`` sets
    γ_c = γ_h = value.  Clock ``E_c``/``E_w`` keep E_h = E_c + E_w.
    """
    value = float(value)
    if family == "demon":
        if axis == "mu1L":
            mu = dict(params.mu, **{"1L": value, "1R": -value})
            return replace(params, mu=mu)
        if axis == "gamma2":
            base = default_params("demon").gamma
            g = dict(params.gamma)
            for k in g:
                if k.startswith("2") and base[k] > 0:
                    g[k] = value
            return replace(params, gamma=g)
        if axis.startswith("mu."):
            key = axis[3:]
            if key not in params.mu:
                raise ValueError(f"unknown lead {key!r} in axis {axis!r}")
            return replace(params, mu=dict(params.mu, **{key: value}))
        if axis.startswith("gamma."):
            key = axis[6:]
            if key not in params.gamma:
                raise ValueError(f"unknown rate {key!r} in axis {axis!r}")
            return replace(params, gamma=dict(params.gamma, **{key: value}))
        if axis in ("J", "beta", "eps1", "eps2"):
            return replace(params, **{axis: value})
        raise ValueError(f"unknown demon axis {axis!r}; expected one of {demon_axes()}")
    if family == "clock":
        if axis == "gamma_ch":
            return replace(params, gamma_c=value, gamma_h=value)
        if axis == "d":
            return replace(params, d=int(value))
        if axis == "E_c":
            return replace(params, E_c=value, E_h=value + params.E_w)
        if axis == "E_w":
            return replace(params, E_w=value, E_h=params.E_c + value)
        if axis in clock_axes():
            return replace(params, **{axis: value})
        raise ValueError(f"unknown clock axis {axis!r}; expected one of {clock_axes()}")
    raise ValueError(f"unknown model family {family!r}")


def equilibrium_locator(family: str, axis: str, params=None) -> float:
    """Axis value on which the Gibbs state becomes stationary.

    Demon: μ1L - μ1R = -(μ2L - μ2R).  Clock: β_c E_c - β_h E_h + β_w E_w = 0.
    """
    params = params or default_params(family)
    if family == "demon":
        m = params.mu
        if axis == "mu1L":
            # 2x = -(μ2L - μ2R)
            return -(m["2L"] - m["2R"]) / 2.0
        solve = {
            "mu.1L": m["1R"] - (m["2L"] - m["2R"]),
            "mu.1R": m["1L"] + (m["2L"] - m["2R"]),
            "mu.2L": m["2R"] - (m["1L"] - m["1R"]),
            "mu.2R": m["2L"] + (m["1L"] - m["1R"]),
        }
        if axis in solve:
            return float(solve[axis])
        raise ValueError(f"demon axis {axis!r} does not enter the balance condition")
    if family == "clock":
        p = params
        if axis == "beta_h":
            return (p.beta_c * p.E_c + p.beta_w * p.E_w) / p.E_h
        if axis == "beta_c":
            return (p.beta_h * p.E_h - p.beta_w * p.E_w) / p.E_c
        if axis == "beta_w":
            return (p.beta_h * p.E_h - p.beta_c * p.E_c) / p.E_w
        raise ValueError(f"clock axis {axis!r} does not enter the balance condition")
    raise ValueError(f"unknown model family {family!r}")


# ---------------------------------------------------------------------------
# small reference systems
# ---------------------------------------------------------------------------

_X = np.array([[0, 1], [1, 0]], dtype=complex)


def poisson_model(rate: float = 1.0, paired: bool = False) -> tuple[LindbladModel, CurrentSpec]:
    """Single spin flip ``√Γ X``: a state-independent jump rate Γ.

    The unpaired variant admits the count-every-jump current; the self-paired
    variant (Δs = 0) is usable by thermodynamic routines.
    """
    space = TensorSpace([2])
    ch = JumpChannel("flip", 0, None, np.sqrt(rate) * _X, 0.0, "flip" if paired else None)
    model = LindbladModel(space, np.zeros((2, 2)), [ch])
    weights = {} if paired else {"flip": 1.0}
    return model, CurrentSpec("count", weights)


def ring_model(rate: float = 1.0, n: int = 3) -> tuple[LindbladModel, CurrentSpec]:
    """Unidirectional ``n``-state ring; the current counts the ``0 -> 1`` link."""
    space = TensorSpace([n])
    chans = []
    for k in range(n):
        op = np.zeros((n, n), dtype=complex)
        op[(k + 1) % n, k] = np.sqrt(rate)
        chans.append(JumpChannel(f"hop{k}", 0, None, op))
    model = LindbladModel(space, np.zeros((n, n)), chans)
    return model, CurrentSpec("link0", {"hop0": 1.0})


def two_level_model(gamma_up: float, gamma_down: float, energy: float = 0.0) -> LindbladModel:
    """Qubit with excitation ``√γ↑ |1><0|`` and decay ``√γ↓ |0><1|``, paired when both are positive."""
    space = TensorSpace([2])
    up = np.array([[0, 0], [1, 0]], dtype=complex)
    paired = gamma_up > 0 and gamma_down > 0
    ds = float(np.log(gamma_down / gamma_up)) if paired else 0.0
    chans = [
        JumpChannel("up", 0, None, np.sqrt(gamma_up) * up, -ds, "down" if paired else None),
        JumpChannel("down", 0, None, np.sqrt(gamma_down) * up.T, ds, "up" if paired else None),
    ]
    return LindbladModel(space, np.diag([0.0, energy]), chans)


def _random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def random_model(
    seed: int,
    dims: tuple[int, ...] = (2, 3),
    pairs_per_subsystem: int = 2,
    coupling: float = 1.0,
) -> tuple[LindbladModel, list[CurrentSpec]]:
    """Random LDB-consistent model with local jump pairs and a generic Hamiltonian.

    Returns the model and one random antisymmetric current per subsystem.
    """
    rng = np.random.default_rng(seed)
    space = TensorSpace(dims)
    h = np.zeros((space.total_dim,) * 2, dtype=complex)
    for i, d in enumerate(dims):
        h += embed_local(_random_hermitian(rng, d), i, space)
    h += coupling * _random_hermitian(rng, space.total_dim) / np.sqrt(space.total_dim)
    chans = []
    currents = []
    for i, d in enumerate(dims):
        weights = {}
        for k in range(pairs_per_subsystem):
            a = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(d)
            ds = float(rng.uniform(-2.0, 2.0))
            op = embed_local(a, i, space)
            fid, rid = f"s{i}p{k}f", f"s{i}p{k}r"
            chans.append(JumpChannel(fid, i, None, np.exp(ds / 4) * op, ds, rid))
            chans.append(JumpChannel(rid, i, None, np.exp(-ds / 4) * op.conj().T, -ds, fid))
            c = float(rng.normal())
            weights[fid], weights[rid] = c, -c
        currents.append(CurrentSpec(f"random{i}", weights))
    return LindbladModel(space, h, chans), currents
