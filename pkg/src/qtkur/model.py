"""Multipartite Lindblad models with local-detailed-balance bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tensor_ops import TensorSpace, left_super, right_super, sandwich_super

HERMITIAN_TOL = 1e-10
LDB_TOL = 1e-10
ANTISYM_TOL = 1e-12


class UnpairedChannelError(ValueError):
    """A thermodynamic quantity needs a reverse partner that is missing."""


@dataclass(frozen=True)
class Reservoir:
    id: str
    beta: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"reservoir {self.id!r}: beta must be > 0, got {self.beta}")


@dataclass(frozen=True, eq=False)
class JumpChannel:
    """One jump operator, already embedded in the full space.

    ``subsystem`` is a 0-based index into ``TensorSpace.dims``.
    """

    id: str
    subsystem: int
    reservoir: str | None
    operator: np.ndarray
    delta_s: float = 0.0
    reverse_id: str | None = None

    def __post_init__(self):
        op = np.array(self.operator, dtype=complex)
        op.setflags(write=False)
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True)
class CurrentSpec:
    name: str
    weights: Mapping[str, float] = field(default_factory=dict)

    def scaled(self, factor: float, name: str | None = None) -> "CurrentSpec":
        return CurrentSpec(name or self.name, {k: factor * c for k, c in self.weights.items()})


class LindbladModel:
    """Hamiltonian plus subsystem-tagged jump channels.

    Instances are treated as immutable; derived superoperators are cached.
    """

    def __init__(
        self,
        space: TensorSpace,
        hamiltonian: np.ndarray,
        channels: Sequence[JumpChannel],
        reservoirs: Iterable[Reservoir] = (),
    ):
        self.space = space
        d = space.total_dim
        h = np.array(hamiltonian, dtype=complex)
        if h.shape != (d, d):
            raise ValueError(f"Hamiltonian shape {h.shape} does not match total dimension {d}")
        h.setflags(write=False)
        self.hamiltonian = h
        self.channels: tuple[JumpChannel, ...] = tuple(channels)
        self.reservoirs: dict[str, Reservoir] = {r.id: r for r in reservoirs}
        self._index: dict[str, int] = {}
        for k, ch in enumerate(self.channels):
            if ch.id in self._index:
                raise ValueError(f"duplicate channel id {ch.id!r}")
            if ch.operator.shape != (d, d):
                raise ValueError(f"channel {ch.id!r}: operator shape {ch.operator.shape} != ({d}, {d})")
            space.check_index(ch.subsystem)
            self._index[ch.id] = k

    # -- lookup -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.space.total_dim

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def index_of(self, channel_id: str) -> int:
        try:
            return self._index[channel_id]
        except KeyError:
            raise KeyError(f"unknown channel id {channel_id!r}") from None

    def channel(self, channel_id: str) -> JumpChannel:
        return self.channels[self.index_of(channel_id)]

    def subsystem_indices(self, subsystem: int) -> np.ndarray:
        return np.array([k for k, ch in enumerate(self.channels) if ch.subsystem == subsystem], dtype=int)

    @cached_property
    def reverse_index(self) -> np.ndarray:
        """Index of each channel's partner, or -1 when unpaired."""
        out = np.full(self.n_channels, -1, dtype=int)
        for k, ch in enumerate(self.channels):
            if ch.reverse_id is not None and ch.reverse_id in self._index:
                out[k] = self._index[ch.reverse_id]
        return out

    def require_paired(self, subsystems: Iterable[int]) -> None:
        rev = self.reverse_index
        for i in subsystems:
            for k in self.subsystem_indices(i):
                if rev[k] < 0:
                    raise UnpairedChannelError(
                        f"channel {self.channels[k].id!r} of subsystem {i} has no reverse partner"
                    )

    # -- cached arrays ----------------------------------------------------
    @cached_property
    def operators(self) -> np.ndarray:
        d = self.dim
        if not self.channels:
            return np.zeros((0, d, d), dtype=complex)
        return np.stack([ch.operator for ch in self.channels])

    @cached_property
    def delta_s(self) -> np.ndarray:
        return np.array([ch.delta_s for ch in self.channels], dtype=float)

    @cached_property
    def subsystem_of(self) -> np.ndarray:
        return np.array([ch.subsystem for ch in self.channels], dtype=int)

    @cached_property
    def rate_operators(self) -> np.ndarray:
        """Stack of ``L†L``; ``tr(L ρ L†) = tr(L†L ρ)``."""
        L = self.operators
        return np.conj(np.swapaxes(L, -1, -2)) @ L

    @cached_property
    def hamiltonian_super(self) -> np.ndarray:
        h = self.hamiltonian
        return -1j * (left_super(h) - right_super(h))

    @cached_property
    def jump_supers(self) -> np.ndarray:
        """Stack of ``X -> L X L†`` superoperators."""
        n = self.dim ** 2
        if not self.channels:
            return np.zeros((0, n, n), dtype=complex)
        return np.stack([sandwich_super(L, L.conj().T) for L in self.operators])

    @cached_property
    def dissipator_supers(self) -> np.ndarray:
        n = self.dim ** 2
        if not self.channels:
            return np.zeros((0, n, n), dtype=complex)
        out = []
        for J, A in zip(self.jump_supers, self.rate_operators):
            out.append(J - 0.5 * (left_super(A) + right_super(A)))
        return np.stack(out)

    # -- currents ---------------------------------------------------------
    def current_weights(self, current: CurrentSpec) -> np.ndarray:
        """Per-channel weight vector; enforces antisymmetry under pairing."""
        c = np.zeros(self.n_channels)
        for cid, w in current.weights.items():
            c[self.index_of(cid)] = float(w)
        rev = self.reverse_index
        for k in np.flatnonzero(c):
            r = rev[k]
            if r >= 0 and abs(c[k] + c[r]) > ANTISYM_TOL:
                raise ValueError(
                    f"current {current.name!r} violates antisymmetry on pair "
                    f"{self.channels[k].id!r}/{self.channels[r].id!r}: {c[k]} vs {c[r]}"
                )
        return c

    def current_subsystem(self, current: CurrentSpec) -> int:
        c = self.current_weights(current)
        subs = set(self.subsystem_of[np.flatnonzero(c)].tolist())
        if len(subs) != 1:
            raise ValueError(f"current {current.name!r} must be supported on exactly one subsystem, got {sorted(subs)}")
        return subs.pop()

    def rates(self, rho: np.ndarray) -> np.ndarray:
        """Jump rates ``tr(L_k ρ L_k†)``; batch axes of ``rho`` lead."""
        return np.einsum("kij,...ji->...k", self.rate_operators, rho).real


def validate(model: LindbladModel, currents: Iterable[CurrentSpec] = ()) -> list[str]:
    """Return human-readable violations; an empty list means the model is valid."""
    problems: list[str] = []
    h = model.hamiltonian
    herr = np.linalg.norm(h - h.conj().T)
    if herr > HERMITIAN_TOL * max(1.0, np.linalg.norm(h)):
        problems.append(f"hamiltonian is not Hermitian (||H - H^dag||_F = {herr:.3e})")
    checked: set[frozenset] = set()
    for ch in model.channels:
        if ch.reservoir is not None and model.reservoirs and ch.reservoir not in model.reservoirs:
            problems.append(f"channel {ch.id!r}: unknown reservoir {ch.reservoir!r}")
        if ch.reverse_id is None:
            continue
        if ch.reverse_id not in model._index:
            problems.append(f"channel {ch.id!r}: reverse channel {ch.reverse_id!r} does not exist")
            continue
        key = frozenset((ch.id, ch.reverse_id))
        if key in checked:
            continue
        checked.add(key)
        rev = model.channel(ch.reverse_id)
        issues = []
        if rev.reverse_id != ch.id:
            issues.append("pairing is not mutual")
        if rev.id == ch.id and ch.delta_s != 0.0:
            issues.append(f"self-reverse channel with nonzero delta_s {ch.delta_s}")
        if abs(ch.delta_s + rev.delta_s) > ANTISYM_TOL:
            issues.append(f"delta_s not antisymmetric ({ch.delta_s} vs {rev.delta_s})")
        for a, b in ((ch, rev), (rev, ch)):
            err = np.linalg.norm(a.operator - np.exp(a.delta_s / 2) * b.operator.conj().T)
            if err > LDB_TOL * np.linalg.norm(a.operator) or (err > 0 and not np.any(a.operator)):
                issues.append(f"local detailed balance violated for {a.id!r} (error {err:.3e})")
                break
        if issues:
            problems.append(f"channel pair {ch.id!r}/{rev.id!r}: " + "; ".join(issues))
    for cur in currents:
        try:
            model.current_weights(cur)
        except (ValueError, KeyError) as exc:
            problems.append(str(exc))
    return problems


def generator_apply(model: LindbladModel, rho: np.ndarray, scale: np.ndarray | None = None) -> np.ndarray:
    """GKSL generator applied to ``rho``; ``scale`` multiplies each dissipator."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (model.dim, model.dim):
        raise ValueError(f"state shape {rho.shape[-2:]} does not match model dimension {model.dim}")
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    s = np.ones(model.n_channels) if scale is None else np.asarray(scale, dtype=float)
    for k, (L, A) in enumerate(zip(model.operators, model.rate_operators)):
        if s[k] == 0.0:
            continue
        out = out + s[k] * (L @ rho @ L.conj().T - 0.5 * (A @ rho + rho @ A))
    return out


def generator_matrix(model: LindbladModel, scale: np.ndarray | None = None) -> np.ndarray:
    """Row-major vectorized generator (D² × D²)."""
    if model.n_channels == 0:
        return model.hamiltonian_super.copy()
    s = np.ones(model.n_channels) if scale is None else np.asarray(scale, dtype=float)
    return model.hamiltonian_super + np.tensordot(s, model.dissipator_supers, axes=1)


def pair_basis_currents(model: LindbladModel, subsystem: int, drop_inactive: bool = True) -> list[CurrentSpec]:
    """One net-count current per forward/backward pair of ``subsystem``."""
    model.require_paired([subsystem])
    seen: set[int] = set()
    out = []
    rev = model.reverse_index
    for k in model.subsystem_indices(subsystem):
        r = int(rev[k])
        if k in seen or r == k:
            continue
        seen.update((int(k), r))
        ops = model.operators
        if drop_inactive and not (np.any(ops[k]) or np.any(ops[r])):
            continue
        a, b = model.channels[k].id, model.channels[r].id
        out.append(CurrentSpec(f"pair:{a}", {a: 1.0, b: -1.0}))
    return out


def entropy_flow_current(model: LindbladModel, subsystem: int, name: str = "entropy_flow") -> CurrentSpec:
    """Current with weights ``-Δs``: the (inverse-temperature rescaled) heat absorbed by ``subsystem``."""
    model.require_paired([subsystem])
    w = {model.channels[k].id: -model.channels[k].delta_s for k in model.subsystem_indices(subsystem)}
    return CurrentSpec(name, {k: v for k, v in w.items() if v != 0.0})
