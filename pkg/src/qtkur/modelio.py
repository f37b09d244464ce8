"""JSON interchange format for models (``"format": "qtkur-model/1"``).

Layout::

    {
      "format": "qtkur-model/1",
      "dims": [3, 3],
      "hamiltonian": [[[re, im], ...], ...],          # row-major
      "reservoirs": [{"id": "1L", "beta": 0.01, "mu": 0.0}, ...],
      "channels": [{"id": "in_1L_up", "subsystem": 0, "reservoir": "1L",
                    "delta_s": -0.0, "reverse_id": "out_1L_up",
                    "operator": [[[re, im], ...], ...]}, ...],
      "currents": [{"name": "J1", "weights": {"in_1L_up": 1.0, ...}}],
      "family": "demon",                                # optional
      "params": {...}                                   # optional
    }

A document with ``family`` and ``params`` but no ``channels`` is rebuilt
from the zoo.  Floats are written with Python's shortest round-trip repr,
so save/load is lossless.  Subsystem indices are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import zoo
from .model import CurrentSpec, JumpChannel, LindbladModel, Reservoir
from .tensor_ops import TensorSpace

FORMAT = "qtkur-model/1"


class ModelFormatError(ValueError):
    """Malformed model document; the message names the offending field."""


@dataclass
class ModelDocument:
    model: LindbladModel
    currents: list[CurrentSpec] = field(default_factory=list)
    family: str | None = None
    params: Any = None


def _encode_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _decode_matrix(data, where: str, d: int) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: expected a {d}x{d} array of [re, im] pairs ({exc})") from None
    if arr.shape != (d, d, 2):
        raise ModelFormatError(f"{where}: expected shape ({d}, {d}, 2), got {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_dict(
    model: LindbladModel,
    currents: list[CurrentSpec] | None = None,
    family: str | None = None,
    params: Any = None,
) -> dict:
    doc = {
        "format": FORMAT,
        "dims": list(model.space.dims),
        "hamiltonian": _encode_matrix(model.hamiltonian),
        "reservoirs": [{"id": r.id, "beta": r.beta, "mu": r.mu} for r in model.reservoirs.values()],
        "channels": [
            {
                "id": ch.id,
                "subsystem": ch.subsystem,
                "reservoir": ch.reservoir,
                "delta_s": ch.delta_s,
                "reverse_id": ch.reverse_id,
                "operator": _encode_matrix(ch.operator),
            }
            for ch in model.channels
        ],
        "currents": [{"name": c.name, "weights": dict(c.weights)} for c in currents or []],
    }
    if family is not None:
        doc["family"] = family
        if params is not None:
            doc["params"] = zoo.params_to_dict(params)
    return doc


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelFormatError(f"{where}: expected a number, got {v!r}")
    return float(v)


def model_from_dict(doc: dict) -> ModelDocument:
    if not isinstance(doc, dict):
        raise ModelFormatError("top level: expected an object")
    fmt = doc.get("format")
    if fmt != FORMAT:
        raise ModelFormatError(f"format: expected {FORMAT!r}, got {fmt!r}")
    family = doc.get("family")
    params = None
    if family is not None:
        if family not in zoo.FAMILIES:
            raise ModelFormatError(f"family: unknown family {family!r}")
        try:
            params = zoo.params_from_dict(family, doc.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"params: {exc}") from None
    if "channels" not in doc:
        if family is None:
            raise ModelFormatError("channels: missing field (and no family to rebuild from)")
        model, cur = zoo.build(family, params)
        currents = [cur] + _decode_currents(doc.get("currents", []))
        return ModelDocument(model, currents, family, params)
    dims = _require(doc, "dims", "top level")
    try:
        space = TensorSpace(dims)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"dims: {exc}") from None
    d = space.total_dim
    h = _decode_matrix(_require(doc, "hamiltonian", "top level"), "hamiltonian", d)
    reservoirs = []
    for i, r in enumerate(doc.get("reservoirs", [])):
        where = f"reservoirs[{i}]"
        try:
            reservoirs.append(Reservoir(str(_require(r, "id", where)), _num(_require(r, "beta", where), where + ".beta"),
                                        _num(r.get("mu", 0.0), where + ".mu")))
        except ValueError as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
    channels = []
    for i, ch in enumerate(_require(doc, "channels", "top level")):
        where = f"channels[{i}]"
        sub = _require(ch, "subsystem", where)
        if isinstance(sub, bool) or not isinstance(sub, int) or not 0 <= sub < space.n_subsystems:
            raise ModelFormatError(f"{where}.subsystem: expected an index in [0, {space.n_subsystems}), got {sub!r}")
        op = _decode_matrix(_require(ch, "operator", where), where + ".operator", d)
        channels.append(JumpChannel(
            str(_require(ch, "id", where)),
            sub,
            ch.get("reservoir"),
            op,
            _num(ch.get("delta_s", 0.0), where + ".delta_s"),
            ch.get("reverse_id"),
        ))
    try:
        model = LindbladModel(space, h, channels, reservoirs)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    return ModelDocument(model, _decode_currents(doc.get("currents", [])), family, params)


def _decode_currents(items) -> list[CurrentSpec]:
    out = []
    for i, c in enumerate(items):
        where = f"currents[{i}]"
        w = _require(c, "weights", where)
        if not isinstance(w, dict):
            raise ModelFormatError(f"{where}.weights: expected an object")
        out.append(CurrentSpec(str(_require(c, "name", where)), {k: _num(v, f"{where}.weights.{k}") for k, v in w.items()}))
    return out


def save_model(path: str | Path, model: LindbladModel, currents=None, family=None, params=None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, currents, family, params), fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path) -> ModelDocument:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(doc)
