"""Document formats: model files, training configs and result records.

All documents are JSON. Floats are written with 17 significant digits so a
read-back reproduces them bit for bit; non-finite values become ``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .errors import ContractViolation
from .pauli import ParamHamiltonian, PauliString

PAULI_PATTERN = "^[IXYZ]+$"

MODEL_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eqbm model",
    "type": "object",
    "additionalProperties": False,
    "required": ["n_qubits", "terms", "theta", "phi"],
    "properties": {
        "n_qubits": {"type": "integer", "minimum": 1, "maximum": 10},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["pauli", "role"],
                "properties": {
                    "pauli": {"type": "string", "pattern": PAULI_PATTERN},
                    "role": {"enum": ["G", "H"]},
                },
            },
        },
        "theta": {"type": "array", "items": {"type": "number"}},
        "phi": {"type": "array", "items": {"type": "number"}},
        "seed": {"type": ["integer", "null"]},
    },
}

TARGET_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eqbm generative target",
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"const": "model"}},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "theta", "phi"],
            "properties": {
                "kind": {"const": "in-family"},
                "theta": {"type": "array", "items": {"type": "number"}},
                "phi": {"type": "array", "items": {"type": "number"}},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "seed"],
            "properties": {
                "kind": {"const": "thermal"},
                "seed": {"type": "integer"},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "real"],
            "properties": {
                "kind": {"const": "matrix"},
                "real": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "imag": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
            },
        },
    ],
}

TRAIN_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eqbm training run",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "task"],
    "properties": {
        "model": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "theta": {"type": "array", "items": {"type": "number"}},
        "phi": {"type": "array", "items": {"type": "number"}},
        "task": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "observable"],
                    "properties": {"kind": {"const": "gsee"}, "observable": {"type": "string"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "target"],
                    "properties": {"kind": {"const": "genmod"}, "target": {"type": "object"}},
                },
            ]
        },
        "method": {"enum": ["gd", "ngd-fb", "ngd-wy", "ngd-km"]},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "iters": {"type": "integer", "minimum": 1},
        "ridge": {"type": ["number", "null"], "minimum": 0},
        "freeze": {"enum": ["none", "theta", "phi"]},
        "grad_source": {"enum": ["exact", "shots"]},
        "shots": {
            "type": "object",
            "additionalProperties": False,
            "required": ["eps", "delta"],
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "seed": {"type": "integer"},
        "decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "grad_tol": {"type": "number", "minimum": 0},
        "line_search": {"type": "boolean"},
        "probe_mu": {"type": "boolean"},
        "plot": {"type": "boolean"},
    },
}

SCHEMAS = {"model": MODEL_SCHEMA, "target": TARGET_SCHEMA, "train": TRAIN_SCHEMA}


# --- serialization ------------------------------------------------------------


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    return s if any(c in s for c in ".enN") else s + ".0"


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with 17-significant-digit floats and stable key order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_doc(doc: Any, path: str | Path | None) -> str:
    text = dumps(doc) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)
    return text


def read_doc(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}: not valid JSON ({exc})") from None


def validate(doc: Any, schema_name: str) -> None:
    try:
        jsonschema.validate(doc, SCHEMAS[schema_name])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ContractViolation(f"invalid {schema_name} document at {where}: {exc.message}") from None


# --- models -------------------------------------------------------------------


def model_to_doc(G: ParamHamiltonian, H: ParamHamiltonian, theta, phi, seed: int | None = None) -> dict:
    doc = {
        "n_qubits": G.n_qubits,
        "terms": [{"pauli": t.letters, "role": "G"} for t in G.terms]
        + [{"pauli": t.letters, "role": "H"} for t in H.terms],
        "theta": [float(x) for x in theta],
        "phi": [float(x) for x in phi],
    }
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def model_from_doc(doc: dict) -> tuple[ParamHamiltonian, ParamHamiltonian, np.ndarray, np.ndarray]:
    validate(doc, "model")
    n = doc["n_qubits"]
    g = [t["pauli"] for t in doc["terms"] if t["role"] == "G"]
    h = [t["pauli"] for t in doc["terms"] if t["role"] == "H"]
    for s in g + h:
        if len(s) != n:
            raise ContractViolation(f"term {s!r} has {len(s)} letters, model has {n} qubits")
    if len(doc["theta"]) != len(g) or len(doc["phi"]) != len(h):
        raise ContractViolation(
            f"theta/phi lengths ({len(doc['theta'])}, {len(doc['phi'])}) "
            f"do not match the G/H term counts ({len(g)}, {len(h)})"
        )
    G = ParamHamiltonian(n, tuple(PauliString(s) for s in g))
    H = ParamHamiltonian(n, tuple(PauliString(s) for s in h))
    return G, H, np.array(doc["theta"], float), np.array(doc["phi"], float)


def load_model(path: str | Path):
    doc = read_doc(path)
    return (*model_from_doc(doc), doc)


def model_hash(doc: dict) -> str:
    canon = dumps(doc, indent=0).replace("\n", "")
    return hashlib.sha256(canon.encode()).hexdigest()


def header(model_doc: dict | None, flags: dict) -> dict:
    return {
        "artifact": "eqbm",
        "version": __version__,
        "model_hash": model_hash(model_doc) if model_doc is not None else None,
        "flags": flags,
    }


def matrix_doc(M: np.ndarray) -> dict:
    M = np.asarray(M)
    out = {"real": np.real(M).tolist()}
    if np.iscomplexobj(M) and np.any(np.imag(M) != 0):
        out["imag"] = np.imag(M).tolist()
    return out
