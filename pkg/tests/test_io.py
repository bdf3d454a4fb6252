import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqbm import io as eio
from eqbm.errors import ContractViolation
from eqbm.pauli import random_model

ROOT = Path(__file__).resolve().parents[1]


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=8))
def test_floats_round_trip_exactly(values):
    back = json.loads(eio.dumps({"v": values}))["v"]
    assert back == values
    assert all(isinstance(b, float) for b in back)


def test_non_finite_values_become_null():
    assert json.loads(eio.dumps([1.0, float("nan"), float("inf")])) == [1.0, None, None]


def test_numpy_values_serialize():
    doc = {"a": np.arange(3), "b": np.float64(0.1), "c": np.bool_(True), "d": np.eye(2)}
    assert json.loads(eio.dumps(doc)) == {"a": [0, 1, 2], "b": 0.1, "c": True, "d": [[1.0, 0.0], [0.0, 1.0]]}
    with pytest.raises(TypeError):
        eio.dumps({"x": object()})


def test_model_document_round_trip(tmp_path):
    G, H, th, ph = random_model(3, 4, 2, seed=5)
    doc = eio.model_to_doc(G, H, th, ph, seed=5)
    path = tmp_path / "m.json"
    eio.write_doc(doc, path)
    G2, H2, th2, ph2, doc2 = eio.load_model(path)
    assert G2 == G and H2 == H
    np.testing.assert_array_equal(th2, th)
    np.testing.assert_array_equal(ph2, ph)
    assert eio.model_hash(doc2) == eio.model_hash(doc)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d["terms"].append({"pauli": "XQ", "role": "G"}),
        lambda d: d["terms"][0].update(role="F"),
        lambda d: d.update(n_qubits=11),
        lambda d: d.pop("phi"),
    ],
)
def test_model_schema_rejects(mutate):
    G, H, th, ph = random_model(2, 2, 1, seed=0)
    doc = eio.model_to_doc(G, H, th, ph)
    mutate(doc)
    with pytest.raises(ContractViolation):
        eio.model_from_doc(doc)


def test_model_semantic_checks():
    doc = {"n_qubits": 2, "terms": [{"pauli": "XYZ", "role": "G"}], "theta": [0.1], "phi": []}
    with pytest.raises(ContractViolation, match="letters"):
        eio.model_from_doc(doc)
    doc = {"n_qubits": 1, "terms": [{"pauli": "X", "role": "G"}], "theta": [0.1, 0.2], "phi": []}
    with pytest.raises(ContractViolation, match="lengths"):
        eio.model_from_doc(doc)


def test_bad_json_is_a_contract_violation(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ContractViolation):
        eio.read_doc(p)


@pytest.mark.parametrize(
    "doc, ok",
    [
        ({"kind": "model"}, True),
        ({"kind": "thermal", "seed": 3, "scale": 0.5}, True),
        ({"kind": "thermal", "seed": 3, "scale": 0}, False),
        ({"kind": "matrix", "real": [[1, 0], [0, 0]]}, True),
        ({"kind": "in-family", "theta": [1]}, False),
        ({"kind": "other"}, False),
    ],
)
def test_target_schema(doc, ok):
    if ok:
        eio.validate(doc, "target")
    else:
        with pytest.raises(ContractViolation):
            eio.validate(doc, "target")


@pytest.mark.parametrize("name", sorted(eio.SCHEMAS))
def test_published_schemas_match_code(name):
    published = json.loads((ROOT / "docs" / "schemas" / f"{name}.schema.json").read_text())
    assert published == eio.SCHEMAS[name]


@pytest.mark.parametrize("path", sorted((ROOT / "docs" / "examples").glob("train_*.json")))
def test_example_configs_validate(path):
    eio.validate(eio.read_doc(path), "train")


def test_header_fields():
    h = eio.header({"a": 1}, {"x": 2})
    assert h["artifact"] == "eqbm" and h["flags"] == {"x": 2} and len(h["model_hash"]) == 64
    assert eio.header(None, {})["model_hash"] is None


def test_matrix_doc_drops_zero_imaginary_part():
    assert "imag" not in eio.matrix_doc(np.eye(2, dtype=complex))
    assert eio.matrix_doc(np.array([[0, 1j], [-1j, 0]]))["imag"] == [[0.0, 1.0], [-1.0, 0.0]]
