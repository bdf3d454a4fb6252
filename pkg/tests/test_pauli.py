import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqbm.errors import ContractViolation
from eqbm.pauli import (
    MAX_QUBITS,
    ParamHamiltonian,
    PauliString,
    all_strings,
    assemble,
    pauli_dense,
    random_model,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)
SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}

pauli_strings = st.integers(1, 4).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))


def test_single_z():
    np.testing.assert_array_equal(pauli_dense("Z"), np.diag([1, -1]))


def test_two_qubit_identity():
    np.testing.assert_array_equal(pauli_dense("II"), np.eye(4))


def test_xy_entrywise_table():
    # X ⊗ Y written out by hand: rows/cols indexed by (q0 q1) with q0 the left factor.
    expected = np.array(
        [
            [0, 0, 0, -1j],
            [0, 0, 1j, 0],
            [0, -1j, 0, 0],
            [1j, 0, 0, 0],
        ]
    )
    np.testing.assert_array_equal(pauli_dense("XY"), expected)


def test_qubit_zero_is_leftmost_factor():
    # Z on qubit 0 flips the sign of the upper half of the basis (most significant bit).
    np.testing.assert_array_equal(np.diag(pauli_dense("ZI")).real, [1, 1, -1, -1])
    np.testing.assert_array_equal(np.diag(pauli_dense("IZ")).real, [1, -1, 1, -1])


@pytest.mark.parametrize("bad", ["", "XA", "xz", "Q"])
def test_invalid_letters_rejected(bad):
    with pytest.raises(ContractViolation):
        PauliString(bad)


def test_too_many_qubits_rejected():
    with pytest.raises(ContractViolation):
        PauliString("Z" * (MAX_QUBITS + 1))


@given(pauli_strings)
def test_dense_is_hermitian_unitary_involution(letters):
    P = pauli_dense(letters)
    d = P.shape[0]
    np.testing.assert_array_equal(P, P.conj().T)
    np.testing.assert_array_equal(P @ P, np.eye(d))


@given(pauli_strings)
def test_trace_zero_unless_identity(letters):
    tr = np.trace(pauli_dense(letters))
    assert tr == (2 ** len(letters) if set(letters) == {"I"} else 0)


@given(pauli_strings)
def test_matches_explicit_kron(letters):
    M = np.array([[1.0 + 0j]])
    for c in letters:
        M = np.kron(M, SINGLE[c])
    np.testing.assert_array_equal(pauli_dense(letters), M)


@given(pauli_strings)
def test_transpose_sign(letters):
    P = pauli_dense(letters)
    np.testing.assert_array_equal(P.T, PauliString(letters).transpose_sign() * P)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(st.text("IXYZ", min_size=n, max_size=n), st.text("IXYZ", min_size=n, max_size=n))))
def test_commutes_with_matches_matrices(pair):
    a, b = pair
    A, B = pauli_dense(a), pauli_dense(b)
    commute = np.array_equal(A @ B, B @ A)
    assert PauliString(a).commutes_with(PauliString(b)) == commute


def test_dense_is_read_only():
    with pytest.raises(ValueError):
        pauli_dense("X")[0, 0] = 5


def test_assemble_single_term():
    h = ParamHamiltonian(1, (PauliString("Z"),))
    np.testing.assert_array_equal(assemble(h, [0.7]), np.diag([0.7, -0.7]))


def test_assemble_empty_is_zero():
    h = ParamHamiltonian(2, ())
    np.testing.assert_array_equal(assemble(h, []), np.zeros((4, 4)))


def test_assemble_two_terms_against_brute_force():
    h = ParamHamiltonian(2, (PauliString("XX"), PauliString("ZI")))
    expected = np.zeros((4, 4), dtype=complex)
    for r, c in itertools.product(range(4), repeat=2):
        r0, r1, c0, c1 = r >> 1, r & 1, c >> 1, c & 1
        expected[r, c] = 0.3 * X[r0, c0] * X[r1, c1] - 1.1 * Z[r0, c0] * I2[r1, c1]
    np.testing.assert_allclose(assemble(h, [0.3, -1.1]), expected, atol=0)


def test_assemble_length_mismatch():
    h = ParamHamiltonian(1, (PauliString("Z"),))
    with pytest.raises(ContractViolation):
        assemble(h, [1.0, 2.0])


def test_mixed_qubit_counts_rejected():
    with pytest.raises(ContractViolation):
        ParamHamiltonian(2, (PauliString("Z"),))


coeffs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3)


@given(coeffs)
def test_assemble_exactly_hermitian(c):
    h = ParamHamiltonian(2, (PauliString("XY"), PauliString("YZ"), PauliString("ZX")))
    A = assemble(h, c)
    np.testing.assert_array_equal(A, A.conj().T)


@given(coeffs, coeffs, st.floats(-3, 3), st.floats(-3, 3))
def test_assemble_linear(c1, c2, a, b):
    h = ParamHamiltonian(2, (PauliString("XY"), PauliString("YI"), PauliString("ZZ")))
    lhs = assemble(h, a * np.array(c1) + b * np.array(c2))
    rhs = a * assemble(h, c1) + b * assemble(h, c2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_transposed_terms():
    h = ParamHamiltonian(2, (PauliString("XY"), PauliString("ZI")))
    T = h.transposed()
    np.testing.assert_array_equal(T.dense(0), pauli_dense("XY").T)
    np.testing.assert_array_equal(T.assemble([0.5, 2.0]), assemble(h, [0.5, 2.0]).T)


def test_all_strings_count():
    assert len(all_strings(2)) == 15
    assert len(all_strings(2, include_identity=True)) == 16


def test_random_model_deterministic():
    a, b = random_model(3, 4, 3, seed=11), random_model(3, 4, 3, seed=11)
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])
    np.testing.assert_array_equal(a[3], b[3])


def test_random_model_single_qubit_anticommutes():
    for seed in range(10):
        G, H, _, _ = random_model(1, 1, 1, seed=seed)
        g, h = G.terms[0], H.terms[0]
        assert g != h
        A, B = pauli_dense(g), pauli_dense(h)
        np.testing.assert_array_equal(A @ B, -B @ A)


def test_random_model_postconditions():
    G, H, th, ph = random_model(3, 5, 4, coeff_scale=0.8, seed=7)
    strings = [t.letters for t in G.terms + H.terms]
    assert len(strings) == len(set(strings)) == 9
    assert all(not PauliString(s).is_identity for s in strings)
    assert np.all(np.abs(th) <= 0.8) and np.all(np.abs(ph) <= 0.8)


@pytest.mark.parametrize("seed", range(15))
def test_random_model_has_noncommuting_pair(seed):
    n = 1 + seed % 3
    J, K = (1, 1) if n == 1 else (1 + seed % 4, 1 + seed % 3)
    G, H, _, _ = random_model(n, J, K, seed=seed)
    assert any(not g.commutes_with(h) for g in G.terms for h in H.terms)


def test_random_model_prefers_low_weight():
    weights = []
    for seed in range(30):
        G, H, _, _ = random_model(4, 3, 3, seed=seed)
        weights += [t.weight for t in G.terms + H.terms]
    assert np.mean(np.array(weights) <= 2) > 0.5


@pytest.mark.parametrize("n,J,K", [(1, 2, 2), (1, 3, 1), (2, 10, 6)])
def test_random_model_too_many_strings(n, J, K):
    with pytest.raises(ContractViolation):
        random_model(n, J, K)


@pytest.mark.parametrize("J,K", [(0, 1), (1, 0)])
def test_random_model_needs_terms(J, K):
    with pytest.raises(ContractViolation):
        random_model(2, J, K)
