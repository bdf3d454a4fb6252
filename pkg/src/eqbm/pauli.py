"""Pauli strings and real linear combinations of them.

Qubit order: letter 0 of a string is the leftmost (most significant)
Kronecker factor, so ``"XZ"`` is ``X ⊗ Z`` and acts on basis index
``2 * b0 + b1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce
from itertools import product
from typing import Sequence

import numpy as np

from .errors import ContractViolation

MAX_QUBITS = 10

_SINGLE = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        if not isinstance(self.letters, str) or not self.letters:
            raise ContractViolation("a Pauli string needs at least one letter")
        bad = set(self.letters) - set("IXYZ")
        if bad:
            raise ContractViolation(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")
        if len(self.letters) > MAX_QUBITS:
            raise ContractViolation(f"at most {MAX_QUBITS} qubits are supported")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def is_identity(self) -> bool:
        return self.weight == 0

    def transpose_sign(self) -> int:
        """Sign s with ``P^T = s P``; only Y is antisymmetric."""
        return -1 if self.letters.count("Y") % 2 else 1

    def commutes_with(self, other: "PauliString") -> bool:
        if other.n_qubits != self.n_qubits:
            raise ContractViolation("Pauli strings act on different qubit counts")
        clashes = sum(
            a != "I" and b != "I" and a != b for a, b in zip(self.letters, other.letters)
        )
        return clashes % 2 == 0

    def __str__(self) -> str:
        return self.letters


@lru_cache(maxsize=4096)
def _dense_cached(letters: str) -> np.ndarray:
    mat = reduce(np.kron, (_SINGLE[c] for c in letters))
    mat.setflags(write=False)
    return mat


def pauli_dense(p: PauliString | str) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of a Pauli string (read-only array)."""
    if isinstance(p, str):
        p = PauliString(p)
    return _dense_cached(p.letters)


@dataclass(frozen=True)
class ParamHamiltonian:
    """A family ``c -> sum_j c_j P_j`` of Hermitian operators."""

    n_qubits: int
    terms: tuple[PauliString, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.n_qubits, (int, np.integer)) or self.n_qubits < 1:
            raise ContractViolation("n_qubits must be a positive integer")
        terms = tuple(PauliString(t) if isinstance(t, str) else t for t in self.terms)
        for t in terms:
            if t.n_qubits != self.n_qubits:
                raise ContractViolation(
                    f"term {t} acts on {t.n_qubits} qubits, model has {self.n_qubits}"
                )
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def __len__(self) -> int:
        return len(self.terms)

    def dense_terms(self) -> list[np.ndarray]:
        return [pauli_dense(t) for t in self.terms]

    def transposed(self) -> "TransposedTerms":
        return TransposedTerms(self)


@dataclass(frozen=True)
class TransposedTerms:
    """Helper giving ``P_j^T`` for each term via the Y-sign rule."""

    base: ParamHamiltonian

    def dense(self, j: int) -> np.ndarray:
        t = self.base.terms[j]
        return t.transpose_sign() * pauli_dense(t)

    def assemble(self, c: Sequence[float]) -> np.ndarray:
        signs = [t.transpose_sign() for t in self.base.terms]
        return assemble(self.base, np.asarray(c, dtype=float) * np.asarray(signs, dtype=float))


def assemble(h: ParamHamiltonian, c: Sequence[float]) -> np.ndarray:
    """Return ``sum_j c_j P_j`` as a dense Hermitian matrix.

    Pauli matrices have entries in {0, ±1, ±i} and are exactly Hermitian, so a
    real-weighted sum is exactly Hermitian too; no symmetrization is applied.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.shape[0] != len(h.terms):
        raise ContractViolation(
            f"coefficient vector has length {c.size}, model has {len(h.terms)} terms"
        )
    if not np.all(np.isfinite(c)):
        raise ContractViolation("coefficients must be finite")
    out = np.zeros((h.dim, h.dim), dtype=complex)
    for cj, t in zip(c, h.terms):
        out += cj * pauli_dense(t)
    return out


def all_strings(n_qubits: int, include_identity: bool = False) -> list[PauliString]:
    strings = ["".join(s) for s in product("IXYZ", repeat=n_qubits)]
    if not include_identity:
        strings = [s for s in strings if set(s) != {"I"}]
    return [PauliString(s) for s in strings]


def random_model(
    n_qubits: int,
    J: int,
    K: int,
    coeff_scale: float = 1.0,
    seed: int = 0,
) -> tuple[ParamHamiltonian, ParamHamiltonian, np.ndarray, np.ndarray]:
    """Draw a random pair of families ``(G, H)`` and starting coefficients.

    Strings are distinct across both families and low weights are favoured
    (weight ``w`` gets relative probability ``4^{-(w-1)}`` per string, on top
    of the combinatorial count). At least one ``(G_j, H_k)`` pair is
    guaranteed not to commute, so the unitary part is never trivial.
    """
    if n_qubits < 1 or J < 1 or K < 1:
        raise ContractViolation("n_qubits, J and K must all be at least 1")
    if n_qubits > MAX_QUBITS:
        raise ContractViolation(f"at most {MAX_QUBITS} qubits are supported")
    pool = all_strings(n_qubits)
    if J + K > len(pool):
        raise ContractViolation(
            f"{J + K} distinct strings requested, only {len(pool)} exist on {n_qubits} qubits"
        )
    rng = np.random.default_rng(seed)
    w = np.array([4.0 ** -(p.weight - 1) for p in pool])
    order = rng.choice(len(pool), size=len(pool), replace=False, p=w / w.sum())
    picked = [pool[i] for i in order[: J + K]]
    g_terms, h_terms = picked[:J], picked[J:]

    if all(g.commutes_with(h) for g in g_terms for h in h_terms):
        # Put a string that anticommutes with G_0 into the last H slot. Prefer
        # an unused one; otherwise every such string already sits in G, so
        # swap one of them over (it cannot be G_0 itself).
        used = set(picked)
        spare = [p for p in (pool[i] for i in order) if p not in used]
        partner = next((p for p in spare if not p.commutes_with(g_terms[0])), None)
        if partner is not None:
            h_terms[-1] = partner
        else:
            idx = next(i for i, g in enumerate(g_terms) if not g.commutes_with(g_terms[0]))
            g_terms[idx], h_terms[-1] = h_terms[-1], g_terms[idx]

    theta0 = rng.uniform(-coeff_scale, coeff_scale, size=J)
    phi0 = rng.uniform(-coeff_scale, coeff_scale, size=K)
    return (
        ParamHamiltonian(n_qubits, tuple(g_terms)),
        ParamHamiltonian(n_qubits, tuple(h_terms)),
        theta0,
        phi0,
    )
