"""Hermitian eigendecomposition and matrix functions.

Every matrix function in the package goes through :func:`eigh`, so e^{-G},
sqrt(rho), ln(rho) and the channel factors all share one basis.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np

from .errors import ContractViolation, DomainError

RECON_TOL = 1e-10
HERM_TOL = 1e-12


@dataclass(frozen=True)
class EigSystem:
    values: np.ndarray  # ascending, real
    vectors: np.ndarray  # unitary, eigenvectors in columns

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def to_eigbasis(self, X: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ X @ self.vectors

    def from_eigbasis(self, X: np.ndarray) -> np.ndarray:
        return self.vectors @ X @ self.vectors.conj().T


def hermitian_defect(A: np.ndarray) -> float:
    """Relative asymmetry ``||A - A^H|| / max(1, ||A||)`` (Frobenius)."""
    return float(np.linalg.norm(A - A.conj().T) / max(1.0, np.linalg.norm(A)))


def check_hermitian(A: np.ndarray, name: str = "matrix", tol: float = HERM_TOL) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {A.shape}")
    d = hermitian_defect(A)
    if d > tol:
        raise ContractViolation(f"{name} is not Hermitian (relative defect {d:.3e})")


def eigh(A: np.ndarray) -> EigSystem:
    A = np.asarray(A)
    check_hermitian(A, "eigh input")
    w, V = np.linalg.eigh(A)
    return EigSystem(values=w, vectors=V)


def func_of_hermitian(E: EigSystem, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``V diag(f(w)) V^H``; raises DomainError if f is not finite on the spectrum."""
    with np.errstate(all="ignore"):
        fw = np.asarray(f(E.values))
    bad = ~np.isfinite(fw)
    if np.any(bad):
        raise DomainError(
            f"function is not finite at eigenvalue {E.values[np.argmax(bad)]!r}"
        )
    return (E.vectors * fw) @ E.vectors.conj().T


def log_pos(w: np.ndarray) -> np.ndarray:
    """Natural log that yields nan (not -inf or a warning) off the positive axis."""
    out = np.full_like(w, np.nan, dtype=float)
    pos = w > 0
    out[pos] = np.log(w[pos])
    return out


def sqrt_pos(w: np.ndarray) -> np.ndarray:
    """Square root that rejects negative eigenvalues beyond round-off."""
    out = np.sqrt(np.clip(w, 0.0, None))
    out[w < -RECON_TOL] = np.nan
    return out


def thermal(G: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Gibbs state of G: returns ``(rho, Z, lnZ)`` with lnZ via log-sum-exp."""
    return thermal_from_eig(eigh(G))


def thermal_from_eig(E: EigSystem) -> tuple[np.ndarray, float, float]:
    w = E.values
    shift = w[0]
    boltz = np.exp(-(w - shift))
    s = boltz.sum()
    lnZ = float(-shift + np.log(s))
    rho = (E.vectors * (boltz / s)) @ E.vectors.conj().T
    Z = math.exp(lnZ) if lnZ < 700 else math.inf  # lnZ stays exact either way
    return rho, Z, lnZ


def gibbs_weights(values: np.ndarray) -> np.ndarray:
    b = np.exp(-(values - values[0]))
    return b / b.sum()


def expm_herm_batch(E: EigSystem, scale: complex, times: np.ndarray) -> np.ndarray:
    """Stack of ``exp(scale * t * A)`` for each t, shape ``(len(times), d, d)``."""
    times = np.asarray(times, dtype=float)
    phases = np.exp(scale * np.outer(times, E.values))
    return np.einsum("ik,tk,jk->tij", E.vectors, phases, E.vectors.conj(), optimize=True)


def partial_trace_second(M: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Trace out the right factor of a ``(d1*d2)``-dimensional operator."""
    return np.einsum("ajbj->ab", M.reshape(d1, d2, d1, d2))


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (A + A.conj().T) / 2


def random_density(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Full-rank thermal state of a random Hermitian matrix."""
    rho, _, _ = thermal(random_hermitian(d, rng, scale))
    return rho
