"""State derivatives, objectives and their analytic gradients.

Two objectives are supported:

* energy, ``L = Tr[O omega]`` for a Hermitian observable O;
* relative entropy to a fixed positive-definite target eta, written as
  ``Tr[eta ln eta] + Tr[G eta(phi)] + ln Z`` with
  ``eta(phi) = e^{iH} eta e^{-iH}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ContractViolation, DomainError
from .linalg import check_hermitian, eigh
from .state import EqbmState, phi_channel, psi_channel

IMAG_TOL = 1e-10

Which = Literal["theta", "phi"]


def real_part(z: complex, what: str, tol: float = IMAG_TOL, scale: float = 1.0) -> float:
    """Drop the imaginary part of a trace after checking it is round-off.

    ``scale`` bounds the operands' norms; round-off in a commutator trace grows
    with it even when the trace itself is near zero.
    """
    z = complex(z)
    if abs(z.imag) > tol * max(1.0, abs(z.real), scale):
        raise DomainError(f"{what}: imaginary residue {z.imag:.3e} exceeds {tol:.0e}")
    return z.real


def tr(A: np.ndarray, B: np.ndarray) -> complex:
    """``Tr[A B]`` without forming the product."""
    return complex(np.einsum("ij,ji->", A, B))


def acomm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B + B @ A


def comm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


@dataclass(frozen=True)
class GradVector:
    dtheta: np.ndarray
    dphi: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.dtheta)) and np.all(np.isfinite(self.dphi))):
            raise DomainError("gradient has non-finite entries")

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.dtheta, self.dphi])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat))


@dataclass(frozen=True, eq=False)
class GenModTarget:
    """Positive-definite target state with ``Tr[eta ln eta]`` cached."""

    eta: np.ndarray
    neg_entropy: float

    @classmethod
    def from_matrix(cls, eta: np.ndarray) -> "GenModTarget":
        eta = np.asarray(eta, dtype=complex)
        check_hermitian(eta, "target state", tol=1e-10)
        E = eigh(eta)
        if abs(E.values.sum() - 1) > 1e-10:
            raise DomainError(f"target trace is {E.values.sum():.12g}, expected 1")
        if E.values[0] <= 1e-12:
            raise DomainError(
                f"target is not positive definite (min eigenvalue {E.values[0]:.3e})"
            )
        return cls(eta, float(np.sum(E.values * np.log(E.values))))

    def evolved(self, state: EqbmState) -> np.ndarray:
        """``e^{iH} eta e^{-iH}``, i.e. ``U^dagger eta U`` with U = e^{-iH}."""
        return state.U.conj().T @ self.eta @ state.U


def _index(state: EqbmState, which: Which, idx: int) -> None:
    size = {"theta": state.J, "phi": state.K}.get(which)
    if size is None:
        raise ContractViolation(f"unknown parameter group {which!r}")
    if not 0 <= idx < size:
        raise ContractViolation(f"{which} index {idx} out of range [0, {size})")


def d_omega(state: EqbmState, which: Which, idx: int) -> np.ndarray:
    """Partial derivative of omega with respect to theta_idx or phi_idx."""
    _index(state, which, idx)
    om = state.omega
    if which == "theta":
        Gj = state.G_terms[idx]
        evolved = state.U @ phi_channel(state, Gj) @ state.U.conj().T
        return -0.5 * acomm(evolved, om) + om * state.expect_rho(Gj)
    Hk = state.H_terms[idx]
    return 1j * comm(om, psi_channel(state, Hk))


def gsee_value(state: EqbmState, O: np.ndarray) -> float:
    return real_part(tr(O, state.omega), "energy")


def gsee_grad(state: EqbmState, O: np.ndarray) -> GradVector:
    check_hermitian(O, "observable", tol=1e-10)
    U = state.U
    O_back = U.conj().T @ O @ U
    o_mean = gsee_value(state, O)
    dth = np.empty(state.J)
    for j, Gj in enumerate(state.G_terms):
        first = -0.5 * tr(state.rho, acomm(O_back, phi_channel(state, Gj)))
        dth[j] = real_part(first, f"d theta_{j}") + o_mean * state.expect_rho(Gj)
    dph = np.empty(state.K)
    for k, Hk in enumerate(state.H_terms):
        val = 1j * tr(state.omega, comm(psi_channel(state, Hk), O))
        dph[k] = real_part(val, f"d phi_{k}")
    return GradVector(dth, dph)


def relent_value(state: EqbmState, target: GenModTarget) -> float:
    eta_phi = target.evolved(state)
    return target.neg_entropy + real_part(tr(state.G, eta_phi), "Tr[G eta(phi)]") + state.lnZ


def relent_direct(state: EqbmState, target: GenModTarget) -> float:
    """``Tr[eta (ln eta - ln omega)]`` evaluated literally, for cross-checking."""
    E = eigh(target.eta)
    ln_eta = (E.vectors * np.log(E.values)) @ E.vectors.conj().T
    ln_rho = -state.G - state.lnZ * np.eye(state.dim)
    ln_omega = state.U @ ln_rho @ state.U.conj().T
    return real_part(tr(target.eta, ln_eta - ln_omega), "relative entropy")


def genmod_grad(state: EqbmState, target: GenModTarget) -> GradVector:
    eta_phi = target.evolved(state)
    dth = np.array(
        [real_part(tr(Gj, eta_phi), "<G_j>") - state.expect_rho(Gj) for Gj in state.G_terms]
    )
    dph = np.empty(state.K)
    g_norm = float(np.abs(state.theta).sum())  # bounds ||G|| for unit-norm Pauli terms
    for k, Hk in enumerate(state.H_terms):
        val = 1j * tr(eta_phi, comm(state.G, psi_channel(state, Hk, adjoint=True)))
        dph[k] = real_part(val, f"d phi_{k}", scale=g_norm)
    return GradVector(dth, dph)
