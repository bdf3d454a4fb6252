"""Independent reference computations used to validate the analytic formulas.

State derivatives come from divided differences of ``exp`` in the
eigenbases of G and H, divergences from eigenvalues and singular values, and
information matrices either from the spectral weight formulas or from
finite-difference Hessians of divergences. None of these touch the averaging
channels. The one exception is :func:`purified_derivatives`, a closed form
that is itself checked against finite differences of the purified vector.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, DomainError
from .linalg import EigSystem, check_hermitian, eigh, gibbs_weights
from .metrics import InfoMatrix
from .pauli import ParamHamiltonian
from .state import EqbmState, canonical_purification, phi_channel, psi_channel, resolve

DEGEN_REL = 1e-9
DIVERGENCES = ("relent", "-2lnF", "-2lnF_H")


# --- divergences ------------------------------------------------------------


def _pd_eig(M: np.ndarray, name: str) -> EigSystem:
    check_hermitian(M, name, tol=1e-10)
    E = eigh(M)
    if E.values[0] <= 0:
        raise DomainError(f"{name} is not positive definite (min eigenvalue {E.values[0]:.3e})")
    return E


def _sqrt(E: EigSystem) -> np.ndarray:
    return (E.vectors * np.sqrt(E.values)) @ E.vectors.conj().T


def uhlmann_fidelity(omega: np.ndarray, tau: np.ndarray) -> float:
    """``||sqrt(omega) sqrt(tau)||_1^2`` via singular values."""
    a, b = _sqrt(_pd_eig(omega, "omega")), _sqrt(_pd_eig(tau, "tau"))
    return float(np.linalg.svd(a @ b, compute_uv=False).sum() ** 2)


def holevo_fidelity(omega: np.ndarray, tau: np.ndarray) -> float:
    """``(Tr[sqrt(omega) sqrt(tau)])^2``."""
    a, b = _sqrt(_pd_eig(omega, "omega")), _sqrt(_pd_eig(tau, "tau"))
    return float(np.real(np.einsum("ij,ji->", a, b)) ** 2)


def relative_entropy(omega: np.ndarray, tau: np.ndarray) -> float:
    Ew, Et = _pd_eig(omega, "omega"), _pd_eig(tau, "tau")
    ln_t = (Et.vectors * np.log(Et.values)) @ Et.vectors.conj().T
    first = float(np.sum(Ew.values * np.log(Ew.values)))
    return first - float(np.real(np.einsum("ij,ji->", omega, ln_t)))


def divergence(kind: str, omega: np.ndarray, tau: np.ndarray) -> float:
    if kind == "relent":
        return relative_entropy(omega, tau)
    if kind == "-2lnF":
        return -2.0 * np.log(uhlmann_fidelity(omega, tau))
    if kind == "-2lnF_H":
        return -2.0 * np.log(holevo_fidelity(omega, tau))
    raise ContractViolation(f"unknown divergence {kind!r}; expected one of {DIVERGENCES}")


# Each metric is the Hessian, at coinciding arguments, of one divergence.
# The factor 2 in front of -ln F and -ln F_H is folded into the names.
HESSIAN_DIVERGENCE = {"FB": "-2lnF", "WY": "-2lnF_H", "KM": "relent"}


# --- state derivatives by divided differences -------------------------------


def _divided_difference(x: np.ndarray, f: Callable, df: Callable) -> np.ndarray:
    dx = x[:, None] - x[None, :]
    fx = f(x)
    close = np.abs(dx) < DEGEN_REL * max(1.0, np.abs(x).max())
    safe = np.where(close, 1.0, dx)
    mid = (x[:, None] + x[None, :]) / 2
    return np.where(close, df(mid), (fx[:, None] - fx[None, :]) / safe)


def omega_derivatives(state: EqbmState) -> list[np.ndarray]:
    """``d omega / d gamma_i`` for all J + K parameters, without the channels."""
    mu, V = state.eigG.values, state.eigG.vectors
    shift = mu[0]
    boltz = np.exp(-(mu - shift))
    s = boltz.sum()
    ddexp = _divided_difference(
        mu, lambda x: np.exp(-(x - shift)) / s, lambda x: -np.exp(-(x - shift)) / s
    )
    U, rho = state.U, state.rho
    out = []
    for g in state.G_terms:
        # ddexp already carries the sign of d e^{-x}; d lnZ = Tr[d e^{-G}] / Z.
        d_unnorm = V @ (ddexp * (V.conj().T @ g @ V)) @ V.conj().T
        d_rho = d_unnorm - rho * np.real(np.trace(d_unnorm))
        out.append(U @ d_rho @ U.conj().T)

    nu, W = state.eigH.values, state.eigH.vectors
    ddU = _divided_difference(nu, lambda x: np.exp(-1j * x), lambda x: -1j * np.exp(-1j * x))
    for h in state.H_terms:
        dU = W @ (ddU * (W.conj().T @ h @ W)) @ W.conj().T
        out.append(dU @ rho @ U.conj().T + U @ rho @ dU.conj().T)
    return out


# --- spectral information matrices ------------------------------------------


def spectral_weights(lam: np.ndarray, kind: str) -> np.ndarray:
    lk, ll = lam[:, None], lam[None, :]
    if kind == "FB":
        return 2.0 / (lk + ll)
    if kind == "WY":
        return 4.0 / (np.sqrt(lk) + np.sqrt(ll)) ** 2
    if kind == "KM":
        close = np.abs(lk - ll) < DEGEN_REL * np.maximum(lk, ll)
        diff = np.where(close, 1.0, lk - ll)
        return np.where(close, 2.0 / (lk + ll), (np.log(lk) - np.log(ll)) / diff)
    raise ContractViolation(f"unknown metric kind {kind!r}")


def spectral_info(state: EqbmState, kind: str) -> InfoMatrix:
    """``sum_{kl} c(l_k, l_l) <k|d_i omega|l><l|d_j omega|k>`` in the omega eigenbasis."""
    kind = kind.upper()
    lam = gibbs_weights(state.eigG.values)
    if lam.min() <= 0:
        raise DomainError("spectral weights need a full-rank state; some Gibbs weights underflow to 0")
    basis = state.U @ state.eigG.vectors
    c = spectral_weights(lam, kind)
    D = np.array([basis.conj().T @ d @ basis for d in omega_derivatives(state)])
    M = np.real(np.einsum("kl,akl,blk->ab", c, D, D))
    J = state.J
    return InfoMatrix(kind, J, state.K, M)


# --- finite-difference Hessians of divergences ------------------------------


def hessian_info(
    G_model: ParamHamiltonian,
    H_model: ParamHamiltonian,
    theta: Sequence[float],
    phi: Sequence[float],
    kind: str,
    h: float = 1e-3,
) -> InfoMatrix:
    """Second-order central differences of ``eps -> D(sigma(gamma) || sigma(gamma + eps))``."""
    if not 1e-4 <= h <= 1e-2:
        raise ContractViolation("finite-difference step must lie in [1e-4, 1e-2]")
    kind = kind.upper()
    div = HESSIAN_DIVERGENCE[kind]
    theta, phi = np.asarray(theta, float), np.asarray(phi, float)
    J = theta.size
    gamma = np.concatenate([theta, phi])
    n = gamma.size
    base = resolve(G_model, H_model, theta, phi).omega

    cache: dict[tuple, float] = {}

    def f(shift: tuple) -> float:
        if shift not in cache:
            g = gamma + h * np.array(shift, dtype=float)
            cache[shift] = divergence(div, base, resolve(G_model, H_model, g[:J], g[J:]).omega)
        return cache[shift]

    M = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            def e(si: int, sj: int) -> tuple:
                v = [0] * n
                v[i] += si
                v[j] += sj
                return tuple(v)

            val = (f(e(1, 1)) - f(e(1, -1)) - f(e(-1, 1)) + f(e(-1, -1))) / (4 * h * h)
            M[i, j] = M[j, i] = val
    return InfoMatrix(kind, J, phi.size, M)


# --- pure-state Fisher-Bures and the purified family ------------------------


def pure_fb(
    family: Callable[[np.ndarray], np.ndarray],
    gamma: Sequence[float],
    derivs: Sequence[np.ndarray] | None = None,
    h: float = 1e-6,
) -> np.ndarray:
    """``4 Re[<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>]``.

    Derivatives default to central differences of the state vector.
    """
    gamma = np.asarray(gamma, dtype=float)
    psi = family(gamma)
    if abs(np.vdot(psi, psi).real - 1) > 1e-10:
        raise ContractViolation("family must produce unit vectors")
    if derivs is None:
        derivs = []
        for i in range(gamma.size):
            e = np.zeros_like(gamma)
            e[i] = h
            derivs.append((family(gamma + e) - family(gamma - e)) / (2 * h))
    D = np.array(derivs)
    overlap = D.conj() @ psi  # <d_i psi|psi>
    gram = D.conj() @ D.T  # <d_i psi|d_j psi>
    return 4 * np.real(gram - np.outer(overlap, overlap.conj()))


def purified_family(
    G_model: ParamHamiltonian, H_model: ParamHamiltonian, J: int
) -> Callable[[np.ndarray], np.ndarray]:
    """``gamma -> (sqrt(omega(gamma)) ⊗ I)|Gamma>``."""

    def family(gamma: np.ndarray) -> np.ndarray:
        return canonical_purification(resolve(G_model, H_model, gamma[:J], gamma[J:]))

    return family


def purified_derivatives(state: EqbmState) -> list[np.ndarray]:
    """Closed-form derivatives of the purified vector.

    theta_j: ``1/2 <G_j> psi - 1/4 (U {P_j, sqrt rho} U^dag ⊗ I)|Gamma>``
    with ``P_j`` the half-generator tent average of G_j; phi_k:
    ``i ([sqrt omega, Psi(H_k)] ⊗ I)|Gamma>``.
    """
    U, s = state.U, state.sqrt_rho
    psi = canonical_purification(state)
    out = []
    for g in state.G_terms:
        P = phi_channel(state, g, half=True)
        M = U @ (P @ s + s @ P) @ U.conj().T
        out.append(0.5 * state.expect_rho(g) * psi - 0.25 * M.reshape(-1))
    so = state.sqrt_omega
    for hk in state.H_terms:
        X = psi_channel(state, hk)
        out.append((1j * (so @ X - X @ so)).reshape(-1))
    return out
