"""Fisher-Bures, Wigner-Yanase and Kubo-Mori information matrices.

Each matrix is assembled from three blocks laid out as::

    [[ I(theta)        I(theta, phi) ],
     [ I(theta, phi)^T I(phi)        ]]

with rows and columns ordered ``theta_1..theta_J, phi_1..phi_K``. Entry
``(i, J + j)`` of the off-diagonal block always pairs ``G_i`` with ``H_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError
from .gradients import acomm, comm, real_part, tr
from .state import EqbmState, phi_channel, psi_channel

Kind = Literal["FB", "WY", "KM"]
KINDS: tuple[Kind, ...] = ("FB", "WY", "KM")
BLOCKS = ("thth", "phph", "thph")

ENTRY_IMAG_TOL = 1e-9
SYM_TOL = 1e-9
PSD_SLACK = -1e-8


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    kind: str
    J: int
    K: int
    M: np.ndarray

    def __post_init__(self):
        n = self.J + self.K
        if self.M.shape != (n, n):
            raise ValueError(f"matrix shape {self.M.shape} does not match J+K={n}")

    @classmethod
    def from_blocks(cls, kind: str, thth: np.ndarray, phph: np.ndarray, thph: np.ndarray) -> "InfoMatrix":
        J, K = thth.shape[0], phph.shape[0]
        M = np.zeros((J + K, J + K))
        M[:J, :J] = thth
        M[J:, J:] = phph
        M[:J, J:] = thph
        M[J:, :J] = thph.T
        return cls(kind, J, K, M)

    @property
    def thth(self) -> np.ndarray:
        return self.M[: self.J, : self.J]

    @property
    def phph(self) -> np.ndarray:
        return self.M[self.J :, self.J :]

    @property
    def thph(self) -> np.ndarray:
        return self.M[: self.J, self.J :]

    @property
    def phth(self) -> np.ndarray:
        return self.M[self.J :, : self.J]

    def block(self, name: str) -> np.ndarray:
        return {"thth": self.thth, "phph": self.phph, "thph": self.thph, "phth": self.phth}[name]

    def entry(self, block: str, i: int, j: int) -> float:
        return float(self.block(block)[i, j])

    def asymmetry(self) -> float:
        return float(np.abs(self.M - self.M.T).max()) if self.M.size else 0.0

    def min_eig(self) -> float:
        if not self.M.size:
            return 0.0
        return float(np.linalg.eigvalsh((self.M + self.M.T) / 2)[0])

    def check(self, slack: float = PSD_SLACK) -> "InfoMatrix":
        """Raise if the matrix is asymmetric or indefinite beyond tolerance."""
        if self.asymmetry() > SYM_TOL:
            raise DomainError(f"{self.kind} matrix asymmetric by {self.asymmetry():.3e}")
        if self.min_eig() < slack:
            raise DomainError(f"{self.kind} matrix has eigenvalue {self.min_eig():.3e} < {slack}")
        return self

    def restrict(self, mask: np.ndarray) -> np.ndarray:
        idx = np.flatnonzero(mask)
        return self.M[np.ix_(idx, idx)]


def _re(z: complex, what: str, scale: float = 1.0) -> float:
    return real_part(z, what, tol=ENTRY_IMAG_TOL, scale=scale)


def _g_norm(state: EqbmState) -> float:
    """``||theta||_1``, a bound on ``||G||`` for entries with an explicit G factor."""
    return float(np.abs(state.theta).sum())


def _mean_products(state: EqbmState) -> np.ndarray:
    means = np.array([state.expect_rho(g) for g in state.G_terms])
    return np.outer(means, means)


def fb_matrix(state: EqbmState) -> InfoMatrix:
    rho, G = state.rho, state.G
    PG = [phi_channel(state, g) for g in state.G_terms]
    PH = [psi_channel(state, h, adjoint=True) for h in state.H_terms]
    PPH = [phi_channel(state, x) for x in PH]
    J, K = state.J, state.K
    gn = _g_norm(state)

    thth = np.array([[_re(0.5 * tr(rho, acomm(PG[i], PG[j])), "FB theta") for j in range(J)] for i in range(J)])
    thth -= _mean_products(state)
    phph = np.array(
        [[_re(tr(rho, comm(comm(PH[j], G), PPH[i])), "FB phi", gn) for j in range(K)] for i in range(K)]
    )
    thph = np.array(
        [[_re(1j * tr(rho, comm(PG[i], PH[j])), "FB theta-phi") for j in range(K)] for i in range(J)]
    ).reshape(J, K)
    return InfoMatrix.from_blocks("FB", thth, phph, thph)


def wy_matrix(state: EqbmState) -> InfoMatrix:
    rho, s = state.rho, state.sqrt_rho
    PG = [phi_channel(state, g, half=True) for g in state.G_terms]
    PH = [psi_channel(state, h, adjoint=True) for h in state.H_terms]
    J, K = state.J, state.K

    def thth_entry(i: int, j: int) -> float:
        a = 0.5 * tr(PG[i] @ s, PG[j] @ s)
        b = 0.25 * tr(rho, acomm(PG[i], PG[j]))
        return _re(a + b, "WY theta")

    def phph_entry(i: int, j: int) -> float:
        a = -8 * tr(PH[j] @ s, PH[i] @ s)
        b = 4 * tr(rho, acomm(PH[i], PH[j]))
        return _re(a + b, "WY phi")

    thth = np.array([[thth_entry(i, j) for j in range(J)] for i in range(J)]) - _mean_products(state)
    phph = np.array([[phph_entry(i, j) for j in range(K)] for i in range(K)])
    thph = np.array(
        [[_re(1j * tr(rho, comm(PG[i], PH[j])), "WY theta-phi") for j in range(K)] for i in range(J)]
    ).reshape(J, K)
    return InfoMatrix.from_blocks("WY", thth, phph, thph)


def wy_phph_commutator_form(state: EqbmState) -> np.ndarray:
    """Alternative ``-4 Tr[[X_i, sqrt rho][X_j, sqrt rho]]`` form of the phi block."""
    s = state.sqrt_rho
    C = [comm(psi_channel(state, h, adjoint=True), s) for h in state.H_terms]
    K = state.K
    return np.array([[_re(-4 * tr(C[i], C[j]), "WY phi (commutator form)") for j in range(K)] for i in range(K)])


def km_matrix(state: EqbmState) -> InfoMatrix:
    rho, G = state.rho, state.G
    Gt = state.G_terms
    PG = [phi_channel(state, g) for g in Gt]
    PH = [psi_channel(state, h, adjoint=True) for h in state.H_terms]
    J, K = state.J, state.K
    gn = _g_norm(state)

    thth = np.array([[_re(0.5 * tr(rho, acomm(Gt[i], PG[j])), "KM theta") for j in range(J)] for i in range(J)])
    thth -= _mean_products(state)
    phph = np.array(
        [[_re(tr(rho, comm(comm(PH[j], G), PH[i])), "KM phi", gn) for j in range(K)] for i in range(K)]
    )
    thph = np.array(
        [[_re(0.5j * tr(rho, acomm(PG[i], comm(G, PH[j]))), "KM theta-phi", gn) for j in range(K)] for i in range(J)]
    ).reshape(J, K)
    return InfoMatrix.from_blocks("KM", thth, phph, thph)


_BUILDERS = {"FB": fb_matrix, "WY": wy_matrix, "KM": km_matrix}


def info_matrix(state: EqbmState, kind: str) -> InfoMatrix:
    try:
        return _BUILDERS[kind.upper()](state)
    except KeyError:
        raise ValueError(f"unknown metric kind {kind!r}; expected one of {KINDS}") from None
