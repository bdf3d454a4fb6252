"""Evolved thermal states, their averaging channels and purifications.

The two channels are evaluated in closed form. In the eigenbasis of the
generator, element (k, l) of the input is multiplied by

* ``f(D) = tanh(D/2) / (D/2)`` for the heavy-tailed average over the real
  line (D = mu_k - mu_l, eigenvalues of G), and
* ``g(D) = (1 - exp(-iD)) / (iD)`` for the uniform average over [0, 1]
  (D = nu_a - nu_b, eigenvalues of H); the adjoint channel uses conj(g).

Both factors are the Fourier transforms of the corresponding time densities.
The test-suite checks them against Monte-Carlo and quadrature averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .linalg import (
    EigSystem,
    check_hermitian,
    eigh,
    expm_herm_batch,
    func_of_hermitian,
    gibbs_weights,
    sqrt_pos,
    thermal_from_eig,
)
from .pauli import ParamHamiltonian, assemble

SMALL_GAP = 1e-6
HPT_HORIZON = 100.0


# --- spectral factors -------------------------------------------------------


def tent_factor(delta: np.ndarray) -> np.ndarray:
    """``tanh(D/2)/(D/2)`` with the even series ``1 - D^2/12`` near zero."""
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) < SMALL_GAP
    safe = np.where(small, 1.0, delta)
    return np.where(small, 1.0 - delta**2 / 12.0, np.tanh(safe / 2) / (safe / 2))


def box_factor(delta: np.ndarray) -> np.ndarray:
    """``(1 - e^{-iD})/(iD)`` with the series ``1 - iD/2 - D^2/6`` near zero."""
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) < SMALL_GAP
    safe = np.where(small, 1.0, delta)
    exact = (1 - np.exp(-1j * safe)) / (1j * safe)
    series = 1 - 0.5j * delta - delta**2 / 6.0
    return np.where(small, series, exact)


def _gaps(values: np.ndarray) -> np.ndarray:
    return values[:, None] - values[None, :]


# --- resolved state ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EqbmState:
    """All cached data for one parameter point ``(theta, phi)``."""

    G_model: ParamHamiltonian
    H_model: ParamHamiltonian
    theta: np.ndarray
    phi: np.ndarray
    G: np.ndarray
    H: np.ndarray
    eigG: EigSystem
    eigH: EigSystem
    rho: np.ndarray
    Z: float
    lnZ: float
    U: np.ndarray
    omega: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.G_model.n_qubits

    @property
    def J(self) -> int:
        return len(self.G_model)

    @property
    def K(self) -> int:
        return len(self.H_model)

    @property
    def probs(self) -> np.ndarray:
        """Eigenvalues of rho, ordered like ``eigG.values`` (descending weight)."""
        return gibbs_weights(self.eigG.values)

    @property
    def G_terms(self) -> list[np.ndarray]:
        return self.G_model.dense_terms()

    @property
    def H_terms(self) -> list[np.ndarray]:
        return self.H_model.dense_terms()

    @property
    def sqrt_rho(self) -> np.ndarray:
        if "sqrt_rho" not in self._cache:
            self._cache["sqrt_rho"] = func_of_hermitian(
                EigSystem(self.probs, self.eigG.vectors), np.sqrt
            )
        return self._cache["sqrt_rho"]

    @property
    def sqrt_omega(self) -> np.ndarray:
        if "sqrt_omega" not in self._cache:
            self._cache["sqrt_omega"] = self.U @ self.sqrt_rho @ self.U.conj().T
        return self._cache["sqrt_omega"]

    def expect_rho(self, X: np.ndarray) -> float:
        return float(np.real(np.trace(self.rho @ X)))

    def expect_omega(self, X: np.ndarray) -> float:
        return float(np.real(np.trace(self.omega @ X)))


def resolve(
    G_model: ParamHamiltonian,
    H_model: ParamHamiltonian,
    theta: Sequence[float],
    phi: Sequence[float],
) -> EqbmState:
    if G_model.n_qubits != H_model.n_qubits:
        raise ContractViolation("G and H families act on different qubit counts")
    theta = np.array(theta, dtype=float)
    phi = np.array(phi, dtype=float)
    theta.setflags(write=False)
    phi.setflags(write=False)
    G = assemble(G_model, theta)
    H = assemble(H_model, phi)
    eigG, eigH = eigh(G), eigh(H)
    rho, Z, lnZ = thermal_from_eig(eigG)
    U = func_of_hermitian(eigH, lambda w: np.exp(-1j * w))
    omega = U @ rho @ U.conj().T
    return EqbmState(G_model, H_model, theta, phi, G, H, eigG, eigH, rho, Z, lnZ, U, omega)


# --- channels ---------------------------------------------------------------


def _check_input(state: EqbmState, X: np.ndarray) -> None:
    if X.shape != (state.dim, state.dim):
        raise ContractViolation(f"operator has shape {X.shape}, state dimension is {state.dim}")


def phi_channel(state: EqbmState, X: np.ndarray, half: bool = False) -> np.ndarray:
    """Tent-weighted time average of ``e^{-iGt} X e^{iGt}`` (G -> G/2 if half)."""
    _check_input(state, X)
    mu = state.eigG.values * (0.5 if half else 1.0)
    Xt = state.eigG.to_eigbasis(X) * tent_factor(_gaps(mu))
    return state.eigG.from_eigbasis(Xt)


def psi_channel(state: EqbmState, X: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Uniform average over t in [0,1] of ``e^{-iHt} X e^{iHt}`` (or its adjoint)."""
    _check_input(state, X)
    g = box_factor(_gaps(state.eigH.values))
    if adjoint:
        g = g.conj()
    return state.eigH.from_eigbasis(state.eigH.to_eigbasis(X) * g)


def phi_channel_on(eig: EigSystem, X: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Same as :func:`phi_channel` for an arbitrary generator ``scale * A``."""
    return eig.from_eigbasis(eig.to_eigbasis(X) * tent_factor(_gaps(scale * eig.values)))


# --- the tent density -------------------------------------------------------


def hpt_density(t: np.ndarray) -> np.ndarray:
    """``(2/pi) ln|coth(pi t / 2)|``; diverges logarithmically at t = 0."""
    a = np.abs(np.asarray(t, dtype=float)) * np.pi / 2
    with np.errstate(divide="ignore", over="ignore"):
        # ln coth(a) = -ln tanh(a); log1p form keeps the tail accurate
        # (expm1 overflows to inf far out, where the density is 0 anyway).
        val = -np.log(np.tanh(a))
        tail = a > 1.0
        val = np.where(tail, np.log1p(2 / np.expm1(2 * np.where(tail, a, 1.0))), val)
    return 2 / np.pi * val


def _hpt_mass_near_zero(a: float) -> float:
    """Mass of p on [0, a] for tiny a: p ≈ (2/pi)(ln(2/(pi t)) + (pi t)^2/12)."""
    return 2 / np.pi * (a * (1 + np.log(2 / (np.pi * a))) + (np.pi**2) * a**3 / 36)


@lru_cache(maxsize=None)
def _half_line_rule(order: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights integrating ``p(t) h(t)`` over t > 0 for smooth h.

    Graded Gauss-Legendre cells (ratio 1/4) resolve the log singularity at
    0, unit-length cells cover [1, 16], and the tiny leftover piece
    [0, 1e-14] is lumped into one node.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [1e-14]
    while edges[-1] * 4 < 1.0:
        edges.append(edges[-1] * 4)
    edges += list(np.arange(1.0, 17.0))
    nodes = [np.array([edges[0] / 2])]
    weights = [np.array([_hpt_mass_near_zero(edges[0])])]
    for a, b in zip(edges[:-1], edges[1:]):
        t = (b - a) / 2 * x + (a + b) / 2
        nodes.append(t)
        weights.append((b - a) / 2 * w * hpt_density(t))
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=None)
def hpt_rule(order: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric quadrature rule for expectations under p(t); weights sum to 1."""
    t, w = _half_line_rule(order)
    nodes = np.concatenate([-t[::-1], t])
    # The half-line rule integrates p to 1/2 up to ~1e-15; normalizing
    # removes that residue so constants are reproduced exactly.
    weights = np.concatenate([w[::-1], w]) / (2 * w.sum())
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def uniform_rule(order: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule for expectations under the uniform law on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def _inverse_cdf_table(n_grid: int = 6000) -> tuple[np.ndarray, np.ndarray]:
    """Grid ``(F, t)`` of the half-line CDF of |t|, with F(0)=0, F(HORIZON)=1."""
    t = np.concatenate([[0.0], np.geomspace(1e-12, HPT_HORIZON, n_grid)])
    x, w = np.polynomial.legendre.leggauss(12)
    a, b = t[1:-1], t[2:]
    mid, half = (a + b) / 2, (b - a) / 2
    cell = (half[:, None] * w[None, :] * hpt_density(mid[:, None] + half[:, None] * x[None, :])).sum(1)
    cdf = np.concatenate([[0.0, _hpt_mass_near_zero(t[1])], _hpt_mass_near_zero(t[1]) + np.cumsum(cell)])
    cdf = 2 * cdf  # |t| has twice the half-line density
    cdf /= cdf[-1]
    return cdf, t


class HptSampler:
    """Inverse-CDF sampler for the tent density, truncated at ``|t| = 100``.

    One instance owns one generator; derive independent instances through
    :meth:`spawn` rather than sharing one across threads.
    """

    def __init__(self, seed: int | np.random.SeedSequence | None = 0):
        self._seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.rng = np.random.Generator(np.random.Philox(self._seq))
        self._cdf, self._grid = _inverse_cdf_table()

    def spawn(self, n: int) -> list["HptSampler"]:
        return [HptSampler(s) for s in self._seq.spawn(n)]

    def sample(self, size: int | None = None) -> np.ndarray | float:
        return draw_hpt(self.rng, size)

    def cdf(self, t: np.ndarray) -> np.ndarray:
        """CDF of the signed variable, from the same table the sampler inverts."""
        t = np.asarray(t, dtype=float)
        half = np.interp(np.abs(t), self._grid, self._cdf)
        return 0.5 + np.sign(t) * half / 2


def draw_hpt(rng: np.random.Generator, size: int | None = None) -> np.ndarray | float:
    cdf, grid = _inverse_cdf_table()
    n = 1 if size is None else size
    u = rng.random(n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    out = sign * np.interp(u, cdf, grid)
    return float(out[0]) if size is None else out


def sample_hpt(sampler: HptSampler) -> float:
    return sampler.sample()


# --- purification -----------------------------------------------------------


def canonical_purification(source: EqbmState | np.ndarray, evolved: bool = True) -> np.ndarray:
    """Vector ``(sqrt(sigma) ⊗ I)|Gamma>`` with ``|Gamma> = sum_k |k>|k>``.

    ``source`` is a resolved state (sigma = omega, or rho when ``evolved`` is
    False) or a density matrix. Component ``(a, b)`` sits at index
    ``a * d + b`` and equals ``sqrt(sigma)[a, b]``.
    """
    if isinstance(source, EqbmState):
        root = source.sqrt_omega if evolved else source.sqrt_rho
    else:
        check_hermitian(source, "density matrix", tol=1e-10)
        root = func_of_hermitian(eigh(source), sqrt_pos)
    return root.reshape(-1).copy()


def thermofield_double(state: EqbmState) -> np.ndarray:
    """``Z^{-1/2} sum_k e^{-g_k/2} |phi_k>|phi_k^*>`` over the eigenvectors of G."""
    V = state.eigG.vectors
    amp = np.sqrt(state.probs)
    return np.einsum("k,ak,bk->ab", amp, V, V.conj()).reshape(-1)


def evolve_batch(eig: EigSystem, sign: float, times: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``exp(sign * i * scale * t * A)`` for each t (A given by its EigSystem)."""
    return expm_herm_batch(eig, 1j * sign * scale, times)
