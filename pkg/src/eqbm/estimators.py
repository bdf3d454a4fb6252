"""Shot-level simulation of the Hadamard-test estimation circuits.

A :class:`Circuit` is a register made of ``a`` control qubits (0, 1 or 2)
followed by a system register. The control qubits are prepared in
``S^s H |c>`` and, at the end, rotated by H and read out in the computational
basis. The system observable has eigenvalues ±1. One shot yields
``(-1)^{#ones among control bits} * lambda``.

Between preparation and readout every gate is block diagonal in the control
qubits. Each gate is either uncontrolled or controlled by one control qubit.
So the register density matrix is stored as blocks ``rho[a, :, b, :]``
indexed by control bit patterns.

Gates are grouped into *stages*. A stage is a product of gates sharing one
random time, drawn from the tent density, from the uniform law on [0, 1], or
absent. Shots are simulated exactly with the sampled times. Only the readout
is random, drawn from the Born rule.

Exact circuit means use the same simulator. Each stage is averaged with a
quadrature rule for its time law. This equals averaging the fixed-time mean
over all times jointly, because the register state is linear in each stage's
channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import CapabilityError, ContractViolation, DegenerateModelError
from .gradients import GenModTarget, acomm, comm, real_part, tr
from .linalg import EigSystem, eigh
from .pauli import MAX_QUBITS, PauliString, pauli_dense
from .state import (
    EqbmState,
    canonical_purification,
    draw_hpt,
    hpt_rule,
    phi_channel,
    psi_channel,
    uniform_rule,
)

Law = Literal["fixed", "hpt", "uniform"]

_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j])


# --- budgets ----------------------------------------------------------------


def hoeffding_shots(eps: float, delta: float) -> int:
    """Shots so that a mean of [-1, 1] samples is eps-close w.p. >= 1 - delta."""
    if not eps > 0:
        raise ContractViolation("precision eps must be positive")
    if not 0 < delta < 1:
        raise ContractViolation("failure probability delta must lie in (0, 1)")
    return max(1, math.ceil(2 * math.log(2 / delta) / eps**2))


@dataclass(frozen=True)
class ShotPlan:
    """Hoeffding budget for one unit-range term, plus the root seed."""

    eps: float
    delta: float
    N: int
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ContractViolation("shot count must be at least 1")
        if not self.eps > 0 or not 0 < self.delta < 1:
            raise ContractViolation("need eps > 0 and 0 < delta < 1")

    @classmethod
    def from_precision(cls, eps: float, delta: float, seed: int = 0) -> "ShotPlan":
        return cls(eps, delta, hoeffding_shots(eps, delta), seed)

    def split(self, weights: Sequence[float]) -> list["ShotPlan"]:
        """Per-term plans giving the weighted sum accuracy eps w.p. 1 - delta.

        Term m receives precision ``eps / (T |w_m|)`` and failure probability
        ``delta / T``. The union bound then covers the composite.
        """
        T = len(weights)
        return [
            ShotPlan.from_precision(self.eps / (T * abs(w)), self.delta / T, self.seed)
            for w in weights
        ]


@dataclass(frozen=True)
class ShotOutcome:
    estimate: float
    N_used: int
    scale: float
    raw_mean: float
    terms: tuple["ShotOutcome", ...] = ()
    label: str = ""
    eps: float | None = None  # accuracy bound attached to `estimate`

    def __post_init__(self):
        if not math.isclose(self.estimate, self.scale * self.raw_mean, rel_tol=1e-12, abs_tol=1e-15):
            raise ContractViolation("estimate must equal scale * raw_mean")


# --- circuit description ----------------------------------------------------

# A gate factory maps a vector of m times to an array broadcastable to
# (m, A, d, d): one d x d block per control pattern.
GateFactory = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Stage:
    law: Law
    gates: tuple[GateFactory, ...]
    label: str = ""

    def build(self, times: np.ndarray, n_patterns: int) -> np.ndarray:
        """Stage unitary blocks with shape (len(times), n_patterns, d, d)."""
        W = None
        for g in self.gates:
            blk = g(times)
            W = blk if W is None else blk @ W
        m, d = len(times), W.shape[-1]
        return np.broadcast_to(W, (m, n_patterns, d, d))


@dataclass(frozen=True, eq=False)
class Readout:
    """Observable chosen at random per shot: ``P(l) = probs[l]``, eigenvalues ±1."""

    probs: np.ndarray
    ops: tuple[np.ndarray, ...]
    scale: float = 1.0  # multiply the raw mean by this to undo the sampling

    @classmethod
    def single(cls, op: np.ndarray) -> "Readout":
        return cls(np.ones(1), (op,))


@dataclass(frozen=True, eq=False)
class Circuit:
    name: str
    ctrl_init: tuple[int, ...]
    s_gates: tuple[bool, ...]
    sigma: np.ndarray  # system-register input state
    stages: tuple[Stage, ...]
    readout: Readout
    target: float  # exact expectation of one shot, from closed-form channels
    weight: float = 1.0  # contribution of the raw mean to the composite
    meta: dict = field(default_factory=dict)

    @property
    def n_anc(self) -> int:
        return len(self.ctrl_init)

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def control_vector(self) -> np.ndarray:
        vec = np.ones(1, dtype=complex)
        for c, s in zip(self.ctrl_init, self.s_gates):
            q = _HAD[:, c].copy()
            if s:
                q = _S @ q
            vec = np.kron(vec, q)
        return vec

    def initial_register(self) -> np.ndarray:
        v = self.control_vector()
        return np.einsum("a,b,ij->aibj", v, v.conj(), self.sigma)


# --- gate factories ---------------------------------------------------------


def _patterns(n_anc: int) -> np.ndarray:
    """Bit table of shape (2^a, a); row p lists the bits of pattern p."""
    A = 2**n_anc
    return np.array([[(p >> (n_anc - 1 - q)) & 1 for q in range(n_anc)] for p in range(A)], dtype=int)


def evolve(eig: EigSystem, coeff: float, offset: float = 0.0) -> GateFactory:
    """``exp(i * coeff * (t + offset) * A)`` on the system, all patterns alike."""

    def gate(times: np.ndarray) -> np.ndarray:
        ph = np.exp(1j * coeff * np.outer(np.asarray(times) + offset, eig.values))
        W = np.einsum("ik,tk,jk->tij", eig.vectors, ph, eig.vectors.conj(), optimize=True)
        return W[:, None]

    return gate


def fixed(W: np.ndarray) -> GateFactory:
    W = np.asarray(W)[None, None]
    return lambda times: W


def controlled(U: np.ndarray, anc: int, n_anc: int) -> GateFactory:
    d = U.shape[0]
    bits = _patterns(n_anc)[:, anc]
    blocks = np.where(bits[:, None, None] == 1, U[None], np.eye(d)[None])
    blocks = blocks[None]
    return lambda times: blocks


# --- simulation ---------------------------------------------------------------


def _apply(W: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Batched ``rho_ab -> W_a rho_ab W_b^dagger`` on (m, A, d, A, d) registers."""
    X = np.einsum("maij,majbk->maibk", W, R, optimize=True)
    return np.einsum("maibl,mbkl->maibk", X, W.conj(), optimize=True)


def _average(W: np.ndarray, w: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``sum_i w_i W_i R W_i^dagger`` for a single register R of shape (A, d, A, d)."""
    X = np.einsum("maij,ajbk->maibk", W, R, optimize=True)
    return np.einsum("m,maibl,mbkl->aibk", w, X, W.conj(), optimize=True)


def _readout_blocks(circ: Circuit, R: np.ndarray) -> np.ndarray:
    """Diagonal blocks after the final Hadamards: shape (..., 2^a, d, d)."""
    Hn = np.ones((1, 1))
    for _ in range(circ.n_anc):
        Hn = np.kron(Hn, _HAD.real)
    return np.einsum("xa,...aibj,xb->...xij", Hn, R, Hn, optimize=True)


def _parity(n_anc: int) -> np.ndarray:
    return (-1.0) ** _patterns(n_anc).sum(axis=1)


def exact_mean(circ: Circuit) -> float:
    """Mean of one shot, with every random time averaged by quadrature."""
    R = circ.initial_register()
    A = R.shape[0]
    for st in circ.stages:
        if st.law == "fixed":
            R = _apply(st.build(np.zeros(1), A), R[None])[0]
        else:
            t, w = hpt_rule() if st.law == "hpt" else uniform_rule()
            R = _average(st.build(t, A), w, R)
    blocks = _readout_blocks(circ, R)
    par = _parity(circ.n_anc)
    val = 0.0
    for p, op in zip(circ.readout.probs, circ.readout.ops):
        val += p * np.real(np.einsum("x,xij,ji->", par, blocks, op))
    return float(val)


def _draw_times(law: Law, rng: np.random.Generator, n: int) -> np.ndarray:
    if law == "hpt":
        return draw_hpt(rng, n)
    if law == "uniform":
        return rng.random(n)
    return np.zeros(n)


def run_shots(circ: Circuit, n_shots: int, rng: np.random.Generator, chunk: int = 2048) -> np.ndarray:
    """Simulate ``n_shots`` shots and return the ±1 samples."""
    out = np.empty(n_shots)
    R0 = circ.initial_register()
    par = _parity(circ.n_anc)
    L = len(circ.readout.ops)
    cum = np.cumsum(circ.readout.probs)
    cum[-1] = 1.0
    for start in range(0, n_shots, chunk):
        m = min(chunk, n_shots - start)
        R = np.broadcast_to(R0, (m,) + R0.shape)
        for st in circ.stages:
            R = _apply(st.build(_draw_times(st.law, rng, m), R0.shape[0]), R)
        blocks = _readout_blocks(circ, R)  # (m, X, d, d)
        trace = np.real(np.einsum("mxii->mx", blocks))
        which = np.searchsorted(cum, rng.random(m), side="right") if L > 1 else np.zeros(m, int)
        ops = np.array(circ.readout.ops)[which]  # (m, d, d)
        expv = np.real(np.einsum("mxij,mji->mx", blocks, ops))
        # Joint Born distribution over (control pattern x, eigenvalue lambda).
        probs = np.stack([(trace + expv) / 2, (trace - expv) / 2], axis=-1)  # (m, X, 2)
        probs = np.clip(probs, 0.0, None).reshape(m, -1)
        probs /= probs.sum(axis=1, keepdims=True)
        pick = (np.cumsum(probs, axis=1) < rng.random(m)[:, None]).sum(axis=1)
        pick = np.minimum(pick, probs.shape[1] - 1)
        x, lam_idx = np.divmod(pick, 2)
        out[start : start + m] = par[x] * np.where(lam_idx == 0, 1.0, -1.0)
    return out


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def estimate_circuit(circ: Circuit, plan: ShotPlan, seed=None) -> ShotOutcome:
    samples = run_shots(circ, plan.N, _rng(plan.seed if seed is None else seed))
    raw = float(samples.mean())
    scale = circ.weight * circ.readout.scale
    return ShotOutcome(scale * raw, plan.N, scale, raw, label=circ.name, eps=abs(scale) * plan.eps)


def estimate_sum(
    circuits: Sequence[Circuit], plan: ShotPlan, allocation: str = "per-term", label: str = ""
) -> ShotOutcome:
    """Estimate ``sum_m weight_m * scale_m * mean_m`` term by term.

    ``allocation="per-term"`` gives every term the plan's own (eps, delta),
    following the algorithms' per-term budget; the attached bound is the
    term-summed ``sum |w_m| eps``. ``allocation="split"`` uses
    :meth:`ShotPlan.split` so the composite bound is the plan's eps.
    """
    weights = [c.weight * c.readout.scale for c in circuits]
    if allocation == "per-term":
        plans = [plan] * len(circuits)
    elif allocation == "split":
        plans = plan.split(weights)
    else:
        raise ContractViolation(f"unknown allocation {allocation!r}")
    seeds = np.random.SeedSequence(plan.seed).spawn(len(circuits))
    parts = tuple(estimate_circuit(c, p, seed=s) for c, p, s in zip(circuits, plans, seeds))
    total = float(sum(p.estimate for p in parts))
    eps = float(sum(p.eps for p in parts))
    return ShotOutcome(total, sum(p.N_used for p in parts), 1.0, total, parts, label, eps)


def composite_target(circuits: Sequence[Circuit]) -> float:
    return float(sum(c.weight * c.readout.scale * c.target for c in circuits))


# --- primitives ---------------------------------------------------------------

PrimitiveKind = Literal["anticomm", "comm", "nested_comm", "nested_acomm_comm"]

_PRIMITIVE_S = {
    "anticomm": (False,),
    "comm": (True,),
    "nested_comm": (True, True),
    "nested_acomm_comm": (False, True),
}


def _check_unitary_hermitian(U: np.ndarray, name: str) -> None:
    d = U.shape[0]
    if np.abs(U - U.conj().T).max() > 1e-10 or np.abs(U @ U - np.eye(d)).max() > 1e-10:
        raise ContractViolation(f"{name} must be Hermitian and unitary")


def primitive_circuit(
    kind: PrimitiveKind,
    rho: np.ndarray,
    U0: np.ndarray,
    obs: np.ndarray,
    U1: np.ndarray | None = None,
    ctrl_init: int | Sequence[int] = 1,
) -> Circuit:
    """Generalized Hadamard test as a :class:`Circuit` with fixed gates.

    One-shot expectations, ctrl in |1> (|0> flips the sign of the first two):

    * anticomm: ``-1/2 <{U0, obs}>``
    * comm: ``(i/2) <[U0, obs]>``
    * nested_comm: ``1/4 <[[U1, obs], U0]>``
    * nested_acomm_comm: ``(i/4) <{U0, [obs, U1]}>``
    """
    if kind not in _PRIMITIVE_S:
        raise ContractViolation(f"unknown primitive {kind!r}")
    s_gates = _PRIMITIVE_S[kind]
    n_anc = len(s_gates)
    ctrl = (ctrl_init,) * n_anc if isinstance(ctrl_init, (int, np.integer)) else tuple(ctrl_init)
    if len(ctrl) != n_anc:
        raise ContractViolation(f"{kind} needs {n_anc} control bit(s)")
    _check_unitary_hermitian(U0, "U0")
    gates = [controlled(U0, 0, n_anc)]
    if n_anc == 2:
        if U1 is None:
            raise ContractViolation(f"{kind} needs a second operator U1")
        _check_unitary_hermitian(U1, "U1")
        gates.append(controlled(U1, 1, n_anc))
    stage = Stage("fixed", tuple(gates), kind)
    circ = Circuit(kind, ctrl, s_gates, np.asarray(rho, complex), (stage,), Readout.single(obs), np.nan)
    return circ


def primitive_expectation(kind: PrimitiveKind, rho, U0, obs, U1=None, ctrl_init=1) -> float:
    """Closed-form one-shot mean of :func:`primitive` (ctrl |1> convention)."""
    if kind == "anticomm":
        val = -0.5 * tr(rho, acomm(U0, obs))
    elif kind == "comm":
        val = 0.5j * tr(rho, comm(U0, obs))
    elif kind == "nested_comm":
        val = 0.25 * tr(rho, comm(comm(U1, obs), U0))
    else:
        val = 0.25j * tr(rho, acomm(U0, comm(obs, U1)))
    bits = (ctrl_init,) if isinstance(ctrl_init, (int, np.integer)) else tuple(ctrl_init)
    # Starting a control in |0> instead of |1> flips that control's sign.
    flips = sum(1 - b for b in bits) % 2
    return real_part(val * (-1) ** flips, kind)


def primitive(
    kind: PrimitiveKind,
    rho: np.ndarray,
    U0: np.ndarray,
    obs: np.ndarray,
    U1: np.ndarray | None = None,
    ctrl_init: int | Sequence[int] = 1,
    rng: np.random.Generator | None = None,
    n_shots: int | None = None,
) -> float | np.ndarray:
    """Draw one signed sample (or ``n_shots`` of them) from a Hadamard test."""
    rng = rng if rng is not None else np.random.default_rng()
    circ = primitive_circuit(kind, rho, U0, obs, U1, ctrl_init)
    out = run_shots(circ, 1 if n_shots is None else n_shots, rng)
    return float(out[0]) if n_shots is None else out


# --- circuits of the gradient and metric estimators ----------------------------


@dataclass(frozen=True)
class PauliSum:
    terms: tuple[tuple[float, PauliString], ...]

    @classmethod
    def parse(cls, spec: str | Sequence[tuple[float, str]]) -> "PauliSum":
        """Accept ``"0.5*ZZ + -1.2*XI"`` style strings or (coeff, string) pairs."""
        if isinstance(spec, str):
            pairs = []
            for chunk in spec.replace(" ", "").split("+"):
                if not chunk:
                    continue
                coeff, _, letters = chunk.rpartition("*")
                pairs.append((float(coeff) if coeff else 1.0, letters))
            spec = pairs
        return cls(tuple((float(c), PauliString(p) if isinstance(p, str) else p) for c, p in spec))

    def dense(self) -> np.ndarray:
        return sum(c * pauli_dense(p) for c, p in self.terms)

    @property
    def n_qubits(self) -> int:
        return self.terms[0][1].n_qubits


def _g_norm(state: EqbmState) -> float:
    return float(np.abs(state.theta).sum())


def _g_readout(state: EqbmState) -> Readout:
    """Measure G(theta) by picking term l w.p. |theta_l| / ||theta||_1."""
    th = np.asarray(state.theta)
    norm1 = _g_norm(state)
    if norm1 == 0:
        raise DegenerateModelError("theta is zero, so G(theta) cannot be sampled term-wise")
    ops = tuple(np.sign(c) * g for c, g in zip(th, state.G_terms) if c != 0)
    probs = np.abs(th[th != 0]) / norm1
    return Readout(probs, ops, scale=norm1)


def _product_circuit(name: str, A: np.ndarray, B: np.ndarray, P: np.ndarray, Q: np.ndarray, weight: float) -> Circuit:
    """Two independent copies ``A ⊗ B`` with ``P ⊗ Q`` read out."""
    target = real_part(tr(A, P), name) * real_part(tr(B, Q), name)
    return Circuit(name, (), (), np.kron(A, B), (), Readout.single(np.kron(P, Q)), target, weight)


def gsee_theta_circuits(state: EqbmState, obs: PauliSum, j: int) -> list[Circuit]:
    Gj = state.G_terms[j]
    PGj = phi_channel(state, Gj)
    U, Ud = state.U, state.U.conj().T
    out = []
    for c, p in obs.terms:
        P = pauli_dense(p)
        target = real_part(-0.5 * tr(state.rho, acomm(PGj, Ud @ P @ U)), "gsee-theta-acomm")
        stages = (
            Stage("fixed", (controlled(Gj, 0, 1),), "C-G_j"),
            Stage("hpt", (evolve(state.eigG, -1.0),), "exp(-iGt)"),
            Stage("fixed", (fixed(U),), "exp(-iH)"),
        )
        out.append(Circuit(f"gsee-theta-acomm[{p}]", (1,), (False,), state.rho, stages, Readout.single(P), target, c))
        out.append(_product_circuit(f"product[{p}]", state.omega, state.rho, P, Gj, c))
    return out


def gsee_phi_circuits(state: EqbmState, obs: PauliSum, k: int) -> list[Circuit]:
    Hk = state.H_terms[k]
    PHk = psi_channel(state, Hk)
    out = []
    for c, p in obs.terms:
        P = pauli_dense(p)
        target = real_part(0.5j * tr(state.omega, comm(PHk, P)), "gsee-phi-comm")
        stage = Stage(
            "uniform",
            (evolve(state.eigH, 1.0), controlled(Hk, 0, 1), evolve(state.eigH, -1.0)),
            "e^{iHt}, C-H_k, e^{-iHt}",
        )
        out.append(Circuit(f"gsee-phi-comm[{p}]", (1,), (True,), state.omega, (stage,), Readout.single(P), target, 2 * c))
    return out


def genmod_phi_circuits(state: EqbmState, target: GenModTarget, k: int) -> list[Circuit]:
    Hk = state.H_terms[k]
    eta_phi = target.evolved(state)
    ro = _g_readout(state)
    val = real_part(0.5j * tr(eta_phi, comm(state.G, psi_channel(state, Hk, adjoint=True))), "genmod-phi-comm", scale=_g_norm(state))
    stage = Stage(
        "uniform",
        (evolve(state.eigH, -1.0, offset=-1.0), controlled(Hk, 0, 1), evolve(state.eigH, 1.0)),
        "e^{iH(1-t)} C-H_k e^{iHt}",
    )
    return [Circuit("genmod-phi-comm", (0,), (True,), target.eta, (stage,), ro, val / ro.scale, 2.0)]


def genmod_theta_circuits(state: EqbmState, target: GenModTarget, j: int) -> list[Circuit]:
    Gj = state.G_terms[j]
    Ud = state.U.conj().T
    a = real_part(tr(target.evolved(state), Gj), "<G_j>_eta(phi)")
    return [
        Circuit("eta(phi)", (), (), target.eta, (Stage("fixed", (fixed(Ud),), "e^{iH}"),), Readout.single(Gj), a, 1.0),
        Circuit("rho", (), (), state.rho, (), Readout.single(Gj), state.expect_rho(Gj), -1.0),
    ]


def _fb_circuits(state: EqbmState, block: str, i: int, j: int) -> list[Circuit]:
    rho, G = state.rho, state.G
    eG, eH = state.eigG, state.eigH
    Gt, Ht = state.G_terms, state.H_terms
    if block == "thth":
        val = real_part(0.5 * tr(rho, acomm(phi_channel(state, Gt[i]), phi_channel(state, Gt[j]))), "fb-thth-acomm")
        stages = (
            Stage("fixed", (controlled(Gt[i], 0, 1),), "C-G_i"),
            Stage("hpt", (evolve(eG, -1.0),), "e^{-iGt1}"),
            Stage("hpt", (evolve(eG, 1.0),), "e^{iGt2}"),
        )
        return [
            Circuit("fb-thth-acomm", (0,), (False,), rho, stages, Readout.single(Gt[j]), val, 1.0),
            _product_circuit("product", rho, rho, Gt[i], Gt[j], -1.0),
        ]
    if block == "phph":
        ro = _g_readout(state)
        PHi, PHj = psi_channel(state, Ht[i], adjoint=True), psi_channel(state, Ht[j], adjoint=True)
        val = real_part(0.25 * tr(rho, comm(comm(PHj, G), phi_channel(state, PHi))), "fb-phph-nested", scale=_g_norm(state))
        stages = (
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[i], 0, 2), evolve(eH, 1.0)), "U0"),
            Stage("hpt", (evolve(eG, -1.0),), "e^{-iGt2}"),
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 1, 2), evolve(eH, 1.0)), "U1"),
        )
        return [Circuit("fb-phph-nested", (1, 1), (True, True), rho, stages, ro, val / ro.scale, 4.0)]
    if block == "thph":
        val = real_part(0.5j * tr(rho, comm(phi_channel(state, Gt[i]), psi_channel(state, Ht[j], adjoint=True))), "fb-thph-comm")
        stages = (
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 0, 1), evolve(eH, 1.0)), "U"),
            Stage("hpt", (evolve(eG, 1.0),), "e^{iGt1}"),
        )
        return [Circuit("fb-thph-comm", (0,), (True,), rho, stages, Readout.single(Gt[i]), val, 2.0)]
    raise ContractViolation(f"unknown block {block!r}")


def _tfd_check(state: EqbmState) -> None:
    if 2 * state.n_qubits > MAX_QUBITS:
        raise CapabilityError(
            f"the purified register needs {2 * state.n_qubits} qubits; at most {MAX_QUBITS} are simulated"
        )


def _wy_circuits(state: EqbmState, block: str, i: int, j: int, purification: bool = True) -> list[Circuit]:
    rho, s = state.rho, state.sqrt_rho
    eG, eH = state.eigG, state.eigH
    Gt, Ht = state.G_terms, state.H_terms
    d = state.dim
    I = np.eye(d)
    if block in ("thth", "phph"):
        if not purification:
            raise CapabilityError("the first Wigner-Yanase term needs the purified (two-register) state")
        _tfd_check(state)
        psi = canonical_purification(state, evolved=False)
        tfd = np.outer(psi, psi.conj())
    if block == "thth":
        P = [phi_channel(state, g, half=True) for g in Gt]
        signs = [t.transpose_sign() for t in state.G_model.terms]
        GT = state.G_model.transposed().assemble(state.theta)
        eA = eigh(np.kron(G_half := 0.5 * state.G, I))
        eB = eigh(np.kron(I, 0.5 * GT))
        t1 = real_part(tr(P[i] @ s, P[j] @ s), "wy-thth-tfd")
        stages_a = (
            Stage("hpt", (evolve(eA, 1.0),), "e^{iG(theta/2)t1} ⊗ I"),
            Stage("hpt", (evolve(eB, -1.0),), "I ⊗ e^{-iG^T(theta/2)t2}"),
        )
        ro_a = Readout.single(np.kron(Gt[i], signs[j] * Gt[j]))
        t2 = real_part(0.5 * tr(rho, acomm(P[i], P[j])), "wy-thth-acomm")
        eHalf = eigh(G_half)
        stages_b = (
            Stage("fixed", (controlled(Gt[i], 0, 1),), "C-G_i"),
            Stage("hpt", (evolve(eHalf, -1.0),), "e^{-iG(theta/2)t1}"),
            Stage("hpt", (evolve(eHalf, 1.0),), "e^{iG(theta/2)t2}"),
        )
        return [
            Circuit("wy-thth-tfd", (), (), tfd, stages_a, ro_a, t1, 0.5),
            Circuit("wy-thth-acomm", (0,), (False,), rho, stages_b, Readout.single(Gt[j]), t2, 0.5),
            _product_circuit("product", rho, rho, Gt[i], Gt[j], -1.0),
        ]
    if block == "phph":
        Q = [psi_channel(state, h, adjoint=True) for h in Ht]
        signs = [t.transpose_sign() for t in state.H_model.terms]
        HT = state.H_model.transposed().assemble(state.phi)
        eA = eigh(np.kron(state.H, I))
        eB = eigh(np.kron(I, HT))
        t1 = real_part(tr(Q[j] @ s, Q[i] @ s), "wy-phph-tfd")
        stages_c = (
            Stage("uniform", (evolve(eA, -1.0),), "e^{-iHt1} ⊗ I"),
            Stage("uniform", (evolve(eB, 1.0),), "I ⊗ e^{iH^T t2}"),
        )
        ro_c = Readout.single(np.kron(Ht[j], signs[i] * Ht[i]))
        t2 = real_part(0.5 * tr(rho, acomm(Q[j], Q[i])), "wy-phph-acomm")
        stages_d = (
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 0, 1), evolve(eH, 1.0)), "U"),
            Stage("uniform", (evolve(eH, -1.0),), "e^{-iHt2}"),
        )
        return [
            Circuit("wy-phph-tfd", (), (), tfd, stages_c, ro_c, t1, -8.0),
            Circuit("wy-phph-acomm", (0,), (False,), rho, stages_d, Readout.single(Ht[i]), t2, 8.0),
        ]
    if block == "thph":
        val = real_part(
            0.5j * tr(rho, comm(phi_channel(state, Gt[i], half=True), psi_channel(state, Ht[j], adjoint=True))),
            "wy-thph-comm",
        )
        stages = (
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 0, 1), evolve(eH, 1.0)), "U"),
            Stage("hpt", (evolve(eG, 0.5),), "e^{iG(theta/2)t1}"),
        )
        return [Circuit("wy-thph-comm", (0,), (True,), rho, stages, Readout.single(Gt[i]), val, 2.0)]
    raise ContractViolation(f"unknown block {block!r}")


def _km_circuits(state: EqbmState, block: str, i: int, j: int) -> list[Circuit]:
    rho, G = state.rho, state.G
    eG, eH = state.eigG, state.eigH
    Gt, Ht = state.G_terms, state.H_terms
    if block == "thth":
        val = real_part(0.5 * tr(rho, acomm(Gt[i], phi_channel(state, Gt[j]))), "km-thth-acomm")
        stages = (
            Stage("fixed", (controlled(Gt[j], 0, 1),), "C-G_j"),
            Stage("hpt", (evolve(eG, -1.0),), "e^{-iGt}"),
        )
        return [
            Circuit("km-thth-acomm", (0,), (False,), rho, stages, Readout.single(Gt[i]), val, 1.0),
            _product_circuit("product", rho, rho, Gt[i], Gt[j], -1.0),
        ]
    if block == "phph":
        ro = _g_readout(state)
        PHi, PHj = psi_channel(state, Ht[i], adjoint=True), psi_channel(state, Ht[j], adjoint=True)
        val = real_part(0.25 * tr(rho, comm(comm(PHj, G), PHi)), "km-phph-nested", scale=_g_norm(state))
        stages = (
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[i], 0, 2), evolve(eH, 1.0)), "U0"),
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 1, 2), evolve(eH, 1.0)), "U1"),
        )
        return [Circuit("km-phph-nested", (1, 1), (True, True), rho, stages, ro, val / ro.scale, 4.0)]
    if block == "thph":
        ro = _g_readout(state)
        val = real_part(
            0.25j * tr(rho, acomm(phi_channel(state, Gt[i]), comm(G, psi_channel(state, Ht[j], adjoint=True)))),
            "km-thph-nested",
            scale=_g_norm(state),
        )
        stages = (
            Stage("hpt", (evolve(eG, 1.0), controlled(Gt[i], 0, 2), evolve(eG, -1.0)), "U0"),
            Stage("uniform", (evolve(eH, -1.0), controlled(Ht[j], 1, 2), evolve(eH, 1.0)), "U1"),
        )
        return [Circuit("km-thph-nested", (1, 1), (False, True), rho, stages, ro, val / ro.scale, 2.0)]
    raise ContractViolation(f"unknown block {block!r}")


_ENTRY_BUILDERS = {"FB": _fb_circuits, "WY": _wy_circuits, "KM": _km_circuits}


def info_entry_circuits(state: EqbmState, kind: str, block: str, i: int, j: int, **kw) -> list[Circuit]:
    kind = kind.upper()
    if kind not in _ENTRY_BUILDERS:
        raise ContractViolation(f"unknown metric kind {kind!r}")
    if block == "phth":
        block, i, j = "thph", j, i
    sizes = {"thth": (state.J, state.J), "phph": (state.K, state.K), "thph": (state.J, state.K)}
    if block not in sizes:
        raise ContractViolation(f"unknown block {block!r}")
    if not (0 <= i < sizes[block][0] and 0 <= j < sizes[block][1]):
        raise ContractViolation(f"entry ({i}, {j}) out of range for block {block}")
    return _ENTRY_BUILDERS[kind](state, block, i, j, **kw)


def gsee_grad_circuits(state: EqbmState, obs: PauliSum, which: str, idx: int) -> list[Circuit]:
    if obs.n_qubits != state.n_qubits:
        raise ContractViolation("observable and model act on different qubit counts")
    if which == "theta":
        if not 0 <= idx < state.J:
            raise ContractViolation("theta index out of range")
        return gsee_theta_circuits(state, obs, idx)
    if which == "phi":
        if not 0 <= idx < state.K:
            raise ContractViolation("phi index out of range")
        return gsee_phi_circuits(state, obs, idx)
    raise ContractViolation(f"unknown parameter group {which!r}")


# --- public estimators --------------------------------------------------------


def estimate_gsee_grad(state: EqbmState, obs: PauliSum, which: str, idx: int, plan: ShotPlan, allocation: str = "per-term") -> ShotOutcome:
    if not isinstance(obs, PauliSum):
        raise ContractViolation("the observable must be given as a Pauli sum")
    circs = gsee_grad_circuits(state, obs, which, idx)
    return estimate_sum(circs, plan, allocation, label=f"gsee d{which}_{idx}")


def estimate_genmod_grad_phi(state: EqbmState, target: GenModTarget, k: int, plan: ShotPlan) -> ShotOutcome:
    if not 0 <= k < state.K:
        raise ContractViolation("phi index out of range")
    return estimate_sum(genmod_phi_circuits(state, target, k), plan, label=f"genmod dphi_{k}")


def estimate_genmod_grad_theta(state: EqbmState, target: GenModTarget, j: int, plan: ShotPlan) -> ShotOutcome:
    if not 0 <= j < state.J:
        raise ContractViolation("theta index out of range")
    return estimate_sum(genmod_theta_circuits(state, target, j), plan, label=f"genmod dtheta_{j}")


def estimate_info_entry(
    state: EqbmState,
    kind: str,
    block: str,
    i: int,
    j: int,
    plan: ShotPlan,
    allocation: str = "per-term",
    purification: bool = True,
) -> ShotOutcome:
    kw = {"purification": purification} if kind.upper() == "WY" else {}
    circs = info_entry_circuits(state, kind, block, i, j, **kw)
    return estimate_sum(circs, plan, allocation, label=f"{kind.upper()} {block} ({i},{j})")


def all_circuits(state: EqbmState, obs: PauliSum, target: GenModTarget) -> list[Circuit]:
    """One instance of every estimation circuit, for sweeps over the whole set."""
    out = gsee_grad_circuits(state, obs, "theta", 0) + gsee_grad_circuits(state, obs, "phi", 0)
    out += genmod_phi_circuits(state, target, 0) + genmod_theta_circuits(state, target, 0)
    jj = min(1, state.J - 1)
    kk = min(1, state.K - 1)
    for kind in ("FB", "WY", "KM"):
        out += info_entry_circuits(state, kind, "thth", 0, jj)
        out += info_entry_circuits(state, kind, "phph", 0, kk)
        out += info_entry_circuits(state, kind, "thph", 0, 0)
    return out
