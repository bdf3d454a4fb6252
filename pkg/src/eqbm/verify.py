"""Invariant suites behind ``eqbm verify``.

Each suite takes a list of seeds and returns :class:`Check` rows, one per
(check, seed) pair, holding the worst deviation found and the threshold it
was held to. Seeds map to models through :func:`seeded_model`, so a row can
be reproduced from its seed alone.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from .estimators import (
    PauliSum,
    ShotPlan,
    all_circuits,
    composite_target,
    estimate_circuit,
    exact_mean,
)
from .gradients import GenModTarget, d_omega, genmod_grad, gsee_grad, gsee_value, relent_value
from .linalg import random_density
from .metrics import KINDS, info_matrix
from .oracle import hessian_info, pure_fb, purified_derivatives, purified_family, spectral_info
from .pauli import ParamHamiltonian, PauliString, random_model
from .state import EqbmState, resolve

SUITES = ("gradients", "metrics", "loewner", "purification", "estimators")

FD_STEP = 1e-5
GRAD_REL_TOL = 1e-6
GRAD_ABS_TOL = 1e-8
GRAD_SMALL = 1e-2
SPECTRAL_TOL = 1e-8
HESSIAN_TOL = 5e-4
LOEWNER_SLACK = -1e-8
PURIFICATION_TOL = 1e-7
CIRCUIT_TOL = 1e-8


@dataclass(frozen=True)
class Check:
    suite: str
    check: str
    seed: int
    value: float
    threshold: float
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def seeded_model(seed: int, max_qubits: int = 3):
    """Deterministic test model: n cycles through 1..max_qubits, J and K through 1..4."""
    n = 1 + seed % max_qubits
    if n == 1:
        J = K = 1
    else:
        J, K = 1 + (seed // max_qubits) % 4, 1 + (seed // (2 * max_qubits)) % 4
    return random_model(n, J, K, coeff_scale=1.0, seed=seed)


def _state(seed: int, max_qubits: int = 3) -> tuple[EqbmState, tuple]:
    G, H, th, ph = seeded_model(seed, max_qubits)
    return resolve(G, H, th, ph), (G, H, th, ph)


def _observable(n: int, rng: np.random.Generator) -> np.ndarray:
    d = 2**n
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (A + A.conj().T) / 2


def central_difference(f: Callable[[float], float], h: float = FD_STEP, richardson: bool = False) -> float:
    """Derivative of ``f`` at 0 by central differences.

    With ``richardson`` the h and h/2 stencils are combined to cancel the
    O(h^2) term, for entries where plain differences sit near the tolerance.
    """
    d_h = (f(h) - f(-h)) / (2 * h)
    if not richardson:
        return d_h
    d_h2 = (f(h / 2) - f(-h / 2)) / h
    return (4 * d_h2 - d_h) / 3


def grad_score(analytic, fd) -> np.ndarray:
    """Deviation over its allowance: relative 1e-6, or absolute 1e-8 for small entries.

    Scores below 1 pass. Complex inputs are compared entrywise.
    """
    a = np.abs(np.asarray(analytic))
    dev = np.abs(np.asarray(analytic) - np.asarray(fd))
    allowance = np.where(a < GRAD_SMALL, GRAD_ABS_TOL, GRAD_REL_TOL * a)
    return dev / allowance


def gradient_checks(seed: int) -> list[Check]:
    state, (G, H, th, ph) = _state(seed)
    rng = np.random.default_rng(seed)
    O = _observable(state.n_qubits, rng)
    target = GenModTarget.from_matrix(random_density(state.dim, rng))
    gg, gm = gsee_grad(state, O), genmod_grad(state, target)
    worst = {"state": 0.0, "gsee": 0.0, "genmod": 0.0}
    for which, n_params in (("theta", state.J), ("phi", state.K)):
        for i in range(n_params):
            e = np.zeros(n_params)
            e[i] = FD_STEP
            if which == "theta":
                sp, sm = resolve(G, H, th + e, ph), resolve(G, H, th - e, ph)
            else:
                sp, sm = resolve(G, H, th, ph + e), resolve(G, H, th, ph - e)
            fd = (sp.omega - sm.omega) / (2 * FD_STEP)
            worst["state"] = max(worst["state"], float(grad_score(d_omega(state, which, i), fd).max()))
            for key, vec, obj in (
                ("gsee", gg, lambda s: gsee_value(s, O)),
                ("genmod", gm, lambda s: relent_value(s, target)),
            ):
                a = (vec.dtheta if which == "theta" else vec.dphi)[i]
                score = float(grad_score(a, (obj(sp) - obj(sm)) / (2 * FD_STEP)))
                worst[key] = max(worst[key], score)
    return [
        Check("gradients", f"{k} gradient vs finite differences (score)", seed, v, 1.0, v < 1.0)
        for k, v in worst.items()
    ]


def commuting_zero_checks() -> list[Check]:
    """On G = theta Z, H = phi Z every phi-derivative vanishes identically."""
    G = ParamHamiltonian(1, (PauliString("Z"),))
    H = ParamHamiltonian(1, (PauliString("Z"),))
    state = resolve(G, H, [0.7], [0.3])
    O = np.array([[0.4, 1.0 - 0.5j], [1.0 + 0.5j, -0.2]])
    target = GenModTarget.from_matrix(np.array([[0.6, 0.2j], [-0.2j, 0.4]]))
    vals = [
        float(np.abs(d_omega(state, "phi", 0)).max()),
        abs(gsee_grad(state, O).dphi[0]),
        abs(genmod_grad(state, target).dphi[0]),
    ]
    return [Check("gradients", "commuting model: forced-zero phi gradients", -1, max(vals), 0.0, max(vals) == 0.0)]


def metric_checks(seed: int) -> list[Check]:
    state, (G, H, th, ph) = _state(seed)
    out = []
    for kind in KINDS:
        A = info_matrix(state, kind)
        dev_s = float(np.abs(A.M - spectral_info(state, kind).M).max())
        dev_h = float(np.abs(A.M - hessian_info(G, H, th, ph, kind).M).max())
        out.append(Check("metrics", f"{kind} vs spectral oracle", seed, dev_s, SPECTRAL_TOL, dev_s < SPECTRAL_TOL))
        out.append(Check("metrics", f"{kind} vs divergence Hessian", seed, dev_h, HESSIAN_TOL, dev_h < HESSIAN_TOL))
        asym = A.asymmetry()
        out.append(Check("metrics", f"{kind} symmetry", seed, asym, 1e-9, asym < 1e-9))
        mn = A.min_eig()
        out.append(Check("metrics", f"{kind} min eigenvalue", seed, mn, LOEWNER_SLACK, mn >= LOEWNER_SLACK))
    rng = np.random.default_rng(seed + 10_000)
    base = [info_matrix(state, k).thth for k in KINDS]
    drift = 0.0
    for _ in range(5):
        moved = resolve(G, H, th, rng.uniform(-np.pi, np.pi, size=len(ph)))
        drift = max(drift, *(float(np.abs(info_matrix(moved, k).thth - b).max()) for k, b in zip(KINDS, base)))
    out.append(Check("metrics", "theta-theta blocks invariant under phi", seed, drift, 1e-9, drift < 1e-9))
    return out


def loewner_checks(seed: int) -> list[Check]:
    state, _ = _state(seed)
    fb, wy = info_matrix(state, "FB").M, info_matrix(state, "WY").M
    upper = float(np.linalg.eigvalsh((wy - fb + (wy - fb).T) / 2).min())
    lower = float(np.linalg.eigvalsh((fb - wy / 2 + (fb - wy / 2).T) / 2).min())
    return [
        Check("loewner", "min eig(WY - FB)", seed, upper, LOEWNER_SLACK, upper >= LOEWNER_SLACK),
        Check("loewner", "min eig(FB - WY/2)", seed, lower, LOEWNER_SLACK, lower >= LOEWNER_SLACK),
    ]


def purification_checks(seed: int) -> list[Check]:
    # the purified family lives on 2n qubits, so stay at n <= 2
    state, (G, H, th, ph) = _state(seed, max_qubits=2)
    fam = purified_family(G, H, state.J)
    pure = pure_fb(fam, np.concatenate([th, ph]), purified_derivatives(state))
    dev = float(np.abs(pure - info_matrix(state, "WY").M).max())
    return [Check("purification", "WY vs FB of the purified family", seed, dev, PURIFICATION_TOL, dev < PURIFICATION_TOL)]


def estimator_checks(seed: int, eps: float = 0.1, delta: float = 0.05) -> list[Check]:
    state, _ = _state(seed, max_qubits=2)
    rng = np.random.default_rng(seed)
    terms = [(float(c), s) for c, s in zip(rng.normal(size=2), _two_strings(state.n_qubits, rng))]
    obs = PauliSum.parse(terms)
    target = GenModTarget.from_matrix(random_density(state.dim, rng))
    circuits = all_circuits(state, obs, target)
    bias = max(abs(exact_mean(c) - c.target) for c in circuits)
    plan = ShotPlan.from_precision(eps, delta, seed=seed)
    misses = 0
    for m, c in enumerate(circuits):
        out = estimate_circuit(c, plan, seed=np.random.SeedSequence([seed, m]))
        misses += abs(out.estimate - c.weight * c.readout.scale * c.target) > out.eps
    rate = misses / len(circuits)
    total = abs(composite_target(circuits) - sum(c.weight * c.readout.scale * exact_mean(c) for c in circuits))
    return [
        Check("estimators", "exact circuit mean vs target", seed, bias, CIRCUIT_TOL, bias < CIRCUIT_TOL),
        Check("estimators", "composite mean vs target", seed, total, CIRCUIT_TOL * len(circuits), total < CIRCUIT_TOL * len(circuits)),
        Check("estimators", "Hoeffding miss rate", seed, rate, delta + 0.03, rate <= delta + 0.03),
    ]


def _two_strings(n: int, rng: np.random.Generator) -> list[str]:
    letters = np.array(list("IXYZ"))
    out = []
    while len(out) < 2:
        s = "".join(rng.choice(letters, size=n))
        if set(s) != {"I"} and s not in out:
            out.append(s)
    return out


_PER_SEED: dict[str, Callable[[int], list[Check]]] = {
    "gradients": gradient_checks,
    "metrics": metric_checks,
    "loewner": loewner_checks,
    "purification": purification_checks,
    "estimators": estimator_checks,
}


def run_suite(name: str, seeds: Iterable[int], threads: int = 1) -> list[Check]:
    """Run one suite (or ``"all"``) over ``seeds``; row order is deterministic."""
    names = SUITES if name == "all" else (name,)
    seeds = list(seeds)
    rows: list[Check] = []
    for suite in names:
        fn = _PER_SEED[suite]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for chunk in pool.map(fn, seeds):
                rows.extend(chunk)
        if suite == "gradients":
            rows.extend(commuting_zero_checks())
    return rows


def summarize(rows: list[Check]) -> list[dict]:
    """One line per distinct check with the worst value over seeds."""
    groups: dict[tuple[str, str], list[Check]] = {}
    for r in rows:
        groups.setdefault((r.suite, r.check), []).append(r)
    out = []
    for (suite, check), rs in groups.items():
        lower_bound = rs[0].threshold < 0 or "min eig" in check
        worst = min(r.value for r in rs) if lower_bound else max(r.value for r in rs)
        out.append({
            "suite": suite,
            "check": check,
            "seeds": len(rs),
            "worst": worst,
            "threshold": rs[0].threshold,
            "passed": all(r.passed for r in rs),
        })
    return out
