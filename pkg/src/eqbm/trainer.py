"""Plain and natural gradient descent over (theta, phi).

The update is ``gamma <- gamma - mu * d`` where ``d`` is the gradient (``gd``)
or ``solve(I + ridge * 1, gradient)`` with ``I`` one of the three information
matrices (``ngd-fb``, ``ngd-wy``, ``ngd-km``). Frozen coordinates are removed
from both the gradient and the metric before solving, so they never move.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .errors import ContractViolation, SingularMetricError
from .estimators import (
    PauliSum,
    ShotPlan,
    estimate_genmod_grad_phi,
    estimate_genmod_grad_theta,
    estimate_gsee_grad,
)
from .gradients import GenModTarget, GradVector, genmod_grad, gsee_grad, gsee_value, relent_value
from .metrics import info_matrix
from .pauli import ParamHamiltonian
from .state import EqbmState, resolve

METHODS = ("gd", "ngd-fb", "ngd-wy", "ngd-km")
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Task:
    """Objective to minimize: an energy ``Tr[O omega]`` or a relative entropy."""

    kind: Literal["gsee", "genmod"]
    observable: PauliSum | None = None
    target: GenModTarget | None = None

    def __post_init__(self):
        if self.kind == "gsee" and self.observable is None:
            raise ContractViolation("the energy task needs an observable")
        if self.kind == "genmod" and self.target is None:
            raise ContractViolation("the generative task needs a target state")
        if self.kind not in ("gsee", "genmod"):
            raise ContractViolation(f"unknown task {self.kind!r}")

    def objective(self, state: EqbmState) -> float:
        if self.kind == "gsee":
            return gsee_value(state, self._O())
        return relent_value(state, self.target)

    def gradient(self, state: EqbmState) -> GradVector:
        if self.kind == "gsee":
            return gsee_grad(state, self._O())
        return genmod_grad(state, self.target)

    def _O(self) -> np.ndarray:
        return self.observable.dense()


@dataclass(frozen=True)
class TrainConfig:
    task: str = "genmod"
    method: str = "gd"
    mu: float = 0.1
    iters: int = 50
    ridge: float | None = None  # None selects 1e-6 * tr(I) / (J + K)
    freeze: Literal["none", "theta", "phi"] = "none"
    grad_source: Literal["exact", "shots"] = "exact"
    plan: ShotPlan | None = None
    seed: int = 0
    decay: float = 1.0
    grad_tol: float = 1e-8
    line_search: bool = False  # halve a step that raises the objective (max 30 times)

    def __post_init__(self):
        if not self.mu > 0:
            raise ContractViolation("learning rate must be positive")
        if self.iters < 1:
            raise ContractViolation("need at least one iteration")
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.freeze not in ("none", "theta", "phi"):
            raise ContractViolation(f"unknown freeze mode {self.freeze!r}")
        if self.ridge is not None and self.ridge < 0:
            raise ContractViolation("ridge must be non-negative")
        if self.grad_source not in ("exact", "shots"):
            raise ContractViolation(f"unknown gradient source {self.grad_source!r}")
        if self.grad_source == "shots" and self.plan is None:
            raise ContractViolation("shot-based gradients need a shot plan")
        if not 0 < self.decay <= 1:
            raise ContractViolation("decay must lie in (0, 1]")


@dataclass
class TrainTrace:
    thetas: list[np.ndarray] = field(default_factory=list)
    phis: list[np.ndarray] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    cond: list[float] = field(default_factory=list)
    step_time: list[float] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.objective)

    def record(self, state: EqbmState, obj: float, gnorm: float, cond: float, dt: float) -> None:
        if not np.isfinite(obj):
            raise ContractViolation("objective became non-finite")
        self.thetas.append(np.array(state.theta))
        self.phis.append(np.array(state.phi))
        self.objective.append(float(obj))
        self.grad_norm.append(float(gnorm))
        self.cond.append(float(cond))
        self.step_time.append(float(dt))

    def write_csv(self, path, timing_path=None) -> None:
        """Parameters and diagnostics per iteration, 17 significant digits.

        Wall times go to ``timing_path`` (if given) so that the main trace is
        byte-identical across reruns with the same seed.
        """
        J = len(self.thetas[0]) if self.thetas else 0
        K = len(self.phis[0]) if self.phis else 0
        header = ["iteration", "objective", "grad_norm", "cond"]
        header += [f"theta_{j}" for j in range(J)] + [f"phi_{k}" for k in range(K)]
        fmt = lambda x: format(float(x), ".17g")  # noqa: E731
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for m in range(len(self)):
                row = [m, fmt(self.objective[m]), fmt(self.grad_norm[m]), fmt(self.cond[m])]
                row += [fmt(x) for x in self.thetas[m]] + [fmt(x) for x in self.phis[m]]
                w.writerow(row)
        if timing_path is not None:
            with open(timing_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["iteration", "time"])
                for m, t in enumerate(self.step_time):
                    w.writerow([m, fmt(t)])


def _mask(state: EqbmState, freeze: str) -> np.ndarray:
    mask = np.ones(state.J + state.K, dtype=bool)
    if freeze == "theta":
        mask[: state.J] = False
    elif freeze == "phi":
        mask[state.J :] = False
    return mask


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def shot_gradient(state: EqbmState, task: Task, plan: ShotPlan, mask: np.ndarray, seed: int, it: int) -> GradVector:
    """Gradient entries estimated with the circuit simulators (frozen ones are 0)."""
    g = np.zeros(state.J + state.K)
    for idx in np.flatnonzero(mask):
        sub = replace(plan, seed=_derived_seed(seed, it, int(idx)))
        which, k = ("theta", idx) if idx < state.J else ("phi", idx - state.J)
        if task.kind == "gsee":
            g[idx] = estimate_gsee_grad(state, task.observable, which, int(k), sub).estimate
        elif which == "theta":
            g[idx] = estimate_genmod_grad_theta(state, task.target, int(k), sub).estimate
        else:
            g[idx] = estimate_genmod_grad_phi(state, task.target, int(k), sub).estimate
    return GradVector(g[: state.J], g[state.J :])


def default_ridge(metric: np.ndarray, n_params: int) -> float:
    return 1e-6 * float(np.trace(metric)) / max(n_params, 1)


def step(
    state: EqbmState,
    config: TrainConfig,
    task: Task,
    mu: float | None = None,
    grad: GradVector | None = None,
    metric_hook: Callable[[EqbmState], np.ndarray] | None = None,
    iteration: int = 0,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One update; returns ``(theta, phi, diagnostics)``.

    ``metric_hook`` replaces the information matrix (full (J+K)^2 layout),
    which is how tests force e.g. the identity metric.
    """
    mu = config.mu if mu is None else mu
    mask = _mask(state, config.freeze)
    if grad is None:
        if config.grad_source == "shots":
            grad = shot_gradient(state, task, config.plan, mask, config.seed, iteration)
        else:
            grad = task.gradient(state)
    g = grad.flat[mask]
    cond = float("nan")
    if config.method == "gd" and metric_hook is None:
        direction = g
    else:
        if metric_hook is not None:
            full = np.asarray(metric_hook(state), dtype=float)
        else:
            full = info_matrix(state, config.method.split("-")[1].upper()).M
        n = state.J + state.K
        ridge = default_ridge(full, n) if config.ridge is None else config.ridge
        A = full[np.ix_(mask, mask)] + ridge * np.eye(int(mask.sum()))
        cond = float(np.linalg.cond(A)) if A.size else 1.0
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularMetricError(
                f"regularized metric has condition number {cond:.3e} (> {COND_LIMIT:.0e}); "
                f"ridge={ridge:.3e}, eigenvalues={np.linalg.eigvalsh((A + A.T) / 2)}",
                cond,
            )
        direction = np.linalg.solve(A, g)
    gamma = np.concatenate([state.theta, state.phi])
    gamma[mask] -= mu * direction
    diag = {"grad_norm": float(np.linalg.norm(g)), "cond": cond, "direction": direction}
    return gamma[: state.J], gamma[state.J :], diag


def train(
    G_model: ParamHamiltonian,
    H_model: ParamHamiltonian,
    theta0,
    phi0,
    task: Task,
    config: TrainConfig,
    metric_hook: Callable[[EqbmState], np.ndarray] | None = None,
) -> TrainTrace:
    """Run ``config.iters`` updates; the trace holds iterates 0..iters.

    Stops early (flagging ``stopped_early``) once the unfrozen gradient norm
    drops below ``config.grad_tol``.
    """
    trace = TrainTrace()
    state = resolve(G_model, H_model, theta0, phi0)
    mu = config.mu
    for it in range(config.iters):
        t0 = time.perf_counter()
        obj = task.objective(state)
        theta, phi, diag = step(state, config, task, mu=mu, metric_hook=metric_hook, iteration=it)
        trace.record(state, obj, diag["grad_norm"], diag["cond"], time.perf_counter() - t0)
        if diag["grad_norm"] < config.grad_tol:
            trace.stopped_early = True
            return trace
        new_state = resolve(G_model, H_model, theta, phi)
        if config.line_search:
            new_state = _backtrack(state, new_state, task, obj, G_model, H_model)
        state = new_state
        mu *= config.decay
    mask = _mask(state, config.freeze)
    g = task.gradient(state).flat[mask] if config.grad_source == "exact" else np.full(mask.sum(), np.nan)
    trace.record(state, task.objective(state), float(np.linalg.norm(g)), float("nan"), 0.0)
    return trace


def _backtrack(state, trial, task, obj, G_model, H_model, max_halvings: int = 30):
    """Halve the step ``trial - state`` until the objective stops increasing."""
    g0 = np.concatenate([state.theta, state.phi])
    d = np.concatenate([trial.theta, trial.phi]) - g0
    J = state.J
    for _ in range(max_halvings):
        if task.objective(trial) <= obj:
            return trial
        d = d / 2
        g = g0 + d
        trial = resolve(G_model, H_model, g[:J], g[J:])
    return trial


def is_monotone(values, slack: float = 1e-9) -> bool:
    v = np.asarray(values)
    return bool(np.all(np.diff(v) <= slack))


def probe_learning_rate(
    G_model: ParamHamiltonian,
    H_model: ParamHamiltonian,
    theta0,
    phi0,
    task: Task,
    config: TrainConfig,
    probe_iters: int | None = None,
    max_halvings: int = 20,
    slack: float = 1e-9,
) -> float:
    """Largest ``config.mu / 2^h`` (h <= max_halvings) giving a non-increasing probe run.

    The probe horizon defaults to ``config.iters``.
    """
    probe_iters = config.iters if probe_iters is None else probe_iters
    mu = config.mu
    for _ in range(max_halvings + 1):
        probe = replace(config, mu=mu, iters=probe_iters)
        if is_monotone(train(G_model, H_model, theta0, phi0, task, probe).objective, slack):
            return mu
        mu /= 2
    raise ContractViolation(f"no monotone step size found after {max_halvings} halvings")
