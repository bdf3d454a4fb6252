"""``eqbm`` command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 verification failure,
4 numerical-domain error (non-positive state, singular metric, ...).
"""

from __future__ import annotations

import functools
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import io as eio
from .errors import CapabilityError, ContractViolation, DomainError
from .estimators import PauliSum, ShotPlan, estimate_genmod_grad_phi, estimate_genmod_grad_theta, estimate_gsee_grad, estimate_info_entry
from .gradients import GenModTarget, genmod_grad, gsee_grad, gsee_value, relent_value
from .linalg import random_density
from .metrics import info_matrix
from .pauli import random_model
from .state import EqbmState, resolve
from .trainer import Task, TrainConfig, probe_learning_rate, train
from .verify import SUITES, run_suite, summarize

EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_DOMAIN = 4

THREADS_ENV = "EQBM_THREADS"


def _fail(msg: str, code: int) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def handle_errors(fn):
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ContractViolation, CapabilityError) as exc:
            _fail(str(exc), EXIT_USAGE)
        except DomainError as exc:
            _fail(f"numerical domain: {exc}", EXIT_DOMAIN)
        except OSError as exc:
            _fail(str(exc), EXIT_USAGE)

    return wrapper


def _vector(text: str | None, name: str) -> np.ndarray | None:
    if text is None:
        return None
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()], dtype=float)
    except ValueError:
        raise ContractViolation(f"--{name} must be a comma-separated list of numbers") from None


def _load(model: str, theta: str | None, phi: str | None):
    G, H, th, ph, doc = eio.load_model(model)
    th_o, ph_o = _vector(theta, "theta"), _vector(phi, "phi")
    if th_o is not None:
        if th_o.shape != th.shape:
            raise ContractViolation(f"--theta has {th_o.size} values, the model has {th.size} G terms")
        th = th_o
    if ph_o is not None:
        if ph_o.shape != ph.shape:
            raise ContractViolation(f"--phi has {ph_o.size} values, the model has {ph.size} H terms")
        ph = ph_o
    return G, H, th, ph, doc


def target_from_doc(doc: dict, state: EqbmState) -> GenModTarget:
    """Build a generative-modeling target from a target document."""
    eio.validate(doc, "target")
    kind = doc["kind"]
    if kind == "model":
        return GenModTarget.from_matrix(state.omega)
    if kind == "in-family":
        other = resolve(state.G_model, state.H_model, doc["theta"], doc["phi"])
        return GenModTarget.from_matrix(other.omega)
    if kind == "thermal":
        rng = np.random.default_rng(doc["seed"])
        return GenModTarget.from_matrix(random_density(state.dim, rng, doc.get("scale", 1.0)))
    eta = np.array(doc["real"], dtype=complex)
    if "imag" in doc:
        eta = eta + 1j * np.array(doc["imag"], dtype=float)
    if eta.shape != (state.dim, state.dim):
        raise ContractViolation(f"target matrix has shape {eta.shape}, expected {(state.dim, state.dim)}")
    return GenModTarget.from_matrix(eta)


def _target(spec: str | None, state: EqbmState) -> GenModTarget:
    if spec is None:
        raise ContractViolation("this quantity needs --target (a target file or 'model')")
    doc = {"kind": "model"} if spec == "model" else eio.read_doc(spec)
    return target_from_doc(doc, state)


def _observable(spec: str | None, state: EqbmState) -> PauliSum:
    if spec is None:
        raise ContractViolation("this quantity needs --obs, e.g. '0.5*ZZ + -1*XI'")
    try:
        obs = PauliSum.parse(spec)
    except (ValueError, ContractViolation) as exc:
        raise ContractViolation(f"cannot parse --obs {spec!r}: {exc}") from None
    if not obs.terms:
        raise ContractViolation("--obs has no terms")
    if obs.n_qubits != state.n_qubits:
        raise ContractViolation(f"--obs acts on {obs.n_qubits} qubits, the model has {state.n_qubits}")
    return obs


def _info_doc(M) -> dict:
    return {
        "kind": M.kind,
        "J": M.J,
        "K": M.K,
        "matrix": M.M,
        "thth": M.thth,
        "phph": M.phph,
        "thph": M.thph,
        "min_eig": M.min_eig(),
    }


threads_option = click.option(
    "--threads",
    type=click.IntRange(min=1),
    envvar=THREADS_ENV,
    default=1,
    show_default=True,
    help=f"Worker threads for independent runs (default from ${THREADS_ENV}).",
)
out_option = click.option("--out", default="-", show_default=True, help="Output file ('-' for stdout).")


@click.group()
@click.version_option(__version__, prog_name="eqbm")
def main() -> None:
    """Evolved quantum Boltzmann machines: exact evaluation, estimation, verification, training."""


@main.command("gen-model")
@click.option("--qubits", type=click.IntRange(1, 10), required=True)
@click.option("--j-terms", type=click.IntRange(min=1), required=True, help="Number of G (thermal) terms.")
@click.option("--k-terms", type=click.IntRange(min=1), required=True, help="Number of H (evolution) terms.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scale", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True, help="Coefficient range.")
@out_option
@handle_errors
def gen_model(qubits, j_terms, k_terms, seed, scale, out):
    """Write a random model with distinct Pauli strings and a non-commuting G/H pair."""
    G, H, th, ph = random_model(qubits, j_terms, k_terms, coeff_scale=scale, seed=seed)
    eio.write_doc(eio.model_to_doc(G, H, th, ph, seed), out)


WHATS = ("grad-gsee", "grad-genmod", "fb", "wy", "km", "objective")


@main.command("eval")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--theta", help="Override theta (comma-separated).")
@click.option("--phi", help="Override phi (comma-separated).")
@click.option("--what", type=click.Choice(WHATS), required=True)
@click.option("--obs", help="Observable as a Pauli sum, e.g. '0.5*ZZ + -1*XI'.")
@click.option("--target", help="Target document path, or 'model' for the model's own state.")
@out_option
@handle_errors
def eval_cmd(model, theta, phi, what, obs, target, out):
    """Exact values: gradients, information matrices or the objective."""
    G, H, th, ph, doc = _load(model, theta, phi)
    state = resolve(G, H, th, ph)
    if what == "grad-gsee":
        g = gsee_grad(state, _observable(obs, state).dense())
        result = {"dtheta": g.dtheta, "dphi": g.dphi}
    elif what == "grad-genmod":
        g = genmod_grad(state, _target(target, state))
        result = {"dtheta": g.dtheta, "dphi": g.dphi}
    elif what == "objective":
        if obs is not None:
            result = {"task": "gsee", "value": gsee_value(state, _observable(obs, state).dense())}
        else:
            result = {"task": "genmod", "value": relent_value(state, _target(target, state))}
    else:
        result = _info_doc(info_matrix(state, what.upper()))
    flags = {"what": what, "obs": obs, "target": target}
    eio.write_doc({"header": eio.header(doc, flags), "theta": th, "phi": ph, "result": result}, out)


ESTIMATE_KINDS = ("fb", "wy", "km", "grad-gsee", "grad-genmod")


def _estimate_once(state, kind, block, i, j, plan, allocation, purification, obs, target):
    """(ShotOutcome, analytic reference) for one seeded run."""
    if kind in ("fb", "wy", "km"):
        out = estimate_info_entry(state, kind, block, i, j, plan, allocation, purification)
        ref = info_matrix(state, kind.upper()).entry(block, i, j)
        return out, ref
    if block not in ("theta", "phi"):
        raise ContractViolation("gradient estimates take --block theta or --block phi")
    if kind == "grad-gsee":
        out = estimate_gsee_grad(state, obs, block, i, plan, allocation)
        g = gsee_grad(state, obs.dense())
    else:
        if allocation != "per-term":
            raise ContractViolation("generative-gradient estimates support only per-term allocation")
        est = estimate_genmod_grad_theta if block == "theta" else estimate_genmod_grad_phi
        out = est(state, target, i, plan)
        g = genmod_grad(state, target)
    return out, float((g.dtheta if block == "theta" else g.dphi)[i])


def _outcome_doc(out, ref: float) -> dict:
    gap = abs(out.estimate - ref)
    return {
        "estimate": out.estimate,
        "analytical": ref,
        "abs_gap": gap,
        "eps_bound": out.eps,
        "pass": bool(gap <= out.eps),
        "shots_total": out.N_used,
        "terms": [
            {"label": t.label, "shots": t.N_used, "scale": t.scale, "raw_mean": t.raw_mean, "estimate": t.estimate, "eps": t.eps}
            for t in out.terms
        ],
    }


@main.command("estimate")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--theta", help="Override theta (comma-separated).")
@click.option("--phi", help="Override phi (comma-separated).")
@click.option("--kind", type=click.Choice(ESTIMATE_KINDS), required=True)
@click.option("--block", required=True, help="thth|phph|thph|phth for metrics, theta|phi for gradients.")
@click.option("--i", "i", type=click.IntRange(min=0), required=True)
@click.option("--j", "j", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--eps", type=click.FloatRange(min=0, min_open=True), default=0.1, show_default=True)
@click.option("--delta", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--allocation", type=click.Choice(["per-term", "split"]), default="per-term", show_default=True)
@click.option("--repeat", type=click.IntRange(min=1), default=1, show_default=True, help="Seeds seed..seed+repeat-1; reports the failure rate.")
@click.option("--no-purification", is_flag=True, help="Refuse circuits that need a doubled register.")
@click.option("--obs", help="Observable for grad-gsee.")
@click.option("--target", help="Target for grad-genmod (file or 'model').")
@threads_option
@out_option
@handle_errors
def estimate(model, theta, phi, kind, block, i, j, eps, delta, seed, allocation, repeat, no_purification, obs, target, threads, out):
    """Shot-based estimate of one gradient or information-matrix entry."""
    G, H, th, ph, doc = _load(model, theta, phi)
    state = resolve(G, H, th, ph)
    obs_ = _observable(obs, state) if kind == "grad-gsee" else None
    target_ = _target(target, state) if kind == "grad-genmod" else None

    def run(s: int):
        plan = ShotPlan.from_precision(eps, delta, seed=s)
        return _estimate_once(state, kind, block, i, j, plan, allocation, not no_purification, obs_, target_)

    seeds = list(range(seed, seed + repeat))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        runs = list(pool.map(run, seeds))
    first, ref = runs[0]
    body = {
        "header": eio.header(doc, {
            "kind": kind, "block": block, "i": i, "j": j, "eps": eps, "delta": delta, "seed": seed,
            "allocation": allocation, "repeat": repeat, "purification": not no_purification,
            "obs": obs, "target": target,
        }),
        "shots_per_term": ShotPlan.from_precision(eps, delta).N,
        "outcome": _outcome_doc(first, ref),
    }
    if repeat > 1:
        fails = [abs(o.estimate - r) > o.eps for o, r in runs]
        rate = sum(fails) / repeat
        body["sweep"] = {
            "runs": repeat,
            "failures": int(sum(fails)),
            "failure_rate": rate,
            "allowed_rate": delta + 0.03,
            "pass": bool(rate <= delta + 0.03),
            "estimates": [o.estimate for o, _ in runs],
        }
    eio.write_doc(body, out)


@main.command("verify")
@click.option("--suite", type=click.Choice(SUITES + ("all",)), default="all", show_default=True)
@click.option("--seeds", type=click.IntRange(min=1), default=20, show_default=True, help="Seeds 0..seeds-1.")
@click.option("--details", is_flag=True, help="Include one row per (check, seed).")
@threads_option
@out_option
@handle_errors
def verify(suite, seeds, details, threads, out):
    """Run an invariant suite and write a pass/fail table; exits 3 on any failure."""
    rows = run_suite(suite, range(seeds), threads=threads)
    table = summarize(rows)
    ok = all(r["passed"] for r in table)
    body = {"header": eio.header(None, {"suite": suite, "seeds": seeds}), "passed": ok, "summary": table}
    if details:
        body["rows"] = [r.as_dict() for r in rows]
    eio.write_doc(body, out)
    for r in table:
        mark = "PASS" if r["passed"] else "FAIL"
        click.echo(f"{mark} {r['suite']}: {r['check']} worst={r['worst']:.3e} threshold={r['threshold']:.1e}", err=True)
    if not ok:
        sys.exit(EXIT_VERIFY)


def _train_inputs(cfg: dict, base: Path):
    if isinstance(cfg["model"], str):
        model_doc = eio.read_doc(base / cfg["model"])
    else:
        model_doc = cfg["model"]
    G, H, th, ph = eio.model_from_doc(model_doc)
    if "theta" in cfg:
        th = np.array(cfg["theta"], float)
    if "phi" in cfg:
        ph = np.array(cfg["phi"], float)
    if th.shape != (len(G),) or ph.shape != (len(H),):
        raise ContractViolation("theta/phi overrides do not match the model's term counts")
    state = resolve(G, H, th, ph)
    t = cfg["task"]
    if t["kind"] == "gsee":
        obs = PauliSum.parse(t["observable"])
        if obs.n_qubits != G.n_qubits:
            raise ContractViolation("observable and model act on different qubit counts")
        task = Task("gsee", observable=obs)
    else:
        task = Task("genmod", target=target_from_doc(t["target"], state))
    return G, H, th, ph, task, model_doc


def _plot(trace, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(trace)), trace.objective, marker=".")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--plot/--no-plot", default=None, help="Write objective.png (overrides the config's plot flag).")
@handle_errors
def train_cmd(config_path, out_dir, plot):
    """Run gradient or natural-gradient descent from a config document."""
    cfg = eio.read_doc(config_path)
    eio.validate(cfg, "train")
    G, H, th, ph, task, model_doc = _train_inputs(cfg, Path(config_path).parent)
    plan = None
    if cfg.get("grad_source", "exact") == "shots":
        shots = cfg.get("shots")
        if shots is None:
            raise ContractViolation("grad_source 'shots' needs a 'shots' block with eps and delta")
        plan = ShotPlan.from_precision(shots["eps"], shots["delta"], seed=cfg.get("seed", 0))
    config = TrainConfig(
        task=task.kind,
        method=cfg.get("method", "gd"),
        mu=cfg.get("mu", 0.1),
        iters=cfg.get("iters", 50),
        ridge=cfg.get("ridge"),
        freeze=cfg.get("freeze", "none"),
        grad_source=cfg.get("grad_source", "exact"),
        plan=plan,
        seed=cfg.get("seed", 0),
        decay=cfg.get("decay", 1.0),
        grad_tol=cfg.get("grad_tol", 1e-8),
        line_search=cfg.get("line_search", False),
    )
    if cfg.get("probe_mu", False):
        config = TrainConfig(**{**config.__dict__, "mu": probe_learning_rate(G, H, th, ph, task, config)})
    trace = train(G, H, th, ph, task, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv", out / "timing.csv")
    summary = {
        "header": eio.header(model_doc, {"config": cfg}),
        "method": config.method,
        "mu": config.mu,
        "iterations": len(trace) - 1,
        "stopped_early": trace.stopped_early,
        "initial_objective": trace.objective[0],
        "final_objective": trace.objective[-1],
        "final_grad_norm": trace.grad_norm[-1],
        "theta": trace.thetas[-1],
        "phi": trace.phis[-1],
    }
    eio.write_doc(summary, out / "summary.json")
    do_plot = cfg.get("plot", False) if plot is None else plot
    if do_plot:
        _plot(trace, out / "objective.png")
    click.echo(f"final objective {trace.objective[-1]:.6e} after {len(trace) - 1} iterations -> {out}", err=True)


if __name__ == "__main__":  # pragma: no cover
    main()
