import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import model_for_seed, state_for_seed, thermal_target
from eqbm.errors import ContractViolation, DomainError
from eqbm.metrics import KINDS, info_matrix
from eqbm.oracle import (
    HESSIAN_DIVERGENCE,
    divergence,
    hessian_info,
    holevo_fidelity,
    omega_derivatives,
    pure_fb,
    purified_derivatives,
    purified_family,
    relative_entropy,
    spectral_info,
    spectral_weights,
    uhlmann_fidelity,
)
from eqbm.pauli import random_model
from eqbm.state import resolve


# --- divergences ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["relent", "-2lnF", "-2lnF_H"])
@pytest.mark.parametrize("seed", range(4))
def test_divergence_faithful(kind, seed):
    rho = thermal_target(4, seed)
    assert abs(divergence(kind, rho, rho)) < 1e-12
    assert divergence(kind, rho, thermal_target(4, seed + 100)) > 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_fidelity_ordering(seed):
    a, b = thermal_target(4, seed), thermal_target(4, seed + 50, scale=2.0)
    F, FH = uhlmann_fidelity(a, b), holevo_fidelity(a, b)
    assert 0 < FH <= F + 1e-12
    assert F <= np.sqrt(FH) + 1e-12
    assert -2 * np.log(FH) >= -2 * np.log(F) - 1e-12 >= -np.log(FH) - 2e-12


def test_fidelity_of_commuting_states_is_classical():
    p, q = np.array([0.7, 0.2, 0.1]), np.array([0.1, 0.3, 0.6])
    bc = np.sum(np.sqrt(p * q)) ** 2
    assert uhlmann_fidelity(np.diag(p), np.diag(q)) == pytest.approx(bc, rel=1e-12)
    assert holevo_fidelity(np.diag(p), np.diag(q)) == pytest.approx(bc, rel=1e-12)


def test_relative_entropy_classical():
    p, q = np.array([0.7, 0.2, 0.1]), np.array([0.1, 0.3, 0.6])
    assert relative_entropy(np.diag(p), np.diag(q)) == pytest.approx(np.sum(p * np.log(p / q)), rel=1e-12)


def test_relative_entropy_matches_scipy():
    sl = pytest.importorskip("scipy.linalg")
    a, b = thermal_target(4, 1), thermal_target(4, 2)
    ref = np.real(np.trace(a @ (sl.logm(a) - sl.logm(b))))
    assert relative_entropy(a, b) == pytest.approx(ref, abs=1e-10)


def test_divergence_domain_errors():
    singular = np.diag([1.0, 0.0])
    with pytest.raises(DomainError):
        relative_entropy(np.eye(2) / 2, singular)
    with pytest.raises(ContractViolation):
        divergence("tv", np.eye(2) / 2, np.eye(2) / 2)
    with pytest.raises(ContractViolation):
        uhlmann_fidelity(np.array([[0.5, 1.0], [0.0, 0.5]]), np.eye(2) / 2)


# --- state derivatives and spectral matrices ---------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_omega_derivatives_match_fd(seed):
    G, H, th, ph = model_for_seed(seed)
    s, h = resolve(G, H, th, ph), 1e-5
    gamma, J = np.concatenate([th, ph]), len(th)
    for i, d in enumerate(omega_derivatives(s)):
        e = np.eye(gamma.size)[i] * h
        fd = (resolve(G, H, *np.split(gamma + e, [J])).omega - resolve(G, H, *np.split(gamma - e, [J])).omega) / (2 * h)
        assert np.abs(d - fd).max() < 1e-7


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_spectral_weight_ordering(a, b):
    lam = np.array([a, b])
    fb, wy, km = (spectral_weights(lam, k)[0, 1] for k in KINDS)
    # reciprocals of the arithmetic, power-1/2 and logarithmic means, in that order
    assert fb <= wy * (1 + 1e-12) and wy <= km * (1 + 1e-12) and wy <= 2 * fb * (1 + 1e-12)


def test_km_weight_degenerate_limit():
    lam = np.array([0.3, 0.3 * (1 + 1e-12), 0.5])
    w = spectral_weights(lam, "KM")
    assert w[0, 1] == pytest.approx(1 / 0.3, rel=1e-9)
    assert np.isfinite(w).all()


@pytest.mark.parametrize("kind", KINDS)
def test_spectral_at_theta_zero_is_identity_gram(kind):
    G, H, _, ph = random_model(2, 3, 2, seed=4)
    s = resolve(G, H, np.zeros(3), ph)
    np.testing.assert_allclose(spectral_info(s, kind).thth, np.eye(3), atol=1e-13)


def test_spectral_unknown_kind():
    with pytest.raises(ContractViolation):
        spectral_weights(np.array([0.5, 0.5]), "QQ")


# --- Hessian oracle -----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", KINDS)
def test_hessian_matches_analytic(seed, kind):
    G, H, th, ph = model_for_seed(seed)
    A = info_matrix(resolve(G, H, th, ph), kind).M
    assert np.abs(hessian_info(G, H, th, ph, kind).M - A).max() < 5e-4


@pytest.mark.parametrize("h", [1e-5, 0.05])
def test_hessian_step_range(h):
    G, H, th, ph = model_for_seed(1)
    with pytest.raises(ContractViolation):
        hessian_info(G, H, th, ph, "FB", h=h)


@pytest.mark.parametrize("kind", KINDS)
def test_divergence_taylor_remainder(kind):
    """D(sigma || sigma + t v) / (t^2/2 v^T M v) tends to 1 linearly in t."""
    G, H, th, ph = random_model(2, 2, 2, seed=8)
    s = resolve(G, H, th, ph)
    M = info_matrix(s, kind).M
    v = np.random.default_rng(0).normal(size=4)
    quad = v @ M @ v / 2
    gaps = []
    for t in (1e-2, 5e-3):
        g = np.concatenate([th, ph]) + t * v
        D = divergence(HESSIAN_DIVERGENCE[kind], s.omega, resolve(G, H, g[:2], g[2:]).omega)
        gaps.append(abs(D / (t * t * quad) - 1))
    assert gaps[1] < gaps[0] and gaps[1] < 0.05


def test_hessian_step_sweep(tmp_path):
    G, H, th, ph = random_model(2, 2, 2, seed=2)
    ref = info_matrix(resolve(G, H, th, ph), "KM").M
    rows = []
    for h in (1e-4, 3e-4, 1e-3, 3e-3, 1e-2):
        rows.append((h, float(np.abs(hessian_info(G, H, th, ph, "KM", h=h).M - ref).max())))
    out = tmp_path / "hessian_sweep.csv"
    with open(out, "w", newline="") as fh:
        csv.writer(fh).writerows([("h", "max_abs_error"), *rows])
    errs = dict(rows)
    assert errs[1e-3] < 5e-4
    # truncation error shrinks from the coarse end of the range
    assert errs[1e-3] < errs[1e-2]
    assert out.read_text().count("\n") == 6


# --- purification -------------------------------------------------------------------


def test_pure_fb_rotation_family():
    fam = lambda g: np.array([np.cos(g[0] / 2), np.sin(g[0] / 2)], dtype=complex)  # noqa: E731
    np.testing.assert_allclose(pure_fb(fam, [0.4]), [[1.0]], atol=1e-8)
    fam2 = lambda g: np.array([np.cos(g[0]), np.sin(g[0])], dtype=complex)  # noqa: E731
    np.testing.assert_allclose(pure_fb(fam2, [0.4]), [[4.0]], atol=1e-8)


def test_pure_fb_global_phase_is_invisible():
    fam = lambda g: np.exp(1j * g[0]) * np.array([0.6, 0.8], dtype=complex)  # noqa: E731
    np.testing.assert_allclose(pure_fb(fam, [1.1]), [[0.0]], atol=1e-8)


def test_pure_fb_rejects_unnormalized():
    with pytest.raises(ContractViolation):
        pure_fb(lambda g: np.array([1.0, 1.0], dtype=complex), [0.0])


@pytest.mark.parametrize("seed", range(8))
def test_purified_derivatives_match_fd(seed):
    G, H, th, ph = model_for_seed(seed, max_qubits=2)
    s = resolve(G, H, th, ph)
    fam, h = purified_family(G, H, len(th)), 1e-5
    gamma = np.concatenate([th, ph])
    for i, d in enumerate(purified_derivatives(s)):
        e = np.eye(gamma.size)[i] * h
        assert np.abs(d - (fam(gamma + e) - fam(gamma - e)) / (2 * h)).max() < 1e-7


@pytest.mark.parametrize("seed", range(8))
def test_wy_is_fb_of_purification(seed):
    G, H, th, ph = model_for_seed(seed, max_qubits=2)
    s = resolve(G, H, th, ph)
    gamma = np.concatenate([th, ph])
    closed = pure_fb(purified_family(G, H, len(th)), gamma, purified_derivatives(s))
    numeric = pure_fb(purified_family(G, H, len(th)), gamma, h=1e-5)
    wy = info_matrix(s, "WY").M
    assert np.abs(closed - wy).max() < 1e-7
    assert np.abs(numeric - wy).max() < 1e-6


def test_spectral_oracle_independent_of_state_cache():
    s = state_for_seed(5)
    a = spectral_info(s, "FB").M
    b = spectral_info(resolve(*model_for_seed(5)), "FB").M
    np.testing.assert_array_equal(a, b)
