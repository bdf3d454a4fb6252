import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import hamiltonian, model_for_seed, state_for_seed
from eqbm.errors import DomainError
from eqbm.metrics import KINDS, InfoMatrix, fb_matrix, info_matrix, km_matrix, wy_matrix, wy_phph_commutator_form
from eqbm.oracle import spectral_info
from eqbm.pauli import ParamHamiltonian, random_model
from eqbm.state import resolve


def classical_fisher(theta: float) -> float:
    """Fisher information of p = e^{-theta}/(e^{-theta} + e^{theta}) in theta, by hand."""
    p = np.exp(-theta) / (np.exp(-theta) + np.exp(theta))
    dp = -2 * p * (1 - p)  # dp/dtheta
    return dp**2 / p + dp**2 / (1 - p)


@pytest.mark.parametrize("theta", [0.0, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("kind", KINDS)
def test_classical_single_qubit(theta, kind, classical_model):
    s = resolve(*classical_model, [theta], [0.37])
    expected = 1 - np.tanh(theta) ** 2
    assert classical_fisher(theta) == pytest.approx(expected, rel=1e-12)
    assert info_matrix(s, kind).thth[0, 0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("theta", [0.3, 1.7])
def test_classical_without_evolution(theta):
    s = resolve(hamiltonian("Z"), hamiltonian(), [theta], [])
    vals = [info_matrix(s, k).M[0, 0] for k in KINDS]
    np.testing.assert_allclose(vals, 1 - np.tanh(theta) ** 2, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_maximally_mixed_theta_block(kind):
    G, H, _, ph = random_model(2, 4, 2, seed=12)
    s = resolve(G, H, np.zeros(4), ph)
    np.testing.assert_allclose(info_matrix(s, kind).thth, np.eye(4), atol=1e-14)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("kind", KINDS)
def test_matches_spectral_oracle(seed, kind):
    s = state_for_seed(seed)
    assert np.abs(info_matrix(s, kind).M - spectral_info(s, kind).M).max() < 1e-8


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", KINDS)
def test_theta_phi_orientation(seed, kind):
    """Rows of the off-diagonal block follow G, columns follow H, as in the oracle."""
    s = resolve(*random_model(2, 3, 2, seed=seed))
    A, S = info_matrix(s, kind), spectral_info(s, kind)
    np.testing.assert_allclose(A.thph, S.thph, atol=1e-10)
    assert A.thph.shape == (3, 2)


@pytest.mark.parametrize("seed", range(10))
def test_wy_phi_block_commutator_form(seed):
    s = state_for_seed(seed)
    np.testing.assert_allclose(wy_matrix(s).phph, wy_phph_commutator_form(s), atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_invariants_symmetry_psd(seed):
    s = state_for_seed(seed)
    for kind in KINDS:
        M = info_matrix(s, kind)
        assert M.asymmetry() < 1e-9
        assert M.min_eig() >= -1e-8
        np.testing.assert_array_equal(M.phth, M.thph.T)
        M.check()


@pytest.mark.parametrize("seed", range(20))
def test_loewner_sandwich(seed):
    s = state_for_seed(seed)
    fb, wy = fb_matrix(s).M, wy_matrix(s).M
    sym = lambda A: (A + A.T) / 2  # noqa: E731
    assert np.linalg.eigvalsh(sym(wy - fb)).min() >= -1e-8
    assert np.linalg.eigvalsh(sym(fb - wy / 2)).min() >= -1e-8


@pytest.mark.parametrize("seed", range(8))
def test_theta_block_independent_of_phi(seed):
    G, H, th, ph = model_for_seed(seed)
    rng = np.random.default_rng(seed)
    base = {k: info_matrix(resolve(G, H, th, ph), k).thth for k in KINDS}
    for _ in range(5):
        s = resolve(G, H, th, rng.uniform(-3, 3, len(ph)))
        for k in KINDS:
            assert np.abs(info_matrix(s, k).thth - base[k]).max() < 1e-9
            assert np.abs(spectral_info(s, k).thth - base[k]).max() < 1e-9


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_metrics_coincide_for_commuting_family(theta):
    s = resolve(hamiltonian("ZI", "IZ", "ZZ"), ParamHamiltonian(2, ()), theta, [])
    fb, wy, km = (info_matrix(s, k).M for k in KINDS)
    assert np.abs(fb - wy).max() < 1e-9 and np.abs(fb - km).max() < 1e-9


def test_km_theta_block_is_lnZ_hessian():
    G, H, th, ph = random_model(2, 3, 2, seed=21)
    h = 1e-3
    lnZ = lambda t: resolve(G, H, t, ph).lnZ  # noqa: E731
    hess = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            ei, ej = np.eye(3)[i] * h, np.eye(3)[j] * h
            hess[i, j] = (lnZ(th + ei + ej) - lnZ(th + ei - ej) - lnZ(th - ei + ej) + lnZ(th - ei - ej)) / (4 * h * h)
    assert np.abs(km_matrix(resolve(G, H, th, ph)).thth - hess).max() < 1e-5


def test_info_matrix_unknown_kind():
    with pytest.raises(ValueError):
        info_matrix(state_for_seed(1), "XX")


def test_block_accessors_and_restrict():
    s = resolve(*random_model(2, 2, 3, seed=3))
    M = info_matrix(s, "FB")
    assert M.thth.shape == (2, 2) and M.phph.shape == (3, 3) and M.thph.shape == (2, 3)
    assert M.entry("phth", 1, 0) == M.entry("thph", 0, 1)
    mask = np.array([True, False, True, True, False])
    np.testing.assert_array_equal(M.restrict(mask), M.M[np.ix_([0, 2, 3], [0, 2, 3])])


def test_check_rejects_indefinite():
    M = InfoMatrix.from_blocks("FB", np.array([[1.0]]), np.array([[-1.0]]), np.array([[0.0]]))
    with pytest.raises(DomainError):
        M.check()



def test_runaway_iterate_stays_well_formed():
    """At ||theta|| ~ 2e8 two Gibbs weights underflow to 0; the closed forms still hold together."""
    G, H, _, ph = random_model(2, 3, 2, seed=90)
    s = resolve(G, H, [-57.180858931292725, -194726320.29146183, -16492387.66835158], ph)
    fb, wy = info_matrix(s, "FB").M, info_matrix(s, "WY").M
    assert np.isfinite(fb).all() and np.isfinite(wy).all()
    assert np.linalg.eigvalsh(wy - fb).min() >= -1e-8
    assert np.linalg.eigvalsh(fb - wy / 2).min() >= -1e-8
    km = info_matrix(s, "KM")
    # round-off in entries with an explicit G factor is relative to ||G|| ~ 2e8
    assert km.asymmetry() < 1e-14 * np.abs(s.theta).sum()
    assert np.isfinite(km.M).all()
    with pytest.raises(DomainError):
        spectral_info(s, "FB")
