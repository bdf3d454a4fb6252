import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eqbm.pauli import ParamHamiltonian, PauliString, random_model
from eqbm.state import resolve

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def model_for_seed(seed: int, max_qubits: int = 3):
    """n cycles through 1..max_qubits; J, K through 1..4 (1 on one qubit)."""
    n = 1 + seed % max_qubits
    if n == 1:
        J = K = 1
    else:
        J, K = 1 + (seed // max_qubits) % 4, 1 + (seed // (2 * max_qubits)) % 4
    return random_model(n, J, K, coeff_scale=1.0, seed=seed)


def state_for_seed(seed: int, max_qubits: int = 3):
    return resolve(*model_for_seed(seed, max_qubits))


def hamiltonian(*letters: str) -> ParamHamiltonian:
    n = len(letters[0]) if letters else 1
    return ParamHamiltonian(n, tuple(PauliString(s) for s in letters))


def thermal_target(d: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Thermal state of a random Hamiltonian: always positive definite."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = scale * (A + A.conj().T) / 2
    w, V = np.linalg.eigh(A)
    p = np.exp(-(w - w.min()))
    return (V * (p / p.sum())) @ V.conj().T


def random_observable(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (A + A.conj().T) / 2


@pytest.fixture
def classical_model():
    """One qubit, G = theta Z, H = phi X."""
    return hamiltonian("Z"), hamiltonian("X")


# --- acceptance report ----------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
