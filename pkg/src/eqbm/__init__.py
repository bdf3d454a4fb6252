"""Exact simulation, verification and training of evolved quantum Boltzmann machines.

The state family is ``omega = e^{-iH(phi)} rho(theta) e^{iH(phi)}`` with
``rho = e^{-G(theta)} / Z`` and G, H real combinations of Pauli strings.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapabilityError,
    ContractViolation,
    DegenerateModelError,
    DomainError,
    SingularMetricError,
)
from .pauli import ParamHamiltonian, PauliString, assemble, pauli_dense, random_model  # noqa: E402
from .state import EqbmState, HptSampler, canonical_purification, phi_channel, psi_channel, resolve  # noqa: E402

__all__ = [
    "CapabilityError",
    "ContractViolation",
    "DegenerateModelError",
    "DomainError",
    "EqbmState",
    "HptSampler",
    "ParamHamiltonian",
    "PauliString",
    "SingularMetricError",
    "assemble",
    "canonical_purification",
    "pauli_dense",
    "phi_channel",
    "psi_channel",
    "random_model",
    "resolve",
]
