"""Channel between source and detectors: loss, trajectory Pauli noise, eavesdroppers.

Noise is modeled as stochastic Pauli trajectories on pure states rather than as
density-matrix evolution: each emitted pair samples one concrete error pattern,
and ensemble averages reproduce the per-qubit depolarizing channel with error
probability ``pauli_p``.  Eavesdroppers intercept in flight, measure full
apparatus groups and resend collapsed eigenstates, so their output is always an
unentangled product across the two photons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .observables import alice_groups, bob_groups
from .qmath import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    apply_one_qubit,
    born_sample,
    measure_subsystem,
    normalize,
    num_qubits,
    tensor,
)

EVE_NONE = "none"
EVE_IR_BOTH = "ir-both"
EVE_IR_PHOTON2 = "ir-photon2"
EVE_STRATEGIES = (EVE_NONE, EVE_IR_BOTH, EVE_IR_PHOTON2)

_PAULI_TRIO = (PAULI_X, PAULI_Y, PAULI_Z)


@dataclass(frozen=True)
class ChannelConfig:
    """Per-photon detection probability, per-qubit error probability, Eve strategy."""

    eta: float = 1.0
    pauli_p: float = 0.0
    eve: str = EVE_NONE
    noise_after_eve: bool = False  # default applies noise before Eve intercepts

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta!r}")
        if not 0.0 <= self.pauli_p <= 1.0:
            raise ValueError(f"pauli_p must be in [0, 1], got {self.pauli_p!r}")
        if self.eve not in EVE_STRATEGIES:
            raise ValueError(f"eve must be one of {EVE_STRATEGIES}, got {self.eve!r}")


@dataclass(frozen=True)
class EveRecord:
    """Eve's hidden per-round record: guessed groups, readouts, resent eigenvectors."""

    setting_a: Optional[str] = None   # A-group she measured on photon 1
    setting_b: Optional[str] = None   # B-group she measured on photon 2
    outcomes_a: Optional[tuple] = None
    outcomes_b: Optional[tuple] = None
    resent_a: Optional[int] = None    # eigenbasis row index of the resent state
    resent_b: Optional[int] = None


def apply_loss(rng: np.random.Generator, eta: float):
    """Two independent Bernoulli(eta) detection draws, one per photon."""
    return bool(rng.random() < eta), bool(rng.random() < eta)


def apply_pauli_noise(psi: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Independently flip each qubit with probability p by a uniform Pauli."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"pauli_p must be in [0, 1], got {p!r}")
    out = psi
    for qubit in range(num_qubits(psi.shape[0])):
        if rng.random() < p:
            out = apply_one_qubit(out, _PAULI_TRIO[int(rng.integers(3))], qubit)
    return normalize(out) if out is not psi else psi


def eve_intercept_resend_both(psi: np.ndarray, rng: np.random.Generator):
    """Intercept both photons: measure a random A-group then B-group, resend eigenstates."""
    groups_a = alice_groups()
    groups_b = bob_groups()
    ga = groups_a[int(rng.integers(3))]
    gb = groups_b[int(rng.integers(3))]
    alpha, remainder = measure_subsystem(psi, ga.eigenbasis, rng)
    beta, _ = born_sample(remainder, gb.eigenbasis, rng)
    resent = tensor(ga.eigenbasis[alpha], gb.eigenbasis[beta])
    record = EveRecord(
        setting_a=ga.setting.value,
        setting_b=gb.setting.value,
        outcomes_a=ga.labels[alpha],
        outcomes_b=gb.labels[beta],
        resent_a=alpha,
        resent_b=beta,
    )
    return resent, record


def eve_intercept_resend_photon2(phi: np.ndarray, rng: np.random.Generator):
    """Intercept photon 2 only: measure a random B-group, resend the collapsed eigenstate."""
    gb = bob_groups()[int(rng.integers(3))]
    beta, collapsed = born_sample(phi, gb.eigenbasis, rng)
    record = EveRecord(
        setting_b=gb.setting.value,
        outcomes_b=gb.labels[beta],
        resent_b=beta,
    )
    return collapsed, record
