"""The nine local observables per party, grouped into six co-measurable apparatuses.

Each party owns four elementary spin-type operators: ``x``/``z`` act on the
polarization qubit, ``x'``/``z'`` on the time-bin qubit.  They are arranged
into three groups per side, three mutually commuting +/-1 observables each,
so one apparatus reads out all three at once and the third readout is always
the product of the first two:

    A1: z,  x',   z.x'      B1: x',   x,    x.x'
    A2: z', x,    x.z'      B2: z,    z',   z.z'
    A3: zz', xx', zz'.xx'   B3: zx',  xz',  zx'.xz'

Eigenbases are built in closed form: product bases for A1/A2/B1/B2 and
maximally entangled (pol x time) bases for A3/B3.  Vectors are ordered by
descending label triple and carry a real positive leading amplitude, so the
construction is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .qmath import (
    ATOL,
    KET_EARLY,
    KET_H,
    KET_LATE,
    KET_MINUS,
    KET_PLUS,
    KET_TIME_MINUS,
    KET_TIME_PLUS,
    KET_V,
    PAULI_X,
    PAULI_Z,
    expectation,
    inner,
    tensor,
)


class Setting(str, Enum):
    """One of the six apparatus choices; A-side for Alice, B-side for Bob."""

    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"

    @property
    def party(self) -> str:
        return self.value[0]

    @property
    def index(self) -> int:
        return int(self.value[1])


ALICE_SETTINGS = (Setting.A1, Setting.A2, Setting.A3)
BOB_SETTINGS = (Setting.B1, Setting.B2, Setting.B3)

#: Label triples (o1, o2, o3) of every group eigenbasis, in basis-vector order.
#: o3 = o1*o2 always holds; the order is descending lexicographic.
LABEL_ORDER = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


@dataclass(frozen=True)
class ObservableGroup:
    """Three commuting observables plus their common labeled eigenbasis."""

    setting: Setting
    ops: tuple  # three 4x4 Hermitian involutions, in apparatus readout order
    eigenbasis: np.ndarray  # rows are the four simultaneous eigenvectors
    labels: tuple  # four (o1, o2, o3) triples matching the basis rows


def pauli_set() -> dict:
    """The four elementary spin-type operators: x, z on polarization, x', z' on time."""
    return {
        "x": PAULI_X.copy(),
        "z": PAULI_Z.copy(),
        "xp": PAULI_X.copy(),
        "zp": PAULI_Z.copy(),
    }


def _pol(op2) -> np.ndarray:
    return tensor(op2, np.eye(2, dtype=complex))


def _time(op2) -> np.ndarray:
    return tensor(np.eye(2, dtype=complex), op2)


def _product_basis(pol_pair, time_pair, o1_on_time: bool) -> np.ndarray:
    # Rows ordered by descending (o1, o2); the +1 eigenvector comes first in
    # each pair.  o1 indexes the time factor for groups whose first operator
    # acts on the time qubit, the polarization factor otherwise.
    rows = []
    for i in (0, 1):         # o1 = +1 then -1
        for j in (0, 1):     # o2 = +1 then -1
            p, t = (pol_pair[j], time_pair[i]) if o1_on_time else (pol_pair[i], time_pair[j])
            rows.append(tensor(p, t))
    return np.array(rows)


def _entangled_basis(pol_pair, time_pair) -> np.ndarray:
    s = 1.0 / np.sqrt(2.0)
    a0, a1 = pol_pair
    b0, b1 = time_pair
    return np.array([
        s * (tensor(a0, b0) + tensor(a1, b1)),
        s * (tensor(a0, b0) - tensor(a1, b1)),
        s * (tensor(a0, b1) + tensor(a1, b0)),
        s * (tensor(a0, b1) - tensor(a1, b0)),
    ])


@lru_cache(maxsize=None)
def build_group(setting: Setting) -> ObservableGroup:
    """Construct one apparatus group with ops in readout order and labeled eigenbasis."""
    X, Z = PAULI_X, PAULI_Z
    ZX = Z @ X
    XZ = X @ Z
    if setting is Setting.A1:
        ops = (_pol(Z), _time(X), tensor(Z, X))
        basis = _product_basis((KET_H, KET_V), (KET_TIME_PLUS, KET_TIME_MINUS), False)
    elif setting is Setting.A2:
        ops = (_time(Z), _pol(X), tensor(X, Z))
        basis = _product_basis((KET_PLUS, KET_MINUS), (KET_EARLY, KET_LATE), True)
    elif setting is Setting.A3:
        ops = (tensor(Z, Z), tensor(X, X), tensor(ZX, ZX))
        basis = _entangled_basis((KET_H, KET_V), (KET_EARLY, KET_LATE))
    elif setting is Setting.B1:
        ops = (_time(X), _pol(X), tensor(X, X))
        basis = _product_basis((KET_PLUS, KET_MINUS), (KET_TIME_PLUS, KET_TIME_MINUS), True)
    elif setting is Setting.B2:
        ops = (_pol(Z), _time(Z), tensor(Z, Z))
        basis = _product_basis((KET_H, KET_V), (KET_EARLY, KET_LATE), False)
    elif setting is Setting.B3:
        ops = (tensor(Z, X), tensor(X, Z), tensor(ZX, XZ))
        basis = _entangled_basis((KET_H, KET_V), (KET_TIME_PLUS, KET_TIME_MINUS))
    else:
        raise ValueError(f"unknown setting {setting!r}")
    for op in ops:
        op.setflags(write=False)
    basis.setflags(write=False)
    return ObservableGroup(setting=setting, ops=ops, eigenbasis=basis, labels=LABEL_ORDER)


def alice_groups() -> tuple:
    return tuple(build_group(s) for s in ALICE_SETTINGS)


def bob_groups() -> tuple:
    return tuple(build_group(s) for s in BOB_SETTINGS)


def _op16(factors: dict) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for q in range(4):
        out = np.kron(out, factors.get(q, np.eye(2, dtype=complex)))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=1)
def composite_operators() -> tuple:
    """The nine full-pair correlation operators, in the canonical check order.

    Positions: the four pairwise spin correlators (pol z, time z, pol x,
    time x), the four mixed four-qubit correlators, and last the one product
    whose value on the source state is -1.
    """
    X, Z = PAULI_X, PAULI_Z
    ZX = Z @ X
    XZ = X @ Z
    return (
        _op16({0: Z, 2: Z}),
        _op16({1: Z, 3: Z}),
        _op16({0: X, 2: X}),
        _op16({1: X, 3: X}),
        _op16({0: Z, 1: Z, 2: Z, 3: Z}),
        _op16({0: X, 1: X, 2: X, 3: X}),
        _op16({0: Z, 1: X, 2: Z, 3: X}),
        _op16({0: X, 1: Z, 2: X, 3: Z}),
        _op16({0: ZX, 1: ZX, 2: ZX, 3: XZ}),
    )


def eigenequation_vector(psi: np.ndarray) -> np.ndarray:
    """Expectations of the nine correlation operators; (1,)*8 + (-1,) on the source state."""
    return np.array([expectation(op, psi) for op in composite_operators()])


def mub_overlap(g1: ObservableGroup, g2: ObservableGroup) -> np.ndarray:
    """Squared overlaps |<e_beta|e_alpha>|^2 between two same-party group bases."""
    if g1.setting is g2.setting:
        raise ValueError("mub_overlap requires two distinct settings")
    if g1.setting.party != g2.setting.party:
        raise ValueError("mub_overlap requires settings of the same party")
    return np.array([
        [abs(inner(vb, va)) ** 2 for vb in g2.eigenbasis]
        for va in g1.eigenbasis
    ])


def verify_group(group: ObservableGroup, atol: float = ATOL) -> None:
    """Assert commutation and the stored eigenvector/label relations."""
    o1, o2, o3 = group.ops
    for a, b in ((o1, o2), (o1, o3), (o2, o3)):
        if np.abs(a @ b - b @ a).max() > atol:
            raise AssertionError(f"{group.setting}: operators do not commute")
    for vec, lab in zip(group.eigenbasis, group.labels):
        for op, val in zip(group.ops, lab):
            if np.abs(op @ vec - val * vec).max() > atol:
                raise AssertionError(f"{group.setting}: eigenvalue relation broken for {lab}")


def groups_as_dict() -> dict:
    """Serializable dump of all six groups (eigenvectors and labels)."""
    doc = {"qubit_order": "(pol, time); index = 2*pol + time; H = early = 0", "groups": {}}
    for setting in Setting:
        g = build_group(setting)
        doc["groups"][setting.value] = {
            "labels": [list(lab) for lab in g.labels],
            "vectors": [
                [[float(a.real), float(a.imag)] for a in vec]
                for vec in g.eigenbasis
            ],
        }
    return doc
