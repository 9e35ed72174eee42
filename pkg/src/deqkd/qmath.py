"""Exact dense complex linear algebra and Born-rule sampling for 2/4/16-dim states.

Conventions used throughout the package:

- A state is a 1-D complex128 array with unit norm; an operator is a square
  complex128 array; a basis is a (dim, dim) array whose *rows* are the basis
  vectors.
- The full two-photon space uses qubit order (pol1, time1, pol2, time2) with
  amplitude index ``8*pol1 + 4*time1 + 2*pol2 + time2`` and H = early = 0,
  V = late = 1.
- All randomness flows through an explicitly passed ``numpy.random.Generator``
  (PCG64 via ``default_rng``); the caller owns the stream, so identical seeds
  give identical draw sequences.
"""

from __future__ import annotations

import numpy as np

ATOL = 1e-12        # tolerance for algebraic identities
SAMPLE_ATOL = 1e-9  # tolerance when validating probability normalization

_SQRT2_INV = 1.0 / np.sqrt(2.0)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def make_rng(seed) -> np.random.Generator:
    """Deterministic generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.default_rng(seed)


def state(amps) -> np.ndarray:
    """Validate and freeze a state vector (unit norm within 1e-12)."""
    psi = np.asarray(amps, dtype=complex).reshape(-1)
    if psi.shape[0] not in (2, 4, 16):
        raise ValueError(f"state dimension must be 2, 4 or 16, got {psi.shape[0]}")
    if not np.all(np.isfinite(psi.view(float))):
        raise ValueError("state amplitudes must be finite")
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > ATOL:
        raise ValueError(f"state is not normalized: |psi|^2 = {norm2!r}")
    psi = psi.copy()
    psi.setflags(write=False)
    return psi


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(psi))
    if norm <= 0.0:
        raise ValueError("cannot normalize a zero vector")
    return psi / norm


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def tensor(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Kronecker product of two states or two operators, left factor most significant."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.ndim != v.ndim or u.ndim not in (1, 2):
        raise ValueError("tensor expects two states or two operators")
    if u.shape[0] not in (2, 4) or v.shape[0] not in (2, 4):
        raise ValueError("tensor factors must have dimension 2 or 4")
    if u.shape[0] * v.shape[0] > 16:
        raise ValueError("tensor result would exceed dimension 16")
    return np.kron(u, v)


def apply(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Matrix-vector product; result may be unnormalized."""
    op = np.asarray(op, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if op.shape != (psi.shape[0], psi.shape[0]):
        raise ValueError(f"dimension mismatch: op {op.shape} on state {psi.shape}")
    return op @ psi


def inner(u: np.ndarray, v: np.ndarray) -> complex:
    """Hermitian inner product <u|v>, conjugate-linear in the first argument."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return complex(np.vdot(u, v))


def expectation(op: np.ndarray, psi: np.ndarray) -> float:
    """<psi|op|psi> for Hermitian op; the imaginary part must vanish."""
    op = np.asarray(op, dtype=complex)
    if not np.allclose(op, op.conj().T, atol=ATOL):
        raise ValueError("expectation requires a Hermitian operator")
    val = inner(psi, apply(op, psi))
    if abs(val.imag) > ATOL:
        raise ValueError(f"expectation has nonvanishing imaginary part {val.imag!r}")
    return float(val.real)


def _check_sampling_state(psi: np.ndarray) -> None:
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > SAMPLE_ATOL:
        raise ValueError(f"cannot sample from a non-normalized state (|psi|^2 = {norm2!r})")


def born_sample(psi: np.ndarray, basis: np.ndarray, rng: np.random.Generator):
    """Projective measurement in an orthonormal basis.

    Returns ``(index, collapsed)`` where ``index`` is drawn with probability
    ``|<basis[index]|psi>|^2`` and ``collapsed`` is the selected basis vector.
    """
    psi = np.asarray(psi, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    if basis.shape != (psi.shape[0], psi.shape[0]):
        raise ValueError(f"basis shape {basis.shape} does not match state dim {psi.shape[0]}")
    _check_sampling_state(psi)
    probs = np.abs(basis.conj() @ psi) ** 2
    total = float(probs.sum())
    if abs(total - 1.0) > SAMPLE_ATOL:
        raise ValueError(f"basis outcome probabilities sum to {total!r}, not 1")
    probs /= total
    idx = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"),
                  psi.shape[0] - 1))
    return idx, basis[idx].copy()


def measure_subsystem(psi: np.ndarray, basis: np.ndarray, rng: np.random.Generator):
    """Measure the left (most significant) tensor factor of a bipartite state.

    ``psi`` has dimension ``d_left * d_right`` with ``d_left = basis`` dimension.
    Returns ``(index, remainder)`` where ``remainder`` is the normalized
    conditional state of the right factor.
    """
    psi = np.asarray(psi, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    d_left = basis.shape[0]
    if basis.shape != (d_left, d_left) or psi.shape[0] % d_left:
        raise ValueError("basis dimension does not divide state dimension")
    _check_sampling_state(psi)
    amp = basis.conj() @ psi.reshape(d_left, -1)   # row i = unnormalized remainder
    probs = np.einsum("ij,ij->i", amp, amp.conj()).real
    total = float(probs.sum())
    if abs(total - 1.0) > SAMPLE_ATOL:
        raise ValueError(f"subsystem outcome probabilities sum to {total!r}, not 1")
    probs /= total
    idx = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"),
                  d_left - 1))
    return idx, amp[idx] / np.sqrt(probs[idx] * total)


def apply_one_qubit(psi: np.ndarray, op: np.ndarray, qubit: int) -> np.ndarray:
    """Apply a single-qubit operator at the given position (0 = most significant)."""
    n = num_qubits(psi.shape[0])
    if not 0 <= qubit < n:
        raise ValueError(f"qubit index {qubit} out of range for {n} qubits")
    t = psi.reshape([2] * n)
    t = np.moveaxis(np.tensordot(op, np.moveaxis(t, qubit, 0), axes=(1, 0)), 0, qubit)
    return np.ascontiguousarray(t).reshape(-1)


def _frozen(amps) -> np.ndarray:
    v = np.asarray(amps, dtype=complex)
    v.setflags(write=False)
    return v


# Single-photon basis kets.  Polarization: H/V computational, +/- diagonal.
# Time bin: early/late computational, their equal superpositions diagonal.
KET_H = _frozen([1, 0])
KET_V = _frozen([0, 1])
KET_PLUS = _frozen([_SQRT2_INV, _SQRT2_INV])
KET_MINUS = _frozen([_SQRT2_INV, -_SQRT2_INV])
KET_EARLY = _frozen([1, 0])
KET_LATE = _frozen([0, 1])
KET_TIME_PLUS = _frozen([_SQRT2_INV, _SQRT2_INV])
KET_TIME_MINUS = _frozen([_SQRT2_INV, -_SQRT2_INV])


def _pair_state() -> np.ndarray:
    # (|HH> + |VV>)(|ee> + |ll>) / 2, reordered to (pol1, time1, pol2, time2)
    psi = np.zeros(16, dtype=complex)
    for p in (0, 1):
        for t in (0, 1):
            psi[8 * p + 4 * t + 2 * p + t] = 0.5
    psi.setflags(write=False)
    return psi


#: The doubly entangled source state: maximally entangled in polarization and
#: in time bin simultaneously (a 4x4-dimensional maximally entangled state).
PAIR_STATE = _pair_state()
