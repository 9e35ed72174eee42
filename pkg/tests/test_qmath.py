import numpy as np
import pytest
from scipy import stats

from deqkd.qmath import (
    KET_EARLY,
    KET_H,
    KET_LATE,
    KET_PLUS,
    KET_TIME_PLUS,
    KET_V,
    PAIR_STATE,
    PAULI_X,
    PAULI_Z,
    apply,
    apply_one_qubit,
    born_sample,
    expectation,
    inner,
    make_rng,
    measure_subsystem,
    state,
    tensor,
)

from conftest import random_basis, random_state

I2 = np.eye(2, dtype=complex)


def test_tensor_basis_ordering():
    v = tensor(KET_H, KET_EARLY)
    assert v[0] == 1 and np.all(v[1:] == 0)


def test_tensor_operator_action():
    zi = tensor(PAULI_Z, I2)
    v_late = tensor(KET_V, KET_EARLY)
    assert np.allclose(apply(zi, v_late), -v_late, atol=1e-12)


def test_tensor_reorder_matches_pair_state_term():
    # (pol1=H, pol2=H) x (time1=early, time2=early) sits at joint index 0
    # in qubit order (pol1, time1, pol2, time2) with amplitude 1/2.
    assert PAIR_STATE[0] == pytest.approx(0.5)
    idx = 8 * 1 + 4 * 1 + 2 * 1 + 1  # |V late V late>
    assert PAIR_STATE[idx] == pytest.approx(0.5)
    assert np.count_nonzero(PAIR_STATE) == 4


def test_tensor_dimension_overflow():
    four = tensor(KET_H, KET_EARLY)
    assert tensor(four, four).shape == (16,)
    with pytest.raises(ValueError):
        tensor(tensor(four, four), KET_H)


def test_apply_examples():
    assert np.allclose(apply(PAULI_X, KET_H), KET_V, atol=1e-12)
    assert np.allclose(apply(PAULI_Z, KET_LATE), -KET_LATE, atol=1e-12)
    psi = random_state(make_rng(5), 4)
    assert np.allclose(apply(np.eye(4), psi), psi, atol=1e-12)


def test_apply_dim_mismatch():
    with pytest.raises(ValueError):
        apply(np.eye(4), KET_H)


def test_inner_examples():
    assert inner(KET_H, KET_V) == pytest.approx(0)
    assert inner(KET_TIME_PLUS, KET_EARLY) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(ValueError):
        inner(KET_H, PAIR_STATE)


def test_inner_conjugate_linear_first_argument(rng):
    u = random_state(rng, 4)
    v = random_state(rng, 4)
    c = 0.3 + 0.7j
    assert inner(c * u, v) == pytest.approx(np.conj(c) * inner(u, v))
    assert inner(u, c * v) == pytest.approx(c * inner(u, v))


def test_expectation_real_and_bounded():
    assert expectation(PAULI_Z, KET_PLUS) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        expectation(np.array([[0, 1], [0, 0]], dtype=complex), KET_H)


def test_state_validates_norm():
    with pytest.raises(ValueError):
        state([1, 1])
    with pytest.raises(ValueError):
        state([1, 0, 0])


def test_born_sample_eigenvector_is_deterministic():
    basis = np.array([tensor(a, b) for a in (KET_H, KET_V) for b in (KET_EARLY, KET_LATE)])
    rng = make_rng(1)
    psi = tensor(KET_H, KET_EARLY)
    for _ in range(50):
        idx, collapsed = born_sample(psi, basis, rng)
        assert idx == 0
        assert np.allclose(collapsed, psi, atol=1e-12)


def test_born_sample_half_half_expansion():
    # |H, time-plus> measured in the computational product basis lands on
    # |H early> or |H late> only, about half the time each.
    basis = np.array([tensor(a, b) for a in (KET_H, KET_V) for b in (KET_EARLY, KET_LATE)])
    psi = tensor(KET_H, KET_TIME_PLUS)
    rng = make_rng(2)
    hits = np.zeros(4, dtype=int)
    n = 20000
    for _ in range(n):
        idx, _ = born_sample(psi, basis, rng)
        hits[idx] += 1
    assert hits[2] == 0 and hits[3] == 0
    sigma = np.sqrt(n * 0.25)
    assert abs(hits[0] - n / 2) < 4 * sigma


def test_born_sample_rejects_unnormalized():
    rng = make_rng(3)
    basis = np.eye(4, dtype=complex)
    with pytest.raises(ValueError):
        born_sample(np.array([1.0, 1.0, 0, 0], dtype=complex), basis, rng)


def test_born_sample_frequencies_match_probabilities(rng):
    # Chi-square at significance 1e-3 against exact probabilities, plus a 4-sigma
    # binomial check per outcome, over 1e5 draws from a random state.
    psi = random_state(rng, 4)
    basis = random_basis(rng, 4)
    exact = np.abs(basis.conj() @ psi) ** 2
    n = 100_000
    counts = np.zeros(4, dtype=int)
    sample_rng = make_rng(99)
    for _ in range(n):
        idx, _ = born_sample(psi, basis, sample_rng)
        counts[idx] += 1
    for k in range(4):
        sigma = np.sqrt(n * exact[k] * (1 - exact[k]))
        assert abs(counts[k] - n * exact[k]) < 4 * sigma + 1
    chi2, p_value = stats.chisquare(counts, f_exp=n * exact)
    assert p_value > 1e-3, f"chi2={chi2}, p={p_value}"


def test_collapse_norms(rng):
    # Norm preservation: collapsed states and conditional remainders are unit.
    for _ in range(25):
        psi = random_state(rng, 16)
        basis16 = random_basis(rng, 16)
        _, collapsed = born_sample(psi, basis16, rng)
        assert np.vdot(collapsed, collapsed).real == pytest.approx(1, abs=1e-12)
        basis4 = random_basis(rng, 4)
        _, remainder = measure_subsystem(psi, basis4, rng)
        assert np.vdot(remainder, remainder).real == pytest.approx(1, abs=1e-12)


def test_measure_subsystem_statistics(rng):
    # Outcome frequencies match the reduced-state probabilities of the left factor.
    psi = random_state(rng, 16)
    basis4 = random_basis(rng, 4)
    amp = basis4.conj() @ psi.reshape(4, 4)
    exact = np.einsum("ij,ij->i", amp, amp.conj()).real
    n = 40000
    counts = np.zeros(4, dtype=int)
    sample_rng = make_rng(17)
    for _ in range(n):
        idx, _ = measure_subsystem(psi, basis4, sample_rng)
        counts[idx] += 1
    _, p_value = stats.chisquare(counts, f_exp=n * exact)
    assert p_value > 1e-3


def test_measure_subsystem_collapses_pair_state():
    # Projecting photon 1 of the source state leaves photon 2 in the same
    # (real) vector, each outcome with probability 1/4.
    rng = make_rng(4)
    basis = np.array([tensor(a, b) for a in (KET_H, KET_V) for b in (KET_EARLY, KET_LATE)])
    idx, remainder = measure_subsystem(PAIR_STATE, basis, rng)
    assert np.allclose(remainder, basis[idx], atol=1e-12)


def test_apply_one_qubit_matches_kron():
    rng = make_rng(6)
    psi = random_state(rng, 16)
    for qubit in range(4):
        ops = [I2] * 4
        ops[qubit] = PAULI_X
        full = np.kron(np.kron(ops[0], ops[1]), np.kron(ops[2], ops[3]))
        assert np.allclose(apply_one_qubit(psi, PAULI_X, qubit), full @ psi, atol=1e-12)


def test_same_seed_same_stream():
    a = make_rng([123, 4])
    b = make_rng([123, 4])
    assert [a.random() for _ in range(20)] == [b.random() for _ in range(20)]
    assert make_rng([123, 5]).random() != make_rng([123, 4]).random()
