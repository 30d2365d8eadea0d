import math

import numpy as np
import pytest
from hypothesis import given

from qcert.oracle import StateOracle
from qcert.protocols import (
    CompletenessError,
    Ensemble,
    IdealSubTest,
    LossySubTest,
    ProtocolReport,
    acceptance_operator,
    branch_acceptance,
    branch_contributions,
    composed_test,
    default_repeats,
    default_split,
    dense_povm,
    ensemble_source,
    expectation,
    had_acceptance_via_tradeoff,
    leave_one_out_acceptance,
    leave_one_out_operator,
    leftover_size,
    pure_source,
    repeated_test,
    run_single_shot,
    sampled_report,
    target_relative_coords,
    two_basis_acceptance,
)
from qcert.statevec import Seed, SizeGuardError, StateVector, condition, haar_state

from tests.strategies import seeds, state_pairs


def plus_minus_pair():
    chi = haar_state(3, Seed(17))
    plus = StateVector(1, np.array([1, 1]) / np.sqrt(2)).kron(chi)
    minus = StateVector(1, np.array([1, -1]) / np.sqrt(2)).kron(chi)
    return plus, minus


def orthogonal_to(psi, seed):
    phi = haar_state(psi.n, seed).amplitudes
    phi = phi - psi.amplitudes * np.vdot(psi.amplitudes, phi)
    return StateVector(psi.n, phi / np.linalg.norm(phi))


# ---------------------------------------------------------------------------
# splits


@pytest.mark.parametrize("n,k,r", [(12, 8, 4), (10, 7, 3), (8, 6, 2), (14, 8, 6)])
def test_default_split(n, k, r):
    assert leftover_size(n, 1.0) == k
    assert default_split(n, 1.0) == r


def test_default_split_is_clamped():
    assert default_split(6, 1.0) == 1
    assert default_split(2, 5.0) == 1


# ---------------------------------------------------------------------------
# exact acceptance


def test_branch_identity_pair():
    psi = haar_state(6, Seed(1))
    report = two_basis_acceptance(psi, psi, 3)
    assert abs(report.p_std - 1) <= 1e-10 and abs(report.p_had - 1) <= 1e-10
    assert report.p_accept == (report.p_std + report.p_had) / 2


def test_branch_orthogonal_conditionals():
    psi, phi = StateVector.basis("00"), StateVector.basis("01")
    assert branch_acceptance(condition(psi, 1), condition(phi, 1)) == 0


def test_plus_minus_fooling_in_miniature():
    plus, minus = plus_minus_pair()
    report = two_basis_acceptance(plus, minus, 1)
    assert abs(report.p_std - 1) <= 1e-10
    assert abs(report.p_had) <= 1e-10
    assert abs(report.p_accept - 0.5) <= 1e-10
    assert abs(expectation(dense_povm(plus, 1), minus) - 0.5) <= 1e-10


def test_zero_target_block_hand_instance():
    psi, phi = StateVector.basis("000000"), StateVector.basis("100000")
    report = two_basis_acceptance(psi, phi, 5)
    assert abs(report.p_std) <= 1e-12
    assert abs(report.p_had - 1) <= 1e-10
    assert abs(expectation(dense_povm(psi, 5), phi) - 0.5) <= 1e-10


def test_mismatched_inputs():
    psi = haar_state(4, Seed(0))
    with pytest.raises(ValueError):
        branch_acceptance(condition(psi, 1), condition(psi, 2))
    with pytest.raises(ValueError):
        two_basis_acceptance(psi, haar_state(3, Seed(0)), 1)
    with pytest.raises(ValueError):
        two_basis_acceptance(psi, psi, 4)


@given(state_pairs())
def test_contributions_bounded_by_weights(pair):
    psi, phi, r = pair
    for basis in ("std", "had"):
        lab = condition(phi, r, basis)
        terms = branch_contributions(condition(psi, r, basis), lab)
        assert np.all(terms >= 0) and np.all(terms <= lab.weights + 1e-12)


@given(state_pairs())
def test_completeness(pair):
    psi, phi, r = pair
    report = two_basis_acceptance(psi, phi, r)
    assert report.p_accept >= psi.fidelity(phi) - 1e-9


def test_completeness_error_type():
    assert issubclass(CompletenessError, RuntimeError)


@given(state_pairs(max_n=6))
def test_dense_povm_equivalence(pair):
    psi, phi, r = pair
    a = dense_povm(psi, r)
    assert abs(expectation(a, phi) - two_basis_acceptance(psi, phi, r).p_accept) <= 1e-8


@pytest.mark.parametrize("n,r", [(4, 2), (6, 3), (8, 4)])
def test_dense_povm_structure(n, r):
    psi = haar_state(n, Seed(n))
    a = dense_povm(psi, r)
    assert np.max(np.abs(a - a.conj().T)) <= 1e-12
    eig = np.linalg.eigvalsh(a)
    assert eig.min() >= -1e-9 and eig.max() <= 1 + 1e-9
    assert np.allclose(a @ psi.amplitudes, psi.amplitudes, atol=1e-9)
    x = haar_state(n, Seed(n, 1)).amplitudes
    np.testing.assert_allclose(acceptance_operator(psi, r)(x), a @ x, atol=1e-10)


def test_dense_povm_guard():
    with pytest.raises(SizeGuardError):
        dense_povm(haar_state(11, Seed(0)), 5)


@given(state_pairs(), seeds)
def test_ensemble_linearity(pair, seed):
    psi, phi, r = pair
    other = haar_state(psi.n, Seed(seed, 7))
    w = np.random.default_rng(seed).random()
    mixed = two_basis_acceptance(psi, Ensemble([(w, phi), (1 - w, other)]), r)
    expected = w * two_basis_acceptance(psi, phi, r).p_accept + (1 - w) * two_basis_acceptance(psi, other, r).p_accept
    assert abs(mixed.p_accept - expected) <= 1e-10
    assert mixed.p_accept >= Ensemble([(w, phi), (1 - w, other)]).fidelity(psi) - 1e-9


def test_ensemble_validation():
    psi = haar_state(2, Seed(0))
    with pytest.raises(ValueError):
        Ensemble([(0.5, psi), (0.6, psi)])
    with pytest.raises(ValueError):
        Ensemble([(0.5, psi), (0.5, haar_state(3, Seed(0)))])


def test_report_record_fields():
    record = ProtocolReport(0.5, 0.25, n=4, r=2).to_record()
    assert list(record) == ["p_std", "p_had", "p_accept", "shots_accept", "shots_total", "n", "r", "gamma", "seed"]
    assert record["p_accept"] == 0.375


# ---------------------------------------------------------------------------
# coordinates and the tradeoff formula


@given(state_pairs())
def test_target_relative_coords(pair):
    psi, phi, r = pair
    f, g = condition(psi, r), condition(phi, r)
    coords = target_relative_coords(f, g)
    units = f.normalized()
    rebuilt = coords.c[:, None] * units + coords.c_perp[:, None] * coords.f_perp
    assert np.allclose(rebuilt, g.blocks, atol=1e-9)
    assert abs(np.sum(np.abs(coords.c) ** 2 + np.abs(coords.c_perp) ** 2) - 1) <= 1e-9
    assert np.all(np.abs(np.einsum("ij,ij->i", f.blocks.conj(), coords.f_perp)) <= 1e-9)
    assert abs(np.sum(np.abs(coords.c) ** 2) - branch_acceptance(f, g)) <= 1e-9
    assert abs(np.sum(coords.c * f.norms) - psi.inner(phi)) <= 1e-9


def test_coords_of_target_itself():
    psi = haar_state(6, Seed(3))
    f = condition(psi, 3)
    coords = target_relative_coords(f, f)
    np.testing.assert_allclose(coords.c, f.norms, atol=1e-12)
    assert np.all(np.abs(coords.c_perp) <= 1e-12)


def test_coords_where_target_block_is_empty():
    psi = StateVector.basis("00")
    phi = StateVector.basis("10")
    coords = target_relative_coords(condition(psi, 1), condition(phi, 1))
    assert coords.c[1] == 0 and abs(coords.c_perp[1] - 1) <= 1e-12


@given(state_pairs(min_n=3, max_n=6))
def test_tradeoff_formula_matches_direct(pair):
    psi, phi, r = pair
    direct = two_basis_acceptance(psi, phi, r).p_had
    assert abs(had_acceptance_via_tradeoff(psi, phi, r) - direct) <= 1e-7


def test_tradeoff_formula_identity_and_orthogonal_pairs():
    psi = haar_state(6, Seed(4))
    assert abs(had_acceptance_via_tradeoff(psi, psi, 3) - 1) <= 1e-7
    phi = orthogonal_to(psi, Seed(5))
    direct = two_basis_acceptance(psi, phi, 3).p_had
    assert abs(had_acceptance_via_tradeoff(psi, phi, 3, include_overlap=False) - direct) <= 1e-7


def test_tradeoff_formula_guards():
    with pytest.raises(SizeGuardError):
        had_acceptance_via_tradeoff(haar_state(10, Seed(0)), haar_state(10, Seed(1)), 9)
    with pytest.raises(ValueError):
        had_acceptance_via_tradeoff(StateVector.basis("000"), StateVector.basis("000"), 1)


# ---------------------------------------------------------------------------
# single-leftover-qubit baseline


def test_leave_one_out_identity():
    psi = haar_state(5, Seed(2))
    assert abs(leave_one_out_acceptance(psi, psi) - 1) <= 1e-10
    assert abs(leave_one_out_acceptance(psi, psi, two_basis=True) - 1) <= 1e-10


@pytest.mark.parametrize("two_basis", [False, True])
def test_leave_one_out_operator_matches_acceptance(two_basis):
    psi = haar_state(5, Seed(6))
    phi = haar_state(5, Seed(7))
    x = phi.amplitudes
    value = np.vdot(x, leave_one_out_operator(psi, two_basis)(x)).real
    assert abs(value - leave_one_out_acceptance(psi, phi, two_basis)) <= 1e-10


# ---------------------------------------------------------------------------
# sampled execution


def test_single_shot_completeness():
    psi = haar_state(6, Seed(8))
    oracle = StateOracle(psi)
    outcome = repeated_test(oracle, pure_source(psi), 3, repeats=2000, threshold=1, seed=Seed(1), keep_shots=True)
    assert outcome.rejects == 0 and outcome.accepted
    assert all(shot.queries == 2**3 for shot in outcome.shots)
    assert oracle.query_count == 2000 * 2**3


def test_single_shot_frequency_plus_minus():
    plus, minus = plus_minus_pair()
    outcome = repeated_test(StateOracle(plus), pure_source(minus), 1, repeats=10_000, threshold=10_001, seed=Seed(2))
    assert abs(1 - outcome.rejects / 10_000 - 0.5) <= 0.02


def test_single_shot_rejects_on_empty_target_block():
    psi, phi = StateVector.basis("000000"), StateVector.basis("100000")
    shots = [run_single_shot(StateOracle(psi), phi, 5, Seed(3, i)) for i in range(200)]
    assert all(not s.accepted for s in shots if s.basis == "std")
    assert all(s.accepted for s in shots if s.basis == "had")


@pytest.mark.parametrize("seed", range(3))
def test_shot_frequency_matches_exact(seed):
    psi, phi = haar_state(6, Seed(seed)), haar_state(6, Seed(seed, 1))
    report = sampled_report(psi, phi, 3, 10_000, Seed(seed, 2))
    p = report.p_accept
    freq = report.shots_accept / report.shots_total
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / 10_000)


def test_ensemble_shots_match_exact():
    psi, phi = haar_state(6, Seed(20)), haar_state(6, Seed(21))
    ensemble = Ensemble([(0.7, psi), (0.3, phi)])
    report = sampled_report(psi, ensemble, 3, 10_000, Seed(4))
    p = report.p_accept
    assert abs(report.shots_accept / 10_000 - p) <= 3 * math.sqrt(p * (1 - p) / 10_000)


def test_shots_are_deterministic():
    psi, phi = haar_state(6, Seed(9)), haar_state(6, Seed(10))
    a = repeated_test(StateOracle(psi), pure_source(phi), 3, repeats=500, seed=Seed(5))
    b = repeated_test(StateOracle(psi), pure_source(phi), 3, repeats=500, seed=Seed(5))
    assert a.rejects == b.rejects


def test_default_repeats():
    repeats, threshold = default_repeats(0.2, 0.05)
    assert repeats == math.ceil(16 * 0.2**-2 * math.log(20)) == 1199
    assert threshold == pytest.approx(repeats * 3 * 0.2 / 8)
    with pytest.raises(ValueError):
        default_repeats(0, 0.05)


def test_vacuous_threshold_always_accepts():
    psi, phi = haar_state(6, Seed(11)), haar_state(6, Seed(12))
    outcome = repeated_test(StateOracle(psi), pure_source(phi), 3, repeats=50, threshold=51, seed=Seed(6))
    assert outcome.accepted


def test_repeated_test_parameter_validation():
    psi = haar_state(4, Seed(0))
    oracle = StateOracle(psi)
    with pytest.raises(ValueError):
        repeated_test(oracle, pure_source(psi), 2, repeats=0)
    with pytest.raises(ValueError):
        repeated_test(oracle, pure_source(psi), 2, repeats=10, threshold=12)


def test_ideal_subtest_reduces_to_repeated_test():
    psi, phi = haar_state(6, Seed(13)), haar_state(6, Seed(14))
    oracle = StateOracle(psi)
    a = composed_test(oracle, pure_source(phi), 3, IdealSubTest(3), repeats=300, seed=Seed(7))
    b = repeated_test(oracle, pure_source(phi), 3, repeats=300, seed=Seed(7))
    assert a.rejects == b.rejects


def test_subtest_dimension_checked():
    psi = haar_state(6, Seed(0))
    with pytest.raises(ValueError):
        composed_test(StateOracle(psi), pure_source(psi), 3, IdealSubTest(2), repeats=5)
    with pytest.raises(ValueError):
        IdealSubTest(2)(np.ones(8) / np.sqrt(8), np.ones(8) / np.sqrt(8), np.random.default_rng(0))


def test_mock_subtest_contract():
    target = np.array([1, 0], dtype=complex)
    lab = np.array([np.sqrt(0.5), np.sqrt(0.5)], dtype=complex)
    mock = LossySubTest(1, divisor=4)
    assert mock.accept_probability(target, lab) == pytest.approx(1 - 0.5 / 4)
    assert LossySubTest(3).divisor == 3


def test_mock_subtest_reject_rate_bound():
    n, k = 10, 4
    r = n - k
    psi = haar_state(n, Seed(30))
    phi = orthogonal_to(psi, Seed(31))
    ensemble = Ensemble([(0.5, psi), (0.5, phi)])
    outcome = composed_test(StateOracle(psi), ensemble_source(ensemble, Seed(8)), r, LossySubTest(k),
                            repeats=20_000, threshold=20_001, seed=Seed(9))
    rate = outcome.rejects / outcome.repeats
    infidelity = 1 - ensemble.fidelity(psi)
    assert rate >= infidelity / (2 * 2 * k)
