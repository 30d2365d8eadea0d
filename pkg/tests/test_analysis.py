import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcert.adversary import std_fooling_state, worst_orthogonal_state
from qcert.analysis import (
    CirculantSpec,
    circulant_eigenvalues,
    circulant_sum_check,
    concentration_deviations,
    concentration_stats,
    e_matrix,
    gaussian_columns,
    gaussian_matrix_experiment,
    m_tilde_double_sum,
    spectral_norm,
    uncertainty_check,
    xor_autocorrelation,
)
from qcert.protocols import two_basis_acceptance
from qcert.statevec import Seed, SizeGuardError, StateVector, complex_gaussian, haar_state

from tests.strategies import seeds, state_pairs


# ---------------------------------------------------------------------------
# uncertainty relation


def test_uncertainty_saturates_at_identity():
    psi = haar_state(8, Seed(1))
    record = uncertainty_check(psi, psi, 2)
    assert abs(record.lhs - 2) <= 1e-9 and abs(record.rhs_core - 2) <= 1e-9
    assert abs(record.margin) <= 1e-9
    assert abs(record.td_margin) <= 1e-9


@given(state_pairs())
def test_e_std_matches_protocol(pair):
    psi, phi, r = pair
    record = uncertainty_check(psi, phi, r)
    report = two_basis_acceptance(psi, phi, r)
    assert abs(record.e_std - report.p_std) <= 1e-10
    assert abs(record.e_had - report.p_had) <= 1e-10


@given(state_pairs())
def test_fidelity_and_distance_forms_agree(pair):
    psi, phi, r = pair
    record = uncertainty_check(psi, phi, r)
    assert abs(record.margin - record.td_margin) <= 1e-9


def test_margin_at_fooling_state():
    psi = haar_state(10, Seed(2))
    fooling = std_fooling_state(psi, 3, Seed(3))
    record = uncertainty_check(psi, fooling.phi, 3)
    assert abs(record.margin - (1 - record.e_std - record.e_had + record.overlap_sq)) <= 1e-12
    assert abs(record.margin + record.e_had) <= 1e-9
    assert record.e_had <= 0.2


def test_worst_state_has_bounded_slack():
    psi = haar_state(8, Seed(4))
    phi = worst_orthogonal_state(psi, 2, seed=Seed(5)).phi
    record = uncertainty_check(psi, phi, 2)
    assert -1 < record.margin < 0


def test_uncertainty_record_serializes():
    psi = haar_state(4, Seed(0))
    record = uncertainty_check(psi, haar_state(4, Seed(1)), 2).to_record()
    assert set(record) >= {"e_std", "e_had", "overlap_sq", "lhs", "rhs_core", "margin"}


# ---------------------------------------------------------------------------
# concentration


def test_concentration_deviations_by_hand():
    # |+>^n has every hat block empty except z = 0
    n, r = 4, 2
    psi = StateVector(n, np.full(2**n, 2 ** (-n / 2)))
    dev_hat, dev_f = concentration_deviations(psi, r)
    assert abs(dev_hat - 3) <= 1e-12
    assert dev_f >= 0


def test_concentration_n12():
    stats = concentration_stats(12, 1.0, 100, Seed(6))
    assert (stats.n, stats.r, stats.k) == (12, 4, 8)
    summary = stats.summary()
    assert summary["max_dev_hat_q95"] <= 0.5 and summary["max_dev_F_q95"] <= 0.5
    assert np.all(stats.max_dev_hat >= 0) and np.all(stats.max_dev_F >= 0)


def test_concentration_deterministic_and_guarded():
    a = concentration_stats(8, 0.5, 5, Seed(7)).summary()
    assert a == concentration_stats(8, 0.5, 5, Seed(7)).summary()
    with pytest.raises(ValueError):
        concentration_stats(17, 1.0, 1, Seed(0))


# ---------------------------------------------------------------------------
# Gaussian overlap matrix


@given(st.integers(1, 4), st.integers(1, 4), seeds)
@settings(max_examples=20)
def test_m_tilde_identity(r, k, seed):
    g = gaussian_columns(np.random.default_rng(seed), 2**k, 2**r)
    e = e_matrix(g)
    assert e.shape == (2**r, 2**r - 1)
    assert np.max(np.abs(m_tilde_double_sum(g) - e @ e.conj().T)) <= 1e-8


def test_e_matrix_entries_by_definition(rng):
    g = complex_gaussian(rng, (5, 4))
    e = e_matrix(g)
    w, s = 2, 3
    assert np.isclose(e[w, s - 1], np.vdot(g[:, w], g[:, w ^ s]) / np.linalg.norm(g[:, w]))
    g_tilde = complex_gaussian(rng, (5, 4))
    assert np.isclose(e_matrix(g, g_tilde)[w, s - 1], np.vdot(g[:, w], g_tilde[:, w ^ s]) / np.linalg.norm(g[:, w]))


def test_spectral_norm_matches_svd(rng):
    m = complex_gaussian(rng, (9, 6))
    assert abs(spectral_norm(m) - np.linalg.norm(m, 2)) <= 1e-10


def test_e_norm_bound_n12_k7():
    coupled = gaussian_matrix_experiment(12, 7, 100, Seed(8))
    decoupled = gaussian_matrix_experiment(12, 7, 100, Seed(9), decoupled=True)
    assert coupled.within_bound() == 100
    assert 0.5 <= decoupled.median() / coupled.median() <= 2
    assert coupled.records[0].to_record()["bound"] == 64


def test_gaussian_guard():
    with pytest.raises(SizeGuardError):
        gaussian_matrix_experiment(12, 5, 1, Seed(0))


# ---------------------------------------------------------------------------
# circulant matrices


def test_circulant_two_by_two():
    np.testing.assert_allclose(circulant_eigenvalues([2, 1]), [3, 1], atol=1e-12)


def test_circulant_delta():
    alpha = np.zeros(8)
    alpha[0] = 2.5
    np.testing.assert_allclose(circulant_eigenvalues(alpha), np.full(8, 2.5), atol=1e-12)


@given(st.integers(1, 6), seeds)
@settings(max_examples=20)
def test_circulant_matches_dense_solver(m, seed):
    alpha = np.random.default_rng(seed).standard_normal(2**m)
    spec = CirculantSpec(alpha)
    got = np.linalg.eigvalsh(spec.dense())
    assert np.max(np.abs(np.sort(got) - np.sort(spec.eigenvalues.real))) <= 1e-9
    assert spec.residual() <= 1e-9


def test_circulant_complex_alpha_eigenvectors(rng):
    spec = CirculantSpec(complex_gaussian(rng, 32))
    assert spec.residual() <= 1e-9


def test_xor_autocorrelation_is_real(rng):
    alpha = xor_autocorrelation(complex_gaussian(rng, 16))
    assert np.max(np.abs(alpha.imag)) <= 1e-12


def test_circulant_sum_check_small():
    report = circulant_sum_check(7, 3, Seed(10))
    assert report.r == 4
    assert report.per_j_max_err <= 1e-8 and report.sum_max_err <= 1e-8


def test_circulant_sum_exp_moment():
    samples = np.concatenate([circulant_sum_check(10, 4, Seed(11, t)).exp_samples for t in range(50)])
    assert abs(samples.mean() - 1) <= 0.05


def test_circulant_sum_large_r_uses_probe():
    report = circulant_sum_check(10, 2, Seed(12))
    assert report.per_j_max_err <= 1e-8 and report.sum_max_err <= 1e-8
    with pytest.raises(SizeGuardError):
        circulant_sum_check(12, 1, Seed(0))
