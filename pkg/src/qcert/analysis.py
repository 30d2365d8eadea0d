"""Numerical checks of the soundness machinery.

Conditional-fidelity uncertainty relation, Haar concentration of the
conditional norms, the Gaussian overlap matrix E and its decoupled variant,
and Walsh-Hadamard diagonalization of XOR-circulant matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .protocols import leftover_size
from .statevec import (
    BASES,
    ZERO_BLOCK,
    Seed,
    SizeGuardError,
    StateVector,
    complex_gaussian,
    condition,
    fwht,
    haar_state,
    pure_trace_distance,
)

GAUSSIAN_MAX_BLOCKS = 64
CIRCULANT_MAX_M = 12
CIRCULANT_SUM_MAX_R = 10
DENSE_CIRCULANT_MAX_R = 7


# ---------------------------------------------------------------------------
# uncertainty relation


@dataclass
class UncertaintyRecord:
    e_std: float
    e_had: float
    overlap_sq: float
    td_std: float
    td_had: float
    td_global: float

    @property
    def lhs(self) -> float:
        return self.e_std + self.e_had

    @property
    def rhs_core(self) -> float:
        return 1.0 + self.overlap_sq

    @property
    def margin(self) -> float:
        return self.rhs_core - self.lhs

    @property
    def td_margin(self) -> float:
        """Expected conditional squared distances minus the global one."""
        return self.td_std + self.td_had - self.td_global

    def to_record(self) -> dict:
        return {
            "e_std": self.e_std,
            "e_had": self.e_had,
            "overlap_sq": self.overlap_sq,
            "lhs": self.lhs,
            "rhs_core": self.rhs_core,
            "margin": self.margin,
            "td_margin": self.td_margin,
        }


def _conditional_terms(psi: StateVector, phi: StateVector, r: int, basis: str):
    """E_{z ~ mu_phi} of |<psi_z|phi_z>|^2 and of the squared trace distance."""
    target = condition(psi, r, basis)
    lab = condition(phi, r, basis)
    weights = lab.weights
    t_units, l_units = target.normalized(), lab.normalized()
    k = psi.n - r
    fid = dist = 0.0
    for z in np.flatnonzero(weights > ZERO_BLOCK**2):
        if target.norms[z] <= ZERO_BLOCK:
            dist += weights[z]
            continue
        a, b = StateVector(k, t_units[z]), StateVector(k, l_units[z])
        fid += weights[z] * a.fidelity(b)
        dist += weights[z] * pure_trace_distance(a, b) ** 2
    return fid, dist


def uncertainty_check(psi: StateVector, phi: StateVector, r: int) -> UncertaintyRecord:
    (e_std, td_std), (e_had, td_had) = (_conditional_terms(psi, phi, r, b) for b in BASES)
    return UncertaintyRecord(e_std, e_had, psi.fidelity(phi), td_std, td_had,
                             pure_trace_distance(psi, phi) ** 2)


# ---------------------------------------------------------------------------
# concentration of conditional norms


@dataclass
class ConcentrationStats:
    """Per-trial max_z |2^r |hat f_z|^2 - 1| and max_z ||F_z|^2 - 1|."""

    n: int
    r: int
    max_dev_hat: np.ndarray
    max_dev_F: np.ndarray

    @property
    def k(self) -> int:
        return self.n - self.r

    def quantile(self, q: float) -> dict:
        return {
            "max_dev_hat": float(np.quantile(self.max_dev_hat, q)),
            "max_dev_F": float(np.quantile(self.max_dev_F, q)),
        }

    def summary(self) -> dict:
        out = {"n": self.n, "r": self.r, "k": self.k, "trials": len(self.max_dev_hat)}
        for q in (0.5, 0.95, 1.0):
            for key, value in self.quantile(q).items():
                out[f"{key}_q{int(q * 100)}"] = value
        return out


def concentration_deviations(psi: StateVector, r: int):
    """Both deviations for one target; F_z comes from a transform across the block index."""
    blocks = condition(psi, r, "std").blocks
    hat = condition(psi, r, "had").weights
    big_f = np.sqrt(2.0**r) * fwht(blocks, axis=0)
    f_norms = np.einsum("ij,ij->i", big_f.conj(), big_f).real
    return float(np.max(np.abs(2**r * hat - 1))), float(np.max(np.abs(f_norms - 1)))


def concentration_stats(n: int, gamma: float, trials: int, seed: Seed) -> ConcentrationStats:
    k = leftover_size(n, gamma)
    if k < 2 or n > 16 or k >= n:
        raise ValueError(f"need 2 <= k < n <= 16, got n={n}, k={k}")
    r = n - k
    devs = np.array([concentration_deviations(haar_state(n, seed.spawn(t)), r) for t in range(trials)])
    return ConcentrationStats(n, r, devs[:, 0], devs[:, 1])


# ---------------------------------------------------------------------------
# Gaussian overlap matrix


def gaussian_columns(rng: np.random.Generator, d: int, blocks: int) -> np.ndarray:
    """d x 2^r matrix G with i.i.d. standard complex Gaussian entries."""
    return complex_gaussian(rng, (d, blocks))


def e_matrix(g: np.ndarray, g_tilde: np.ndarray = None) -> np.ndarray:
    """E[w, s-1] = <g_w|g'_{w^s}>/|g_w| for s != 0, with g' = g_tilde or g."""
    other = g if g_tilde is None else g_tilde
    size = g.shape[1]
    gram = g.conj().T @ other
    w = np.arange(size)[:, None]
    s = np.arange(1, size)[None, :]
    return gram[w, w ^ s] / np.linalg.norm(g, axis=0)[:, None]


def m_tilde_double_sum(g: np.ndarray) -> np.ndarray:
    """M~ by its defining sum over w' != w, v' != v with w^w'^v^v' = 0."""
    size = g.shape[1]
    norms = np.linalg.norm(g, axis=0)
    out = np.zeros((size, size), dtype=np.complex128)
    for w in range(size):
        for v in range(size):
            total = 0j
            for w2 in range(size):
                if w2 == w:
                    continue
                v2 = v ^ w ^ w2
                total += (np.vdot(g[:, w], g[:, w2]) / norms[w]) * (np.vdot(g[:, v2], g[:, v]) / norms[v])
            out[w, v] = total
    return out


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value via the Hermitian eigendecomposition of M^dagger M."""
    return float(np.sqrt(max(np.linalg.eigvalsh(matrix.conj().T @ matrix)[-1], 0.0)))


@dataclass
class GaussianMatrixRecord:
    n: int
    r: int
    d: int
    spectral_norm: float
    decoupled: bool

    @property
    def bound(self) -> float:
        return math.sqrt(2.0**self.n)

    def to_record(self) -> dict:
        return {"n": self.n, "r": self.r, "d": self.d, "spectral_norm": self.spectral_norm,
                "bound": self.bound, "ratio": self.spectral_norm / self.bound, "decoupled": self.decoupled}


@dataclass
class GaussianMatrixSummary:
    records: List[GaussianMatrixRecord] = field(default_factory=list)

    @property
    def norms(self) -> np.ndarray:
        return np.array([rec.spectral_norm for rec in self.records])

    def median(self) -> float:
        return float(np.median(self.norms))

    def within_bound(self) -> int:
        return int(sum(rec.spectral_norm <= rec.bound for rec in self.records))


def gaussian_matrix_experiment(n: int, k: int, trials: int, seed: Seed, decoupled: bool = False) -> GaussianMatrixSummary:
    r = n - k
    if r < 1 or 2**r > GAUSSIAN_MAX_BLOCKS:
        raise SizeGuardError(f"need 1 <= r and 2^r <= {GAUSSIAN_MAX_BLOCKS}, got r={r}")
    d, size = 2**k, 2**r
    summary = GaussianMatrixSummary()
    for t in range(trials):
        rng = seed.spawn(t).rng()
        g = gaussian_columns(rng, d, size)
        g_tilde = gaussian_columns(rng, d, size) if decoupled else None
        norm = spectral_norm(e_matrix(g, g_tilde))
        summary.records.append(GaussianMatrixRecord(n, r, d, norm, decoupled))
    return summary


# ---------------------------------------------------------------------------
# XOR-circulant matrices


def xor_table(m: int) -> np.ndarray:
    idx = np.arange(2**m)
    return idx[:, None] ^ idx[None, :]


def circulant_eigenvalues(alpha) -> np.ndarray:
    """lambda_t = sum_s alpha(s) (-1)^(t.s), from one normalized transform."""
    alpha = np.asarray(alpha, dtype=np.complex128)
    m = alpha.size.bit_length() - 1
    if m > CIRCULANT_MAX_M:
        raise SizeGuardError(f"m={m} > {CIRCULANT_MAX_M}")
    return fwht(alpha) * 2.0 ** (m / 2)


@dataclass
class CirculantSpec:
    """W(i, k) = alpha(i ^ k) together with its Walsh eigenvalues."""

    alpha: np.ndarray
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.complex128)
        self.eigenvalues = circulant_eigenvalues(self.alpha)

    @property
    def m(self) -> int:
        return self.alpha.size.bit_length() - 1

    def dense(self) -> np.ndarray:
        return self.alpha[xor_table(self.m)]

    def eigenvector(self, t: int) -> np.ndarray:
        x = np.arange(2**self.m)
        return np.array([(-1) ** bin(t & v).count("1") for v in x], dtype=float)

    def residual(self) -> float:
        """max_t |W v_t - lambda_t v_t|_inf over all characters."""
        w = self.dense()
        return max(float(np.max(np.abs(w @ self.eigenvector(t) - self.eigenvalues[t] * self.eigenvector(t))))
                   for t in range(2**self.m))


def xor_autocorrelation(g: np.ndarray) -> np.ndarray:
    """alpha(s) = sum_w g_w conj(g_{w^s}), by direct summation."""
    m = g.size.bit_length() - 1
    return (g[None, :] * g[xor_table(m)].conj()).sum(axis=1)


@dataclass
class CirculantSumReport:
    n: int
    k: int
    per_j_max_err: float
    sum_max_err: float
    lam_max_ratio: float
    exp_samples: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.n - self.k

    def to_record(self) -> dict:
        return {"n": self.n, "k": self.k, "r": self.r, "per_j_max_err": self.per_j_max_err,
                "sum_max_err": self.sum_max_err, "lam_max_ratio": self.lam_max_ratio,
                "exp_mean": float(self.exp_samples.mean())}


def circulant_sum_check(n: int, k: int, seed: Seed) -> CirculantSumReport:
    """Eigenvalues of C = sum_j C^(j) built from Gaussian data.

    Each C^(j) has alpha_j(s) = sum_w g^(j)_w conj(g^(j)_{w^s}); its predicted
    eigenvalues are 2^r |(H g^(j))_t|^2.  Checked against a dense solver when
    r <= 7, otherwise against the character residual on a sample of t.
    """
    r = n - k
    if not 1 <= r <= CIRCULANT_SUM_MAX_R:
        raise SizeGuardError(f"need 1 <= r <= {CIRCULANT_SUM_MAX_R}, got r={r}")
    rng = seed.rng()
    g = complex_gaussian(rng, (2**k, 2**r))  # row j holds g^(j)
    predicted = 2**r * np.abs(fwht(g, axis=1)) ** 2
    table = xor_table(r)
    dense = r <= DENSE_CIRCULANT_MAX_R
    probe = np.arange(2**r) if dense else rng.choice(2**r, size=8, replace=False)
    per_j = 0.0
    total = np.zeros((2**r, 2**r), dtype=np.complex128)
    for j in range(2**k):
        c_j = xor_autocorrelation(g[j])[table]
        total += c_j
        per_j = max(per_j, _eig_error(c_j, predicted[j], dense, probe))
    lam = predicted.sum(axis=0)
    sum_err = _eig_error(total, lam, dense, probe)
    return CirculantSumReport(n, k, per_j, sum_err, float(lam.max() / 2**n), (predicted / 2**r).reshape(-1))


def _eig_error(matrix: np.ndarray, predicted: np.ndarray, dense: bool, probe: np.ndarray) -> float:
    if dense:
        got = np.linalg.eigvalsh(matrix)
        return float(np.max(np.abs(np.sort(got) - np.sort(predicted.real))))
    m = matrix.shape[0].bit_length() - 1
    x = np.arange(2**m)
    err = 0.0
    for t in probe:
        v = np.array([(-1) ** bin(int(t) & int(u)).count("1") for u in x], dtype=float)
        err = max(err, float(np.max(np.abs(matrix @ v - predicted[t] * v))))
    return err
