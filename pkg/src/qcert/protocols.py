"""Two-basis conditional certification tests.

Exact acceptance probabilities, the dense accept operator used as a
reference, sampled single-shot execution through an amplitude oracle, the
single-leftover-qubit (leave-one-qubit-out) baseline, and amplified/composed tests.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .oracle import AmplitudeOracle, StateOracle, conditional_via_oracle
from .statevec import (
    HAD,
    STD,
    ZERO_BLOCK,
    ConditionalDecomposition,
    Seed,
    SeedLike,
    SizeGuardError,
    StateVector,
    as_rng,
    check_split,
    condition,
    draw_index,
    fwht,
    hadamard_matrix,
)

DENSE_MAX_QUBITS = 10
TRADEOFF_MAX_SPLIT = 8


class CompletenessError(RuntimeError):
    """Acceptance fell below the fidelity with the target."""


def leftover_size(n: int, gamma: float = 1.0) -> int:
    """ceil((1 + gamma) log2 n) qubits left for the final measurement."""
    if n < 2:
        raise ValueError("need n >= 2")
    return math.ceil((1.0 + gamma) * math.log2(n) - 1e-12)


def default_split(n: int, gamma: float = 1.0) -> int:
    """Number of measured qubits r = n - leftover, clamped to [1, n - 1]."""
    return min(max(n - leftover_size(n, gamma), 1), n - 1)


# ---------------------------------------------------------------------------
# records


@dataclass
class ProtocolReport:
    p_std: float
    p_had: float
    details_std: np.ndarray = field(default=None, repr=False)
    details_had: np.ndarray = field(default=None, repr=False)
    shots_accept: Optional[int] = None
    shots_total: Optional[int] = None
    n: Optional[int] = None
    r: Optional[int] = None
    gamma: Optional[float] = None
    seed: Optional[int] = None

    @property
    def p_accept(self) -> float:
        return (self.p_std + self.p_had) / 2

    def to_record(self) -> dict:
        return {
            "p_std": self.p_std,
            "p_had": self.p_had,
            "p_accept": self.p_accept,
            "shots_accept": self.shots_accept,
            "shots_total": self.shots_total,
            "n": self.n,
            "r": self.r,
            "gamma": self.gamma,
            "seed": self.seed,
        }


@dataclass
class TargetRelativeCoords:
    """Lab blocks written as ``g_z = c_z f_z/|f_z| + c_perp_z f_perp_z``.

    ``f_perp`` rows are zero where the orthogonal part vanishes.  Where the
    target block is empty, ``c_z = 0`` and the whole lab block is orthogonal.
    """

    c: np.ndarray
    c_perp: np.ndarray
    f_perp: np.ndarray = field(repr=False)
    has_perp: np.ndarray = field(repr=False)


@dataclass
class Ensemble:
    """Mixed lab state as a finite pure-state ensemble."""

    components: Sequence[Tuple[float, StateVector]]

    def __post_init__(self):
        self.components = [(float(w), s) for w, s in self.components]
        weights = np.array([w for w, _ in self.components])
        if not self.components or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("ensemble weights must be non-negative and sum to 1")
        if len({s.n for _, s in self.components}) != 1:
            raise ValueError("ensemble components differ in qubit count")

    @property
    def n(self) -> int:
        return self.components[0][1].n

    def fidelity(self, target: StateVector) -> float:
        return sum(w * target.fidelity(s) for w, s in self.components)


LabState = Union[StateVector, Ensemble]


# ---------------------------------------------------------------------------
# exact acceptance


def branch_contributions(target: ConditionalDecomposition, lab: ConditionalDecomposition) -> np.ndarray:
    """Per-outcome terms |<f_z, g_z>|^2 / |f_z|^2; zero where the target block is empty."""
    if not target.compatible(lab):
        raise ValueError("target and lab decompositions differ in (n, r, basis)")
    overlaps = np.einsum("ij,ij->i", target.blocks.conj(), lab.blocks)
    weights = target.weights
    out = np.zeros(len(weights))
    live = weights > ZERO_BLOCK**2
    out[live] = np.abs(overlaps[live]) ** 2 / weights[live]
    return out


def branch_acceptance(target: ConditionalDecomposition, lab: ConditionalDecomposition) -> float:
    return float(branch_contributions(target, lab).sum())


def _pure_report(psi: StateVector, phi: StateVector, r: int) -> ProtocolReport:
    std = branch_contributions(condition(psi, r, STD), condition(phi, r, STD))
    had = branch_contributions(condition(psi, r, HAD), condition(phi, r, HAD))
    return ProtocolReport(float(std.sum()), float(had.sum()), std, had)


def two_basis_acceptance(psi: StateVector, lab: LabState, r: int) -> ProtocolReport:
    """Exact Pr[accept | std], Pr[accept | had] for a pure or ensemble lab state."""
    check_split(psi.n, r)
    if lab.n != psi.n:
        raise ValueError(f"dimension mismatch: {psi.n} vs {lab.n} qubits")
    if isinstance(lab, StateVector):
        report = _pure_report(psi, lab, r)
    else:
        parts = [(w, _pure_report(psi, s, r)) for w, s in lab.components]
        report = ProtocolReport(
            sum(w * p.p_std for w, p in parts),
            sum(w * p.p_had for w, p in parts),
            sum(w * p.details_std for w, p in parts),
            sum(w * p.details_had for w, p in parts),
        )
    report.n, report.r = psi.n, r
    fidelity = psi.fidelity(lab) if isinstance(lab, StateVector) else lab.fidelity(psi)
    if report.p_accept < fidelity - 1e-9:
        raise CompletenessError(f"p_accept {report.p_accept!r} < fidelity {fidelity!r}")
    return report


def dense_povm(psi: StateVector, r: int) -> np.ndarray:
    """Accept operator A as an explicit 2**n x 2**n matrix (n <= 10).

    Built from outer products and a dense Kronecker Hadamard, independent of
    the fast transform used elsewhere.
    """
    if psi.n > DENSE_MAX_QUBITS:
        raise SizeGuardError(f"dense POVM limited to n <= {DENSE_MAX_QUBITS}, got {psi.n}")
    check_split(psi.n, r)
    n, d = psi.n, 2 ** (psi.n - r)
    hn = hadamard_matrix(n)
    had_state = hn @ psi.amplitudes

    def block_projector(amps):
        out = np.zeros((2**n, 2**n), dtype=np.complex128)
        for z in range(2**r):
            v = amps[z * d:(z + 1) * d]
            norm = np.linalg.norm(v)
            if norm > ZERO_BLOCK:
                v = v / norm
                out[z * d:(z + 1) * d, z * d:(z + 1) * d] = np.outer(v, v.conj())
        return out

    return 0.5 * block_projector(psi.amplitudes) + 0.5 * hn @ block_projector(had_state) @ hn


def expectation(operator: np.ndarray, lab: LabState) -> float:
    if isinstance(lab, StateVector):
        v = lab.amplitudes
        return float(np.vdot(v, operator @ v).real)
    return sum(w * expectation(operator, s) for w, s in lab.components)


def acceptance_operator(psi: StateVector, r: int) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free action of A, O(n 2**n) per application."""
    check_split(psi.n, r)
    d = 2 ** (psi.n - r)
    p_std = condition(psi, r, STD).normalized()
    p_had = condition(psi, r, HAD).normalized()

    def apply(x: np.ndarray) -> np.ndarray:
        blocks = x.reshape(-1, d)
        std = p_std * np.einsum("ij,ij->i", p_std.conj(), blocks)[:, None]
        hblocks = fwht(x).reshape(-1, d)
        had = p_had * np.einsum("ij,ij->i", p_had.conj(), hblocks)[:, None]
        return 0.5 * std.reshape(-1) + 0.5 * fwht(had.reshape(-1))

    return apply


# ---------------------------------------------------------------------------
# coordinates relative to the target


def target_relative_coords(target: ConditionalDecomposition, lab: ConditionalDecomposition) -> TargetRelativeCoords:
    if not target.compatible(lab):
        raise ValueError("target and lab decompositions differ in (n, r, basis)")
    norms = target.norms
    live = norms > ZERO_BLOCK
    units = target.normalized()
    c = np.where(live, np.einsum("ij,ij->i", units.conj(), lab.blocks), 0.0)
    residual = lab.blocks - c[:, None] * units
    c_perp = np.linalg.norm(residual, axis=1)
    has_perp = c_perp > ZERO_BLOCK
    f_perp = np.zeros_like(residual)
    f_perp[has_perp] = residual[has_perp] / c_perp[has_perp, None]
    return TargetRelativeCoords(c, c_perp.astype(np.complex128), f_perp, has_perp)


def had_acceptance_via_tradeoff(psi: StateVector, phi: StateVector, r: int, include_overlap: bool = True) -> float:
    """Hadamard-branch acceptance rebuilt from standard-basis data.

    Evaluates, term by term,
    ``2**(-2r) sum_z |<f|g> + sum_{w != w'} (-1)^(z.(w^w')) S[w, w']|^2 / |hat f_z|^2``
    with ``S[w, w'] = c_w <f_w'|f_w>/|f_w| + c_perp_w <f_w'|f_perp_w>``.
    ``include_overlap=False`` drops the global ``<f|g>`` term, which is exact
    only for orthogonal pairs.
    """
    check_split(psi.n, r)
    if r > TRADEOFF_MAX_SPLIT:
        raise SizeGuardError(f"tradeoff formula costs 2**(3r); r={r} > {TRADEOFF_MAX_SPLIT}")
    std_f = condition(psi, r, STD)
    std_g = condition(phi, r, STD)
    hat_weights = condition(psi, r, HAD).weights
    if np.any(std_f.norms <= ZERO_BLOCK) or np.any(hat_weights <= ZERO_BLOCK**2):
        raise ValueError("tradeoff formula needs every target conditional to be nonzero")
    coords = target_relative_coords(std_f, std_g)
    f = std_f.blocks
    gram = f.conj() @ f.T  # gram[w', w] = <f_w'|f_w>
    cross = f.conj() @ coords.f_perp.T  # cross[w', w] = <f_w'|f_perp_w>
    s = (coords.c / std_f.norms)[:, None] * gram.T + coords.c_perp[:, None] * cross.T
    np.fill_diagonal(s, 0.0)
    size = 2**r
    idx = np.arange(size)
    signs = np.array([[(-1) ** bin(a & b).count("1") for b in idx] for a in idx], dtype=float)
    overlap = psi.inner(phi) if include_overlap else 0.0
    total = 0.0
    for z in range(size):
        inner = overlap + np.einsum("w,v,wv->", signs[z], signs[z], s)
        total += abs(inner) ** 2 / hat_weights[z]
    return float(total / 2 ** (2 * r))


# ---------------------------------------------------------------------------
# single-leftover-qubit baseline


def _leftover_last(state: StateVector, i: int) -> StateVector:
    order = [j for j in range(state.n) if j != i] + [i]
    return state.permute_qubits(order)


def leave_one_out_branches(psi: StateVector, phi: StateVector) -> Tuple[float, float]:
    """Mean over leftover qubit i of the (std, had) acceptance with r = n - 1."""
    if psi.n < 2:
        raise ValueError("need n >= 2")
    std = had = 0.0
    for i in range(psi.n):
        a, b = _leftover_last(psi, i), _leftover_last(phi, i)
        r = psi.n - 1
        std += branch_acceptance(condition(a, r, STD), condition(b, r, STD))
        had += branch_acceptance(condition(a, r, HAD), condition(b, r, HAD))
    return std / psi.n, had / psi.n


def leave_one_out_acceptance(psi: StateVector, phi: StateVector, two_basis: bool = False) -> float:
    std, had = leave_one_out_branches(psi, phi)
    return (std + had) / 2 if two_basis else std


def leave_one_out_operator(psi: StateVector, two_basis: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free accept operator of the leftover-one-qubit test."""
    n = psi.n
    parts = []
    for i in range(n):
        order = [j for j in range(n) if j != i] + [i]
        inverse = list(np.argsort(order))
        a = psi.permute_qubits(order)
        units = [condition(a, n - 1, STD).normalized()]
        if two_basis:
            units.append(condition(a, n - 1, HAD).normalized())
        parts.append((order, inverse, units))

    def apply(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for order, inverse, units in parts:
            y = np.transpose(x.reshape((2,) * n), order).reshape(-1)
            acc = np.zeros_like(y)
            for basis, u in zip((STD, HAD), units):
                v = y if basis == STD else fwht(y)
                blocks = u * np.einsum("ij,ij->i", u.conj(), v.reshape(-1, 2))[:, None]
                acc += blocks.reshape(-1) if basis == STD else fwht(blocks.reshape(-1))
            acc /= len(units)
            out += np.transpose(acc.reshape((2,) * n), inverse).reshape(-1)
        return out / n

    return apply


# ---------------------------------------------------------------------------
# sampled execution


@dataclass(frozen=True)
class ShotResult:
    accepted: bool
    basis: str
    z: int
    queries: int


class SubTest(ABC):
    """Single-copy test on k-qubit states, accept/reject.

    ``divisor`` is the declared soundness loss m: a lab copy at fidelity F is
    rejected with probability at least (1 - F)/m.
    """

    k: int
    divisor: float = 1.0

    @abstractmethod
    def accept_probability(self, target: np.ndarray, lab: np.ndarray) -> float:
        ...

    def __call__(self, target: np.ndarray, lab: np.ndarray, rng: np.random.Generator) -> bool:
        if target.size != 2**self.k or lab.size != 2**self.k:
            raise ValueError(f"subtest acts on {self.k} qubits, got vectors of size {target.size}/{lab.size}")
        return bool(rng.random() < self.accept_probability(target, lab))


class IdealSubTest(SubTest):
    """Projective {|t><t|, I - |t><t|} measurement; accepts with probability |<t|x>|^2."""

    def __init__(self, k: int):
        self.k = k
        self.divisor = 1.0

    def accept_probability(self, target, lab):
        return min(1.0, abs(np.vdot(target, lab)) ** 2)


class LossySubTest(SubTest):
    """Stand-in for a non-robust single-qubit-measurement test.

    Accepts with probability 1 - (1 - F)/divisor, which meets the contract
    with equality.
    """

    def __init__(self, k: int, divisor: Optional[float] = None):
        self.k = k
        self.divisor = float(k if divisor is None else divisor)

    def accept_probability(self, target, lab):
        fidelity = min(1.0, abs(np.vdot(target, lab)) ** 2)
        return 1.0 - (1.0 - fidelity) / self.divisor


class _LabCache:
    """Per-run memo of lab decompositions keyed by object identity."""

    def __init__(self, r: int):
        self.r = r
        self._store: Dict[int, Tuple[StateVector, Dict[str, Tuple[np.ndarray, np.ndarray]]]] = {}

    def get(self, lab: StateVector, basis: str) -> Tuple[np.ndarray, np.ndarray]:
        entry = self._store.get(id(lab))
        if entry is None or entry[0] is not lab:
            entry = (lab, {})
            self._store[id(lab)] = entry
        if basis not in entry[1]:
            decomp = condition(lab, self.r, basis)
            entry[1][basis] = (decomp.weights, decomp.normalized())
        return entry[1][basis]


def _shot(oracle: AmplitudeOracle, lab: StateVector, r: int, rng: np.random.Generator,
          subtest: Optional[SubTest], cache: _LabCache) -> ShotResult:
    basis = STD if rng.random() < 0.5 else HAD
    weights, lab_units = cache.get(lab, basis)
    z = draw_index(weights, rng)
    before = oracle.query_count
    target = conditional_via_oracle(oracle, z, r, basis)
    queries = oracle.query_count - before
    norm = np.linalg.norm(target)
    if norm <= ZERO_BLOCK:
        return ShotResult(False, basis, z, queries)
    target = target / norm
    if subtest is None:
        accepted = bool(rng.random() < abs(np.vdot(target, lab_units[z])) ** 2)
    else:
        accepted = subtest(target, lab_units[z], rng)
    return ShotResult(accepted, basis, z, queries)


def run_single_shot(oracle: AmplitudeOracle, lab_copy: StateVector, r: int, seed: SeedLike) -> ShotResult:
    """One execution of the two-basis test on one lab copy."""
    check_split(oracle.n, r)
    if lab_copy.n != oracle.n:
        raise ValueError("lab copy and oracle differ in qubit count")
    return _shot(oracle, lab_copy, r, as_rng(seed), None, _LabCache(r))


LabSource = Callable[[int], StateVector]


def pure_source(state: StateVector) -> LabSource:
    return lambda shot: state


def ensemble_source(ensemble: Ensemble, seed: Seed) -> LabSource:
    """Shot ``i`` receives a component drawn with the ensemble weights from ``seed.spawn(i)``."""
    weights = np.array([w for w, _ in ensemble.components])
    states = [s for _, s in ensemble.components]

    def source(shot: int) -> StateVector:
        return states[draw_index(weights, seed.spawn(shot).rng())]

    return source


def default_repeats(epsilon: float, delta: float, divisor: float = 1.0) -> Tuple[int, float]:
    """Chernoff-midpoint repeats and reject threshold.

    Expected reject rates of the two hypotheses are taken as eps/(4m) and
    eps/(2m); the threshold sits at their midpoint, 3 eps/(8m) per shot.
    """
    if not (0 < epsilon <= 1 and 0 < delta < 1):
        raise ValueError("need 0 < epsilon <= 1 and 0 < delta < 1")
    repeats = math.ceil(16 * divisor**2 * epsilon**-2 * math.log(1 / delta))
    return repeats, repeats * 3 * epsilon / (8 * divisor)


@dataclass
class AmplifiedOutcome:
    accepted: bool
    rejects: int
    repeats: int
    threshold: float
    queries: int
    shots: Sequence[ShotResult] = field(default_factory=list, repr=False)


def composed_test(oracle: AmplitudeOracle, lab_source: LabSource, r: int, subtest: Optional[SubTest],
                  epsilon: float = 0.2, delta: float = 0.05, repeats: Optional[int] = None,
                  threshold: Optional[float] = None, seed: SeedLike = 0,
                  keep_shots: bool = False) -> AmplifiedOutcome:
    """Repeat the two-basis test with ``subtest`` as the final measurement.

    Shot ``i`` uses ``seed.spawn(i)`` and a fresh copy ``lab_source(i)``;
    accept iff the reject count is below ``threshold``.
    """
    check_split(oracle.n, r)
    if subtest is not None and subtest.k != oracle.n - r:
        raise ValueError(f"subtest acts on {subtest.k} qubits, leftover is {oracle.n - r}")
    divisor = 1.0 if subtest is None else subtest.divisor
    repeats = default_repeats(epsilon, delta, divisor)[0] if repeats is None else int(repeats)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if threshold is None:
        threshold = repeats * 3 * epsilon / (8 * divisor)
    if not 0 <= threshold <= repeats + 1:
        raise ValueError("threshold must lie in [0, repeats + 1]")
    base = seed if isinstance(seed, Seed) else Seed(int(seed))
    cache = _LabCache(r)
    rejects = queries = 0
    shots = []
    for i in range(repeats):
        shot = _shot(oracle, lab_source(i), r, base.spawn(i).rng(), subtest, cache)
        rejects += not shot.accepted
        queries += shot.queries
        if keep_shots:
            shots.append(shot)
    return AmplifiedOutcome(rejects < threshold, rejects, repeats, threshold, queries, shots)


def repeated_test(oracle: AmplitudeOracle, lab_source: LabSource, r: int, epsilon: float = 0.2,
                  delta: float = 0.05, repeats: Optional[int] = None, threshold: Optional[float] = None,
                  seed: SeedLike = 0, keep_shots: bool = False) -> AmplifiedOutcome:
    """Amplified two-basis test with the ideal final measurement."""
    return composed_test(oracle, lab_source, r, None, epsilon, delta, repeats, threshold, seed, keep_shots)


def sampled_report(psi: StateVector, lab: LabState, r: int, shots: int, seed: Seed) -> ProtocolReport:
    """Exact report plus ``shots`` sampled single-shot executions."""
    report = two_basis_acceptance(psi, lab, r)
    source = pure_source(lab) if isinstance(lab, StateVector) else ensemble_source(lab, seed.spawn(0))
    if shots:
        outcome = repeated_test(StateOracle(psi), source, r, repeats=shots, threshold=shots + 1, seed=seed)
        report.shots_accept = shots - outcome.rejects
        report.shots_total = shots
    return report
