"""Hard lab states for the two-basis test and its baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .protocols import (
    ProtocolReport,
    acceptance_operator,
    leave_one_out_branches,
    leave_one_out_operator,
    two_basis_acceptance,
)
from .statevec import (
    STD,
    ZERO_BLOCK,
    SeedLike,
    SizeGuardError,
    StateVector,
    as_rng,
    complex_gaussian,
    condition,
)

WORST_MAX_QUBITS = 16


@dataclass
class AdversaryResult:
    construction: str
    phi: StateVector = field(repr=False)
    overlap_sq: float
    report: ProtocolReport
    converged: bool = True
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    @classmethod
    def evaluate(cls, construction: str, psi: StateVector, phi: StateVector, report: ProtocolReport,
                 **kwargs) -> "AdversaryResult":
        return cls(construction, phi, psi.fidelity(phi), report, **kwargs)

    def to_record(self) -> dict:
        record = {
            "construction": self.construction,
            "overlap_sq": self.overlap_sq,
            "p_std": self.report.p_std,
            "p_had": self.report.p_had,
            "p_accept": self.report.p_accept,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        record.update(self.extras)
        return record


def std_fooling_state(psi: StateVector, r: int, seed: SeedLike) -> AdversaryResult:
    """Orthogonal state that the standard-basis branch accepts with certainty.

    Writes ``psi = sum_z a_z |z>|u_z>`` with ``a_z = |psi_z| >= 0`` and returns
    ``sum_z b_z |z>|u_z>`` for a random unit ``b`` orthogonal to ``a`` and
    supported where ``a_z > 0``.
    """
    decomp = condition(psi, r, STD)
    alpha = decomp.norms
    live = alpha > ZERO_BLOCK
    if live.sum() < 2:
        raise ValueError("target is concentrated on a single block; no orthogonal fooling state exists")
    beta = complex_gaussian(as_rng(seed), alpha.size) * live
    unit_alpha = alpha / np.linalg.norm(alpha)
    beta = beta - unit_alpha * np.vdot(unit_alpha, beta)
    beta /= np.linalg.norm(beta)
    phi = StateVector(psi.n, (beta[:, None] * decomp.normalized()).reshape(-1))
    return AdversaryResult.evaluate("fooling", psi, phi, two_basis_acceptance(psi, phi, r))


def top_orthogonal_eigenvector(psi: StateVector, apply: Callable[[np.ndarray], np.ndarray],
                               tol: float = 1e-8, max_iter: int = 10_000, seed: SeedLike = 0,
                               restart_every: Optional[int] = None):
    """Power iteration for the top eigenpair of P A P with P = I - |psi><psi|.

    ``psi`` is deflated after every application.  A run restarts from a fresh
    random vector when its Rayleigh quotient drops, its iterate collapses, or
    it exceeds ``restart_every`` applications; the best iterate is kept.

    Returns ``(vector, rayleigh, applications, converged)``.
    """
    rng = as_rng(seed)
    target = psi.amplitudes
    restart_every = restart_every or max(100, max_iter // 4)

    def deflate(x):
        x = x - target * np.vdot(target, x)
        return x - target * np.vdot(target, x)

    best_x, best_lam = None, -np.inf
    used = 0
    while used < max_iter:
        x = deflate(complex_gaussian(rng, target.size))
        x /= np.linalg.norm(x)
        prev = None
        for _ in range(min(restart_every, max_iter - used)):
            y = deflate(apply(x))
            used += 1
            lam = float(np.vdot(x, y).real)
            if lam > best_lam:
                best_x, best_lam = x, lam
            norm = np.linalg.norm(y)
            if norm <= 1e-300 or (prev is not None and lam < prev - tol):
                break
            if prev is not None and abs(lam - prev) <= tol:
                return x, lam, used, True
            prev = lam
            x = y / norm
    return best_x, best_lam, used, False


def worst_orthogonal_state(psi: StateVector, r: int, tol: float = 1e-8, max_iter: int = 10_000,
                           seed: SeedLike = 0) -> AdversaryResult:
    """Orthogonal lab state maximizing the two-basis acceptance probability."""
    if psi.n > WORST_MAX_QUBITS:
        raise SizeGuardError(f"worst-case search limited to n <= {WORST_MAX_QUBITS}")
    x, lam, used, converged = top_orthogonal_eigenvector(psi, acceptance_operator(psi, r), tol, max_iter, seed)
    phi = StateVector(psi.n, x)
    return AdversaryResult.evaluate("worst", psi, phi, two_basis_acceptance(psi, phi, r),
                                    converged=converged, iterations=used, extras={"rayleigh": lam})


def worst_orthogonal_leave_one_out(psi: StateVector, two_basis: bool = True, tol: float = 1e-8, max_iter: int = 10_000,
                         seed: SeedLike = 0) -> AdversaryResult:
    """Worst orthogonal state for the leave-one-qubit-out test.

    The report holds the per-basis acceptance averaged over the leftover qubit.
    """
    if psi.n > WORST_MAX_QUBITS:
        raise SizeGuardError(f"worst-case search limited to n <= {WORST_MAX_QUBITS}")
    x, lam, used, converged = top_orthogonal_eigenvector(psi, leave_one_out_operator(psi, two_basis), tol, max_iter, seed)
    phi = StateVector(psi.n, x)
    std, had = leave_one_out_branches(psi, phi)
    report = ProtocolReport(std, had, n=psi.n, r=psi.n - 1)
    name = "worst-leave-one-out-2b" if two_basis else "worst-leave-one-out"
    return AdversaryResult.evaluate(name, psi, phi, report, converged=converged, iterations=used,
                                    extras={"rayleigh": lam})


def sign_flip_state(psi: StateVector) -> AdversaryResult:
    """Flip the sign of every amplitude whose first bit is 1.

    The report carries the leave-one-qubit-out acceptance: ``p_std`` is the
    standard-basis test, ``p_accept`` its two-basis variant.
    """
    if psi.n < 2:
        raise ValueError("need n >= 2")
    half = psi.dim // 2
    signs = np.ones(psi.dim)
    signs[half:] = -1.0
    phi = StateVector(psi.n, signs * psi.amplitudes)
    std, had = leave_one_out_branches(psi, phi)
    z_mass = float(np.sum(np.abs(psi.amplitudes[:half]) ** 2))
    report = ProtocolReport(std, had, n=psi.n, r=psi.n - 1)
    return AdversaryResult.evaluate("sign-flip", psi, phi, report, extras={"one_basis_accept": std, "first_bit_zero_mass": z_mass})


def product_perturbation_state(psi_factors: Sequence, r: int) -> AdversaryResult:
    """Perturb n/r qubits of a product target, one per block of r qubits.

    Each perturbed qubit keeps overlap 1 - r/n with its target factor, so the
    total overlap is (1 - r/n)**(n/r).  Here ``r`` counts the qubits left for
    the final measurement; the last block of ``r`` qubits holds exactly one
    perturbed qubit.  The report is the two-basis test measuring the first
    ``n - r`` qubits; ``extras['gap']`` is the acceptance gap between target
    and perturbed state for the standard-basis branch.
    """
    factors = [np.asarray(f, dtype=np.complex128) / np.linalg.norm(f) for f in psi_factors]
    n = len(factors)
    if any(f.shape != (2,) for f in factors):
        raise ValueError("each factor must be a single-qubit state (2 amplitudes)")
    if not 1 <= r <= n or n % r:
        raise ValueError(f"r={r} must divide n={n}")
    keep = 1.0 - r / n
    perturbed = set(range(0, n, r))
    phi_factors = []
    for j, f in enumerate(factors):
        if j in perturbed:
            orth = np.array([-f[1].conjugate(), f[0].conjugate()])
            f = np.sqrt(keep) * f + np.sqrt(1.0 - keep) * orth
        phi_factors.append(f)

    def product(fs):
        out = np.ones(1, dtype=np.complex128)
        for f in fs:
            out = np.kron(out, f)
        return StateVector(n, out)

    psi, phi = product(factors), product(phi_factors)
    if r < n:
        report = two_basis_acceptance(psi, phi, n - r)
    else:
        overlap = psi.fidelity(phi)
        report = ProtocolReport(overlap, overlap, n=n, r=0)
    extras = {
        "gap": abs(1.0 - report.p_std),
        "gap_had": abs(1.0 - report.p_had),
        "predicted_overlap": keep ** (n // r),
        "limit": math.exp(-1),
    }
    return AdversaryResult.evaluate("product", psi, phi, report, extras=extras)
