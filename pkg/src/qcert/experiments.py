"""Per-trial experiment kernels, summaries and checks.

Every experiment is a triple of functions: ``trial(params, n, seed)`` returns
one row of scalars, ``summarize(rows, params)`` reduces the successful rows
per ``n`` and ``check(summary, params)`` returns ``(name, passed, detail)``
tuples for ``--check`` mode.  Trials are pure functions of their seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import constants as C
from .adversary import (
    WORST_MAX_QUBITS,
    sign_flip_state,
    product_perturbation_state,
    std_fooling_state,
    worst_orthogonal_leave_one_out,
    worst_orthogonal_state,
)
from .analysis import (
    GAUSSIAN_MAX_BLOCKS,
    CIRCULANT_SUM_MAX_R,
    circulant_sum_check,
    concentration_deviations,
    e_matrix,
    gaussian_columns,
    m_tilde_double_sum,
    spectral_norm,
    uncertainty_check,
)
from .oracle import StateOracle
from .protocols import (
    DENSE_MAX_QUBITS,
    Ensemble,
    LossySubTest,
    composed_test,
    default_repeats,
    default_split,
    dense_povm,
    ensemble_source,
    expectation,
    pure_source,
    sampled_report,
    two_basis_acceptance,
)
from .statevec import Seed, SizeGuardError, StateVector, haar_state, load_state

Check = Tuple[str, bool, str]


@dataclass(frozen=True)
class Params:
    """Experiment knobs shared by all kernels (a view of the run config)."""

    gamma: float = 1.0
    construction: str = "worst"
    lab: str = "target"
    leftover: int = 0
    dense: bool = False
    shots: int = 0
    epsilon: float = 0.2
    delta: float = 0.05
    repeats: int = 0
    threshold: float = -1.0
    subtest: str = "ideal"
    tol: float = 1e-8
    max_iter: int = 10_000
    target_file: str = ""
    lab_file: str = ""

    def split(self, n: int) -> int:
        """Measured-qubit count r; an explicit leftover k overrides gamma."""
        if self.leftover:
            return min(max(n - self.leftover, 1), n - 1)
        return default_split(n, self.gamma)


@dataclass(frozen=True)
class Experiment:
    name: str
    trial: Callable[[Params, int, Seed], dict]
    summarize: Callable[[List[dict], Params], dict]
    check: Callable[[dict, Params], List[Check]]
    headline: str
    guard: Callable[[Params, int], None]


# ---------------------------------------------------------------------------
# helpers


def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def non_increasing(means: Sequence[float], ses: Sequence[float], k_se: float = C.TREND_SE) -> bool:
    """Each step may rise by at most ``k_se`` combined standard errors."""
    return all(b - a <= k_se * math.hypot(sa, sb) for a, b, sa, sb in zip(means, means[1:], ses, ses[1:]))


def by_n(rows: List[dict]) -> Dict[int, List[dict]]:
    groups: Dict[int, List[dict]] = {}
    for row in rows:
        groups.setdefault(row["n"], []).append(row)
    return dict(sorted(groups.items()))


def per_n_stats(rows: List[dict], key: str) -> Dict[str, dict]:
    out = {}
    for n, group in by_n(rows).items():
        mean, se = mean_se([row[key] for row in group])
        out[str(n)] = {"mean": mean, "se": se, "count": len(group)}
    return out


def trend_checks(stats: Dict[str, dict], label: str) -> List[Check]:
    ns = sorted(stats, key=int)
    means = [stats[n]["mean"] for n in ns]
    ses = [stats[n]["se"] for n in ns]
    detail = ", ".join(f"n={n}: {m:.4f}±{s:.4f}" for n, m, s in zip(ns, means, ses))
    return [(f"{label} non-increasing in n", non_increasing(means, ses), detail)]


def no_guard(params: Params, n: int) -> None:
    pass


def worst_guard(params: Params, n: int) -> None:
    if n > WORST_MAX_QUBITS:
        raise SizeGuardError(f"worst-case search limited to n <= {WORST_MAX_QUBITS}")


def target_state(params: Params, n: int, seed: Seed) -> StateVector:
    if params.target_file:
        state = load_state(params.target_file)
        if state.n != n:
            raise ValueError(f"target file holds {state.n} qubits, run asked for n={n}")
        return state
    return haar_state(n, seed.spawn(0))


# ---------------------------------------------------------------------------
# certify


def _certify_lab(params: Params, psi: StateVector, r: int, seed: Seed):
    kind = params.lab
    if params.lab_file:
        return load_state(params.lab_file)
    if kind == "target":
        return psi
    if kind == "haar":
        return haar_state(psi.n, seed.spawn(1))
    if kind == "fooling":
        return std_fooling_state(psi, r, seed.spawn(1)).phi
    if kind == "worst":
        return worst_orthogonal_state(psi, r, params.tol, params.max_iter, seed.spawn(1)).phi
    if kind == "mixed":
        phi = worst_orthogonal_state(psi, r, params.tol, params.max_iter, seed.spawn(1)).phi
        return Ensemble([(1 - params.epsilon, psi), (params.epsilon, phi)])
    raise ValueError(f"unknown lab {kind!r}")


def certify_trial(params: Params, n: int, seed: Seed) -> dict:
    r = params.split(n)
    psi = target_state(params, n, seed)
    lab = _certify_lab(params, psi, r, seed)
    report = sampled_report(psi, lab, r, params.shots, seed.spawn(2))
    fidelity = lab.fidelity(psi) if isinstance(lab, Ensemble) else psi.fidelity(lab)
    row = {"r": r, "p_std": report.p_std, "p_had": report.p_had, "p_accept": report.p_accept,
           "overlap_sq": fidelity, "shots_accept": report.shots_accept, "shots_total": report.shots_total}
    if params.dense:
        row["p_dense"] = expectation(dense_povm(psi, r), lab)
    return row


def certify_summary(rows, params):
    return {"p_accept": per_n_stats(rows, "p_accept"),
            "min_completeness_margin": min((row["p_accept"] - row["overlap_sq"] for row in rows), default=float("nan"))}


def certify_check(summary, params):
    checks = [("completeness p_accept >= overlap", summary["min_completeness_margin"] >= -1e-9,
               f"min margin {summary['min_completeness_margin']:.3e}")]
    if params.lab == "target":
        worst = max(abs(s["mean"] - 1) for s in summary["p_accept"].values())
        checks.append(("lab = target accepts with certainty", worst <= 1e-9, f"max |p-1| {worst:.3e}"))
    return checks


def certify_guard(params, n):
    if params.dense and n > DENSE_MAX_QUBITS:
        raise SizeGuardError(f"dense oracle limited to n <= {DENSE_MAX_QUBITS}, got n={n}")
    if params.lab in ("worst", "mixed"):
        worst_guard(params, n)


# ---------------------------------------------------------------------------
# adversary


def adversary_trial(params: Params, n: int, seed: Seed) -> dict:
    kind = params.construction
    if kind == "product":
        block = params.leftover or 3
        rng = seed.spawn(0).rng()
        factors = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        return {"bound": block / n, **product_perturbation_state(list(factors), block).to_record()}
    psi = target_state(params, n, seed)
    r = params.split(n)
    if kind == "worst":
        result = worst_orthogonal_state(psi, r, params.tol, params.max_iter, seed.spawn(1))
    elif kind == "fooling":
        result = std_fooling_state(psi, r, seed.spawn(1))
    elif kind == "sign-flip":
        result = sign_flip_state(psi)
    else:
        raise ValueError(f"unknown construction {kind!r}")
    return {"r": r, **result.to_record()}


def adversary_summary(rows, params):
    out = {"p_accept": per_n_stats(rows, "p_accept"), "p_std": per_n_stats(rows, "p_std"),
           "p_had": per_n_stats(rows, "p_had"),
           "max_overlap_sq": max((row["overlap_sq"] for row in rows), default=float("nan")),
           "all_converged": all(row["converged"] for row in rows)}
    if params.construction == "product":
        out["max_gap_excess"] = max((max(row["gap"], row["gap_had"]) - row["bound"] for row in rows), default=float("nan"))
    return out


def adversary_check(summary, params):
    kind = params.construction
    stats = summary["p_accept"]
    if kind == "worst":
        checks = trend_checks(stats, "worst orthogonal p_accept")
        checks.append(("orthogonality", summary["max_overlap_sq"] <= 1e-16,
                       f"max overlap_sq {summary['max_overlap_sq']:.2e}"))
        if "12" in stats:
            checks.append((f"n=12 mean p_accept <= {C.WORST_ACCEPT_MAX}", stats["12"]["mean"] <= C.WORST_ACCEPT_MAX,
                           f"{stats['12']['mean']:.4f}"))
        return checks
    if kind == "fooling":
        p_std = summary["p_std"]
        worst_std = max(abs(s["mean"] - 1) for s in p_std.values())
        checks = [("p_std = 1", worst_std <= 1e-9, f"max |mean p_std - 1| {worst_std:.2e}")]
        if "10" in stats:
            checks.append((f"n=10 p_accept <= {C.FOOLING_ACCEPT_MAX}", stats["10"]["mean"] <= C.FOOLING_ACCEPT_MAX,
                           f"{stats['10']['mean']:.4f}"))
        return checks
    if kind == "product":
        return [("leftover-block gap <= r/n", summary["max_gap_excess"] <= 1e-9,
                 f"max gap - r/n {summary['max_gap_excess']:.3e}")]
    return []


# ---------------------------------------------------------------------------
# uncertainty


def uncertainty_trial(params: Params, n: int, seed: Seed) -> dict:
    psi = target_state(params, n, seed)
    r = params.split(n)
    if params.construction == "fooling":
        phi = std_fooling_state(psi, r, seed.spawn(1)).phi
    elif params.construction == "target":
        phi = psi
    else:
        phi = worst_orthogonal_state(psi, r, params.tol, params.max_iter, seed.spawn(1)).phi
    record = uncertainty_check(psi, phi, r).to_record()
    record["slack"] = -record["margin"]
    return {"r": r, **record}


def uncertainty_summary(rows, params):
    out = {"slack": per_n_stats(rows, "slack")}
    for n, group in by_n(rows).items():
        out["slack"][str(n)]["max"] = max(row["slack"] for row in group)
    return out


def uncertainty_check_summary(summary, params):
    stats = summary["slack"]
    if params.construction == "target":
        worst = max(abs(s["max"]) for s in stats.values())
        return [("margin = 0 at phi = psi", worst <= 1e-9, f"max |margin| {worst:.2e}")]
    bounded = all(0 < s["mean"] and s["max"] < 1 for s in stats.values())
    detail = ", ".join(f"n={n}: max {s['max']:.4f}" for n, s in stats.items())
    return trend_checks(stats, "uncertainty slack") + [("slack positive and below 1", bounded, detail)]


# ---------------------------------------------------------------------------
# concentration


def concentration_trial(params: Params, n: int, seed: Seed) -> dict:
    r = params.split(n)
    if n - r < 2 or n > 16:
        raise SizeGuardError(f"need 2 <= k and n <= 16, got n={n}, k={n - r}")
    dev_hat, dev_f = concentration_deviations(haar_state(n, seed.spawn(0)), r)
    return {"r": r, "max_dev_hat": dev_hat, "max_dev_F": dev_f}


def concentration_summary(rows, params):
    out = {}
    for n, group in by_n(rows).items():
        out[str(n)] = {key: {"q50": float(np.quantile([row[key] for row in group], 0.5)),
                             "q95": float(np.quantile([row[key] for row in group], 0.95))}
                       for key in ("max_dev_hat", "max_dev_F")}
    return {"quantiles": out}


def concentration_check(summary, params):
    checks = []
    for n, entry in summary["quantiles"].items():
        for key, q in entry.items():
            checks.append((f"n={n} {key} q95 <= {C.CONCENTRATION_Q95_MAX}", q["q95"] <= C.CONCENTRATION_Q95_MAX,
                           f"{q['q95']:.4f}"))
    return checks


def concentration_guard(params, n):
    if n > 16 or n - params.split(n) < 2:
        raise SizeGuardError(f"concentration needs k >= 2 and n <= 16, got n={n}")


# ---------------------------------------------------------------------------
# matrix bounds


def matrix_trial(params: Params, n: int, seed: Seed) -> dict:
    r = params.split(n)
    matrix_guard(params, n)
    rng = seed.spawn(0).rng()
    d, size = 2 ** (n - r), 2**r
    g = gaussian_columns(rng, d, size)
    g_tilde = gaussian_columns(rng, d, size)
    e = e_matrix(g)
    row = {"r": r, "d": d, "bound": math.sqrt(2.0**n), "spectral_norm": spectral_norm(e),
           "spectral_norm_decoupled": spectral_norm(e_matrix(g, g_tilde))}
    if size <= 32:
        row["m_tilde_err"] = float(np.max(np.abs(m_tilde_double_sum(g) - e @ e.conj().T)))
    return row


def matrix_summary(rows, params):
    out = {}
    for n, group in by_n(rows).items():
        norms = [row["spectral_norm"] for row in group]
        out[str(n)] = {"median": float(np.median(norms)),
                       "median_decoupled": float(np.median([row["spectral_norm_decoupled"] for row in group])),
                       "within_bound": sum(row["spectral_norm"] <= row["bound"] for row in group),
                       "count": len(group), "bound": group[0]["bound"],
                       "max_m_tilde_err": max((row.get("m_tilde_err", 0.0) for row in group), default=0.0)}
    return {"norms": out}


def matrix_check(summary, params):
    checks = []
    for n, s in summary["norms"].items():
        ratio = s["median_decoupled"] / s["median"]
        checks += [
            (f"n={n} ||E|| <= sqrt(2^n) in all trials", s["within_bound"] == s["count"],
             f"{s['within_bound']}/{s['count']}, median {s['median']:.3f}, bound {s['bound']:.1f}"),
            (f"n={n} M~ = E E^dagger", s["max_m_tilde_err"] <= 1e-8, f"max err {s['max_m_tilde_err']:.2e}"),
            (f"n={n} decoupled median within factor {C.DECOUPLED_MEDIAN_FACTOR}",
             1 / C.DECOUPLED_MEDIAN_FACTOR <= ratio <= C.DECOUPLED_MEDIAN_FACTOR, f"ratio {ratio:.3f}"),
        ]
    return checks


def matrix_guard(params, n):
    r = params.split(n)
    if 2**r > GAUSSIAN_MAX_BLOCKS:
        raise SizeGuardError(f"dense norm guard: 2^r = {2**r} > {GAUSSIAN_MAX_BLOCKS}")


# ---------------------------------------------------------------------------
# circulant


def circulant_trial(params: Params, n: int, seed: Seed) -> dict:
    r = params.split(n)
    return circulant_sum_check(n, n - r, seed.spawn(0)).to_record()


def circulant_summary(rows, params):
    out = {}
    for n, group in by_n(rows).items():
        ratios = [row["lam_max_ratio"] for row in group]
        out[str(n)] = {"max_per_j_err": max(row["per_j_max_err"] for row in group),
                       "max_sum_err": max(row["sum_max_err"] for row in group),
                       "exp_mean": float(np.mean([row["exp_mean"] for row in group])),
                       "ratio_coverage": float(np.mean([x <= C.CIRCULANT_RATIO_MAX for x in ratios])),
                       "count": len(group)}
    return {"circulant": out}


def circulant_check(summary, params):
    checks = []
    for n, s in summary["circulant"].items():
        checks += [
            (f"n={n} per-j eigenvalues", s["max_per_j_err"] <= 1e-8, f"{s['max_per_j_err']:.2e}"),
            (f"n={n} summed eigenvalues", s["max_sum_err"] <= 1e-8, f"{s['max_sum_err']:.2e}"),
            (f"n={n} lambda/2^r mean ~ 1", abs(s["exp_mean"] - 1) <= C.EXP_MEAN_TOL, f"{s['exp_mean']:.4f}"),
            (f"n={n} max lambda <= {C.CIRCULANT_RATIO_MAX} 2^n", s["ratio_coverage"] >= C.CIRCULANT_RATIO_COVERAGE,
             f"coverage {s['ratio_coverage']:.3f}"),
        ]
    return checks


def circulant_guard(params, n):
    if params.split(n) > CIRCULANT_SUM_MAX_R:
        raise SizeGuardError(f"circulant check needs r <= {CIRCULANT_SUM_MAX_R}")


# ---------------------------------------------------------------------------
# single-leftover-qubit tests


def sign_flip_trial(params: Params, n: int, seed: Seed) -> dict:
    result = sign_flip_state(target_state(params, n, seed))
    return {"overlap_sq": result.overlap_sq, "one_basis_accept": result.report.p_std,
            "two_basis_accept": result.report.p_accept, "bound": 1 - 1 / n,
            "first_bit_zero_mass": result.extras["first_bit_zero_mass"]}


def sign_flip_summary(rows, params):
    out = {}
    for n, group in by_n(rows).items():
        out[str(n)] = {"min_one_basis_accept": min(row["one_basis_accept"] for row in group),
                       "median_overlap_sq": float(np.median([row["overlap_sq"] for row in group])),
                       "mean_two_basis_accept": float(np.mean([row["two_basis_accept"] for row in group])),
                       "count": len(group)}
    return {"sign_flip": out}


def sign_flip_check(summary, params):
    checks = []
    for n, s in summary["sign_flip"].items():
        bound = 1 - 1 / int(n)
        cap = C.SIGN_FLIP_OVERLAP_FACTOR * int(n) / 2 ** int(n)
        checks += [(f"n={n} one-basis acceptance >= 1 - 1/n", s["min_one_basis_accept"] >= bound - 1e-12,
                    f"min {s['min_one_basis_accept']:.4f} vs {bound:.4f}"),
                   (f"n={n} median overlap <= {C.SIGN_FLIP_OVERLAP_FACTOR:g} n/2^n", s["median_overlap_sq"] <= cap,
                    f"{s['median_overlap_sq']:.2e} vs {cap:.2e}")]
    return checks


def conjecture_trial(params: Params, n: int, seed: Seed) -> dict:
    psi = target_state(params, n, seed)
    result = worst_orthogonal_leave_one_out(psi, True, params.tol, params.max_iter, seed.spawn(1))
    return {k: result.to_record()[k] for k in ("overlap_sq", "p_std", "p_had", "p_accept", "converged", "iterations")}


def conjecture_summary(rows, params):
    return {"p_accept": per_n_stats(rows, "p_accept")}


def report_only(summary, params):
    return []


# ---------------------------------------------------------------------------
# amplified / composed test


def composed_trial(params: Params, n: int, seed: Seed) -> dict:
    r = params.split(n)
    psi = target_state(params, n, seed)
    phi = worst_orthogonal_state(psi, r, params.tol, params.max_iter, seed.spawn(1)).phi
    far = Ensemble([(1 - params.epsilon, psi), (params.epsilon, phi)])
    if params.subtest not in ("ideal", "mock"):
        raise ValueError(f"unknown subtest {params.subtest!r}")
    subtest = LossySubTest(n - r) if params.subtest == "mock" else None
    divisor = 1.0 if subtest is None else subtest.divisor
    repeats = params.repeats or default_repeats(params.epsilon, params.delta, divisor)[0]
    threshold = params.threshold if params.threshold >= 0 else None
    oracle = StateOracle(psi)
    close = composed_test(oracle, pure_source(psi), r, subtest, params.epsilon, params.delta, repeats,
                          threshold, seed.spawn(2))
    remote = composed_test(oracle, ensemble_source(far, seed.spawn(3)), r, subtest, params.epsilon, params.delta,
                           repeats, threshold, seed.spawn(4))
    exact_far = two_basis_acceptance(psi, far, r).p_accept
    return {"r": r, "repeats": close.repeats, "threshold": close.threshold,
            "close_rejects": close.rejects, "close_accepted": close.accepted,
            "far_rejects": remote.rejects, "far_accepted": remote.accepted,
            "far_exact_reject_rate": 1 - exact_far if subtest is None else None,
            "correct": close.accepted and not remote.accepted, "queries": close.queries + remote.queries}


def composed_summary(rows, params):
    out = {}
    for n, group in by_n(rows).items():
        out[str(n)] = {"close_accept_rate": float(np.mean([row["close_accepted"] for row in group])),
                       "far_reject_rate": float(np.mean([not row["far_accepted"] for row in group])),
                       "correct_rate": float(np.mean([row["correct"] for row in group])),
                       "mean_far_rejects": float(np.mean([row["far_rejects"] for row in group])),
                       "threshold": group[0]["threshold"], "repeats": group[0]["repeats"],
                       "count": len(group)}
    return {"decisions": out}


def composed_check(summary, params):
    target = 1 - params.delta
    return [(f"n={n} correct decisions >= {target:.2f}", s["correct_rate"] >= target,
             f"close accept {s['close_accept_rate']:.3f}, far reject {s['far_reject_rate']:.3f}")
            for n, s in summary["decisions"].items()]


EXPERIMENTS: Dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment("certify", certify_trial, certify_summary, certify_check, "p_accept", certify_guard),
        Experiment("adversary", adversary_trial, adversary_summary, adversary_check, "p_accept",
                   lambda p, n: worst_guard(p, n) if p.construction == "worst" else None),
        Experiment("uncertainty", uncertainty_trial, uncertainty_summary, uncertainty_check_summary, "slack",
                   worst_guard),
        Experiment("concentration", concentration_trial, concentration_summary, concentration_check,
                   "max_dev_hat", concentration_guard),
        Experiment("matrix-bounds", matrix_trial, matrix_summary, matrix_check, "spectral_norm", matrix_guard),
        Experiment("circulant", circulant_trial, circulant_summary, circulant_check, "lam_max_ratio",
                   circulant_guard),
        Experiment("hps-compare", sign_flip_trial, sign_flip_summary, sign_flip_check, "one_basis_accept", no_guard),
        Experiment("conjecture", conjecture_trial, conjecture_summary, report_only, "p_accept", worst_guard),
        Experiment("composed", composed_trial, composed_summary, composed_check, "far_rejects", worst_guard),
    )
}
