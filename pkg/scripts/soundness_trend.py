"""Worst orthogonal acceptance and uncertainty slack versus n.

    python3 scripts/soundness_trend.py --n 8 10 12 14 --targets 20
"""
import argparse

import numpy as np

from qcert.adversary import std_fooling_state, worst_orthogonal_state
from qcert.analysis import uncertainty_check
from qcert.protocols import default_split
from qcert.statevec import Seed, haar_state


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--n", type=int, nargs="+", default=[8, 10, 12])
    parser.add_argument("--targets", type=int, default=20)
    parser.add_argument("--gamma", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    print(f"{'n':>3} {'r':>3} {'worst':>16} {'slack':>16} {'fooling':>8} {'iters':>6}")
    for n in args.n:
        r = default_split(n, args.gamma)
        worst, slack, fooling, iters = [], [], [], []
        for t in range(args.targets):
            psi = haar_state(n, Seed(args.seed + n, t))
            result = worst_orthogonal_state(psi, r, seed=Seed(args.seed + 100 + n, t))
            worst.append(result.report.p_accept)
            slack.append(-uncertainty_check(psi, result.phi, r).margin)
            fooling.append(std_fooling_state(psi, r, Seed(args.seed + 200 + n, t)).report.p_accept)
            iters.append(result.iterations)
        se = lambda v: np.std(v, ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        print(f"{n:>3} {r:>3} {np.mean(worst):8.4f}±{se(worst):.4f} {np.mean(slack):8.4f}±{se(slack):.4f} "
              f"{np.mean(fooling):8.4f} {int(np.mean(iters)):>6}")


if __name__ == "__main__":
    main()
