"""Single-leftover-qubit tests: worst orthogonal acceptance with one or two bases.

The one-basis test admits orthogonal states accepted with probability near
1 - 1/n; the scan shows whether adding the Hadamard basis closes the gap.

    python3 scripts/conjecture_scan.py --n 4 6 8 10 --targets 10
"""
import argparse

import numpy as np

from qcert.adversary import sign_flip_state, worst_orthogonal_leave_one_out
from qcert.statevec import Seed, haar_state


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--n", type=int, nargs="+", default=[4, 6, 8, 10])
    parser.add_argument("--targets", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    print(f"{'n':>3} {'1-1/n':>7} {'one-basis':>10} {'two-basis':>10} {'flip(2b)':>9}")
    for n in args.n:
        one, two, flip = [], [], []
        for t in range(args.targets):
            psi = haar_state(n, Seed(args.seed + n, t))
            one.append(worst_orthogonal_leave_one_out(psi, two_basis=False, seed=Seed(1, t)).report.p_std)
            two.append(worst_orthogonal_leave_one_out(psi, two_basis=True, seed=Seed(2, t)).report.p_accept)
            flip.append(sign_flip_state(psi).report.p_accept)
        print(f"{n:>3} {1 - 1 / n:7.4f} {np.mean(one):10.4f} {np.mean(two):10.4f} {np.mean(flip):9.4f}")


if __name__ == "__main__":
    main()
