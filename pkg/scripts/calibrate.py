"""Scalar Monte-Carlo oracles behind the thresholds in qcert.constants.

Each oracle samples the limiting distribution of a statistic without building
any state, so the thresholds are fixed before the full experiments run.

    python3 scripts/calibrate.py --samples 200000
"""
import argparse

import numpy as np


def concentration_q95(n: int, k: int, samples: int, rng) -> float:
    """95th percentile of max_z |Gamma(d)/d - 1| over 2^r blocks, d = 2^k."""
    d, blocks = 2**k, 2 ** (n - k)
    means = rng.gamma(d, 1.0 / d, size=(samples, blocks))
    return float(np.quantile(np.max(np.abs(means - 1), axis=1), 0.95))


def circulant_ratio_q95(n: int, k: int, samples: int, rng) -> float:
    """95th percentile of max_t lambda_t / 2^n: max of 2^r draws of Gamma(2^k)/2^k."""
    d, blocks = 2**k, 2 ** (n - k)
    means = rng.gamma(d, 1.0 / d, size=(samples, blocks))
    return float(np.quantile(means.max(axis=1), 0.95))


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--samples", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"concentration q95 (n=12, k=8): {concentration_q95(12, 8, args.samples, rng):.4f}")
    print(f"circulant max ratio q95 (n=10, k=4): {circulant_ratio_q95(10, 4, args.samples, rng):.4f}")


if __name__ == "__main__":
    main()
