"""Thresholds for desk-scale checks.

The finite-n thresholds below come from scripts/calibrate.py, which samples
the limiting scalar distributions directly.  Rerun it before changing any of
the calibrated values.
"""

# fooling state: p_accept ceiling at n = 10
FOOLING_ACCEPT_MAX = 0.65
FOOLING_HAD_MAX = 0.2

# worst orthogonal p_accept ceiling at n = 12
WORST_ACCEPT_MAX = 0.70

# 95th percentile of the concentration deviations at (n=12, k=8); oracle gives ~0.19
CONCENTRATION_Q95_MAX = 0.5

# max_t lambda_t / 2^n at (n=10, k=4); oracle 95th percentile is ~1.98
CIRCULANT_RATIO_MAX = 2.25
CIRCULANT_RATIO_COVERAGE = 0.95
EXP_MEAN_TOL = 0.05

# median ||E|| coupled vs decoupled
DECOUPLED_MEDIAN_FACTOR = 2.0

# median sign-flip overlap <= factor * n / 2^n
SIGN_FLIP_OVERLAP_FACTOR = 10.0

# trend comparisons allow this many standard errors of increase
TREND_SE = 2.0
