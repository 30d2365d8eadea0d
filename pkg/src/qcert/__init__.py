"""Simulation laboratory for two-basis conditional quantum state certification."""

__version__ = "0.1.0"

from .adversary import (
    AdversaryResult,
    sign_flip_state,
    product_perturbation_state,
    std_fooling_state,
    worst_orthogonal_leave_one_out,
    worst_orthogonal_state,
)
from .analysis import (
    circulant_eigenvalues,
    circulant_sum_check,
    concentration_stats,
    gaussian_matrix_experiment,
    uncertainty_check,
)
from .oracle import AmplitudeOracle, StateOracle, conditional_via_oracle
from .protocols import (
    Ensemble,
    IdealSubTest,
    LossySubTest,
    ProtocolReport,
    branch_acceptance,
    composed_test,
    default_split,
    dense_povm,
    leave_one_out_acceptance,
    repeated_test,
    run_single_shot,
    two_basis_acceptance,
)
from .statevec import (
    ConditionalDecomposition,
    Seed,
    SizeGuardError,
    StateVector,
    condition,
    fwht,
    haar_state,
    load_state,
    save_state,
)
