"""Numerical laboratory for spatial homogenisation of stochastic heat equations.

Simulates du = L_eps u dt + sum_k q_k(x/eps) e_k dW_k on the periodic
interval, solves the associated unit-cell problems, and verifies the
homogenised limits (averaged, rescaled-fluctuation, white-noise-enhanced
and mollified) by exact covariance computation and Monte Carlo.
"""

from .cell import (
    CellSolution,
    Coefficients,
    corrector,
    diffusivity_from_decay,
    effective_diffusivity,
    invariant_density,
    solve_cell,
    spectral_gap,
    validate_coefficients,
)
from .fourier import (
    SpectralField,
    inner_product,
    l2_norm,
    multiply,
    oscillate,
    seminorm_neg,
    sobolev_norm,
)
from .limit import (
    LimitModel,
    averaged_model,
    enhanced_model,
    fluctuation_model,
    hminus_sup_error,
    ou_exact_sample,
    ou_variance,
    smoothed_model,
    stationary_variance,
)
from .noise import (
    NoiseSpec,
    WienerStream,
    averaged_coefficient,
    coupling_series,
    enhanced_coefficient,
    fluctuation_coefficient,
    sample_increments,
    smoothed_coefficient,
)
from .solver import (
    BlockOperator,
    PathOutput,
    SolverConfig,
    apply_generator,
    build_blocks,
    exact_mode_covariance,
    simulate_coupled,
    simulate_path,
    suggest_modes,
)

__version__ = "0.1.0"
