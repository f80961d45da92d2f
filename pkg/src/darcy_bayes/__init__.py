"""Bayesian inversion of log-permeability for periodic Darcy flow.

Gaussian KL priors on the torus, a matrix-free flux-form solver, pointwise
and averaged pressure observations, pCN and importance-sampling posterior
estimators, and tools to measure how truncating the prior expansion affects
posterior expectations.
"""

from .fieldio import FieldDecodeError, decode_field, encode_field, field_read, field_write
from .fields import (
    Field,
    GridSpec,
    SpectralField,
    dft_forward,
    dft_inverse,
    h1_norm,
    hminus1_norm,
    holder_seminorm_estimate,
    l2_norm,
    sup_norm,
    zero_mean_project,
)
from .observation import (
    ForwardModel,
    NoiseModel,
    ObservationSetup,
    PointEval,
    PotentialValue,
    WeightedAverage,
    forward_map,
    generate_data,
    misfit,
    observe,
    potential,
)
from .posterior import (
    ChainState,
    MomentSummary,
    PcnConfig,
    UnreliableEstimateWarning,
    WeakErrorRow,
    WeakErrorTable,
    bank_moments,
    bank_observations,
    hellinger_estimate,
    hellinger_sweep,
    pcn_step,
    run_chain,
    snis_expectation,
    weak_error_study,
)
from .prior import (
    KLSample,
    KLSynthesizer,
    PriorBank,
    PriorSpec,
    expected_l2_energy,
    kl_modes,
    kl_variance,
    sample_prior,
    truncate,
)
from .solver import ProblemData, SolverConfig, SolveReport, SolverError, solve, solve_batch
from .truncation import RateFit, dirichlet_kernel, dn_l1_norm, fit_rate, truncation_sup_error

__version__ = "0.1.0"
