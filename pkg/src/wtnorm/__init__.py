"""Weighted trace-norm matrix completion under non-uniform sampling.

Core objects: joint index distributions with seeded sampling, marginal
weight vectors with smoothing, the weighted trace-norm and its proximal
machinery, solvers (proximal, factored SGD, min-norm, in-ball ERM),
Rademacher-complexity diagnostics, the adversarial lower-bound instances,
and the simulation harness behind the ``wtnorm`` CLI.
"""

from .distributions import (
    JointDistribution,
    SampleSet,
    TransductivePool,
    make_product,
    make_uniform,
    make_uniform_marginal_nonproduct,
    sample,
    transductive_split,
)
from .weighting import (
    MarginalWeights,
    NormBudget,
    SmoothingConfig,
    check_marginal_domination,
    empirical_marginals,
    from_distribution,
    project_to_ball,
    smooth,
    smooth_empirical,
    transductive_weights,
    truncate_low_probability,
    uniform_weights,
    weighted_frobenius_norm,
    weighted_trace_norm,
)
from .solvers import (
    CompletionModel,
    DivergenceError,
    LossSpec,
    NoiseConfig,
    SolverConfig,
    erm_in_ball,
    fit_factored_sgd,
    fit_proximal,
    min_norm_fit,
    prox_weighted_trace,
)
from .complexity import (
    BoundDiagnostics,
    RademacherEstimate,
    bound_diagnostics,
    estimate_rademacher,
    rate_table,
)
from .bench import (
    ExperimentReport,
    SignalSpec,
    empirical_loss,
    exact_expected_loss,
    make_signal,
    run_excess_error,
    run_sample_complexity,
    run_smoothing_sweep,
    run_transductive,
)
from .adversarial import (
    Example1Instance,
    Example2Instance,
    build_example1,
    build_example2,
    example1_erm,
    example1_expected_loss,
    example1_lower_bound,
    example2_erm,
    example2_miss_probability,
)

__version__ = "0.1.0"
