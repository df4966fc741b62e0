"""Perturbed Langevin samplers with geometry-informed irreversibility.

Five dynamics sharing one invariant posterior (unperturbed, reversible,
irreversible, and combinations, including the geometry-informed skew
field C = (JB + BJ)/2), four Bayesian example targets, estimator
diagnostics, and closed-form discretization oracles.
"""

from .datasets import (
    Dataset,
    Schema,
    gen_gaussian_dataset,
    gen_ica_sources,
    gen_logistic_dataset,
    load_delimited_dataset,
)
from .diagnostics import (
    EnsembleStats,
    KsdReport,
    batch_means_avar,
    ensemble_stats,
    imq_kernel,
    ksd,
    ksd_report,
    ksd_slope,
    running_average,
    stein_kernel_component,
)
from .discretization import (
    OracleReport,
    ScalarGaussianSetup,
    asymptotic_trace_var,
    linear_avg_trace_var,
    linear_bias_sq,
    mc_crosscheck,
    quad_estimator_moments,
    s_factor,
    trace_sigma_k,
)
from .geometry import (
    IrrField,
    MetricBundle,
    giirr_matrix,
    matrix_divergence_fd,
    metric_factor,
    skew_fixed_pattern,
    skew_random_unit,
)
from .runner import RunConfig, default_config, emit_results, run_experiment
from .sampler import (
    Dynamics,
    DynamicsKind,
    SamplerConfig,
    diffusion_factor,
    drift,
    em_step,
    run_chains,
    run_ensemble,
    simulate_chain,
)
from .targets import (
    GaussianLinearTarget,
    IcaTarget,
    LogisticRegressionTarget,
    NormalParamsTarget,
    TargetModel,
)

__version__ = "0.1.0"
