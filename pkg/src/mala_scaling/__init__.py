"""MALA / RWM optimal-scaling experiments for mean-field posteriors."""

from .diagnostics import (
    ChaosReport,
    CLTReport,
    KSResult,
    acceptance_rate,
    chaos_check,
    clt_check_G,
    clt_check_G_chain,
    esjd_per_component,
    g3,
    iact,
    ks_statistic,
    speed_estimate,
    tail_frequency,
)
from .errors import ConvergenceError, NumericError, StateError
from .experiments import (
    ExperimentPlan,
    OptimalityResult,
    ResultRow,
    fit_variance_exponent,
    read_csv,
    run_optimality_sweep,
    run_scaling_sweep,
    write_csv,
    write_report,
)
from .limit import (
    LimitState,
    QuadratureSpec,
    acceptance_limit,
    integrate,
    k_prime,
    limit_cdf_table,
    normal_cdf,
    normal_quantile,
    optimal_ell,
    solve_limit,
    solve_mean_field,
    speed,
    tau_squared,
)
from .model import ModelSpec, PsiContext, eval_H, eval_psi, eval_U
from .sampler import (
    ChainState,
    KernelConfig,
    ProposalRecord,
    grad_log_target,
    init_state,
    log_accept_ratio,
    log_accept_ratio_from_noise,
    log_target,
    mala_step,
    propose_mala,
    run_chain,
    rwm_step,
)

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "ChaosReport",
    "CLTReport",
    "ConvergenceError",
    "ExperimentPlan",
    "KernelConfig",
    "KSResult",
    "LimitState",
    "ModelSpec",
    "NumericError",
    "OptimalityResult",
    "ProposalRecord",
    "PsiContext",
    "QuadratureSpec",
    "ResultRow",
    "StateError",
    "acceptance_limit",
    "acceptance_rate",
    "chaos_check",
    "clt_check_G",
    "clt_check_G_chain",
    "esjd_per_component",
    "eval_H",
    "eval_psi",
    "eval_U",
    "fit_variance_exponent",
    "g3",
    "grad_log_target",
    "iact",
    "init_state",
    "integrate",
    "k_prime",
    "ks_statistic",
    "limit_cdf_table",
    "log_accept_ratio",
    "log_accept_ratio_from_noise",
    "log_target",
    "mala_step",
    "normal_cdf",
    "normal_quantile",
    "optimal_ell",
    "propose_mala",
    "read_csv",
    "run_chain",
    "run_optimality_sweep",
    "run_scaling_sweep",
    "rwm_step",
    "solve_limit",
    "solve_mean_field",
    "speed",
    "speed_estimate",
    "tail_frequency",
    "tau_squared",
    "write_csv",
    "write_report",
]
