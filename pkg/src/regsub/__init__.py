"""Adaptive regularized submodular maximization: distorted greedy policies,
exact and Monte Carlo evaluation, and a brute-force optimal-policy oracle."""

from regsub.core import (
    EMPTY,
    CapacityError,
    ConditioningError,
    ExplicitPrior,
    IndependentPrior,
    Instance,
    MalformedInputError,
    PartialRealization,
    Realization,
    consistent,
    enumerate_realizations,
    is_subrealization,
    posterior,
)
from regsub.evaluation import EvalResult, evaluate_exact, evaluate_monte_carlo, verify_step_identity
from regsub.instances import demo2, gen_coverage, gen_table_nonmonotone, load_instance, save_instance
from regsub.objective import (
    CheckReport,
    CoverageRevenue,
    TableRevenue,
    check_adaptive_monotone,
    check_adaptive_submodular,
    conditional_marginal,
    distorted_marginal,
    distorted_value,
    expected_revenue,
    modular_cost,
)
from regsub.oracle_dp import BoundCheck, DecisionTree, optimal_policy, tree_value_decomposition, verify_bound
from regsub.policies import (
    Environment,
    PolicyKind,
    PolicySpec,
    PolicyTrace,
    augment_with_dummies,
    concatenate,
    run_distorted_greedy,
    run_linear_time,
    run_policy,
    run_random_distorted_greedy,
    top_k_set,
    truncate,
)

__version__ = "0.1.0"
