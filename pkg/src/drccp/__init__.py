"""Strong MIP formulations for Wasserstein-robust chance constraints."""

from .core import (
    CLOSED,
    L1,
    L2,
    LINF,
    OPEN,
    Box,
    DualNormTag,
    Instance,
    SafetySpec,
    dual_of,
    eval_distance,
    floor_eps_n,
    lift_distinct_matrices,
    lift_scenario,
    saa_violation_count,
)
from .formulation import (
    BigMVector,
    MipModel,
    build_basic,
    build_improved,
    build_knapsack,
    build_saa,
    compute_bigM_domain,
)
from .quantile import (
    QuantileConfig,
    QuantileTable,
    build_quantile_table,
    covering_packing_bound,
    portfolio_bigM,
    resource_bigM,
    resource_quantile_bound,
    resource_U_bounds,
    subproblem_value,
)
from .mixing import (
    MixingCut,
    MixingCutSource,
    SortedBaseProfile,
    base_inequality,
    enumerate_all_cuts,
    profiles_from_table,
    separate,
    strengthened_base_pair,
)
from .solver import LpSolution, SolveReport, root_gap, solve_lp, solve_mip
from .oracle import classify_extraneous, enumerate_optimum, membership_drccp
from .apps import (
    PortfolioConfig,
    ResourceConfig,
    assemble_benchmark,
    gen_portfolio,
    gen_resource,
)

__version__ = "0.1.0"
