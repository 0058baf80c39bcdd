"""Toolkit for peer-to-peer content production and sharing games.

Computes and cross-verifies the equilibrium and cooperative outcomes of the
three-stage produce/share/download game, the coalitional solutions (core,
Shapley value, group formation), the incentive schemes that make cooperation
self-enforcing (linear pricing with adjustment dynamics, intervention,
repeated play), and the associated inefficiency ratios.
"""

from .benefit import (
    BenefitSpec,
    DistinctFilesParams,
    conjugate,
    distinct_files_benefit,
    log_benefit,
    maximizer,
)
from .coalitional import (
    BlockingWitness,
    CoalitionValueFn,
    CoreMembership,
    GroupSizeResult,
    ScaleTables,
    VfsCoreResult,
    avg_utility_full_sharing,
    core_vertices,
    full_sharing_game,
    is_in_core,
    is_in_core_exhaustive,
    optimal_group_size,
    participation_bound,
    scale_tables,
    shapley,
    sharing_game,
    vfs_core,
)
from .core import (
    Allocation,
    CpsParams,
    InefficiencyMetrics,
    SolutionReport,
    autarky_production,
    full_sharing_total_production,
    full_sharing_unit_cost,
    inefficiency,
    pareto_total_production,
    shared_unit_cost,
    solve_enforced_levels,
    solve_full_sharing,
    solve_noncooperative,
    solve_pareto,
    total_utility,
    utilities,
    utility,
)
from .incentives import (
    DivergenceError,
    InterventionFn,
    InterventionOutcome,
    LinearPrice,
    MarketCurves,
    PriceAdjustmentResult,
    QuantityAdjustmentResult,
    check_participation_efficient,
    demand_at,
    excess_demand,
    intervention_outcome,
    market_curves,
    misreport_payoff,
    optimal_intervention,
    optimal_price,
    priced_best_response,
    run_price_adjustment,
    run_quantity_adjustment,
    supply_at,
)
from .sim import (
    FixedActionStrategy,
    GrimTriggerStrategy,
    InterventionScheme,
    LinearPricingScheme,
    NoScheme,
    PeerHistory,
    PeerRound,
    PeerStrategy,
    RoundRecord,
    RunStats,
    Scheme,
    StrategyError,
    append_round,
    best_response_dynamics,
    grim_trigger_run,
    make_scheme,
    optimal_download_volume,
    play_round,
    proportional_download_row,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
