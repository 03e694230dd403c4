"""Repeated-game simulator for nonstationary demand-side management under critical peak pricing."""

from .baselines import BaselineResult, billing_min, jo_dsm, og_dsm, par, sc_dsm
from .engine import (
    Compliant,
    GameState,
    MyopicBestResponse,
    OneShotDeviator,
    SimulationTrace,
    audit_ic,
    discounted_cost,
    init_state,
    recommend,
    run,
    select_active_set,
    settle_period,
    update_indices,
)
from .errors import (
    IndexOutOfBounds,
    Infeasible,
    InfeasibleCap,
    InfeasibleThreshold,
    InsufficientShiftable,
    NDSMError,
    NonUniformShiftable,
    NotIC,
    ParseError,
    ValidationError,
)
from .metrics import ComparisonTable, compare, convergence_diag, fairness_report
from .model import (
    ConsumerClass,
    ConsumerSpec,
    PricingScheme,
    Scenario,
    classify,
    discomfort,
    peak_slot,
    price_at_slot,
    required_shifters,
    stage_cost,
)
from .pareto import (
    ExtremeCosts,
    TargetCostVector,
    exact_min_discount,
    extreme_costs,
    min_discount,
    min_shift_pattern,
    pareto_membership,
    population_extremes,
    solve_target,
)
from .scenario import ScenarioDocument, generate_population, load_scenario, save_scenario

__version__ = "0.1.0"
