"""Stationary comparison mechanisms.

Each returns the per-consumer daily profile it settles on and the resulting
stage costs. Stationary profiles repeat every day, so their discounted average
cost equals the daily cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientShiftable
from .model import Scenario, discomfort, slot_prices
from .pareto import population_extremes


@dataclass(frozen=True, eq=False)
class BaselineResult:
    name: str
    profiles: np.ndarray
    stage_costs: np.ndarray
    total_cost: float
    par: float


def par(loads) -> float:
    """Peak-to-average ratio of a load vector, an N x H profile, or a trace."""
    if hasattr(loads, "records"):
        return max(par(r.loads) for r in loads.records)
    loads = np.asarray(loads, dtype=float)
    if loads.ndim == 2:
        loads = loads.sum(axis=0)
    mean = loads.mean()
    if mean <= 0:
        raise ValueError("PAR is undefined for an all-zero load")
    return float(loads.max() / mean)


def _settle(name: str, scenario: Scenario, profiles: np.ndarray, discomforts=None) -> BaselineResult:
    prices = slot_prices(profiles.sum(axis=0), scenario.pricing)
    if discomforts is None:
        discomforts = [discomfort(p, c) for p, c in zip(profiles, scenario.consumers)]
    costs = profiles @ prices + np.asarray(discomforts, dtype=float)
    return BaselineResult(name, profiles, costs, float(costs.sum()), par(profiles))


def og_dsm(scenario: Scenario) -> BaselineResult:
    """One-shot equilibrium: everyone keeps the desired pattern."""
    return _settle("OG-DSM", scenario, scenario.desired.copy())


def jo_dsm(scenario: Scenario) -> BaselineResult:
    """One-shot social optimum: the ``m`` cheapest shifters shift, every day."""
    extremes = population_extremes(scenario)
    m = scenario.pricing.shifter_count
    order = sorted(range(scenario.size), key=lambda i: (extremes[i].shift_discomfort, i))
    profiles = scenario.desired.copy()
    for i in order[:m]:
        profiles[i] = extremes[i].shift_pattern
    return _settle("JO-DSM", scenario, profiles)


def sc_dsm(scenario: Scenario, epsilon: float | None = None) -> BaselineResult:
    """Price-taking single-consumer control under fixed peak pricing.

    Each consumer decides against the announced tariff (peak price at the
    peak slot, low price elsewhere). Bills are then settled at the prices the
    resulting aggregate load produces, like every other mechanism. Discomfort
    is only suffered when renewable supply is unavailable, so it is weighted
    by ``1 - epsilon`` in both the decision and the reported cost.
    """
    eps = scenario.renewable_availability if epsilon is None else float(epsilon)
    if not 0 <= eps <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    pricing = scenario.pricing
    prices = np.full(scenario.slots, pricing.price_low)
    prices[pricing.peak_slot] = pricing.price_high
    extremes = population_extremes(scenario)
    profiles = scenario.desired.copy()
    weighted = np.zeros(scenario.size)
    for i, e in enumerate(extremes):
        stay = float(prices @ profiles[i])
        move = float(prices @ e.shift_pattern) + (1 - eps) * e.shift_discomfort
        if move < stay:
            profiles[i] = e.shift_pattern
            weighted[i] = (1 - eps) * e.shift_discomfort
    return _settle("SC-DSM", scenario, profiles, discomforts=weighted)


def billing_min(scenario: Scenario) -> BaselineResult:
    """Every consumer moves an equal share of the excess peak load to its cheapest off-peak slot."""
    pricing = scenario.pricing
    h = pricing.peak_slot
    share = max(pricing.peak_load - pricing.threshold, 0.0) / scenario.size
    profiles = scenario.desired.copy()
    for i, c in enumerate(scenario.consumers):
        if share > c.shiftable_at(h) + 1e-12:
            raise InsufficientShiftable(
                f"consumer {c.id} can shift {c.shiftable_at(h):.6g} kWh but the equal share is {share:.6g}"
            )
        if share <= 0:
            continue
        dest = min((s for s in range(c.slots) if s != h), key=lambda s: (c.slope[s], s))
        profiles[i, h] -= share
        profiles[i, dest] += share
    return _settle("BILLING-MIN", scenario, profiles)


MECHANISMS = {
    "OG-DSM": og_dsm,
    "JO-DSM": jo_dsm,
    "SC-DSM": sc_dsm,
    "BILLING-MIN": billing_min,
}
