"""Extreme costs, the Pareto hyperplane, the target-cost LP and discount bounds.

Indices are oriented so that ``g = (C - base) / (shift - base)`` is the
discounted frequency with which a consumer is asked to shift.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import Infeasible, InfeasibleCap
from .model import ConsumerSpec, PricingScheme, Scenario, discomfort

log = logging.getLogger(__name__)

HYPERPLANE_TOL = 1e-9


def min_shift_pattern(consumer: ConsumerSpec, pricing: PricingScheme) -> np.ndarray:
    """Cheapest pattern that empties the consumer's shiftable peak-slot load.

    The whole shiftable amount goes to the off-peak slot with the smallest
    slope (earliest on ties). If that slot would be pushed over the threshold
    when all ``m`` shifters used it, the load is split over the cheapest slots
    instead and a warning is logged.
    """
    h = pricing.peak_slot
    amount = consumer.shiftable_at(h)
    pattern = consumer.desired.copy()
    if amount <= 0:
        return pattern
    pattern[h] = consumer.nonshiftable[h]
    slots = [s for s in range(consumer.slots) if s != h]
    slots.sort(key=lambda s: (consumer.slope[s], s))
    room = (pricing.threshold - pricing.aggregate_desired) / pricing.shifter_count
    target = slots[0]
    if amount <= room[target] + 1e-12:
        pattern[target] += amount
        return pattern
    log.warning("consumer %s: receiving slot %s lacks headroom, splitting the peak shift",
                consumer.id, target)
    left = amount
    for s in slots:
        take = min(left, max(room[s], 0.0))
        pattern[s] += take
        left -= take
        if left <= 1e-12:
            break
    if left > 1e-12:
        pattern[target] += left
    return pattern


@dataclass(frozen=True, eq=False)
class ExtremeCosts:
    base_cost: float
    shift_cost: float
    ne_cost: float
    cap_cost: float
    shift_pattern: np.ndarray

    @property
    def shift_discomfort(self) -> float:
        return self.shift_cost - self.base_cost

    @property
    def cap_index(self) -> float:
        """Largest index the discomfort and IC caps allow (may exceed 1)."""
        if self.shift_discomfort <= 0:
            return 1.0
        return (self.cap_cost - self.base_cost) / self.shift_discomfort

    @property
    def upper(self) -> float:
        return min(1.0, self.cap_index)


def extreme_costs(consumer: ConsumerSpec, pricing: PricingScheme) -> ExtremeCosts:
    pattern = min_shift_pattern(consumer, pricing)
    base = pricing.price_low * consumer.total_demand
    shift = base + discomfort(pattern, consumer)
    ne = base + pricing.price_gap * consumer.desired[pricing.peak_slot]
    cap = min(base + consumer.discomfort_cap, ne)
    pattern.setflags(write=False)
    ext = ExtremeCosts(base, shift, ne, cap, pattern)
    if ext.cap_index < 0:
        raise InfeasibleCap(f"consumer {consumer.id}: cap cost {cap:.6g} is below the base cost {base:.6g}")
    return ext


def population_extremes(scenario: Scenario) -> list[ExtremeCosts]:
    return [extreme_costs(c, scenario.pricing) for c in scenario.consumers]


class Membership(enum.Enum):
    ON_BOUNDARY = "on_boundary"
    INTERIOR_VIOLATION = "interior_violation"
    INFEASIBLE = "infeasible"


def normalized_sum(costs, extremes: Sequence[ExtremeCosts]) -> float:
    costs = np.asarray(costs, dtype=float)
    base = np.array([e.base_cost for e in extremes])
    span = np.array([e.shift_discomfort for e in extremes])
    return float(np.sum((costs - base) / span))


def pareto_membership(costs, extremes: Sequence[ExtremeCosts], m: int) -> Membership:
    """Locate a cost vector relative to the Pareto hyperplane ``sum g = m``."""
    costs = np.asarray(costs, dtype=float)
    base = np.array([e.base_cost for e in extremes])
    if np.any(costs < base - HYPERPLANE_TOL):
        return Membership.INFEASIBLE
    total = normalized_sum(costs, extremes)
    if abs(total - m) <= HYPERPLANE_TOL:
        return Membership.ON_BOUNDARY
    if total > m:
        return Membership.INTERIOR_VIOLATION
    # Below the hyperplane no action profile reaches it.
    return Membership.INFEASIBLE


@dataclass(frozen=True, eq=False)
class TargetCostVector:
    costs: np.ndarray
    indices: np.ndarray
    shifter_count: int
    caps: np.ndarray
    fractional: int | None = None

    @property
    def total(self) -> float:
        return float(self.costs.sum())


def solve_target(extremes: Sequence[ExtremeCosts], m: int) -> TargetCostVector:
    """Minimum-total-cost point of the feasible Pareto region.

    The LP has one equality (``sum g = m``) and box constraints
    ``0 <= g_i <= min(1, cap_i)``, so filling the cheapest shifters first is
    optimal. Ties go to the lowest consumer index.
    """
    upper = np.array([e.upper for e in extremes])
    if upper.sum() < m - HYPERPLANE_TOL:
        raise Infeasible(
            f"discomfort caps admit total shifting mass {upper.sum():.6g} < {m}; "
            "relax D_max or lower the PAR goal"
        )
    weights = np.array([e.shift_discomfort for e in extremes])
    order = sorted(range(len(extremes)), key=lambda i: (weights[i], i))
    g = np.zeros(len(extremes))
    left = float(m)
    fractional = None
    for i in order:
        if left <= 1e-12:
            break
        take = min(upper[i], left)
        g[i] = take
        if take < upper[i]:
            fractional = i
        left -= take
    base = np.array([e.base_cost for e in extremes])
    costs = base + g * weights
    for arr in (g, costs, upper):
        arr.setflags(write=False)
    return TargetCostVector(costs=costs, indices=g, shifter_count=int(m), caps=upper, fractional=fractional)


def min_discount(n: int, m: int) -> float:
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    return 1.0 - 1.0 / (n - m + 1)


def exact_min_discount(caps, n: int, m: int) -> float:
    """Discount bound from the worst-case index vector for the given caps.

    Caps above 1 are clipped, which keeps the result at or below
    :func:`min_discount`.
    """
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    top = sorted((min(1.0, float(c)) for c in caps), reverse=True)[: m - 1]
    return 1.0 - (m - sum(top)) / (n - m + 1)


def worst_case_indices(caps, m: int) -> np.ndarray:
    """Index vector attaining the worst case of the discount bound.

    The ``m - 1`` largest caps are saturated and the remaining mass is spread
    evenly over the other consumers. Returned in the original consumer order.
    """
    caps = np.minimum(1.0, np.asarray(caps, dtype=float))
    n = caps.size
    order = sorted(range(n), key=lambda i: (-caps[i], i))
    g = np.zeros(n)
    head = order[: m - 1]
    g[head] = caps[head]
    rest = order[m - 1:]
    g[rest] = (m - caps[head].sum()) / (n - m + 1)
    return g
