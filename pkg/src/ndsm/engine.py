"""Repeated-game engine for the nonstationary DSM mechanism.

Each period the ``m`` consumers with the largest indices are asked to shift
their peak-slot load, everyone else keeps the desired pattern, and prices are
settled from the aggregate load. A peak-slot price spike in a cooperative
period is read as a deviation and triggers permanent reversion to the
stage-game equilibrium (everyone at the desired pattern).

Indices are kept as floats re-projected onto ``sum g = m`` after every update,
or, with ``exact=True``, as integer numerators over a shared denominator so the
recursion is carried out without rounding.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import IndexOutOfBounds, NotIC
from .model import LOAD_TOL, PricingScheme, Scenario, discomfort, is_desired, slot_prices
from .pareto import ExtremeCosts, TargetCostVector, exact_min_discount, population_extremes

log = logging.getLogger(__name__)

BOUND_TOL = 1e-7
GAP_TOL = 1e-7

DESIRED, SHIFT, CUSTOM = 0, 1, -1


@dataclass(frozen=True, eq=False)
class GameState:
    period: int
    indices: np.ndarray
    punished: bool
    caps: np.ndarray
    shifter_count: int
    last_selected: np.ndarray
    # (numerators, common denominator) when running in exact arithmetic
    exact: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.indices.shape[0]


def _exact_fraction(x) -> Fraction:
    # The shortest decimal repr is what the user wrote (0.995 -> 199/200).
    return Fraction(repr(float(x)))


def init_state(target: TargetCostVector, *, exact: bool = False) -> GameState:
    g = np.array(target.indices, dtype=float)
    n = g.shape[0]
    book = None
    if exact:
        fracs = [Fraction(float(v)) for v in g]
        den = max(f.denominator for f in fracs)
        nums = [f.numerator * (den // f.denominator) for f in fracs]
        residual = target.shifter_count * den - sum(nums)
        if residual:
            # Float LP output misses the hyperplane by a few ulps; the exact
            # recursion would amplify that, so absorb it in one entry.
            k = target.fractional if target.fractional is not None else int(np.argmax(g))
            nums[k] += residual
            log.debug("exact init: moved %s/%s onto consumer %s", residual, den, k)
        book = (nums, den)
        g = np.array([v / den for v in nums])
    return GameState(
        period=0,
        indices=g,
        punished=False,
        caps=np.array(target.caps, dtype=float),
        shifter_count=target.shifter_count,
        last_selected=np.full(n, -1, dtype=np.int64),
        exact=book,
    )


def select_active_set(state: GameState, m: int | None = None) -> tuple:
    """Consumers with the ``m`` largest indices.

    Ties go to the least recently selected consumer, then to the lowest id.
    """
    m = state.shifter_count if m is None else m
    if state.exact is not None:
        nums = state.exact[0]
        order = sorted(range(state.size), key=lambda i: (-nums[i], state.last_selected[i], i))
        return tuple(sorted(order[:m]))
    order = np.lexsort((np.arange(state.size), state.last_selected, -state.indices))
    return tuple(sorted(int(i) for i in order[:m]))


def recommend(state: GameState, active_set, extremes: Sequence[ExtremeCosts], desired) -> np.ndarray:
    """Recommended pattern for every consumer (rows of an N x H array)."""
    rec = np.array(desired, dtype=float, copy=True)
    if not state.punished:
        for i in active_set:
            rec[i] = extremes[i].shift_pattern
    return rec


def settle_period(actions, pricing: PricingScheme, cooperative: bool = True):
    """Slot prices for the realised actions and whether a deviation was observed.

    Only the public price signal is used: a cooperative period is flagged when
    the peak slot ends above the threshold.
    """
    loads = np.asarray(actions, dtype=float).sum(axis=0)
    prices = slot_prices(loads, pricing)
    deviated = bool(cooperative and loads[pricing.peak_slot] > pricing.threshold + LOAD_TOL)
    return prices, deviated


def _check_bounds(values: np.ndarray, caps: np.ndarray, period: int):
    if values.min() >= -BOUND_TOL and np.all(values <= caps + BOUND_TOL):
        return
    low = np.flatnonzero(values < -BOUND_TOL)
    high = np.flatnonzero(values > caps + BOUND_TOL)
    if low.size or high.size:
        i = int(low[0]) if low.size else int(high[0])
        side = "below 0" if low.size else f"above its cap {caps[i]:.6g}"
        raise IndexOutOfBounds(
            f"period {period}: index of consumer {i} moved {side} ({values[i]:.6g}); "
            "the target cannot be sustained at this discount factor",
            period=period, consumer=i, value=float(values[i]),
        )


def update_indices(state: GameState, active_set, delta: float):
    """Indices for the next period after a cooperative period that everyone followed.

    Returns ``(indices, exact)`` where ``exact`` is the rational book when the
    state carries one.
    """
    n, m = state.size, state.shifter_count
    mask = np.zeros(n, dtype=bool)
    mask[list(active_set)] = True
    if delta == 0:
        # Continuation weight is zero; the only consistent state is g = 1{active}.
        if not np.allclose(state.indices, mask, atol=BOUND_TOL, rtol=0):
            raise IndexOutOfBounds(f"period {state.period}: delta = 0 needs indices equal to the active set",
                                   period=state.period)
        return state.indices.copy(), state.exact

    if state.exact is not None:
        nums, den = state.exact
        d = _exact_fraction(delta)
        p, q = d.numerator, d.denominator
        step = (q - p) * den
        new_nums = [q * v - (step if mask[i] else 0) for i, v in enumerate(nums)]
        new_den = den * p
        values = np.array([v / new_den for v in new_nums])
        _check_exact_bounds(new_nums, new_den, state.caps, state.period, values)
        return values, (new_nums, new_den)

    values = (state.indices - (1.0 - delta) * mask) / delta
    total = values.sum()
    if total > 0:
        values -= (total - m) * values / total
    _check_bounds(values, state.caps, state.period)
    return values, None


def _check_exact_bounds(nums, den, caps, period, values):
    # The float image of each ratio is correct to a few ulps, so only values
    # sitting on a tolerance edge need the exact comparison.
    tol = Fraction(BOUND_TOL)
    near = np.flatnonzero((np.abs(values + BOUND_TOL) < 1e-12) | (np.abs(values - caps - BOUND_TOL) < 1e-12))
    for i in near:
        low = Fraction(nums[i], den) < -tol
        high = Fraction(nums[i], den) > Fraction(float(caps[i])) + tol
        if low or high:
            raise IndexOutOfBounds(f"period {period}: index of consumer {i} moved {'below 0' if low else 'above its cap'}",
                                   period=period, consumer=int(i), value=float(values[i]))
    far = np.ones(values.shape[0], dtype=bool)
    far[near] = False
    _check_bounds(np.where(far, values, 0.0), caps, period)


# --- agent policies -------------------------------------------------------

@dataclass(frozen=True)
class Compliant:
    pass


@dataclass(frozen=True)
class OneShotDeviator:
    """Plays the desired pattern from ``period`` on, whatever is recommended."""

    consumer: int
    period: int


@dataclass(frozen=True)
class MyopicBestResponse:
    """Minimises the current stage cost against the others' recommendations."""


def best_response(consumer, extremes: ExtremeCosts, others_load, pricing: PricingScheme) -> np.ndarray:
    """Stage-cost minimising pattern against fixed loads of everyone else.

    Candidates are the desired pattern, the full minimum-discomfort shift, and
    single-slot moves of either the full shiftable amount or exactly the
    amount that clears the threshold. Discomfort is separable and linear, so
    this family contains a minimiser. Ties keep the earlier candidate, which
    puts the desired pattern first.
    """
    others_load = np.asarray(others_load, dtype=float)
    h = pricing.peak_slot
    shiftable = consumer.shiftable_at(h)
    candidates = [consumer.desired, np.asarray(extremes.shift_pattern)]
    amounts = [shiftable] if shiftable > 0 else []
    need = others_load[h] + consumer.desired[h] - pricing.threshold
    if 0 < need < shiftable:
        amounts.insert(0, need)
    slots = sorted((s for s in range(consumer.slots) if s != h), key=lambda s: (consumer.slope[s], s))
    for x in amounts:
        for s in slots:
            pat = consumer.desired.copy()
            pat[h] -= x
            pat[s] += x
            candidates.append(pat)
    best, best_cost = None, np.inf
    for pat in candidates:
        loads = others_load + pat
        cost = float(np.dot(slot_prices(loads, pricing), pat)) + discomfort(pat, consumer)
        if cost < best_cost - 1e-12:
            best, best_cost = pat, cost
    return np.array(best, dtype=float)


# --- simulation -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodRecord:
    period: int
    indices: np.ndarray
    punished: bool
    active_set: tuple
    recommended: np.ndarray
    played: np.ndarray
    custom: dict
    loads: np.ndarray
    prices: np.ndarray
    stage_costs: np.ndarray
    discomforts: np.ndarray
    deviated: bool
    nonconforming: tuple

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "punished": self.punished,
            "active_set": list(self.active_set),
            "deviated": self.deviated,
            "nonconforming": list(self.nonconforming),
            "indices": self.indices.tolist(),
            "loads": self.loads.tolist(),
            "prices": self.prices.tolist(),
            "stage_costs": self.stage_costs.tolist(),
            "discomforts": self.discomforts.tolist(),
            "played": self.played.tolist(),
        }


@dataclass(eq=False)
class SimulationTrace:
    records: list
    horizon: int
    discount: float
    desired: np.ndarray = field(repr=False)
    shift_patterns: np.ndarray = field(repr=False)
    initial_state: GameState = field(repr=False)
    final_state: GameState = field(repr=False)

    def __len__(self):
        return len(self.records)

    @property
    def exact(self) -> bool:
        return self.initial_state.exact is not None

    def stage_costs(self) -> np.ndarray:
        return np.array([r.stage_costs for r in self.records])

    def discomforts(self) -> np.ndarray:
        return np.array([r.discomforts for r in self.records])

    def active_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.records), self.desired.shape[0]), dtype=bool)
        for t, r in enumerate(self.records):
            out[t, list(r.active_set)] = True
        return out

    def actions(self, t: int) -> np.ndarray:
        r = self.records[t]
        x = self.desired.copy()
        shifted = r.played == SHIFT
        x[shifted] = self.shift_patterns[shifted]
        for i, pat in r.custom.items():
            x[i] = pat
        return x

    def recommendations(self, t: int) -> np.ndarray:
        r = self.records[t]
        x = self.desired.copy()
        shifted = r.recommended == SHIFT
        x[shifted] = self.shift_patterns[shifted]
        return x


class Simulation:
    """Step-by-step driver; :func:`run` wraps it for whole horizons."""

    def __init__(self, scenario: Scenario, target: TargetCostVector, policies=None, *,
                 delta: float | None = None, exact: bool = False, state: GameState | None = None,
                 extremes: Sequence[ExtremeCosts] | None = None):
        self.scenario = scenario
        self.pricing = scenario.pricing
        self.delta = scenario.discount if delta is None else float(delta)
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        self.extremes = list(extremes) if extremes is not None else population_extremes(scenario)
        self.desired = scenario.desired
        self.shift_patterns = np.array([e.shift_pattern for e in self.extremes])
        self.shift_delta = self.shift_patterns - self.desired
        self.shift_discomfort = np.array([e.shift_discomfort for e in self.extremes])
        self.desired_load = self.desired.sum(axis=0)
        self.policies = _policy_list(policies, scenario.size)
        self._deviators = [(i, p.period) for i, p in enumerate(self.policies) if isinstance(p, OneShotDeviator)]
        self._myopic = [i for i, p in enumerate(self.policies) if isinstance(p, MyopicBestResponse)]
        self.state = state if state is not None else init_state(target, exact=exact)

    def _actions(self, recommended: np.ndarray, period: int):
        played = recommended.copy()
        custom = {}
        for i, start in self._deviators:
            if period >= start:
                played[i] = DESIRED
        myopic = self._myopic
        if myopic:
            rec_load = self.desired_load + self.shift_delta[recommended == SHIFT].sum(axis=0)
            for i in myopic:
                own = self.shift_patterns[i] if recommended[i] == SHIFT else self.desired[i]
                pat = best_response(self.scenario.consumers[i], self.extremes[i], rec_load - own, self.pricing)
                if is_desired(pat, self.scenario.consumers[i]):
                    played[i] = DESIRED
                elif np.allclose(pat, self.shift_patterns[i], atol=1e-12, rtol=0):
                    played[i] = SHIFT
                else:
                    played[i] = CUSTOM
                    custom[i] = pat
        return played, custom

    def step(self) -> PeriodRecord:
        st = self.state
        n = st.size
        recommended = np.zeros(n, dtype=np.int8)
        active = ()
        if not st.punished:
            active = select_active_set(st)
            recommended[list(active)] = SHIFT
        played, custom = self._actions(recommended, st.period)

        actions = self.desired.copy()
        shifted = played == SHIFT
        actions[shifted] = self.shift_patterns[shifted]
        for i, pat in custom.items():
            actions[i] = pat
        prices, deviated = settle_period(actions, self.pricing, cooperative=not st.punished)
        loads = actions.sum(axis=0)
        discomforts = np.where(shifted, self.shift_discomfort, 0.0)
        for i, pat in custom.items():
            discomforts[i] = discomfort(pat, self.scenario.consumers[i])
        stage = actions @ prices + discomforts
        nonconforming = tuple(int(i) for i in np.flatnonzero((played != recommended) | (played == CUSTOM)))
        if nonconforming and not deviated and not st.punished:
            log.info("period %d: consumers %s departed from the recommendation without a price spike",
                     st.period, nonconforming)

        indices, book, last = st.indices, st.exact, st.last_selected
        if not st.punished and not deviated:
            indices, book = update_indices(st, active, self.delta)
            last = st.last_selected.copy()
            last[list(active)] = st.period
        record = PeriodRecord(
            period=st.period,
            indices=st.indices,
            punished=st.punished,
            active_set=active,
            recommended=recommended,
            played=played,
            custom=custom,
            loads=loads,
            prices=prices,
            stage_costs=stage,
            discomforts=discomforts,
            deviated=deviated,
            nonconforming=nonconforming,
        )
        self.state = dataclasses.replace(
            st, period=st.period + 1, indices=indices, exact=book,
            punished=st.punished or deviated, last_selected=last,
        )
        return record


def _policy_list(policies, n: int) -> list:
    if policies is None:
        return [Compliant()] * n
    if isinstance(policies, Mapping):
        out = [Compliant()] * n
        for i, pol in policies.items():
            out[i] = pol
        return out
    out = list(policies)
    if len(out) != n:
        raise ValueError(f"got {len(out)} policies for {n} consumers")
    return out


def run(scenario: Scenario, target: TargetCostVector, policies=None, horizon: int | None = None, *,
        delta: float | None = None, exact: bool = False, state: GameState | None = None,
        extremes=None) -> SimulationTrace:
    """Run the mechanism for ``horizon`` periods (scenario default when omitted)."""
    horizon = scenario.horizon if horizon is None else int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    sim = Simulation(scenario, target, policies, delta=delta, exact=exact, state=state, extremes=extremes)
    start = sim.state
    records = [sim.step() for _ in range(horizon)]
    return SimulationTrace(records, horizon, sim.delta, sim.desired, sim.shift_patterns, start, sim.state)


# --- discounted evaluation -------------------------------------------------

@dataclass(frozen=True)
class DiscountedCost:
    value: float
    discomfort: float
    tail_bound: float
    discomfort_tail_bound: float


def _weights(length: int, delta: float) -> np.ndarray:
    return (1.0 - delta) * np.power(delta, np.arange(length))


def discounted_cost(trace: SimulationTrace, consumer: int, delta: float | None = None) -> DiscountedCost:
    """Truncated discounted average cost of one consumer with its tail bound."""
    return discounted_costs(trace, delta)[consumer]


def discounted_costs(trace: SimulationTrace, delta: float | None = None) -> list:
    """:func:`discounted_cost` for every consumer at once."""
    delta = trace.discount if delta is None else delta
    costs = trace.stage_costs()
    disc = trace.discomforts()
    w = _weights(costs.shape[0], delta)
    tail = delta ** costs.shape[0]
    value, dvalue = w @ costs, w @ disc
    cmax, dmax = costs.max(axis=0), disc.max(axis=0)
    return [
        DiscountedCost(float(value[i]), float(dvalue[i]), float(tail * cmax[i]), float(tail * dmax[i]))
        for i in range(costs.shape[1])
    ]


# --- incentive-compatibility audit -------------------------------------------

@dataclass(frozen=True)
class ICRow:
    consumer: int
    follow_cost: float
    best_deviation_cost: float
    gap: float
    min_simulated_gap: float
    deviations_simulated: int
    max_discrepancy: float
    tail_bound: float

    @property
    def ok(self) -> bool:
        return self.gap >= -GAP_TOL and self.min_simulated_gap >= -GAP_TOL


@dataclass(frozen=True)
class ICReport:
    rows: list
    delta: float
    discount_bound: float
    window: int

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def consistent(self) -> bool:
        """Simulated and analytic values agree within the reported tail bounds."""
        return all(r.max_discrepancy <= r.tail_bound + 1e-9 for r in self.rows)


def audit_ic(scenario: Scenario, target: TargetCostVector, delta: float | None = None, *,
             window: int = 200, lookahead: int | None = None, follow_up: int = 5,
             strict: bool = True) -> ICReport:
    """Check that no consumer gains by deviating from the recommendation.

    The analytic check compares each target cost with the equilibrium cost a
    deviator ends up paying. The simulated check forks a one-shot deviator off
    the compliant run at every period of ``window``, plays ``follow_up``
    periods to confirm the punishment, and completes both value streams with
    their analytic continuations.
    """
    delta = scenario.discount if delta is None else float(delta)
    n, m = scenario.size, target.shifter_count
    bound = exact_min_discount(target.caps, n, m)
    if delta < bound - 1e-12:
        raise ValueError(f"delta {delta} is below the discount bound {bound:.6g}")
    lookahead = window if lookahead is None else lookahead
    total = window + lookahead
    extremes = population_extremes(scenario)
    base = np.array([e.base_cost for e in extremes])
    span = np.array([e.shift_discomfort for e in extremes])
    ne = np.array([e.ne_cost for e in extremes])

    sim = Simulation(scenario, target, delta=delta, extremes=extremes)
    snapshots, records = [], []
    for _ in range(total):
        snapshots.append(sim.state)
        records.append(sim.step())
    final = sim.state
    costs = np.array([r.stage_costs for r in records])
    active = np.zeros((total, n), dtype=bool)
    for t, r in enumerate(records):
        active[t, list(r.active_set)] = True

    follow = np.empty((total + 1, n))
    follow[total] = base + span * final.indices
    for t in range(total - 1, -1, -1):
        follow[t] = (1 - delta) * costs[t] + delta * follow[t + 1]
    analytic_follow = np.array([base + span * s.indices for s in snapshots[:window]])
    # Truncated simulated values against the analytic ones; each comparison
    # is allowed the tail mass it leaves out.
    cmax = np.maximum(costs.max(axis=0), ne)
    tails = np.array([delta ** (total - t) for t in range(window)])
    truncated = follow[:window] - tails[:, None] * follow[total]
    slack = np.abs(truncated - analytic_follow) - tails[:, None] * cmax
    worst_t = slack.argmax(axis=0)
    cols = np.arange(n)
    discrepancy = np.abs(truncated - analytic_follow)[worst_t, cols]
    tail_bound = tails[worst_t] * cmax
    worst_slack = slack[worst_t, cols]

    dev = np.empty((total + 1, n))
    dev[total] = follow[total]
    simulated = np.zeros(n, dtype=int)
    weight = delta ** follow_up
    for t in range(total - 1, -1, -1):
        for i in range(n):
            if not active[t, i]:
                dev[t, i] = (1 - delta) * costs[t, i] + delta * dev[t + 1, i]
            elif t >= window:
                dev[t, i] = ne[i]
            else:
                fork = Simulation(scenario, target, {i: OneShotDeviator(i, t)}, delta=delta,
                                  state=snapshots[t], extremes=extremes)
                steps = [fork.step() for _ in range(follow_up)]
                if not steps[0].deviated or not all(s.punished for s in steps[1:]):
                    raise NotIC(f"deviation of consumer {i} at period {t} went unpunished")
                stream = np.array([s.stage_costs[i] for s in steps])
                head = float(_weights(follow_up, delta) @ stream)
                dev[t, i] = head + weight * ne[i]
                gap_i, bound_i = abs(head - ne[i]), weight * cmax[i]
                if gap_i - bound_i > worst_slack[i]:
                    worst_slack[i], discrepancy[i], tail_bound[i] = gap_i - bound_i, gap_i, bound_i
                simulated[i] += 1

    sim_gap = (dev[:window] - follow[:window]).min(axis=0)
    rows = [
        ICRow(
            consumer=i,
            follow_cost=float(target.costs[i]),
            best_deviation_cost=float(ne[i]),
            gap=float(ne[i] - target.costs[i]),
            min_simulated_gap=float(sim_gap[i]),
            deviations_simulated=int(simulated[i]),
            max_discrepancy=float(discrepancy[i]),
            tail_bound=float(tail_bound[i]),
        )
        for i in range(n)
    ]
    report = ICReport(rows=rows, delta=delta, discount_bound=bound, window=window)
    if strict and not report.ok:
        worst = min(rows, key=lambda r: min(r.gap, r.min_simulated_gap))
        err = NotIC(f"consumer {worst.consumer} gains by deviating (gap {min(worst.gap, worst.min_simulated_gap):.3g})")
        err.report = report
        raise err
    return report
