"""Comparison tables, fairness checks and convergence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import baselines
from .engine import SimulationTrace, discounted_costs, run
from .model import Scenario
from .pareto import TargetCostVector, population_extremes, solve_target

NDSM = "N-DSM"
ALL_MECHANISMS = (NDSM, "OG-DSM", "JO-DSM", "SC-DSM", "BILLING-MIN")


@dataclass(frozen=True)
class TableRow:
    name: str
    total_cost: float
    par: float
    per_consumer_costs: tuple
    simulated_total: float | None = None
    tail_bound: float | None = None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple
    fingerprint: str
    delta: float
    horizon: int
    notes: dict = field(default_factory=dict)

    def row(self, name: str) -> TableRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_records(self) -> list:
        return [
            {
                "mechanism": r.name,
                "total_cost": r.total_cost,
                "par": r.par,
                "simulated_total": r.simulated_total,
                "tail_bound": r.tail_bound,
                "fingerprint": self.fingerprint,
            }
            for r in self.rows
        ]


def compare(scenario: Scenario, mechanisms=ALL_MECHANISMS, delta: float | None = None,
            horizon: int | None = None, fingerprint: str = "", target: TargetCostVector | None = None
            ) -> ComparisonTable:
    """Tabulate total cost and PAR per mechanism on one scenario.

    The N-DSM row reports the analytic optimum of the target LP; the
    discounted total of a compliant simulation and its tail bound are kept
    alongside so the truncation error stays visible.
    """
    delta = scenario.discount if delta is None else delta
    horizon = scenario.horizon if horizon is None else horizon
    rows = []
    notes = {}
    for name in mechanisms:
        if name == NDSM:
            tgt = target if target is not None else solve_target(population_extremes(scenario),
                                                                  scenario.pricing.shifter_count)
            trace = run(scenario, tgt, horizon=horizon, delta=delta)
            values = discounted_costs(trace, delta)
            rows.append(TableRow(
                name=NDSM,
                total_cost=tgt.total,
                par=baselines.par(trace),
                per_consumer_costs=tuple(float(c) for c in tgt.costs),
                simulated_total=float(sum(v.value for v in values)),
                tail_bound=float(sum(v.tail_bound for v in values)),
            ))
            notes["convergence_gap"] = convergence_diag(trace, tgt, delta).gap
        elif name in baselines.MECHANISMS:
            res = baselines.MECHANISMS[name](scenario)
            rows.append(TableRow(name, res.total_cost, res.par, tuple(float(c) for c in res.stage_costs)))
        else:
            raise ValueError(f"unknown mechanism {name!r}")
    return ComparisonTable(tuple(rows), fingerprint, float(delta), int(horizon), notes)


@dataclass(frozen=True)
class FairnessEntry:
    consumer: int
    discounted_discomfort: float
    cap: float
    tail_bound: float

    @property
    def ok(self) -> bool:
        return self.discounted_discomfort <= self.cap + self.tail_bound


def fairness_report(trace: SimulationTrace, caps, delta: float | None = None) -> list:
    """Discounted discomfort of every consumer against its cap."""
    values = discounted_costs(trace, delta)
    return [FairnessEntry(i, v.discomfort, float(cap), v.discomfort_tail_bound)
            for i, (v, cap) in enumerate(zip(values, caps))]


@dataclass(frozen=True, eq=False)
class Convergence:
    gap: float
    bound: float
    empirical: np.ndarray
    # decided before rounding to float when the trace is exact
    within_bound: bool

    @property
    def ok(self) -> bool:
        return self.within_bound


def convergence_diag(trace: SimulationTrace, target: TargetCostVector, delta: float | None = None) -> Convergence:
    """Sup-norm distance between realised discounted shift frequencies and the target indices.

    For exact-arithmetic traces the sums are formed over the integers, so the
    comparison with the bound is not limited by float resolution.
    """
    delta = trace.discount if delta is None else delta
    active = trace.active_matrix()
    horizon = active.shape[0]
    if trace.exact:
        d = Fraction(repr(float(delta)))
        p, q = d.numerator, d.denominator
        nums, den = trace.initial_state.exact
        acc = [0] * active.shape[1]
        power = 1
        for row in active:
            acc = [a * q + (power if hit else 0) for a, hit in zip(acc, row)]
            power *= p
        scale = q ** horizon
        emp = [Fraction((q - p) * a, scale) for a in acc]
        gap = max(abs(e - Fraction(v, den)) for e, v in zip(emp, nums))
        bound = d ** horizon
        return Convergence(float(gap), float(bound), np.array([float(e) for e in emp]), gap <= bound)
    w = (1 - delta) * np.power(delta, np.arange(horizon))
    emp = w @ active
    gap = float(np.abs(emp - target.indices).max())
    bound = float(delta ** horizon)
    return Convergence(gap, bound, emp, gap <= bound)
