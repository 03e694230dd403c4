"""Random scenario builders shared by the property tests."""

from __future__ import annotations

import numpy as np

from ndsm.model import ConsumerSpec, Scenario
from ndsm.pareto import population_extremes, solve_target

PRICE_LOW, PRICE_HIGH = 0.1, 0.8


def consumer(i, desired, nonshiftable, slope, omega, cap=10.0):
    desired = np.asarray(desired, dtype=float)
    return ConsumerSpec(
        id=i,
        total_demand=float(desired.sum()),
        desired=desired,
        nonshiftable=np.asarray(nonshiftable, dtype=float),
        slope=np.asarray(slope, dtype=float),
        fixed_discomfort=float(omega),
        discomfort_cap=float(cap),
    )


def random_medium_scenario(rng: np.random.Generator, n_max: int = 20, slots=(3, 6), m_max: int | None = None,
                           cap_range=(0.3, 1.3), discount: float = 0.999, attempts: int = 200) -> Scenario:
    """A feasible scenario whose consumers all satisfy the medium-discomfort condition.

    Every consumer can shift the same amount ``s`` out of the peak slot, the
    threshold is chosen so that exactly ``m`` shifters clear it, and each
    discomfort cap is drawn as a multiple of the price saving so the cap
    ratios vary around 1.
    """
    for _ in range(attempts):
        n = int(rng.integers(2, n_max + 1))
        h = int(rng.integers(slots[0], slots[1] + 1))
        peak = int(rng.integers(h))
        s = float(rng.uniform(0.2, 0.6))
        m = int(rng.integers(1, (m_max or max(1, n // 3)) + 1))
        m = min(m, n)
        people = []
        gap = PRICE_HIGH - PRICE_LOW
        for i in range(n):
            base = rng.uniform(0.05, 0.4, h)
            base[peak] = rng.uniform(0.8, 1.2)
            extra = rng.uniform(0.0, 0.2, h)
            extra[peak] = s
            desired = base + extra
            slope = rng.uniform(0.05, 0.3, h)
            omega = gap * desired[peak] * rng.uniform(1.05, 1.6)
            saving = gap * desired[peak]
            cap = saving * rng.uniform(*cap_range)
            people.append(consumer(i, desired, base, slope, omega, cap))
        peak_load = sum(p.desired[peak] for p in people)
        threshold = peak_load - (m - rng.uniform(0.05, 0.95)) * s
        try:
            sc = Scenario.build(people, PRICE_LOW, PRICE_HIGH, threshold=threshold, discount=discount)
            ext = population_extremes(sc)
            solve_target(ext, sc.pricing.shifter_count)
        except Exception:
            continue
        if sc.pricing.shifter_count != m:
            continue
        loads = sc.desired.sum(axis=0)
        dest_ok = all((loads + m * (e.shift_pattern - p.desired))[[k for k in range(h) if k != peak]].max()
                      <= threshold for e, p in zip(ext, people))
        if dest_ok:
            return sc
    raise RuntimeError("could not draw a feasible scenario")
