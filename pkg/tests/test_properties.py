import itertools

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import consumer
from ndsm.engine import init_state, select_active_set, update_indices
from ndsm.model import ConsumerClass, ConsumerSpec, Scenario, classify, discomfort, price_at_slot, required_shifters
from ndsm.model import billing, stage_cost
from ndsm.pareto import (
    ExtremeCosts,
    TargetCostVector,
    exact_min_discount,
    min_discount,
    min_shift_pattern,
    solve_target,
)
from ndsm.errors import IndexOutOfBounds, Infeasible

loads = st.floats(0.0, 5.0, allow_nan=False)


@st.composite
def small_consumer(draw, slots=3):
    desired = np.array(draw(st.lists(st.floats(0.1, 2.0), min_size=slots, max_size=slots)))
    floor = desired * np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=slots, max_size=slots)))
    slope = draw(st.lists(st.floats(0.0, 1.0), min_size=slots, max_size=slots))
    return consumer(0, desired, floor, slope, draw(st.floats(0.0, 2.0)))


@given(small_consumer(), st.lists(loads, min_size=3, max_size=3))
def test_discomfort_nonnegative(c, pattern):
    assert discomfort(pattern, c) >= 0
    assert discomfort(c.desired, c) == 0.0


@given(st.floats(0, 100), st.floats(0, 100), st.floats(1, 50))
def test_price_monotone(a, b, thr):
    pop = [consumer(0, [0.1, thr + 1.0], [0.1, thr], [0, 0], 0.1)]
    pr = Scenario.build(pop, threshold=thr).pricing
    lo, hi = sorted((a, b))
    assert price_at_slot(lo, pr) <= price_at_slot(hi, pr)
    assert price_at_slot(a, pr) in (0.1, 0.8)


@given(st.integers(1, 20), st.floats(0.05, 1.0), st.floats(0.01, 1.0))
def test_one_shifter_when_gap_fits(n, s, frac):
    pop = [consumer(i, [0.1, 1.0 + s], [0.1, 1.0], [0, 0], 0.1) for i in range(n)]
    peak = n * (1.0 + s)
    assert required_shifters(pop, peak - frac * s, s) == 1


@given(small_consumer(), st.floats(1.01, 10.0))
def test_classify_scale_consistent(c, lam):
    pop = [c, consumer(1, c.desired, c.nonshiftable, c.slope, c.fixed_discomfort)]
    h = int(np.argmax(c.desired))
    assume(c.shiftable_at(h) > 1e-3)
    assume(np.sum(c.desired == c.desired[h]) == 1)
    thr = 2 * c.desired[h] - 0.5 * c.shiftable_at(h)
    assume(np.all(2 * np.delete(c.desired, h) < thr))
    sc = Scenario.build(pop, threshold=thr)
    scaled = ConsumerSpec(0, c.total_demand, c.desired, c.nonshiftable, c.slope * lam,
                          c.fixed_discomfort * lam, c.discomfort_cap)
    if classify(c, sc.pricing) is ConsumerClass.HIGH:
        assert classify(scaled, sc.pricing) is ConsumerClass.HIGH


@given(st.integers(2, 4), st.data())
@settings(max_examples=60, deadline=None)
def test_stage_cost_decomposes(n, data):
    pop = [consumer(i, [0.5, 1.0, 0.5], [0.2, 0.4, 0.2], [0.1, 0.2, 0.3], 0.4) for i in range(n)]
    sc = Scenario.build(pop, threshold=n * 1.0 - 0.3)
    prof = []
    for c in pop:
        move = data.draw(st.floats(0, 0.6))
        dest = data.draw(st.sampled_from([0, 2]))
        p = c.desired.copy()
        p[1] -= move
        p[dest] += move
        prof.append(p)
    prof = np.array(prof)
    for i, c in enumerate(pop):
        b = billing(prof[i], prof.sum(axis=0), sc.pricing)
        assert abs(stage_cost(prof, sc.pricing, i, pop) - (b + discomfort(prof[i], c))) < 1e-12
        assert 0.1 * c.total_demand - 1e-12 <= b <= 0.8 * c.total_demand + 1e-12


caps_lists = st.lists(st.floats(0.0, 2.0), min_size=1, max_size=12)


@given(caps_lists, st.data())
def test_exact_bound_below_plain(caps, data):
    n = len(caps)
    m = data.draw(st.integers(1, n))
    assert exact_min_discount(caps, n, m) <= min_discount(n, m) + 1e-15


@given(st.lists(st.tuples(st.floats(0.05, 2.0), st.floats(0.0, 1.5)), min_size=1, max_size=10), st.data())
def test_target_invariants(rows, data):
    m = data.draw(st.integers(1, len(rows)))
    ext = [ExtremeCosts(1.0, 1.0 + d, 1.0 + 5 * d, 1.0 + r * d, np.zeros(1)) for d, r in rows]
    try:
        t = solve_target(ext, m)
    except Infeasible:
        assert sum(e.upper for e in ext) < m
        return
    assert abs(t.indices.sum() - m) <= 1e-9
    assert np.all(t.indices >= 0) and np.all(t.indices <= t.caps)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8), st.floats(0.6, 0.999))
@settings(max_examples=50, deadline=None)
def test_update_preserves_hyperplane(weights, delta):
    g = np.array(weights)
    g = g / g.sum()
    t = TargetCostVector(g, g, 1, np.full(g.size, 2.0))
    state = init_state(t)
    try:
        vals, _ = update_indices(state, select_active_set(state), delta)
    except IndexOutOfBounds:
        active = select_active_set(state)[0]
        assert g[active] < 1 - delta - 1e-7 * delta
        return
    assert abs(vals.sum() - 1.0) <= 1e-12


@given(st.lists(st.floats(0.0, 0.5), min_size=3, max_size=3), st.floats(0.1, 0.6),
       st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.floats(0.01, 1.0))
@settings(max_examples=60, deadline=None)
def test_min_shift_pattern_is_optimal(offpeak, shift, slope, omega):
    # peak in slot 1; grid search every redistribution of the shiftable load
    desired = np.array([offpeak[0], 1.0 + shift, offpeak[2]])
    floor = np.array([0.0, 1.0, 0.0])
    c = consumer(0, desired, floor, slope, omega)
    other = consumer(1, desired, floor, slope, omega)
    sc = Scenario.build([c, other], threshold=2 * desired[1] - shift)
    pat = min_shift_pattern(c, sc.pricing)
    best = discomfort(pat, c)
    steps = 20
    for k in range(steps + 1):
        x = shift * k / steps
        trial = desired.copy()
        trial[1] = 1.0
        trial[0] += x
        trial[2] += shift - x
        assert discomfort(trial, c) >= best - 1e-12
    # moving load between off-peak slots only ever adds discomfort
    for a, b in itertools.permutations([0, 2], 2):
        trial = pat.copy()
        amt = min(0.05, trial[a])
        trial[a] -= amt
        trial[b] += amt
        assert discomfort(trial, c) >= best - 1e-12
