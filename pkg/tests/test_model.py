import numpy as np
import pytest

from helpers import consumer
from ndsm.errors import InfeasibleThreshold, NonUniformShiftable
from ndsm.model import (
    ConsumerClass,
    ConsumerSpec,
    PricingScheme,
    billing,
    classify,
    discomfort,
    peak_slot,
    price_at_slot,
    required_shifters,
    stage_cost,
)
from ndsm.scenario import PEAK_HOUR


def flat_population(peaks, shiftable, slots=4, peak=2):
    out = []
    for i, p in enumerate(peaks):
        desired = np.full(slots, 0.1)
        desired[peak] = p
        floor = desired.copy()
        floor[peak] = p - shiftable
        out.append(consumer(i, desired, floor, np.full(slots, 0.1), 0.7))
    return out


class TestPrice:
    def test_threshold_is_low(self, calibrated):
        pr = calibrated.pricing
        assert price_at_slot(pr.threshold, pr) == 0.1

    def test_zero_load(self, calibrated):
        assert price_at_slot(0.0, calibrated.pricing) == 0.1

    def test_just_above(self, calibrated):
        pr = calibrated.pricing
        assert price_at_slot(pr.threshold + 1e-6, pr) == 0.8

    def test_two_valued_and_monotone(self, calibrated):
        pr = calibrated.pricing
        loads = np.linspace(0, 2 * pr.threshold, 101)
        prices = [price_at_slot(x, pr) for x in loads]
        assert set(prices) == {0.1, 0.8}
        assert all(a <= b for a, b in zip(prices, prices[1:]))


class TestPeakSlot:
    def test_flat_goes_to_first(self):
        pop = [consumer(0, [1, 1, 1], [0, 0, 0], [0, 0, 0], 0.1)]
        assert peak_slot(pop) == 0

    def test_single(self):
        pop = [consumer(0, [1, 2, 3], [0, 0, 0], [0, 0, 0], 0.1)]
        assert peak_slot(pop) == 2

    def test_aggregate(self):
        pop = [consumer(0, [3, 1, 1], [0, 0, 0], [0, 0, 0], 0.1),
               consumer(1, [0, 4, 0], [0, 0, 0], [0, 0, 0], 0.1)]
        assert peak_slot(pop) == 1


class TestRequiredShifters:
    def test_calibrated_one(self):
        pop = flat_population([0.95] * 30, 0.4)
        assert required_shifters(pop, 28.1, 0.4) == 1

    def test_exact_one(self):
        pop = flat_population([0.95] * 30, 0.4)
        assert required_shifters(pop, 28.5 - 0.4, 0.4) == 1

    def test_ten_percent_goal(self):
        pop = flat_population([0.95] * 30, 0.38)
        assert required_shifters(pop, 25.65, 0.38) == 8

    def test_non_uniform(self):
        pop = flat_population([0.95] * 30, 0.4)
        pop[3] = flat_population([0.95], 0.3)[0]
        with pytest.raises(NonUniformShiftable):
            required_shifters(pop, 28.1, 0.4)

    def test_too_many(self):
        pop = flat_population([0.95] * 3, 0.1)
        with pytest.raises(InfeasibleThreshold):
            required_shifters(pop, 2.0, 0.1)

    def test_integral_ratio_snaps(self):
        # 0.3 / 0.1 is 2.9999999999999996 in floating point
        pop = flat_population([1.0] * 5, 0.1)
        assert required_shifters(pop, 5.0 - 0.3, 0.1) == 3


class TestDiscomfort:
    def test_desired_is_free(self, calibrated):
        c = calibrated.consumers[0]
        assert discomfort(c.desired, c) == 0.0

    def test_type1_shift_inside_late_block(self, calibrated):
        c = calibrated.consumers[0]
        pat = c.desired.copy()
        pat[PEAK_HOUR] -= 0.4
        pat[15] += 0.4
        assert discomfort(pat, c) == pytest.approx(0.78, abs=1e-12)

    def test_expensive_slots(self):
        c = consumer(0, [1.0, 1.0], [0.5, 0.5], [0.2, 0.2], 0.7)
        assert discomfort([0.6, 1.4], c) == pytest.approx(0.86, abs=1e-12)

    def test_tiny_perturbation_is_desired(self, calibrated):
        c = calibrated.consumers[0]
        assert discomfort(c.desired + 1e-10, c) == 0.0


class TestStageCost:
    def test_everyone_desired(self, calibrated):
        prof = calibrated.desired
        assert stage_cost(prof, calibrated.pricing, 0, calibrated.consumers) == pytest.approx(1.665, abs=1e-12)

    def test_shifter(self, calibrated, calibrated_extremes):
        prof = calibrated.desired.copy()
        prof[0] = calibrated_extremes[0].shift_pattern
        assert stage_cost(prof, calibrated.pricing, 0, calibrated.consumers) == pytest.approx(1.78, abs=1e-12)
        assert stage_cost(prof, calibrated.pricing, 1, calibrated.consumers) == pytest.approx(1.0, abs=1e-12)

    def test_billing_bounds(self, calibrated):
        pr = calibrated.pricing
        c = calibrated.consumers[0]
        for loads in (calibrated.desired.sum(axis=0), np.zeros(24), np.full(24, 1e3)):
            b = billing(c.desired, loads, pr)
            assert 0.1 * c.total_demand - 1e-12 <= b <= 0.8 * c.total_demand + 1e-12


class TestClassify:
    def test_calibrated_medium(self, calibrated):
        assert classify(calibrated.consumers[0], calibrated.pricing) is ConsumerClass.MEDIUM

    def test_no_fixed_cost_is_low(self, calibrated):
        c = calibrated.consumers[0]
        low = ConsumerSpec(0, c.total_demand, c.desired, c.nonshiftable, c.slope, 0.0, c.discomfort_cap)
        assert classify(low, calibrated.pricing) is ConsumerClass.LOW

    def test_huge_discomfort_is_high(self, calibrated):
        c = calibrated.consumers[0]
        assert classify(c, calibrated.pricing, shift_discomfort=1e6) is ConsumerClass.HIGH

    def test_high_wins_when_both_fail(self, calibrated):
        c = calibrated.consumers[0]
        low = ConsumerSpec(0, c.total_demand, c.desired, c.nonshiftable, c.slope, 0.0, c.discomfort_cap)
        assert classify(low, calibrated.pricing, shift_discomfort=1e6) is ConsumerClass.HIGH


class TestValidation:
    def test_demand_mismatch(self):
        with pytest.raises(ValueError):
            ConsumerSpec(0, 5.0, [1, 1], [0, 0], [0, 0], 0.1, 1.0)

    def test_below_floor(self):
        with pytest.raises(ValueError):
            ConsumerSpec(0, 2.0, [1, 1], [1.5, 0], [0, 0], 0.1, 1.0)

    def test_negative_slope(self):
        with pytest.raises(ValueError):
            ConsumerSpec(0, 2.0, [1, 1], [0, 0], [-1, 0], 0.1, 1.0)

    def test_threshold_exceeded_off_peak(self):
        pop = [consumer(0, [2.0, 2.5, 1.0], [1.0, 1.0, 1.0], [0.1] * 3, 0.5)]
        with pytest.raises(InfeasibleThreshold):
            PricingScheme.build(pop, 0.1, 0.8, 1.5)

    def test_price_order(self):
        pop = [consumer(0, [1.0, 2.5, 1.0], [1.0, 1.0, 1.0], [0.1] * 3, 0.5)]
        with pytest.raises(ValueError):
            PricingScheme.build(pop, 0.8, 0.1, 2.0)

    def test_specs_are_immutable(self, calibrated):
        with pytest.raises(ValueError):
            calibrated.consumers[0].desired[0] = 5.0
