"""Stage-game model: consumers, critical peak pricing, discomfort and stage costs.

Slots are 0-based throughout the library. Money is in dollars and energy in
kWh, both as plain floats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleThreshold, NonUniformShiftable

# A load sitting exactly on the threshold must price low even after float
# round-off in the aggregate (e.g. 28.5 - 0.4 vs 28.1).
LOAD_TOL = 1e-9
PATTERN_TOL = 1e-9
DEMAND_TOL = 1e-9
SHIFTABLE_TOL = 1e-6


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    arr.setflags(write=False)
    return arr


def validate_pattern(pattern, slots: int) -> np.ndarray:
    """Return ``pattern`` as a float vector, checking length and sign."""
    arr = np.asarray(pattern, dtype=float)
    if arr.shape != (slots,):
        raise ValueError(f"pattern has shape {arr.shape}, expected ({slots},)")
    if np.any(arr < 0):
        raise ValueError("pattern has negative loads")
    return arr


@dataclass(frozen=True, eq=False)
class ConsumerSpec:
    id: int
    total_demand: float
    desired: np.ndarray
    nonshiftable: np.ndarray
    slope: np.ndarray
    fixed_discomfort: float
    discomfort_cap: float
    kind: str = ""

    def __post_init__(self):
        desired = _frozen_vector(self.desired, "desired")
        floor = _frozen_vector(self.nonshiftable, "nonshiftable")
        slope = _frozen_vector(self.slope, "slope")
        object.__setattr__(self, "desired", desired)
        object.__setattr__(self, "nonshiftable", floor)
        object.__setattr__(self, "slope", slope)
        if not (desired.shape == floor.shape == slope.shape):
            raise ValueError(f"consumer {self.id}: desired, nonshiftable and slope differ in length")
        if np.any(desired < 0) or np.any(floor < 0):
            raise ValueError(f"consumer {self.id}: negative load")
        if abs(desired.sum() - self.total_demand) > DEMAND_TOL * max(1.0, abs(self.total_demand)):
            raise ValueError(
                f"consumer {self.id}: desired loads sum to {desired.sum()!r}, "
                f"total_demand is {self.total_demand!r}"
            )
        if np.any(desired < floor - PATTERN_TOL):
            raise ValueError(f"consumer {self.id}: desired load below the non-shiftable floor")
        if np.any(slope < 0) or self.fixed_discomfort < 0 or self.discomfort_cap < 0:
            raise ValueError(f"consumer {self.id}: discomfort parameters must be nonnegative")

    @property
    def slots(self) -> int:
        return self.desired.shape[0]

    def shiftable_at(self, slot: int) -> float:
        return float(self.desired[slot] - self.nonshiftable[slot])

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "total_demand": self.total_demand,
            "desired": self.desired.tolist(),
            "nonshiftable": self.nonshiftable.tolist(),
            "slope": self.slope.tolist(),
            "fixed_discomfort": self.fixed_discomfort,
            "discomfort_cap": self.discomfort_cap,
        }
        if self.kind:
            out["kind"] = self.kind
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ConsumerSpec":
        return cls(
            id=int(data["id"]),
            total_demand=float(data["total_demand"]),
            desired=data["desired"],
            nonshiftable=data["nonshiftable"],
            slope=data["slope"],
            fixed_discomfort=float(data["fixed_discomfort"]),
            discomfort_cap=float(data["discomfort_cap"]),
            kind=str(data.get("kind", "")),
        )


def aggregate_desired(population: Sequence[ConsumerSpec]) -> np.ndarray:
    if not population:
        raise ValueError("empty population")
    slots = {c.slots for c in population}
    if len(slots) != 1:
        raise ValueError(f"consumers disagree on the number of slots: {sorted(slots)}")
    return np.sum([c.desired for c in population], axis=0)


def peak_slot(population: Sequence[ConsumerSpec]) -> int:
    """Slot with the largest aggregate desired load (lowest index on ties)."""
    # np.argmax returns the first maximum, which is the tie-break we want.
    return int(np.argmax(aggregate_desired(population)))


def required_shifters(population: Sequence[ConsumerSpec], threshold: float, peak_shiftable: float) -> int:
    """Smallest number of full peak shifts that brings the peak load under ``threshold``."""
    if peak_shiftable <= 0:
        raise InfeasibleThreshold("peak-slot shiftable load must be positive")
    h = peak_slot(population)
    shiftable = np.array([c.shiftable_at(h) for c in population])
    if shiftable.max() - shiftable.min() > SHIFTABLE_TOL:
        raise NonUniformShiftable(
            f"peak-slot shiftable loads range over [{shiftable.min():.6g}, {shiftable.max():.6g}]"
        )
    peak_load = float(aggregate_desired(population)[h])
    ratio = (peak_load - threshold) / peak_shiftable
    nearest = round(ratio)
    m = int(nearest) if abs(ratio - nearest) <= 1e-9 else math.ceil(ratio)
    if m < 1:
        raise InfeasibleThreshold(f"threshold {threshold} is not below the peak load {peak_load}")
    if m > len(population):
        raise InfeasibleThreshold(
            f"threshold {threshold} needs {m} shifters but only {len(population)} consumers exist"
        )
    return m


@dataclass(frozen=True, eq=False)
class PricingScheme:
    price_low: float
    price_high: float
    threshold: float
    peak_slot: int
    shifter_count: int
    peak_shiftable: float
    peak_load: float
    aggregate_desired: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.price_high > self.price_low:
            raise ValueError("price_high must exceed price_low")
        if self.shifter_count < 1:
            raise ValueError("shifter_count must be at least 1")
        object.__setattr__(self, "aggregate_desired", _frozen_vector(self.aggregate_desired, "aggregate_desired"))

    @property
    def price_gap(self) -> float:
        return self.price_high - self.price_low

    @classmethod
    def build(cls, population: Sequence[ConsumerSpec], price_low: float, price_high: float,
              threshold: float) -> "PricingScheme":
        """Derive peak slot, shiftable amount and shifter count from a population."""
        loads = aggregate_desired(population)
        h = int(np.argmax(loads))
        over = np.flatnonzero(loads > threshold + LOAD_TOL)
        if over.tolist() != [h]:
            raise InfeasibleThreshold(
                f"threshold {threshold:.6g} must be exceeded by the desired load at the peak slot only "
                f"(exceeded at slots {over.tolist()})"
            )
        shiftable = float(np.mean([c.shiftable_at(h) for c in population]))
        m = required_shifters(population, threshold, shiftable)
        return cls(
            price_low=float(price_low),
            price_high=float(price_high),
            threshold=float(threshold),
            peak_slot=h,
            shifter_count=m,
            peak_shiftable=shiftable,
            peak_load=float(loads[h]),
            aggregate_desired=loads,
        )


def price_at_slot(total_load: float, pricing: PricingScheme) -> float:
    return pricing.price_low if total_load <= pricing.threshold + LOAD_TOL else pricing.price_high


def slot_prices(loads, pricing: PricingScheme) -> np.ndarray:
    loads = np.asarray(loads, dtype=float)
    return np.where(loads <= pricing.threshold + LOAD_TOL, pricing.price_low, pricing.price_high)


def is_desired(pattern, consumer: ConsumerSpec) -> bool:
    return bool(np.all(np.abs(np.asarray(pattern, dtype=float) - consumer.desired) <= PATTERN_TOL))


def discomfort(pattern, consumer: ConsumerSpec) -> float:
    """Fixed charge plus slot-weighted absolute deviation; zero at the desired pattern."""
    pattern = np.asarray(pattern, dtype=float)
    if is_desired(pattern, consumer):
        return 0.0
    return float(consumer.fixed_discomfort + np.dot(consumer.slope, np.abs(pattern - consumer.desired)))


def billing(pattern, loads, pricing: PricingScheme) -> float:
    return float(np.dot(slot_prices(loads, pricing), pattern))


def stage_cost(profile, pricing: PricingScheme, consumer_index: int,
               population: Sequence[ConsumerSpec]) -> float:
    """Daily billing plus discomfort of one consumer under a joint action profile."""
    profile = np.asarray(profile, dtype=float)
    loads = profile.sum(axis=0)
    own = profile[consumer_index]
    return billing(own, loads, pricing) + discomfort(own, population[consumer_index])


class ConsumerClass(enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


def classify(consumer: ConsumerSpec, pricing: PricingScheme, shift_discomfort: float | None = None) -> ConsumerClass:
    """Low/Medium/High discomfort class relative to the price gap.

    ``shift_discomfort`` is the discomfort of the consumer's cheapest full peak
    shift; it is computed when omitted.
    """
    if shift_discomfort is None:
        from .pareto import min_shift_pattern

        shift_discomfort = discomfort(min_shift_pattern(consumer, pricing), consumer)
    worth_shifting = pricing.price_gap * pricing.peak_load / pricing.shifter_count > shift_discomfort
    cares = consumer.fixed_discomfort > pricing.price_gap * consumer.desired[pricing.peak_slot]
    if not worth_shifting:
        return ConsumerClass.HIGH
    if not cares:
        return ConsumerClass.LOW
    return ConsumerClass.MEDIUM


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated population with its pricing and run parameters."""

    consumers: tuple
    pricing: PricingScheme
    discount: float = 0.995
    horizon: int = 5000
    renewable_availability: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "consumers", tuple(self.consumers))
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 <= self.renewable_availability <= 1:
            raise ValueError("renewable_availability must lie in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.consumers)

    @property
    def slots(self) -> int:
        return self.consumers[0].slots

    @property
    def desired(self) -> np.ndarray:
        return np.array([c.desired for c in self.consumers])

    @classmethod
    def build(cls, consumers, price_low=0.1, price_high=0.8, threshold=None, par_goal=None, **kwargs) -> "Scenario":
        if (threshold is None) == (par_goal is None):
            raise ValueError("give exactly one of threshold and par_goal")
        if threshold is None:
            threshold = threshold_from_goal(consumers, par_goal)
        pricing = PricingScheme.build(consumers, price_low, price_high, threshold)
        return cls(consumers=consumers, pricing=pricing, **kwargs)

    def with_discount(self, discount: float) -> "Scenario":
        return Scenario(self.consumers, self.pricing, discount, self.horizon, self.renewable_availability)


def threshold_from_goal(population: Sequence[ConsumerSpec], par_goal: float) -> float:
    """Threshold giving a fractional peak-load reduction of ``par_goal``."""
    if not 0 < par_goal < 1:
        raise ValueError("par_goal must lie in (0, 1)")
    return (1.0 - par_goal) * float(aggregate_desired(population).max())
