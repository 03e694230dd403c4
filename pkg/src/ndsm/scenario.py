"""Scenario documents: parsing, validation, population generation.

A scenario file is a JSON tree::

    {
      "slots_per_period": 24,
      "prices": {"low": 0.1, "high": 0.8},
      "par_goal": 0.002,                      # or "threshold": <kWh>
      "population": {"generator": {"mix": {"type1": 1}, "count": 30,
                                   "seed": 42, "peak_shiftable": 0.4}},
      "discount": 0.995,
      "horizon": 5000,
      "renewable_availability": 0.8
    }

``population`` holds either ``consumers`` (explicit list) or ``generator``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .model import ConsumerSpec, Scenario

log = logging.getLogger(__name__)

DAY_HOURS = 24
PEAK_HOUR = 18  # 0-based; the 19th hour, inside the 15-24 block of the consumer table

# Per-type parameters. total/k/omega/dmax follow the published consumer table;
# the peak-hour desired load is a calibration anchor (type1) or a chosen value
# (type2, type3) because the desired-load curves were only shown graphically.
CONSUMER_TYPES = {
    "type1": {"total": 10.0, "k_early": 0.2, "k_late": 0.1, "omega": 0.7, "dmax": 0.71, "peak": 0.95},
    "type2": {"total": 8.0, "k_early": 0.1, "k_late": 0.05, "omega": 1.5, "dmax": 0.91, "peak": 1.0},
    "type3": {"total": 11.0, "k_early": 0.15, "k_late": 0.1, "omega": 1.2, "dmax": 0.95, "peak": 1.2},
}
EARLY_HOURS = 14  # hours 1-14 use k_early, 15-24 use k_late

# Relative off-peak weights per hour (the peak hour entry is unused).
_SHAPES = {
    "type1": [0.6] * 6 + [1.0] * 3 + [0.8] * 7 + [1.2, 1.2, 0.0, 1.2, 1.2] + [0.9] * 3,
    "type2": [0.5] * 6 + [1.3] * 3 + [0.7] * 7 + [1.1, 1.2, 0.0, 1.2, 1.0] + [0.8] * 3,
    "type3": [0.7] * 6 + [0.9] * 3 + [0.9] * 7 + [1.1, 1.1, 0.0, 1.1, 1.1] + [1.0] * 3,
}
OFFPEAK_FLOOR_SHARE = 0.6  # non-shiftable share of off-peak desired load

DEFAULTS = {
    "slots_per_period": 24,
    "prices": {"low": 0.1, "high": 0.8},
    "discount": 0.995,
    "horizon": 5000,
    "renewable_availability": 0.8,
}


def _hourly_desired(kind: str, total: float, peak: float, rng: np.random.Generator | None,
                    jitter: float) -> np.ndarray:
    weights = np.array(_SHAPES[kind], dtype=float)
    if rng is not None and jitter > 0:
        weights = weights * np.exp(jitter * rng.standard_normal(DAY_HOURS))
    weights[PEAK_HOUR] = 0.0
    hourly = (total - peak) * weights / weights.sum()
    hourly[PEAK_HOUR] = peak
    return hourly


def _aggregate(hourly: np.ndarray, slots: int, how: str = "sum") -> np.ndarray:
    blocks = hourly.reshape(slots, DAY_HOURS // slots)
    return blocks.sum(axis=1) if how == "sum" else blocks.mean(axis=1)


def allocate_counts(mix: dict, count: int) -> dict:
    """Split ``count`` consumers across types in proportion to ``mix`` (largest remainder)."""
    kinds = [k for k in CONSUMER_TYPES if mix.get(k, 0) > 0]
    weights = np.array([float(mix[k]) for k in kinds])
    exact = count * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    short = count - counts.sum()
    for j in sorted(range(len(kinds)), key=lambda j: (-(exact[j] - counts[j]), j))[:short]:
        counts[j] += 1
    return dict(zip(kinds, counts.tolist()))


def generate_population(spec: dict, slots: int = DAY_HOURS) -> list:
    """Consumers drawn from the type table with synthetic desired patterns.

    Every consumer gets the same peak-slot shiftable amount: either
    ``peak_shiftable`` kWh, or ``shiftable_fraction`` of the population's mean
    peak-slot desired load. Off-peak shapes are perturbed only when
    ``jitter`` > 0, so the default population of one type is homogeneous.
    """
    if DAY_HOURS % slots:
        raise ValueError(f"slots_per_period must divide {DAY_HOURS}")
    rng = np.random.default_rng(spec["seed"])
    jitter = float(spec.get("jitter", 0.0))
    peaks = {**{k: v["peak"] for k, v in CONSUMER_TYPES.items()}, **spec.get("peak_loads", {})}
    counts = allocate_counts(spec["mix"], int(spec["count"]))

    rows = []
    for kind, n in counts.items():
        t = CONSUMER_TYPES[kind]
        for _ in range(n):
            hourly = _hourly_desired(kind, t["total"], peaks[kind], rng, jitter)
            slope_h = np.where(np.arange(DAY_HOURS) < EARLY_HOURS, t["k_early"], t["k_late"])
            rows.append((kind, t, _aggregate(hourly, slots), _aggregate(slope_h, slots, "mean")))

    peak = PEAK_HOUR // (DAY_HOURS // slots)
    if "peak_shiftable" in spec:
        shiftable = float(spec["peak_shiftable"])
    else:
        shiftable = float(spec["shiftable_fraction"]) * float(np.mean([r[2][peak] for r in rows]))

    consumers = []
    for i, (kind, t, desired, slope) in enumerate(rows):
        if shiftable > desired[peak] + 1e-12:
            raise ValueError(f"peak-slot shiftable load {shiftable:.6g} exceeds the {kind} peak load")
        floor = OFFPEAK_FLOOR_SHARE * desired
        floor[peak] = desired[peak] - shiftable
        consumers.append(ConsumerSpec(
            id=i,
            total_demand=float(desired.sum()),
            desired=desired,
            nonshiftable=floor,
            slope=slope,
            fixed_discomfort=t["omega"],
            discomfort_cap=t["dmax"],
            kind=kind,
        ))
    return consumers


# --- documents ---------------------------------------------------------------

def _require(cond, path, message):
    if not cond:
        raise ValidationError(path, message)


def _number(tree, key, path, lo=None, hi=None, integer=False):
    _require(key in tree, f"{path}.{key}", "missing")
    v = tree[key]
    kinds = (int,) if integer else (int, float)
    _require(isinstance(v, kinds) and not isinstance(v, bool), f"{path}.{key}", "must be a number")
    if lo is not None:
        _require(v >= lo, f"{path}.{key}", f"must be >= {lo}")
    if hi is not None:
        _require(v <= hi, f"{path}.{key}", f"must be <= {hi}")
    return v


def validate_tree(tree: dict) -> dict:
    """Fill defaults and check the schema; returns a canonical copy."""
    _require(isinstance(tree, dict), "$", "scenario must be an object")
    doc = copy.deepcopy(DEFAULTS)
    doc.update(copy.deepcopy(tree))
    _number(doc, "slots_per_period", "$", lo=1, integer=True)
    _require(isinstance(doc["prices"], dict), "$.prices", "must be an object")
    low = _number(doc["prices"], "low", "$.prices", lo=0)
    high = _number(doc["prices"], "high", "$.prices", lo=0)
    _require(high > low, "$.prices.high", "must exceed prices.low")
    has_goal, has_thr = "par_goal" in doc, "threshold" in doc
    _require(has_goal != has_thr, "$", "give exactly one of par_goal and threshold")
    if has_goal:
        goal = _number(doc, "par_goal", "$", lo=0, hi=1)
        _require(0 < goal < 1, "$.par_goal", "must lie strictly between 0 and 1")
    else:
        _number(doc, "threshold", "$", lo=0)
    d = _number(doc, "discount", "$", lo=0)
    _require(d < 1, "$.discount", "must be < 1")
    _number(doc, "horizon", "$", lo=1, integer=True)
    _number(doc, "renewable_availability", "$", lo=0, hi=1)

    pop = doc.get("population")
    _require(isinstance(pop, dict), "$.population", "missing or not an object")
    _require(("consumers" in pop) != ("generator" in pop), "$.population",
             "give exactly one of consumers and generator")
    if "generator" in pop:
        gen = pop["generator"]
        path = "$.population.generator"
        _require(isinstance(gen, dict), path, "must be an object")
        _require("seed" in gen, f"{path}.seed", "mandatory for generated populations")
        _number(gen, "seed", path, lo=0, integer=True)
        _number(gen, "count", path, lo=1, integer=True)
        _require(isinstance(gen.get("mix"), dict) and gen["mix"], f"{path}.mix", "must be a non-empty object")
        for k, w in gen["mix"].items():
            _require(k in CONSUMER_TYPES, f"{path}.mix.{k}", f"unknown type (known: {sorted(CONSUMER_TYPES)})")
            _number(gen["mix"], k, f"{path}.mix", lo=0)
        _require(sum(gen["mix"].values()) > 0, f"{path}.mix", "weights sum to zero")
        _require(("shiftable_fraction" in gen) != ("peak_shiftable" in gen), path,
                 "give exactly one of shiftable_fraction and peak_shiftable")
        if "shiftable_fraction" in gen:
            _number(gen, "shiftable_fraction", path, lo=0, hi=1)
        else:
            _number(gen, "peak_shiftable", path, lo=0)
        if "jitter" in gen:
            _number(gen, "jitter", path, lo=0)
        _require(DAY_HOURS % doc["slots_per_period"] == 0, "$.slots_per_period",
                 "generated populations need a divisor of 24")
    else:
        _require(isinstance(pop["consumers"], list) and pop["consumers"], "$.population.consumers",
                 "must be a non-empty list")
        for j, c in enumerate(pop["consumers"]):
            path = f"$.population.consumers[{j}]"
            _require(isinstance(c, dict), path, "must be an object")
            for key in ("id", "total_demand", "desired", "nonshiftable", "slope",
                        "fixed_discomfort", "discomfort_cap"):
                _require(key in c, f"{path}.{key}", "missing")
            for key in ("desired", "nonshiftable", "slope"):
                _require(isinstance(c[key], list) and len(c[key]) == doc["slots_per_period"],
                         f"{path}.{key}", f"must be a list of {doc['slots_per_period']} numbers")
    if "blocked_days" in doc:
        _require(isinstance(doc["blocked_days"], dict), "$.blocked_days", "must map consumer ids to weekdays")
    return doc


@dataclass(frozen=True, eq=False)
class ScenarioDocument:
    tree: dict

    @classmethod
    def from_dict(cls, tree: dict) -> "ScenarioDocument":
        return cls(validate_tree(tree))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.tree)

    def __eq__(self, other):
        return isinstance(other, ScenarioDocument) and self.canonical() == other.canonical()

    def canonical(self) -> str:
        return json.dumps(self.tree, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def override(self, **changes) -> "ScenarioDocument":
        """Copy with top-level keys or ``population.generator`` keys replaced."""
        tree = self.to_dict()
        for key, value in changes.items():
            if value is None:
                continue
            if key in ("count", "seed", "shiftable_fraction", "peak_shiftable", "mix", "jitter"):
                gen = tree["population"].get("generator")
                if gen is None:
                    raise ValidationError(f"$.population.generator.{key}", "override needs a generated population")
                if key in ("shiftable_fraction", "peak_shiftable"):
                    gen.pop("shiftable_fraction", None)
                    gen.pop("peak_shiftable", None)
                gen[key] = value
            elif key in ("par_goal", "threshold"):
                tree.pop("par_goal", None)
                tree.pop("threshold", None)
                tree[key] = value
            else:
                tree[key] = value
        return ScenarioDocument.from_dict(tree)

    @property
    def slots(self) -> int:
        return self.tree["slots_per_period"]

    def consumers(self) -> list:
        pop = self.tree["population"]
        if "generator" in pop:
            return generate_population(pop["generator"], self.slots)
        out = []
        for j, c in enumerate(pop["consumers"]):
            try:
                out.append(ConsumerSpec.from_dict(c))
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"$.population.consumers[{j}]", str(exc)) from exc
        return out

    def build(self) -> Scenario:
        t = self.tree
        consumers = self.consumers()
        if t.get("blocked_days"):
            log.info("blocked_days is recorded but not used for scheduling")
        try:
            return Scenario.build(
                consumers,
                price_low=t["prices"]["low"],
                price_high=t["prices"]["high"],
                threshold=t.get("threshold"),
                par_goal=t.get("par_goal"),
                discount=t["discount"],
                horizon=t["horizon"],
                renewable_availability=t["renewable_availability"],
            )
        except ValueError as exc:
            raise ValidationError("$", str(exc)) from exc


def load_scenario(path) -> ScenarioDocument:
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    return ScenarioDocument.from_dict(tree)


def save_scenario(doc: ScenarioDocument, path) -> None:
    Path(path).write_text(json.dumps(doc.tree, indent=2, sort_keys=True) + "\n")
