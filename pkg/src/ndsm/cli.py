"""Command-line front end: ``ndsm <command> --scenario FILE [options]``.

Tables are written as CSV with six significant digits and traces as one JSON
record per line. Without ``--out`` (or ``NDSM_OUT_DIR``) everything goes to
standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import errors
from .engine import audit_ic, run
from .metrics import ALL_MECHANISMS, compare
from .model import classify
from .pareto import exact_min_discount, min_discount, population_extremes, solve_target
from .scenario import ScenarioDocument, load_scenario

log = logging.getLogger("ndsm")

OUT_ENV = "NDSM_OUT_DIR"
SWEEP_PARAMS = {"N": ("count", int), "shiftable_fraction": ("shiftable_fraction", float),
                "H": ("slots_per_period", int), "par_goal": ("par_goal", float)}

EXIT_SCENARIO, EXIT_INFEASIBLE, EXIT_RUNTIME = 3, 4, 5

HINTS = {
    errors.Infeasible: "raise discomfort_cap for some consumers or lower par_goal",
    errors.InfeasibleCap: "a consumer's discomfort cap is below zero headroom; check discomfort_cap",
    errors.InfeasibleThreshold: "the threshold needs more shifters than consumers; lower par_goal",
    errors.NonUniformShiftable: "give every consumer the same peak-slot shiftable load",
    errors.InsufficientShiftable: "lower par_goal or raise the shiftable load",
    errors.IndexOutOfBounds: ("raise --delta above the bound printed by solve-target; if it already is, "
                              "the target saturates more than m consumers below their caps and no "
                              "discount factor sustains it, so relax discomfort_cap or lower par_goal"),
    errors.NotIC: "check that each cap cost stays at or below the equilibrium cost",
}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


class Output:
    def __init__(self, directory: str | None):
        self.dir = Path(directory) if directory else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def emit(self, name: str, text: str) -> None:
        if self.dir is None:
            sys.stdout.write(text)
            return
        path = self.dir / name
        path.write_text(text)
        log.info("wrote %s", path)


def load_document(args) -> ScenarioDocument:
    doc = load_scenario(args.scenario)
    changes = {}
    for flag, key in (("horizon", "horizon"), ("delta", "discount"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is None:
            continue
        if key == "seed":
            current = doc.tree["population"].get("generator", {}).get("seed")
        else:
            current = doc.tree.get(key)
        if current is not None and current != value:
            log.warning("--%s %s overrides the scenario value %s", flag, value, current)
        changes[key] = value
    return doc.override(**changes) if changes else doc


def cmd_simulate(args, out: Output) -> int:
    doc = load_document(args)
    sc = doc.build()
    target = solve_target(population_extremes(sc), sc.pricing.shifter_count)
    trace = run(sc, target, exact=args.exact)
    lines = [json.dumps({"fingerprint": doc.fingerprint(), **r.to_dict()}) for r in trace.records]
    out.emit("trace.jsonl", "\n".join(lines) + "\n")
    return 0


def cmd_pareto(args, out: Output) -> int:
    doc = load_document(args)
    sc = doc.build()
    ext = population_extremes(sc)
    m = sc.pricing.shifter_count
    rows = []
    for c, e in zip(sc.consumers, ext):
        rows.append({
            "consumer": c.id, "class": classify(c, sc.pricing, e.shift_discomfort).value,
            "base_cost": e.base_cost, "shift_cost": e.shift_cost, "ne_cost": e.ne_cost,
            "cap_cost": e.cap_cost, "cap_index": e.cap_index, "fingerprint": doc.fingerprint(),
        })
    text = write_csv(rows, list(rows[0]))
    upper = sum(e.upper for e in ext)
    text += (f"# region: sum_i (C_i - base_i)/(shift_i - base_i) = {m}, "
             f"0 <= g_i <= min(1, cap_index_i); total upper mass {upper:.6g}\n")
    out.emit("pareto.csv", text)
    return 0


def cmd_solve_target(args, out: Output) -> int:
    doc = load_document(args)
    sc = doc.build()
    m = sc.pricing.shifter_count
    target = solve_target(population_extremes(sc), m)
    payload = {
        "fingerprint": doc.fingerprint(),
        "shifter_count": m,
        "total_cost": target.total,
        "costs": target.costs.tolist(),
        "indices": target.indices.tolist(),
        "caps": target.caps.tolist(),
        "min_discount": min_discount(sc.size, m),
        "exact_min_discount": exact_min_discount(target.caps, sc.size, m),
    }
    out.emit("target.json", json.dumps(payload, indent=2) + "\n")
    return 0


def _compare_rows(doc: ScenarioDocument, mechanisms) -> list:
    sc = doc.build()
    table = compare(sc, mechanisms, fingerprint=doc.fingerprint())
    return table.as_records()


COMPARE_COLUMNS = ["mechanism", "total_cost", "par", "simulated_total", "tail_bound", "fingerprint"]


def cmd_compare(args, out: Output) -> int:
    doc = load_document(args)
    rows = _compare_rows(doc, args.mechanisms)
    out.emit("compare.csv", write_csv(rows, COMPARE_COLUMNS))
    return 0


def cmd_audit_ic(args, out: Output) -> int:
    doc = load_document(args)
    sc = doc.build()
    target = solve_target(population_extremes(sc), sc.pricing.shifter_count)
    report = audit_ic(sc, target, window=args.window, strict=False)
    rows = [{**r.__dict__, "ok": r.ok, "fingerprint": doc.fingerprint()} for r in report.rows]
    cols = ["consumer", "follow_cost", "best_deviation_cost", "gap", "min_simulated_gap",
            "deviations_simulated", "max_discrepancy", "tail_bound", "ok", "fingerprint"]
    out.emit("audit.csv", write_csv(rows, cols))
    if not report.ok:
        log.error("incentive compatibility fails for consumers %s",
                  [r.consumer for r in report.rows if not r.ok])
        return EXIT_RUNTIME
    return 0


def cmd_sweep(args, out: Output) -> int:
    doc = load_document(args)
    key, kind = SWEEP_PARAMS[args.param]
    values = [kind(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise SystemExit("sweep: --values is empty")

    def point(value):
        d = doc.override(**{key: value})
        rows = _compare_rows(d, args.mechanisms)
        for r in rows:
            r[args.param] = value
        return value, rows

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        results = list(pool.map(point, values))
    cols = [args.param] + COMPARE_COLUMNS
    if out.dir is None:
        out.emit("", write_csv([r for _, rows in results for r in rows], cols))
        return 0
    for value, rows in results:
        out.emit(f"sweep_{args.param}_{value}.csv", write_csv(rows, cols))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ndsm", description="Nonstationary demand-side management simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--horizon", type=int, help="override the number of simulated periods")
        sp.add_argument("--delta", type=float, help="override the discount factor")
        sp.add_argument("--seed", type=int, help="override the generator seed")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or stdout)")
        return sp

    s = common(sub.add_parser("simulate", help="run the mechanism and write the trace"))
    s.add_argument("--exact", action="store_true", help="rational index arithmetic")
    s.set_defaults(func=cmd_simulate)
    common(sub.add_parser("pareto", help="extreme costs and the Pareto region")).set_defaults(func=cmd_pareto)
    common(sub.add_parser("solve-target", help="optimal target costs and discount bounds")).set_defaults(
        func=cmd_solve_target)
    for name, func in (("compare", cmd_compare), ("sweep", cmd_sweep)):
        s = common(sub.add_parser(name, help="mechanism comparison table" if name == "compare"
                                  else "comparison tables over a parameter range"))
        s.add_argument("--mechanisms", type=lambda v: tuple(x.strip() for x in v.split(",")),
                       default=ALL_MECHANISMS, help="comma-separated subset of " + ",".join(ALL_MECHANISMS))
        s.set_defaults(func=func)
        if name == "sweep":
            s.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
            s.add_argument("--values", required=True, help="comma-separated values")
            s.add_argument("--workers", type=int, default=1)
    s = common(sub.add_parser("audit-ic", help="incentive-compatibility audit"))
    s.add_argument("--window", type=int, default=200)
    s.set_defaults(func=cmd_audit_ic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "mechanisms"):
        unknown = [m for m in args.mechanisms if m not in ALL_MECHANISMS]
        if unknown:
            print(f"ndsm: unknown mechanism(s) {unknown}; choose from {list(ALL_MECHANISMS)}", file=sys.stderr)
            return 2
    out = Output(args.out or os.environ.get(OUT_ENV))
    try:
        return args.func(args, out)
    except errors.ScenarioError as exc:
        print(f"ndsm: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except errors.NDSMError as exc:
        hint = next((h for cls, h in HINTS.items() if isinstance(exc, cls)), None)
        print(f"ndsm: {type(exc).__name__}: {exc}", file=sys.stderr)
        if hint:
            print(f"hint: {hint}", file=sys.stderr)
        return EXIT_INFEASIBLE if not isinstance(exc, (errors.IndexOutOfBounds, errors.NotIC)) else EXIT_RUNTIME
    except ValueError as exc:
        print(f"ndsm: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
