"""Command-line front end.

Exit codes: 0 success, 1 input/parse error, 2 unknown reference,
3 golden mismatch (``reproduce`` only).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .accounting import (
    CostModel,
    UndefinedMetricError,
    carbon_efficiency,
    cost_efficiency,
    efficiency_matrix,
    energy_efficiency,
    total_cost,
)
from .catalog import (
    BatterySpec,
    Catalog,
    CatalogError,
    FleetKind,
    PanelSpec,
    fleet_doc,
    load_catalog,
    serialize,
)
from .energy_model import evaluate, relative_delta
from .planner import DesignSpace, Objective, PlanQuery, ProcessorChoice, reference_space, plan
from .scenarios import load_scenario
from .simulator import DomainError, write_trace_csv

EXIT_OK, EXIT_INPUT, EXIT_UNKNOWN, EXIT_GOLDEN = 0, 1, 2, 3


class UnknownReference(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- rendering ---------------------------------------------------------------


def _cell(value: Any, digits: int) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]
    # decimals per column; missing columns use the default
    digits: dict[str, int] | None = None

    def formatted(self, precision: int | None) -> list[list[str]]:
        out = []
        for row in self.rows:
            cells = []
            for col, value in zip(self.columns, row):
                d = precision if precision is not None else (self.digits or {}).get(col, 2)
                cells.append(_cell(value, d))
            out.append(cells)
        return out

    def to_csv(self, precision: int | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.formatted(precision))
        return buf.getvalue()

    def to_text(self, precision: int | None = None) -> str:
        body = self.formatted(precision)
        widths = [max(len(c), *(len(r[i]) for r in body)) if body else len(c) for i, c in enumerate(self.columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(self.columns, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for r in body:
            lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def records(self) -> list[dict[str, Any]]:
        return [dict(zip(self.columns, row)) for row in self.rows]


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _render(table: Table, args, structured: dict[str, Any] | None = None) -> str:
    if args.format == "csv":
        return table.to_csv(args.precision)
    if args.format == "structured":
        doc = dict(structured or {})
        doc["rows"] = table.records()
        return _dump_json(doc)
    return table.to_text(args.precision)


# -- shared argument handling -----------------------------------------------


def _load(args) -> Catalog:
    catalog = load_catalog(args.config)
    if args.profile:
        overrides: dict[str, Any] = {}
        for item in args.profile:
            key, sep, value = item.partition("=")
            if not sep:
                raise InputError(f"--profile expects key=value, got {item!r}")
            if key not in ("duty_hours", "cooling_fraction", "overhead_watts", "usable_fraction_override"):
                raise InputError(f"unknown profile field {key!r}")
            try:
                overrides[key] = None if value.lower() == "none" else float(value)
            except ValueError as exc:
                raise InputError(f"--profile {key}: not a number: {value!r}") from exc
        catalog = catalog.with_profile(**overrides)
    return catalog


def _fleet(catalog: Catalog, fleet_id: str):
    try:
        return catalog.fleet(fleet_id)
    except KeyError as exc:
        raise UnknownReference(f"unknown fleet {fleet_id!r}") from exc


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _locations(catalog: Catalog, cities: list[str] | None):
    if cities is None:
        return list(catalog.locations)
    if not cities:
        raise InputError("empty city list")
    out = []
    for c in cities:
        try:
            out.append(catalog.location(c))
        except KeyError as exc:
            raise UnknownReference(f"unknown city {c!r}") from exc
    return out


def _cost_model(args) -> CostModel:
    return CostModel(
        horizon_days=args.horizon_days,
        include_acquisition=not args.no_acquisition,
        solar_energy_price=args.solar_price,
    )


# -- eval ------------------------------------------------------------------


def cmd_eval(args) -> int:
    catalog = _load(args)
    fleet = _fleet(catalog, args.fleet)
    report = evaluate(fleet, catalog.profile)
    columns = ["config", "it_power_w", "energy_kwh", "capacity_gflops"]
    row: list[Any] = [fleet.id, report.it_power, report.daily_energy, report.capacity]
    if args.baseline:
        base = evaluate(_fleet(catalog, args.baseline), catalog.profile)
        de, dc = relative_delta(base, report)
        columns += ["baseline", "energy_delta_pct", "capacity_delta_pct"]
        row += [base.fleet_id, de, dc]
    columns += ["usable_storage_kwh", "battery_feasible"]
    row += [report.usable_storage, report.battery_feasible]
    table = Table(columns, [row])
    # a loadable catalog holding just the fleets involved
    structured = serialize(catalog)
    structured["fleets"] = [fleet_doc(_fleet(catalog, i)) for i in dict.fromkeys(filter(None, [args.fleet, args.baseline]))]
    _emit(_render(table, args, structured), args.out)
    return EXIT_OK


# -- compare ---------------------------------------------------------------

COMPARE_COLUMNS = [
    "config",
    "city",
    "capacity_gflops",
    "energy_kwh",
    "energy_eff",
    "emissions_g_per_day",
    "carbon_eff",
    "total_cost_usd",
    "cost_eff",
]
_EFF_DIGITS = {"energy_eff": 4, "carbon_eff": 4, "cost_eff": 4}


def cmd_compare(args) -> int:
    catalog = _load(args)
    fleet_ids = _split(args.fleets)
    if fleet_ids is not None and not fleet_ids:
        raise InputError("empty fleet list")
    fleets = [_fleet(catalog, f) for f in fleet_ids] if fleet_ids else list(catalog.fleets)
    locations = _locations(catalog, _split(args.cities))
    records = efficiency_matrix(fleets, catalog.profile, locations, _cost_model(args))
    rows = [
        [
            r.config_id,
            r.city,
            r.capacity,
            r.daily_energy,
            r.energy_eff,
            r.daily_emissions,
            r.carbon_eff,
            r.total_cost,
            r.cost_eff,
        ]
        for r in records
    ]
    _emit(_render(Table(COMPARE_COLUMNS, rows, _EFF_DIGITS), args), args.out)
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = scenario.run()
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            write_trace_csv(trace, fh)
    s = trace.summary
    rows = []
    for m in range(len(scenario.fleet.modules)):
        rows.append([scenario.name, m, s.runtime_to_empty[m], s.time_to_full[m], s.final_soc[m]])
    table = Table(["scenario", "module", "runtime_to_empty_h", "time_to_full_h", "final_soc_kwh"], rows, {"final_soc_kwh": 4})
    totals = {
        "harvested_kwh": s.total_harvested,
        "consumed_kwh": s.total_consumed,
        "shed_kwh": s.total_shed,
        "curtailed_kwh": s.total_curtailed,
        "transfer_loss_kwh": s.transfer_loss,
        "downtime_h": s.downtime_hours,
    }
    if args.format == "structured":
        text = _dump_json({"scenario": scenario.name, "totals": totals, "modules": table.records()})
    else:
        text = _render(table, args)
        digits = 4 if args.precision is None else args.precision
        if args.format == "csv":
            text += "".join(f"# {k},{v:.{digits}f}\n" for k, v in totals.items())
        else:
            text += "\n" + "".join(f"{k}: {v:.{digits}f}\n" for k, v in totals.items())
    _emit(text, args.out)
    return EXIT_OK


# -- plan ------------------------------------------------------------------


def _space_from_doc(catalog: Catalog, doc: dict[str, Any]) -> DesignSpace:
    try:
        choices = tuple(
            ProcessorChoice(catalog.processor(p["name"]), bool(p.get("reused", False)), int(p["max_count"]))
            for p in doc["processors"]
        )
    except KeyError as exc:
        raise UnknownReference(f"space: {exc}") from exc
    return DesignSpace(
        allowed_processors=choices,
        allowed_batteries=tuple(BatterySpec(**b) for b in doc.get("batteries", [])),
        panels_per_module=PanelSpec(**doc.get("panels", {"count": 1})),
        kind=FleetKind(doc.get("kind", "Genesis")),
    )


def cmd_plan(args) -> int:
    catalog = _load(args)
    space = reference_space(catalog)
    qdoc: dict[str, Any] = {}
    if args.query:
        try:
            doc = json.loads(Path(args.query).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON in {args.query}: {exc}") from exc
        if "space" in doc:
            space = _space_from_doc(catalog, doc["space"])
        qdoc = doc.get("query", {})
    city = qdoc.get("city") or (_split(args.cities) or ["Paris"])[0]
    location = _locations(catalog, [city])[0]
    objective = args.objective or qdoc.get("objective", "carbon_eff")
    min_capacity = args.min_capacity if args.min_capacity is not None else qdoc.get("min_capacity", 0.0)
    cost_model = CostModel(
        horizon_days=int(qdoc.get("horizon_days", args.horizon_days)),
        include_acquisition=bool(qdoc.get("include_acquisition", not args.no_acquisition)),
        solar_energy_price=float(qdoc.get("solar_energy_price", args.solar_price)),
    )
    try:
        query = PlanQuery(
            objective=Objective(objective),
            min_capacity=float(min_capacity),
            require_battery_feasible=bool(qdoc.get("require_battery_feasible", True)),
            location=location,
            profile=catalog.profile,
            cost_model=cost_model,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = plan(space, query)

    columns = ["rank", "design", "modules", "capacity_gflops", "energy_kwh", "total_cost_usd", "emissions_g_per_day", "storage_kwh"]
    rows = []
    if result.best is not None:
        b = result.best.point
        rows.append(["best", b.id, b.modules, b.capacity, b.energy, b.cost, b.emissions, b.storage])
    for c in result.pareto:
        p = c.point
        rows.append(["pareto", p.id, p.modules, p.capacity, p.energy, p.cost, p.emissions, p.storage])
    table = Table(columns, rows)
    if args.format == "structured":
        fleets = [fleet_doc(result.best.fleet)] if result.best else []
        fleets += [fleet_doc(c.fleet) for c in result.pareto if result.best is None or c.fleet.id != result.best.fleet.id]
        text = _dump_json(
            {
                **serialize(catalog),
                "fleets": fleets,
                "plan": {
                    "objective": query.objective.value,
                    "city": location.city,
                    "min_capacity": query.min_capacity,
                    "solved": result.solved,
                    "best": result.best.fleet.id if result.best else None,
                    "explored": result.explored,
                    "feasible": result.feasible,
                },
                "rows": table.records(),
            }
        )
    else:
        text = _render(table, args)
        if args.format == "table":
            status = "best: " + (result.best.fleet.id if result.best else "no feasible design")
            text = f"{status}\nexplored {result.explored} designs, {result.feasible} feasible\n\n" + text
    _emit(text, args.out)
    return EXIT_OK


# -- reproduce ---------------------------------------------------------------

TABLE2_POWER_KW = {"C_ref": 1.14, "C0": 1.01, "C1": 0.33, "C2": 0.42, "C3": 1.36, "C4": 0.63, "C5": 0.65}
TABLE3 = {"C_ref": (12.19, 390.24), "C0": (10.78, 378.84), "C1": (3.47, 460.35)}
TABLE3_DELTAS = {"C0": (-11.6, -2.92), "C1": (-71.55, 17.96)}
TABLE4 = {"C2": (4.25, 460.35), "C3": (13.61, 744.48), "C4": (6.33, 523.49), "C5": (6.52, 462.99)}
POWER_TOL, CELL_TOL, DELTA_TOL = 0.005, 0.01, 0.1
# absorbs binary representation error at the tolerance boundary (e.g. 0.325 vs 0.33)
_FP_SLACK = 1e-9


def _within(computed: float, published: float, tol: float) -> bool:
    return abs(computed - published) <= tol + _FP_SLACK


def _describe_fleet(fleet) -> tuple[int, str, int, str]:
    """(servers, processor mix, panels, battery mix) as laid out in the configuration table."""
    groups: list[list] = []
    for m in fleet.modules:
        key = (m.server.name, m.battery.capacity if m.battery else None)
        if groups and groups[-1][0] == key:
            groups[-1][1] += 1
        else:
            groups.append([key, 1])
    names: dict[str, int] = {}
    for (name, _), n in groups:
        names[name] = names.get(name, 0) + n
    if len(names) == 1:
        proc = next(iter(names))
    else:
        proc = " & ".join(f"{k} x{v}" for k, v in names.items())
    panels = sum(m.panels.count for m in fleet.modules)
    batteries = " & ".join(f"{cap:g}kWh x{n}" for (_, cap), n in groups if cap is not None) or "0"
    return len(fleet.modules), proc, panels, batteries


def _safe(fn: Callable[[], float]) -> float | None:
    try:
        return fn()
    except UndefinedMetricError:
        return None


def reproduce_artifacts(catalog: Catalog, cost_model: CostModel) -> tuple[dict[str, Table], list[str]]:
    """Build the golden tables and figure data and list every check failure."""
    prof = catalog.profile
    fleets = {f.id: f for f in catalog.fleets}
    reports = {fid: evaluate(f, prof) for fid, f in fleets.items()}
    failures: list[str] = []

    def check(label: str, computed: float | None, published: float, tol: float) -> None:
        if computed is None or not _within(computed, published, tol):
            failures.append(f"{label}: computed {computed}, published {published} (tol {tol})")

    t2 = []
    for fid, f in fleets.items():
        servers, proc, panels, batteries = _describe_fleet(f)
        kw = reports[fid].it_power / 1000.0
        t2.append([fid, servers, proc, panels, batteries, kw])
        if fid in TABLE2_POWER_KW:
            check(f"table2 {fid} power_kw", kw, TABLE2_POWER_KW[fid], POWER_TOL)

    ref = reports["C_ref"]
    t3 = []
    for fid in ("C_ref", "C0", "C1"):
        r = reports[fid]
        try:
            de, dc = relative_delta(ref, r) if fid != "C_ref" else (None, None)
        except ZeroDivisionError:
            de = dc = None
        t3.append([fid, r.daily_energy, r.capacity, de, dc])
        check(f"table3 {fid} energy_kwh", r.daily_energy, TABLE3[fid][0], CELL_TOL)
        check(f"table3 {fid} capacity_gflops", r.capacity, TABLE3[fid][1], CELL_TOL)
        if fid in TABLE3_DELTAS:
            check(f"table3 {fid} energy_delta_pct", de, TABLE3_DELTAS[fid][0], DELTA_TOL)
            check(f"table3 {fid} capacity_delta_pct", dc, TABLE3_DELTAS[fid][1], DELTA_TOL)

    t4 = []
    for fid in ("C_ref", "C2", "C3", "C4", "C5"):
        r = reports[fid]
        t4.append([fid, r.daily_energy, r.capacity, r.usable_storage, r.battery_feasible])
        if fid in TABLE4:
            check(f"table4 {fid} energy_kwh", r.daily_energy, TABLE4[fid][0], CELL_TOL)
            check(f"table4 {fid} capacity_gflops", r.capacity, TABLE4[fid][1], CELL_TOL)
            if not r.battery_feasible:
                failures.append(f"table4 {fid}: daily energy exceeds usable storage")
    if reports["C2"].usable_storage != 8.5:
        failures.append(f"storage C2: computed {reports['C2'].usable_storage}, published 8.5")

    conventional = [f for f in fleets.values() if f.kind is FleetKind.CONVENTIONAL]
    genesis = [f for f in fleets.values() if f.kind is FleetKind.GENESIS]

    energy_eff = {fid: _safe(lambda f=f: energy_efficiency(f, prof)) for fid, f in fleets.items()}
    f3a = [[fid, v] for fid, v in energy_eff.items()]
    ranked = sorted((v, fid) for fid, v in energy_eff.items() if v is not None)
    if len(ranked) != len(energy_eff) or [fid for _, fid in ranked[::-1][:2]] != ["C1", "C2"]:
        failures.append("fig3a: expected C1 highest energy efficiency and C2 second")

    f3b, f3c = [], []
    for loc in catalog.locations:
        carbon = {fid: _safe(lambda f=f: carbon_efficiency(f, prof, loc)) for fid, f in fleets.items()}
        cost_eff = {fid: _safe(lambda f=f: cost_efficiency(f, prof, loc, cost_model)) for fid, f in fleets.items()}
        for fid, f in fleets.items():
            f3b.append([fid, loc.city, carbon[fid]])
            f3c.append([fid, loc.city, total_cost(f, prof, loc, cost_model), cost_eff[fid]])
        if None in carbon.values() or None in cost_eff.values():
            failures.append(f"fig3 {loc.city}: undefined efficiency metric")
            continue
        worst_gen_carbon = min(carbon[f.id] for f in genesis)
        best_conv_carbon = max(carbon[f.id] for f in conventional)
        if loc.city == "Paris":
            ratio = carbon["C1"] / carbon["C2"]
            if not 1.0 < ratio < 1.05:
                failures.append(f"fig3b Paris: carbon_eff C1/C2 = {ratio:.4f}, expected in (1, 1.05)")
        elif worst_gen_carbon <= best_conv_carbon:
            failures.append(f"fig3b {loc.city}: a conventional design matches or beats a Genesis design")
        if min(cost_eff[f.id] for f in genesis) <= max(cost_eff[f.id] for f in conventional):
            failures.append(f"fig3c {loc.city}: a conventional design matches or beats a Genesis design")

    tables = {
        "table2.csv": Table(["config", "servers", "processor", "solar_panels", "batteries", "power_kw"], t2),
        "table3.csv": Table(["config", "energy_kwh", "capacity_gflops", "energy_delta_pct", "capacity_delta_pct"], t3),
        "table4.csv": Table(["config", "energy_kwh", "capacity_gflops", "usable_storage_kwh", "battery_feasible"], t4),
        "fig3_energy.csv": Table(["config", "energy_eff"], f3a, _EFF_DIGITS),
        "fig3_carbon.csv": Table(["config", "city", "carbon_eff"], f3b, _EFF_DIGITS),
        "fig3_cost.csv": Table(["config", "city", "total_cost_usd", "cost_eff"], f3c, _EFF_DIGITS),
    }
    return tables, failures


def cmd_reproduce(args) -> int:
    catalog = _load(args)
    tables, failures = reproduce_artifacts(catalog, _cost_model(args))
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    for name, table in tables.items():
        (outdir / name).write_text(table.to_csv(args.precision), encoding="utf-8", newline="\n")
    if failures:
        for f in failures:
            print(f"MISMATCH {f}", file=sys.stderr)
        print(f"{len(failures)} golden check(s) failed; files written to {outdir}", file=sys.stderr)
        return EXIT_GOLDEN
    print(f"all golden checks passed; wrote {len(tables)} files to {outdir}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default="builtin", help="catalog JSON path (default: builtin dataset)")
    common.add_argument("--format", choices=("table", "csv", "structured"), default="table")
    common.add_argument("--precision", type=int, default=None, help="decimals for every numeric cell")
    common.add_argument("--out", default=None, help="output file (directory for reproduce)")
    common.add_argument("--profile", action="append", default=[], metavar="KEY=VALUE", help="override operating profile field")
    common.add_argument("--horizon-days", type=int, default=1095)
    common.add_argument("--solar-price", type=float, default=0.0, help="USD/kWh charged for solar energy")
    common.add_argument("--no-acquisition", action="store_true", help="leave server purchase out of total cost")

    parser = _Parser(prog="minidc", description="Mini data centre energy, carbon and cost modelling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", parents=[common], help="energy and capacity of one fleet")
    p.add_argument("--fleet", required=True)
    p.add_argument("--baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="efficiency matrix over fleets and cities")
    p.add_argument("--fleets", help="comma-separated fleet ids (default: all)")
    p.add_argument("--cities", help="comma-separated cities (default: all)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", parents=[common], help="run a battery/solar scenario")
    p.add_argument("scenario", help="bundled scenario name or JSON path")
    p.add_argument("--trace", help="write the per-step trace CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", parents=[common], help="search the design space")
    p.add_argument("--query", help="JSON with optional 'space' and 'query' objects")
    p.add_argument("--objective", choices=[o.value for o in Objective])
    p.add_argument("--min-capacity", type=float)
    p.add_argument("--cities", help="city for carbon/cost figures (first entry used)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("reproduce", parents=[common], help="regenerate the golden tables and figure data")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    if args.horizon_days < 1:
        print("error: --horizon-days must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except UnknownReference as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except (InputError, CatalogError, DomainError, UndefinedMetricError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
