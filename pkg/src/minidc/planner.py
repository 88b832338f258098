"""Exhaustive search over fleet designs.

A design assigns each allowed processor type a module count and (for
Genesis fleets) one battery size shared by all modules of that type.
Candidates are scored from per-type aggregates without materializing
fleets; only the winner and the Pareto front are built as FleetConfig.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

from .accounting import CostModel, EfficiencyRecord, UndefinedMetricError, evaluate_record
from .catalog import (
    NO_PANELS,
    BatterySpec,
    Catalog,
    FleetConfig,
    FleetKind,
    LocationProfile,
    ModuleSpec,
    OperatingProfile,
    PanelSpec,
    ProcessorModel,
)
from .energy_model import FEASIBILITY_EPS

CAPACITY_EPS = 1e-9  # GFLOPs


class Objective(str, Enum):
    ENERGY_EFF = "energy_eff"
    CARBON_EFF = "carbon_eff"
    COST_EFF = "cost_eff"
    MIN_ENERGY = "min_energy"
    MIN_COST = "min_cost"

    @property
    def maximize(self) -> bool:
        return self in (Objective.ENERGY_EFF, Objective.CARBON_EFF, Objective.COST_EFF)


@dataclass(frozen=True)
class ProcessorChoice:
    processor: ProcessorModel
    reused: bool = False
    max_count: int = 0

    def __post_init__(self):
        if self.max_count < 0:
            raise ValueError("max_count must be >= 0")


@dataclass(frozen=True)
class DesignSpace:
    allowed_processors: tuple[ProcessorChoice, ...]
    allowed_batteries: tuple[BatterySpec, ...] = ()
    panels_per_module: PanelSpec = PanelSpec(count=1)
    kind: FleetKind = FleetKind.GENESIS

    def __post_init__(self):
        object.__setattr__(self, "kind", FleetKind(self.kind))
        object.__setattr__(self, "allowed_processors", tuple(self.allowed_processors))
        object.__setattr__(self, "allowed_batteries", tuple(self.allowed_batteries))
        names = [c.processor.name for c in self.allowed_processors]
        if len(set(names)) != len(names):
            raise ValueError(f"processor types must be distinct, got {names}")

    def options(self, i: int) -> list[tuple[int, int]]:
        """(count, battery index) choices for processor type ``i``; battery -1 means none."""
        choice = self.allowed_processors[i]
        opts = [(0, -1)]
        if self.kind is FleetKind.GENESIS:
            opts += [(c, b) for c in range(1, choice.max_count + 1) for b in range(len(self.allowed_batteries))]
        else:
            opts += [(c, -1) for c in range(1, choice.max_count + 1)]
        return opts

    def size(self) -> int:
        """Number of nonempty designs."""
        total = math.prod(len(self.options(i)) for i in range(len(self.allowed_processors)))
        return total - 1


@dataclass(frozen=True)
class PlanQuery:
    objective: Objective = Objective.CARBON_EFF
    min_capacity: float = 0.0
    require_battery_feasible: bool = True
    location: LocationProfile | None = None
    profile: OperatingProfile = field(default_factory=OperatingProfile)
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.min_capacity < 0:
            raise ValueError("min_capacity must be >= 0")


Assignment = tuple[tuple[int, int, int], ...]  # (type index, count, battery index)


def design_id(space: DesignSpace, assignment: Assignment) -> str:
    parts = []
    for i, count, b in assignment:
        tag = f"{space.allowed_processors[i].processor.name}x{count}"
        if b >= 0:
            tag += f"@{space.allowed_batteries[b].capacity:g}kWh"
        parts.append(tag)
    return "+".join(parts)


def build_fleet(space: DesignSpace, assignment: Assignment) -> FleetConfig:
    modules: list[ModuleSpec] = []
    genesis = space.kind is FleetKind.GENESIS
    for i, count, b in assignment:
        choice = space.allowed_processors[i]
        module = ModuleSpec(
            server=choice.processor,
            battery=space.allowed_batteries[b] if genesis else None,
            panels=space.panels_per_module if genesis else NO_PANELS,
            reused=choice.reused,
        )
        modules.extend([module] * count)
    return FleetConfig(id=design_id(space, assignment), kind=space.kind, modules=tuple(modules))


def _assignments(space: DesignSpace) -> Iterator[Assignment]:
    n = len(space.allowed_processors)
    for combo in itertools.product(*(space.options(i) for i in range(n))):
        assignment = tuple((i, c, b) for i, (c, b) in enumerate(combo) if c > 0)
        if assignment:
            yield assignment


def enumerate_fleets(space: DesignSpace) -> Iterator[FleetConfig]:
    """Every nonempty design exactly once, in a fixed order."""
    if space.kind is FleetKind.GENESIS and not space.allowed_batteries:
        return
    for assignment in _assignments(space):
        yield build_fleet(space, assignment)


@dataclass(frozen=True)
class Point:
    """Aggregate figures of one design."""

    assignment: Assignment
    id: str
    modules: int
    capacity: float
    energy: float  # kWh/day
    cost: float  # USD over horizon
    emissions: float  # gCO2/day
    storage: float  # kWh usable
    objective: float | None

    @property
    def axes(self) -> tuple[float, float, float, float]:
        return (self.capacity, self.energy, self.cost, self.emissions)


def _quantize(x: float) -> float:
    # equal to 10 significant digits counts as a tie
    return float(format(x, ".10g"))


def objective_value(objective: Objective, capacity, energy, cost, emissions, duty_hours) -> float | None:
    """Objective score, or None where the metric is undefined."""
    if objective is Objective.MIN_ENERGY:
        return energy
    if objective is Objective.MIN_COST:
        return cost
    denom = {
        Objective.ENERGY_EFF: energy * 1000.0 / duty_hours if duty_hours > 0 else 0.0,
        Objective.CARBON_EFF: emissions,
        Objective.COST_EFF: cost,
    }[objective]
    if denom <= 0:
        return None
    return capacity / denom


def rank_key(objective: Objective, value: float, modules: int, cost: float, ident: str):
    """Sort key: best objective first, then fewer modules, lower cost, id."""
    v = _quantize(value)
    return (-v if objective.maximize else v, modules, _quantize(cost), ident)


class _Scorer:
    def __init__(self, space: DesignSpace, query: PlanQuery):
        self.space = space
        self.query = query
        loc = query.location or LocationProfile("none", 0.0, 0.0)
        genesis = space.kind is FleetKind.GENESIS
        prof = query.profile
        cm = query.cost_model
        self.factor = loc.solar_emissions if genesis else loc.grid_emissions
        self.price = cm.solar_energy_price if genesis else loc.grid_price
        self.cooling = 0.0 if genesis else prof.cooling_fraction
        self.overhead = prof.overhead_watts if genesis else 0.0
        self.hours = prof.duty_hours
        self.genesis = genesis
        panel_cost = space.panels_per_module.price * space.panels_per_module.count if genesis else 0.0
        self.unit_power = [c.processor.tdp + self.overhead for c in space.allowed_processors]
        self.unit_perf = [c.processor.perf for c in space.allowed_processors]
        self.unit_acq = [
            (0.0 if c.reused else c.processor.price) + panel_cost for c in space.allowed_processors
        ]
        self.batt_acq = [b.price for b in space.allowed_batteries]
        self.batt_usable = [b.capacity * prof.usable_fraction(b) for b in space.allowed_batteries]

    def energy(self, power_w: float) -> float:
        return power_w * self.hours * (1.0 + self.cooling) / 1000.0

    def cost(self, acquisition: float, energy: float) -> float:
        cm = self.query.cost_model
        energy_cost = energy * cm.horizon_days * self.price
        return energy_cost + (acquisition if cm.include_acquisition else 0.0)

    def contribution(self, i: int, count: int, b: int) -> tuple[float, float, float, float]:
        """(power W, capacity, acquisition USD, usable storage kWh) of ``count`` modules."""
        acq = self.unit_acq[i] + (self.batt_acq[b] if b >= 0 else 0.0)
        storage = self.batt_usable[b] if b >= 0 else 0.0
        return count * self.unit_power[i], count * self.unit_perf[i], count * acq, count * storage

    def point(self, assignment: Assignment, power, capacity, acquisition, storage) -> Point:
        energy = self.energy(power)
        cost = self.cost(acquisition, energy)
        emissions = energy * self.factor
        value = objective_value(self.query.objective, capacity, energy, cost, emissions, self.hours)
        return Point(
            assignment=assignment,
            id=design_id(self.space, assignment),
            modules=sum(c for _, c, _ in assignment),
            capacity=capacity,
            energy=energy,
            cost=cost,
            emissions=emissions,
            storage=storage,
            objective=value,
        )

    def feasible(self, p: Point) -> bool:
        q = self.query
        if p.objective is None:
            return False
        if p.capacity < q.min_capacity - CAPACITY_EPS:
            return False
        if q.require_battery_feasible and self.genesis and p.energy > p.storage + FEASIBILITY_EPS:
            return False
        return True


def _search(space: DesignSpace, query: PlanQuery, bound_objective: bool) -> tuple[list[Point], int]:
    """Depth-first enumeration with capacity-bound pruning.

    With ``bound_objective`` and a min_energy/min_cost objective, partial
    designs whose energy or cost already exceeds the incumbent are pruned.
    """
    if space.kind is FleetKind.GENESIS and not space.allowed_batteries:
        return [], 0
    scorer = _Scorer(space, query)
    n = len(space.allowed_processors)
    options = [space.options(i) for i in range(n)]
    # best-case capacity still obtainable from types i.. onward
    cap_left = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        c = space.allowed_processors[i]
        cap_left[i] = cap_left[i + 1] + c.max_count * c.processor.perf

    objective = query.objective
    prune_on = None
    if bound_objective and objective in (Objective.MIN_ENERGY, Objective.MIN_COST):
        prune_on = objective

    feasible: list[Point] = []
    explored = 0
    incumbent: list[float | None] = [None]

    def partial_bound(power, acquisition) -> float:
        energy = scorer.energy(power)
        return energy if prune_on is Objective.MIN_ENERGY else scorer.cost(acquisition, energy)

    def visit(i, chosen, power, capacity, acquisition, storage):
        nonlocal explored
        if capacity + cap_left[i] < query.min_capacity - CAPACITY_EPS:
            return
        if prune_on is not None and incumbent[0] is not None:
            if _quantize(partial_bound(power, acquisition)) > incumbent[0]:
                return
        if i == n:
            if not chosen:
                return
            explored += 1
            p = scorer.point(tuple(chosen), power, capacity, acquisition, storage)
            if scorer.feasible(p):
                feasible.append(p)
                if prune_on is not None:
                    v = _quantize(p.objective)
                    if incumbent[0] is None or v < incumbent[0]:
                        incumbent[0] = v
            return
        for count, b in options[i]:
            if count == 0:
                visit(i + 1, chosen, power, capacity, acquisition, storage)
                continue
            dp, dc, da, ds = scorer.contribution(i, count, b)
            visit(i + 1, chosen + [(i, count, b)], power + dp, capacity + dc, acquisition + da, storage + ds)

    visit(0, [], 0.0, 0.0, 0.0, 0.0)
    return feasible, explored


def pareto_points(points: Sequence[Point]) -> list[Point]:
    """Non-dominated points (max capacity, min energy, cost, emissions), deduplicated by id."""
    unique = {p.id: p for p in points}
    ordered = sorted(unique.values(), key=lambda p: (-p.capacity, p.energy, p.cost, p.emissions, p.id))
    front: list[Point] = []
    for p in ordered:
        if not any(_dominates(q.axes, p.axes) for q in front):
            front.append(p)
    return front


def _dominates(a, b) -> bool:
    better_or_equal = a[0] >= b[0] and a[1] <= b[1] and a[2] <= b[2] and a[3] <= b[3]
    return better_or_equal and a != b


@dataclass(frozen=True)
class Candidate:
    fleet: FleetConfig
    record: EfficiencyRecord | None
    point: Point


@dataclass(frozen=True)
class PlanResult:
    best: Candidate | None
    pareto: tuple[Candidate, ...]
    explored: int
    feasible: int

    @property
    def solved(self) -> bool:
        return self.best is not None


def _candidate(space: DesignSpace, query: PlanQuery, p: Point) -> Candidate:
    fleet = build_fleet(space, p.assignment)
    record = None
    if query.location is not None:
        try:
            record = evaluate_record(fleet, query.profile, query.location, query.cost_model)
        except UndefinedMetricError:
            pass  # some metric has a zero denominator
    return Candidate(fleet=fleet, record=record, point=p)


def select_best(points: Sequence[Point], objective: Objective) -> Point | None:
    if not points:
        return None
    return min(points, key=lambda p: rank_key(objective, p.objective, p.modules, p.cost, p.id))


def plan(space: DesignSpace, query: PlanQuery, with_pareto: bool = True) -> PlanResult:
    """Best feasible design under ``query``; ``best`` is None when nothing qualifies."""
    points, explored = _search(space, query, bound_objective=not with_pareto)
    best = select_best(points, query.objective)
    front = pareto_points(points) if with_pareto else []
    return PlanResult(
        best=_candidate(space, query, best) if best is not None else None,
        pareto=tuple(_candidate(space, query, p) for p in front),
        explored=explored,
        feasible=len(points),
    )


def pareto_front(space: DesignSpace, query: PlanQuery) -> list[Candidate]:
    points, _ = _search(space, query, bound_objective=False)
    return [_candidate(space, query, p) for p in pareto_points(points)]


def pareto_fleets(
    fleets: Sequence[FleetConfig],
    profile: OperatingProfile,
    location: LocationProfile,
    cost_model: CostModel = CostModel(),
) -> list[FleetConfig]:
    """Pareto filter over an explicit list of fleets (mixed kinds allowed)."""
    by_id = {}
    points = []
    for f in fleets:
        r = evaluate_record(f, profile, location, cost_model)
        by_id[f.id] = f
        points.append(Point((), f.id, len(f), r.capacity, r.daily_energy, r.total_cost, r.daily_emissions, 0.0, None))
    return [by_id[p.id] for p in pareto_points(points)]


def reference_space(catalog: Catalog) -> DesignSpace:
    """New i7-8700 (up to 5) plus reused i7-4770 (up to 9), 1 or 2 kWh batteries."""
    return DesignSpace(
        allowed_processors=(
            ProcessorChoice(catalog.processor("i7-8700"), reused=False, max_count=5),
            ProcessorChoice(catalog.processor("i7-4770"), reused=True, max_count=9),
        ),
        allowed_batteries=(BatterySpec(1.0), BatterySpec(2.0)),
        panels_per_module=PanelSpec(count=1),
        kind=FleetKind.GENESIS,
    )
