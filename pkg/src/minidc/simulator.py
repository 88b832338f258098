"""Time-stepped battery/solar simulation of Genesis fleets.

Each module keeps its state of charge (kWh) in ``[0, capacity]``. Only the
energy above a reserve floor of ``capacity * (1 - usable_fraction)`` can be
drawn to serve load, so a full battery delivers exactly its usable energy
before the node goes down. Harvested energy charges from zero upwards and
the excess over capacity is curtailed.

Per step and module the bookkeeping identity is::

    soc_after - soc_before = harvest - served + transfer - curtailed

where ``transfer`` is the net inter-module flow (imports after losses minus
exports).
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Sequence

from .catalog import BatterySpec, FleetConfig, FleetKind, OperatingProfile, PanelSpec

BALANCE_TOL = 1e-9  # kWh
_SHED_EPS = 1e-12
_FULL_EPS = 1e-9

DEFAULT_DT = 0.25


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class NodePowerModel:
    """Wall power of one node by stress level.

    ``overhead`` is a constant draw on top of the load curve; calibrated
    models already include it in the measured draws and leave it at 0.
    """

    draw_full: float
    draw_half: float
    idle: float = 0.0
    overhead: float = 0.0

    def __post_init__(self):
        if not self.draw_full >= self.draw_half >= self.idle >= 0:
            raise DomainError(
                f"need draw_full >= draw_half >= idle >= 0, got {self.draw_full}, {self.draw_half}, {self.idle}"
            )
        if self.overhead < 0:
            raise DomainError("overhead must be >= 0")

    def power(self, level: float) -> float:
        """Watts drawn at a stress level in [0, 1], interpolating linearly."""
        if not 0.0 <= level <= 1.0:
            raise DomainError(f"stress level must be in [0, 1], got {level}")
        if level <= 0.5:
            load = self.idle + (self.draw_half - self.idle) * (level / 0.5)
        else:
            load = self.draw_half + (self.draw_full - self.draw_half) * ((level - 0.5) / 0.5)
        return load + self.overhead

    @classmethod
    def on_off(cls, tdp: float, overhead: float = 0.0) -> NodePowerModel:
        return cls(draw_full=tdp, draw_half=tdp / 2, idle=0.0, overhead=overhead)


def calibrate_node_power(battery: BatterySpec, runtime: float, usable_fraction: float | None = None) -> float:
    """Constant draw (W) that empties the usable battery energy in ``runtime`` hours."""
    if runtime <= 0:
        raise DomainError(f"runtime must be > 0, got {runtime}")
    frac = battery.usable_fraction if usable_fraction is None else usable_fraction
    return battery.capacity * frac * 1000.0 / runtime


class HarvestShape(str, Enum):
    CONSTANT = "constant"
    HALF_SINE = "half-sine-day"


@dataclass(frozen=True)
class HarvestModel:
    """Solar yield of one panel. ``mean_harvest`` is the 24 h average in watts."""

    shape: HarvestShape = HarvestShape.CONSTANT
    mean_harvest: float = 0.0
    sunrise: float = 6.0
    daylight: float = 12.0
    peak_power: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "shape", HarvestShape(self.shape))
        if self.mean_harvest < 0:
            raise DomainError("mean_harvest must be >= 0")
        if not 0 < self.daylight <= 24 or not 0 <= self.sunrise < 24:
            raise DomainError("need 0 < daylight <= 24 and 0 <= sunrise < 24")

    @property
    def capacity_factor(self) -> float:
        return self.mean_harvest / self.peak_power

    @property
    def amplitude(self) -> float:
        """Midday power (W) of the half-sine profile with the same daily yield."""
        return self.mean_harvest * 24.0 * math.pi / (2.0 * self.daylight)

    def energy(self, t0: float, t1: float) -> float:
        """Energy (kWh) harvested by one panel over [t0, t1] hours."""
        if t1 <= t0 or self.mean_harvest == 0:
            return 0.0
        if self.shape is HarvestShape.CONSTANT:
            return self.mean_harvest * (t1 - t0) / 1000.0
        w = math.pi / self.daylight
        total = 0.0
        day = math.floor((t0 - self.sunrise) / 24.0)
        while True:
            start = day * 24.0 + self.sunrise
            if start >= t1:
                break
            a, b = max(t0, start), min(t1, start + self.daylight)
            if b > a:
                total += (math.cos(w * (a - start)) - math.cos(w * (b - start))) / w
            day += 1
        return self.amplitude * total / 1000.0


def calibrate_harvest(
    battery: BatterySpec,
    fill_time: float,
    panel: PanelSpec = PanelSpec(count=1),
    shape: HarvestShape | str = HarvestShape.CONSTANT,
    sunrise: float = 6.0,
    daylight: float = 12.0,
) -> HarvestModel:
    """Per-panel harvest that fills an empty battery in ``fill_time`` hours of average sun."""
    if fill_time <= 0:
        raise DomainError(f"fill_time must be > 0, got {fill_time}")
    panels = max(panel.count, 1)
    return HarvestModel(
        shape=HarvestShape(shape),
        mean_harvest=battery.capacity * 1000.0 / fill_time / panels,
        sunrise=sunrise,
        daylight=daylight,
        peak_power=panel.peak_power,
    )


class ExchangeMode(str, Enum):
    NONE = "none"
    ENERGY_BALANCE = "energy-balance"
    WORKLOAD_MIGRATE = "workload-migrate"


@dataclass(frozen=True)
class ExchangePolicy:
    """How modules help each other.

    energy-balance: a loaded module whose usable charge is below ``low_water``
    pulls energy, highest-charged donor first, from modules above ``high_water``;
    donors never drop below ``high_water`` after serving their own load.
    ``transfer_cap`` bounds the energy (kWh) a module may import per step.

    workload-migrate: a module that cannot cover this step's load hands it
    to the highest-charged module that can cover its own load plus the
    migrated one.
    """

    mode: ExchangeMode = ExchangeMode.NONE
    transfer_efficiency: float = 1.0
    low_water: float = 0.10
    high_water: float = 0.50
    transfer_cap: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "mode", ExchangeMode(self.mode))
        if not 0 < self.transfer_efficiency <= 1:
            raise DomainError("transfer_efficiency must be in (0, 1]")
        if not 0 <= self.low_water <= 1 or not 0 <= self.high_water <= 1:
            raise DomainError("water marks must be in [0, 1]")
        if self.transfer_cap < 0:
            raise DomainError("transfer_cap must be >= 0")


@dataclass(frozen=True)
class Schedule:
    """Stress level per module for consecutive intervals of ``interval`` hours."""

    interval: float
    levels: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(tuple(float(x) for x in row) for row in self.levels))
        if self.interval <= 0:
            raise DomainError("schedule interval must be > 0")
        widths = {len(row) for row in self.levels}
        if len(widths) > 1:
            raise DomainError("schedule rows differ in module count")
        for row in self.levels:
            for x in row:
                if not 0.0 <= x <= 1.0:
                    raise DomainError(f"stress level must be in [0, 1], got {x}")

    @property
    def span(self) -> float:
        return self.interval * len(self.levels)

    def level(self, t: float, module: int) -> float:
        idx = min(int(math.floor(t / self.interval + 1e-9)), len(self.levels) - 1)
        return self.levels[idx][module]

    @classmethod
    def constant(cls, levels: Sequence[float], duration: float, interval: float | None = None) -> Schedule:
        interval = duration if interval is None else interval
        n = max(1, math.ceil(duration / interval - 1e-9))
        return cls(interval, (tuple(levels),) * n)

    @classmethod
    def randomized(cls, n_modules: int, n_intervals: int, interval: float, seed: int) -> Schedule:
        rng = random.Random(seed)
        return cls(interval, tuple(tuple(rng.random() for _ in range(n_modules)) for _ in range(n_intervals)))


@dataclass(frozen=True)
class SimState:
    time: float
    soc: tuple[float, ...]  # kWh
    pending_load: tuple[float, ...]  # W


@dataclass(frozen=True)
class ModuleStep:
    soc_before: float
    soc_after: float
    harvest: float
    demand: float
    served: float
    transfer: float
    shed: float
    curtailed: float
    migrated_out: float = 0.0
    migrated_in: float = 0.0
    downtime: float = 0.0  # hours


@dataclass(frozen=True)
class StepRecord:
    time: float
    dt: float
    modules: tuple[ModuleStep, ...]


@dataclass
class SimSummary:
    total_harvested: float
    total_consumed: float
    total_demand: float
    total_shed: float
    total_curtailed: float
    transfer_loss: float
    downtime_hours: float
    runtime_to_empty: list[float | None]
    time_to_full: list[float | None]
    final_soc: list[float]


@dataclass
class SimTrace:
    steps: list[StepRecord]
    capacities: tuple[float, ...]
    floors: tuple[float, ...]
    summary: SimSummary | None = field(default=None)


def _battery_bounds(fleet: FleetConfig, profile: OperatingProfile | None) -> tuple[list[float], list[float]]:
    if fleet.kind is not FleetKind.GENESIS:
        raise DomainError(f"fleet {fleet.id} is not a Genesis fleet")
    profile = profile or OperatingProfile()
    caps = [m.battery.capacity for m in fleet.modules]
    floors = [m.battery.capacity * (1.0 - profile.usable_fraction(m.battery)) for m in fleet.modules]
    return caps, floors


def _charge_fraction(soc: float, cap: float, floor: float) -> float:
    span = cap - floor
    if span <= 0:
        return 0.0
    return (soc - floor) / span


def _migrate(soc, harvest, loads, floors, n):
    out = [0.0] * n
    inn = [0.0] * n
    for m in range(n):
        d = loads[m]
        if d <= 0 or max(0.0, soc[m] + harvest[m] - floors[m]) >= d:
            continue
        host = None
        for k in sorted(range(n), key=lambda k: (-soc[k], k)):
            if k != m and soc[k] + harvest[k] - floors[k] >= loads[k] + d:
                host = k
                break
        if host is not None:
            loads[m] -= d
            loads[host] += d
            out[m] += d
            inn[host] += d
    return out, inn


def _balance(soc, harvest, loads, caps, floors, policy: ExchangePolicy, n):
    exports = [0.0] * n
    imports = [0.0] * n
    eff = policy.transfer_efficiency
    fracs = [_charge_fraction(soc[m], caps[m], floors[m]) for m in range(n)]
    receivers = [
        m for m in range(n) if loads[m] > 0 and caps[m] > floors[m] and fracs[m] < policy.low_water
    ]
    donors = sorted(
        (k for k in range(n) if fracs[k] > policy.high_water and k not in receivers),
        key=lambda k: (-soc[k], k),
    )
    budget = {
        k: soc[k] + harvest[k] - loads[k] - (floors[k] + policy.high_water * (caps[k] - floors[k]))
        for k in donors
    }
    for m in receivers:
        target = floors[m] + policy.low_water * (caps[m] - floors[m])
        need = min(target + loads[m] - soc[m] - harvest[m], policy.transfer_cap)
        for k in donors:
            if need <= 0:
                break
            give = min(need / eff, budget[k])
            if give <= 0:
                continue
            budget[k] -= give
            exports[k] += give
            imports[m] += give * eff
            need -= give * eff
    return exports, imports


def step(
    state: SimState,
    fleet: FleetConfig,
    power_models: Sequence[NodePowerModel],
    harvest: HarvestModel,
    policy: ExchangePolicy,
    dt: float,
    profile: OperatingProfile | None = None,
) -> tuple[SimState, StepRecord]:
    """Advance every module by ``dt`` hours at its ``pending_load``.

    ``power_models`` is accepted for signature symmetry with :func:`run`;
    demand is taken from ``state.pending_load``.
    """
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    caps, floors = _battery_bounds(fleet, profile)
    n = len(fleet.modules)
    if len(state.soc) != n or len(state.pending_load) != n:
        raise DomainError("state size does not match fleet")
    for m in range(n):
        if not 0.0 <= state.soc[m] <= caps[m] + BALANCE_TOL:
            raise DomainError(f"module {m}: soc {state.soc[m]} outside [0, {caps[m]}]")

    soc = list(state.soc)
    t0, t1 = state.time, state.time + dt
    per_panel = harvest.energy(t0, t1)
    harv = [per_panel * m.panels.count for m in fleet.modules]
    demand = [p * dt / 1000.0 for p in state.pending_load]
    loads = list(demand)

    mig_out = mig_in = [0.0] * n
    exports = imports = [0.0] * n
    if policy.mode is ExchangeMode.WORKLOAD_MIGRATE:
        mig_out, mig_in = _migrate(soc, harv, loads, floors, n)
    elif policy.mode is ExchangeMode.ENERGY_BALANCE:
        exports, imports = _balance(soc, harv, loads, caps, floors, policy, n)

    records = []
    new_soc = []
    for m in range(n):
        level = soc[m] + harv[m] + imports[m] - exports[m]
        served = min(loads[m], max(0.0, level - floors[m]))
        shed = loads[m] - served
        if shed <= _SHED_EPS:
            shed = 0.0
            served = loads[m]
        after = level - served
        curtailed = 0.0
        if after > caps[m]:
            curtailed = after - caps[m]
            after = caps[m]
        after = max(after, 0.0)
        down = dt * shed / loads[m] if shed > 0 else 0.0
        new_soc.append(after)
        records.append(
            ModuleStep(
                soc_before=soc[m],
                soc_after=after,
                harvest=harv[m],
                demand=demand[m],
                served=served,
                transfer=imports[m] - exports[m],
                shed=shed,
                curtailed=curtailed,
                migrated_out=mig_out[m],
                migrated_in=mig_in[m],
                downtime=down,
            )
        )
    new_state = SimState(time=t1, soc=tuple(new_soc), pending_load=state.pending_load)
    return new_state, StepRecord(time=t0, dt=dt, modules=tuple(records))


def _summarize(steps: list[StepRecord], caps: Sequence[float]) -> SimSummary:
    n = len(caps)
    runtime: list[float | None] = [None] * n
    full: list[float | None] = [None] * n
    for rec in steps:
        for m, ms in enumerate(rec.modules):
            if runtime[m] is None and ms.shed > 0:
                hosted = ms.served + ms.shed
                runtime[m] = rec.time + rec.dt * (ms.served / hosted)
            if full[m] is None:
                if ms.soc_before >= caps[m] - _FULL_EPS:
                    full[m] = rec.time
                elif ms.soc_after >= caps[m] - _FULL_EPS:
                    gain = ms.soc_after + ms.curtailed - ms.soc_before
                    full[m] = rec.time + rec.dt * min(1.0, (caps[m] - ms.soc_before) / gain)
    every = [ms for rec in steps for ms in rec.modules]
    imported = math.fsum(max(ms.transfer, 0.0) for ms in every)
    exported = math.fsum(-min(ms.transfer, 0.0) for ms in every)
    return SimSummary(
        total_harvested=math.fsum(ms.harvest for ms in every),
        total_consumed=math.fsum(ms.served for ms in every),
        total_demand=math.fsum(ms.demand for ms in every),
        total_shed=math.fsum(ms.shed for ms in every),
        total_curtailed=math.fsum(ms.curtailed for ms in every),
        transfer_loss=exported - imported,
        downtime_hours=math.fsum(ms.downtime for ms in every),
        runtime_to_empty=runtime,
        time_to_full=full,
        final_soc=[ms.soc_after for ms in steps[-1].modules] if steps else [],
    )


def run(
    fleet: FleetConfig,
    power_models: Sequence[NodePowerModel],
    harvest: HarvestModel,
    policy: ExchangePolicy,
    schedule: Schedule,
    duration: float,
    dt: float = DEFAULT_DT,
    initial_soc: Sequence[float] | None = None,
    profile: OperatingProfile | None = None,
) -> SimTrace:
    """Simulate ``duration`` hours in steps of ``dt``; batteries start full by default."""
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if duration < dt:
        raise DomainError(f"duration {duration} shorter than dt {dt}")
    n = len(fleet.modules)
    if len(power_models) != n:
        raise DomainError(f"expected {n} power models, got {len(power_models)}")
    if schedule.levels and len(schedule.levels[0]) != n:
        raise DomainError("schedule module count does not match fleet")
    if schedule.span < duration - 1e-9:
        raise DomainError(f"schedule covers {schedule.span} h, shorter than duration {duration} h")

    caps, floors = _battery_bounds(fleet, profile)
    soc = tuple(caps) if initial_soc is None else tuple(float(s) for s in initial_soc)
    if len(soc) != n:
        raise DomainError("initial_soc size does not match fleet")

    steps: list[StepRecord] = []
    n_steps = int(math.floor(duration / dt + 1e-9))
    state = SimState(0.0, soc, (0.0,) * n)
    for k in range(n_steps):
        t = k * dt
        load = tuple(power_models[m].power(schedule.level(t, m)) for m in range(n))
        state, rec = step(SimState(t, state.soc, load), fleet, power_models, harvest, policy, dt, profile)
        steps.append(rec)
    trace = SimTrace(steps=steps, capacities=tuple(caps), floors=tuple(floors))
    trace.summary = _summarize(steps, caps)
    return trace


def verify_trace(trace: SimTrace, fleet: FleetConfig | None = None, tol: float = BALANCE_TOL) -> bool:
    """Check the per-step energy identity, load accounting and SoC bounds."""
    caps = trace.capacities if fleet is None else tuple(m.battery.capacity for m in fleet.modules)
    prev: tuple[float, ...] | None = None
    for rec in trace.steps:
        if len(rec.modules) != len(caps):
            return False
        for m, ms in enumerate(rec.modules):
            if not (-tol <= ms.soc_after <= caps[m] + tol and -tol <= ms.soc_before <= caps[m] + tol):
                return False
            if min(ms.harvest, ms.demand, ms.served, ms.shed, ms.curtailed) < 0:
                return False
            delta = ms.soc_after - ms.soc_before
            if abs(delta - (ms.harvest - ms.served + ms.transfer - ms.curtailed)) > tol:
                return False
            if abs(ms.demand - ms.migrated_out + ms.migrated_in - ms.served - ms.shed) > tol:
                return False
            if prev is not None and abs(prev[m] - ms.soc_before) > tol:
                return False
        prev = tuple(ms.soc_after for ms in rec.modules)
    return True


CSV_HEADER = ("time_h", "module", "soc_kwh", "harvest_kwh", "demand_kwh", "served_kwh", "transfer_kwh", "shed_kwh")


def _num(x: float) -> str:
    return format(x, ".10g")


def write_trace_csv(trace: SimTrace, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in trace.steps:
        for m, ms in enumerate(rec.modules):
            writer.writerow(
                [
                    _num(rec.time + rec.dt),
                    m,
                    _num(ms.soc_after),
                    _num(ms.harvest),
                    _num(ms.demand),
                    _num(ms.served),
                    _num(ms.transfer),
                    _num(ms.shed),
                ]
            )
