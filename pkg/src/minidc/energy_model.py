"""Power, daily energy and compute capacity of fleets.

Servers follow an on/off load model: a busy server draws its full TDP for
``duty_hours`` a day and nothing otherwise. Conventional fleets pay a
cooling surcharge proportional to server energy; Genesis modules are
passively cooled but carry a static per-module overhead.

Energies are computed in Wh and returned in kWh without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .catalog import FleetConfig, FleetKind, ModuleSpec, OperatingProfile

# slack for comparing battery storage against demand (kWh)
FEASIBILITY_EPS = 1e-9


class KindMismatchError(ValueError):
    """An operation was applied to the wrong kind of fleet."""


def _modules(fleet: FleetConfig | Iterable[ModuleSpec]) -> Iterable[ModuleSpec]:
    return fleet.modules if isinstance(fleet, FleetConfig) else fleet


def _expect(fleet: FleetConfig, kind: FleetKind) -> None:
    if fleet.kind is not kind:
        raise KindMismatchError(f"fleet {fleet.id} is {fleet.kind.value}, expected {kind.value}")


def server_power(fleet: FleetConfig | Iterable[ModuleSpec]) -> float:
    return math.fsum(m.server.tdp for m in _modules(fleet))


def it_power(fleet: FleetConfig, profile: OperatingProfile) -> float:
    """Installed IT power in watts, including Genesis per-module overhead."""
    power = server_power(fleet)
    if fleet.kind is FleetKind.GENESIS:
        power += len(fleet.modules) * profile.overhead_watts
    return power


def conventional_energy(fleet: FleetConfig, profile: OperatingProfile) -> float:
    """Daily energy (kWh) of a grid-powered fleet including cooling."""
    _expect(fleet, FleetKind.CONVENTIONAL)
    server_wh = server_power(fleet) * profile.duty_hours
    return server_wh * (1.0 + profile.cooling_fraction) / 1000.0


def genesis_energy(fleet: FleetConfig, profile: OperatingProfile) -> float:
    """Daily energy (kWh) of a solar fleet: servers plus static overhead, no cooling."""
    _expect(fleet, FleetKind.GENESIS)
    return it_power(fleet, profile) * profile.duty_hours / 1000.0


def daily_energy(fleet: FleetConfig, profile: OperatingProfile) -> float:
    if fleet.kind is FleetKind.GENESIS:
        return genesis_energy(fleet, profile)
    return conventional_energy(fleet, profile)


def compute_capacity(fleet: FleetConfig | Iterable[ModuleSpec]) -> float:
    return math.fsum(m.server.perf for m in _modules(fleet))


def usable_storage(fleet: FleetConfig, profile: OperatingProfile) -> float:
    """Battery energy (kWh) available for computing across all modules."""
    _expect(fleet, FleetKind.GENESIS)
    return math.fsum(
        m.battery.capacity * profile.usable_fraction(m.battery)
        for m in fleet.modules
        if m.battery is not None
    )


def battery_feasible(fleet: FleetConfig, profile: OperatingProfile) -> bool:
    """True when one day of operation fits in the usable battery budget."""
    if fleet.kind is FleetKind.CONVENTIONAL:
        return True
    return genesis_energy(fleet, profile) <= usable_storage(fleet, profile) + FEASIBILITY_EPS


@dataclass(frozen=True)
class EnergyReport:
    fleet_id: str
    kind: FleetKind
    it_power: float  # W
    daily_energy: float  # kWh/day
    capacity: float  # GFLOPs
    usable_storage: float  # kWh
    battery_feasible: bool


def evaluate(fleet: FleetConfig, profile: OperatingProfile) -> EnergyReport:
    genesis = fleet.kind is FleetKind.GENESIS
    return EnergyReport(
        fleet_id=fleet.id,
        kind=fleet.kind,
        it_power=it_power(fleet, profile),
        daily_energy=daily_energy(fleet, profile),
        capacity=compute_capacity(fleet),
        usable_storage=usable_storage(fleet, profile) if genesis else 0.0,
        battery_feasible=battery_feasible(fleet, profile),
    )


def relative_delta(reference: EnergyReport, candidate: EnergyReport) -> tuple[float, float]:
    """Percentage change (energy, capacity) of ``candidate`` against ``reference``."""
    if reference.daily_energy <= 0 or reference.capacity <= 0:
        raise ZeroDivisionError(f"reference {reference.fleet_id} has zero energy or capacity")
    energy = 100.0 * (candidate.daily_energy - reference.daily_energy) / reference.daily_energy
    capacity = 100.0 * (candidate.capacity - reference.capacity) / reference.capacity
    return energy, capacity
