"""Energy, carbon and cost efficiency of fleets at a given location.

All three metrics are compute capacity (GFLOPs) divided by a consumption
figure: average drawn power, daily emissions, or total cost of ownership
over a horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .catalog import FleetConfig, FleetKind, LocationProfile, OperatingProfile
from .energy_model import compute_capacity, daily_energy


class UndefinedMetricError(ArithmeticError):
    """The metric's denominator is zero."""


@dataclass(frozen=True)
class CostModel:
    horizon_days: int = 1095
    include_acquisition: bool = True
    solar_energy_price: float = 0.0  # USD/kWh

    def __post_init__(self):
        if self.horizon_days < 1:
            raise ValueError(f"horizon_days must be >= 1, got {self.horizon_days}")
        if self.solar_energy_price < 0:
            raise ValueError("solar_energy_price must be >= 0")


@dataclass(frozen=True)
class EfficiencyRecord:
    config_id: str
    city: str
    capacity: float
    daily_energy: float
    energy_eff: float  # GFLOPs/W
    carbon_eff: float  # GFLOPs per gCO2/day
    cost_eff: float  # GFLOPs/USD
    daily_emissions: float  # gCO2/day
    total_cost: float  # USD


def energy_efficiency(fleet: FleetConfig, profile: OperatingProfile) -> float:
    energy_kwh = daily_energy(fleet, profile)
    if energy_kwh <= 0:
        raise UndefinedMetricError(f"{fleet.id}: zero daily energy")
    # capacity over average power drawn while busy
    return compute_capacity(fleet) * profile.duty_hours / (energy_kwh * 1000.0)


def emission_factor(fleet: FleetConfig, location: LocationProfile) -> float:
    if fleet.kind is FleetKind.GENESIS:
        return location.solar_emissions
    return location.grid_emissions


def daily_emissions(fleet: FleetConfig, profile: OperatingProfile, location: LocationProfile) -> float:
    return daily_energy(fleet, profile) * emission_factor(fleet, location)


def carbon_efficiency(fleet: FleetConfig, profile: OperatingProfile, location: LocationProfile) -> float:
    emissions = daily_emissions(fleet, profile, location)
    if emissions <= 0:
        raise UndefinedMetricError(f"{fleet.id} in {location.city}: zero emissions")
    return compute_capacity(fleet) / emissions


def acquisition_cost(fleet: FleetConfig) -> float:
    """Purchase cost: new servers plus any priced batteries and panels."""
    total = []
    for m in fleet.modules:
        if not m.reused:
            total.append(m.server.price)
        if m.battery is not None:
            total.append(m.battery.price)
        total.append(m.panels.price * m.panels.count)
    return math.fsum(total)


def energy_price(fleet: FleetConfig, location: LocationProfile, cost_model: CostModel) -> float:
    if fleet.kind is FleetKind.GENESIS:
        return cost_model.solar_energy_price
    return location.grid_price


def total_cost(
    fleet: FleetConfig,
    profile: OperatingProfile,
    location: LocationProfile,
    cost_model: CostModel = CostModel(),
) -> float:
    cost = daily_energy(fleet, profile) * cost_model.horizon_days * energy_price(fleet, location, cost_model)
    if cost_model.include_acquisition:
        cost += acquisition_cost(fleet)
    return cost


def cost_efficiency(
    fleet: FleetConfig,
    profile: OperatingProfile,
    location: LocationProfile,
    cost_model: CostModel = CostModel(),
) -> float:
    cost = total_cost(fleet, profile, location, cost_model)
    if cost <= 0:
        raise UndefinedMetricError(f"{fleet.id} in {location.city}: zero cost")
    return compute_capacity(fleet) / cost


def evaluate_record(
    fleet: FleetConfig,
    profile: OperatingProfile,
    location: LocationProfile,
    cost_model: CostModel = CostModel(),
) -> EfficiencyRecord:
    return EfficiencyRecord(
        config_id=fleet.id,
        city=location.city,
        capacity=compute_capacity(fleet),
        daily_energy=daily_energy(fleet, profile),
        energy_eff=energy_efficiency(fleet, profile),
        carbon_eff=carbon_efficiency(fleet, profile, location),
        cost_eff=cost_efficiency(fleet, profile, location, cost_model),
        daily_emissions=daily_emissions(fleet, profile, location),
        total_cost=total_cost(fleet, profile, location, cost_model),
    )


def efficiency_matrix(
    fleets: Iterable[FleetConfig],
    profile: OperatingProfile,
    locations: Iterable[LocationProfile],
    cost_model: CostModel = CostModel(),
) -> list[EfficiencyRecord]:
    """One record per (fleet, city), ordered by (city, config_id)."""
    fleets = list(fleets)
    locations = list(locations)
    if not fleets or not locations:
        raise ValueError("efficiency_matrix needs at least one fleet and one location")
    records = [evaluate_record(f, profile, loc, cost_model) for loc in locations for f in fleets]
    return sorted(records, key=lambda r: (r.city, r.config_id))
