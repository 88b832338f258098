"""Hardware and location data model, plus the bundled default catalog.

Catalog documents are JSON with four top-level keys: ``processors``,
``fleets``, ``locations`` and ``profile``. Fleet modules may carry a
``count`` field which expands into that many identical modules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

DEFAULT_USABLE_FRACTION = 0.85
DEFAULT_PANEL_WATTS = 300.0
SOLAR_EMISSIONS = 44.0  # gCO2/kWh


class CatalogError(Exception):
    """Base class for catalog loading problems."""


class SchemaError(CatalogError):
    """Document does not match the catalog schema."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(CatalogError, ValueError):
    """A value violates a domain invariant."""


class FleetKind(str, Enum):
    CONVENTIONAL = "Conventional"
    GENESIS = "Genesis"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class ProcessorModel:
    name: str
    release_year: int
    tdp: float  # W
    perf: float  # GFLOPs
    price: float = 0.0  # USD

    def __post_init__(self):
        _require(_finite(self.tdp, self.perf, self.price), f"{self.name}: non-finite value")
        _require(self.tdp > 0, f"{self.name}: tdp must be > 0, got {self.tdp}")
        _require(self.perf >= 0, f"{self.name}: perf must be >= 0, got {self.perf}")
        _require(self.price >= 0, f"{self.name}: price must be >= 0, got {self.price}")


def derived_efficiency(p: ProcessorModel) -> float:
    """GFLOPs per watt at full TDP."""
    return p.perf / p.tdp


@dataclass(frozen=True)
class BatterySpec:
    capacity: float  # kWh
    usable_fraction: float = DEFAULT_USABLE_FRACTION
    price: float = 0.0

    def __post_init__(self):
        _require(_finite(self.capacity, self.usable_fraction, self.price), "battery: non-finite value")
        _require(self.capacity >= 0, f"battery capacity must be >= 0, got {self.capacity}")
        _require(
            0 < self.usable_fraction <= 1,
            f"battery usable_fraction must be in (0, 1], got {self.usable_fraction}",
        )
        _require(self.price >= 0, f"battery price must be >= 0, got {self.price}")

    @property
    def usable(self) -> float:
        return self.capacity * self.usable_fraction


@dataclass(frozen=True)
class PanelSpec:
    peak_power: float = DEFAULT_PANEL_WATTS
    count: int = 0
    price: float = 0.0  # per panel

    def __post_init__(self):
        _require(_finite(self.peak_power, self.price), "panels: non-finite value")
        _require(self.count >= 0, f"panel count must be >= 0, got {self.count}")
        _require(
            self.count == 0 or self.peak_power > 0,
            f"panel peak_power must be > 0 when count > 0, got {self.peak_power}",
        )
        _require(self.price >= 0, f"panel price must be >= 0, got {self.price}")


NO_PANELS = PanelSpec(count=0)


@dataclass(frozen=True)
class ModuleSpec:
    server: ProcessorModel
    battery: BatterySpec | None = None
    panels: PanelSpec = NO_PANELS
    reused: bool = False

    @property
    def is_genesis(self) -> bool:
        return self.battery is not None


@dataclass(frozen=True)
class FleetConfig:
    id: str
    kind: FleetKind
    modules: tuple[ModuleSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", FleetKind(self.kind))
        object.__setattr__(self, "modules", tuple(self.modules))
        _require(len(self.modules) > 0, f"fleet {self.id}: must contain at least one module")
        for i, m in enumerate(self.modules):
            if self.kind is FleetKind.GENESIS:
                _require(m.battery is not None, f"fleet {self.id}: Genesis module {i} has no battery")
            else:
                _require(
                    m.battery is None and m.panels.count == 0,
                    f"fleet {self.id}: conventional module {i} must not carry battery or panels",
                )

    def __len__(self) -> int:
        return len(self.modules)


@dataclass(frozen=True)
class OperatingProfile:
    duty_hours: float = 10.0
    cooling_fraction: float = 0.07
    overhead_watts: float = 20.0
    usable_fraction_override: float | None = None

    def __post_init__(self):
        _require(_finite(self.duty_hours, self.cooling_fraction, self.overhead_watts), "profile: non-finite value")
        _require(0 <= self.duty_hours <= 24, f"duty_hours must be in [0, 24], got {self.duty_hours}")
        _require(self.cooling_fraction >= 0, f"cooling_fraction must be >= 0, got {self.cooling_fraction}")
        _require(self.overhead_watts >= 0, f"overhead_watts must be >= 0, got {self.overhead_watts}")
        if self.usable_fraction_override is not None:
            _require(
                0 < self.usable_fraction_override <= 1,
                f"usable_fraction_override must be in (0, 1], got {self.usable_fraction_override}",
            )

    def usable_fraction(self, battery: BatterySpec) -> float:
        if self.usable_fraction_override is not None:
            return self.usable_fraction_override
        return battery.usable_fraction


@dataclass(frozen=True)
class LocationProfile:
    city: str
    grid_emissions: float  # gCO2/kWh
    grid_price: float  # USD/kWh
    solar_emissions: float = SOLAR_EMISSIONS

    def __post_init__(self):
        vals = (self.grid_emissions, self.grid_price, self.solar_emissions)
        _require(_finite(*vals), f"{self.city}: non-finite value")
        _require(all(v >= 0 for v in vals), f"{self.city}: emissions and price must be >= 0")


@dataclass(frozen=True)
class Catalog:
    processors: tuple[ProcessorModel, ...] = ()
    fleets: tuple[FleetConfig, ...] = ()
    locations: tuple[LocationProfile, ...] = ()
    profile: OperatingProfile = field(default_factory=OperatingProfile)

    def processor(self, name: str) -> ProcessorModel:
        for p in self.processors:
            if p.name == name:
                return p
        raise KeyError(f"unknown processor {name!r}")

    def fleet(self, fleet_id: str) -> FleetConfig:
        for f in self.fleets:
            if f.id == fleet_id:
                return f
        raise KeyError(f"unknown fleet {fleet_id!r}")

    def location(self, city: str) -> LocationProfile:
        for loc in self.locations:
            if loc.city == city:
                return loc
        raise KeyError(f"unknown city {city!r}")

    def with_profile(self, **overrides: Any) -> Catalog:
        return replace(self, profile=replace(self.profile, **overrides))


_NUM = {"type": "number"}
_NONNEG_INT = {"type": "integer", "minimum": 0}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "processors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "tdp", "perf"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "release_year": {"type": "integer"},
                    "tdp": _NUM,
                    "perf": _NUM,
                    "price": _NUM,
                },
            },
        },
        "fleets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "modules"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {"enum": [k.value for k in FleetKind]},
                    "modules": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["server"],
                            "additionalProperties": False,
                            "properties": {
                                "server": {"type": "string"},
                                "count": {"type": "integer", "minimum": 1},
                                "reused": {"type": "boolean"},
                                "battery": {
                                    "type": ["object", "null"],
                                    "required": ["capacity"],
                                    "additionalProperties": False,
                                    "properties": {
                                        "capacity": _NUM,
                                        "usable_fraction": _NUM,
                                        "price": _NUM,
                                    },
                                },
                                "panels": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "properties": {
                                        "peak_power": _NUM,
                                        "count": _NONNEG_INT,
                                        "price": _NUM,
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "locations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["city", "grid_emissions", "grid_price"],
                "additionalProperties": False,
                "properties": {
                    "city": {"type": "string", "minLength": 1},
                    "grid_emissions": _NUM,
                    "grid_price": _NUM,
                    "solar_emissions": _NUM,
                },
            },
        },
        "profile": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "duty_hours": _NUM,
                "cooling_fraction": _NUM,
                "overhead_watts": _NUM,
                "usable_fraction_override": {"type": ["number", "null"]},
            },
        },
    },
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_document(doc: Any) -> None:
    """Raise SchemaError for the first (deepest) schema violation in ``doc``."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise SchemaError(error.message, _json_path(error.absolute_path))


def _parse_module(raw: Mapping[str, Any], processors: Mapping[str, ProcessorModel], path: str) -> list[ModuleSpec]:
    name = raw["server"]
    if name not in processors:
        raise SchemaError(f"unknown processor {name!r}", f"{path}.server")
    battery = None
    if raw.get("battery") is not None:
        battery = BatterySpec(**raw["battery"])
    panels = PanelSpec(**raw["panels"]) if "panels" in raw else NO_PANELS
    module = ModuleSpec(
        server=processors[name],
        battery=battery,
        panels=panels,
        reused=raw.get("reused", False),
    )
    return [module] * raw.get("count", 1)


def parse_document(doc: Mapping[str, Any]) -> Catalog:
    validate_document(doc)
    processors = tuple(ProcessorModel(**{"release_year": 0, **p}) for p in doc.get("processors", []))
    by_name = {p.name: p for p in processors}
    if len(by_name) != len(processors):
        raise ValidationError("duplicate processor names")

    fleets = []
    for i, f in enumerate(doc.get("fleets", [])):
        modules: list[ModuleSpec] = []
        for j, m in enumerate(f["modules"]):
            modules.extend(_parse_module(m, by_name, f"$.fleets[{i}].modules[{j}]"))
        fleets.append(FleetConfig(id=f["id"], kind=FleetKind(f["kind"]), modules=tuple(modules)))
    if len({f.id for f in fleets}) != len(fleets):
        raise ValidationError("duplicate fleet ids")

    locations = tuple(LocationProfile(**loc) for loc in doc.get("locations", []))
    if len({loc.city for loc in locations}) != len(locations):
        raise ValidationError("duplicate location names")

    profile = OperatingProfile(**doc.get("profile", {}))
    return Catalog(processors, tuple(fleets), locations, profile)


def load_catalog(source: str | Path | Mapping[str, Any] = "builtin") -> Catalog:
    """Load a catalog from ``"builtin"``, a JSON file path, or a parsed document.

    Raises SchemaError for malformed documents and ValidationError when a
    value breaks a domain invariant (negative TDP, empty fleet, ...).
    """
    if isinstance(source, Mapping):
        return parse_document(source)
    if str(source) == "builtin":
        text = resources.files("minidc").joinpath("data/builtin.json").read_text()
    else:
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return parse_document(doc)


def _battery_doc(b: BatterySpec) -> dict[str, Any]:
    out: dict[str, Any] = {"capacity": b.capacity, "usable_fraction": b.usable_fraction}
    if b.price:
        out["price"] = b.price
    return out


def _module_doc(m: ModuleSpec, count: int) -> dict[str, Any]:
    out: dict[str, Any] = {"server": m.server.name, "count": count}
    if m.battery is not None:
        out["battery"] = _battery_doc(m.battery)
    if m.panels != NO_PANELS:
        out["panels"] = {"peak_power": m.panels.peak_power, "count": m.panels.count}
        if m.panels.price:
            out["panels"]["price"] = m.panels.price
    if m.reused:
        out["reused"] = True
    return out


def processor_doc(p: ProcessorModel) -> dict[str, Any]:
    return {"name": p.name, "release_year": p.release_year, "tdp": p.tdp, "perf": p.perf, "price": p.price}


def fleet_doc(fleet: FleetConfig) -> dict[str, Any]:
    """Serialize a fleet, run-length encoding consecutive identical modules."""
    groups: list[list] = []
    for m in fleet.modules:
        if groups and groups[-1][0] == m:
            groups[-1][1] += 1
        else:
            groups.append([m, 1])
    return {
        "id": fleet.id,
        "kind": fleet.kind.value,
        "modules": [_module_doc(m, n) for m, n in groups],
    }


def profile_doc(profile: OperatingProfile) -> dict[str, Any]:
    return {
        "duty_hours": profile.duty_hours,
        "cooling_fraction": profile.cooling_fraction,
        "overhead_watts": profile.overhead_watts,
        "usable_fraction_override": profile.usable_fraction_override,
    }


def serialize(catalog: Catalog) -> dict[str, Any]:
    return {
        "processors": [processor_doc(p) for p in catalog.processors],
        "fleets": [fleet_doc(f) for f in catalog.fleets],
        "locations": [
            {
                "city": loc.city,
                "grid_emissions": loc.grid_emissions,
                "grid_price": loc.grid_price,
                "solar_emissions": loc.solar_emissions,
            }
            for loc in catalog.locations
        ],
        "profile": profile_doc(catalog.profile),
    }
