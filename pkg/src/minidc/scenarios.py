"""Simulation scenarios: JSON documents describing a Genesis fleet run."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .catalog import (
    BatterySpec,
    FleetConfig,
    FleetKind,
    ModuleSpec,
    PanelSpec,
    ProcessorModel,
    SchemaError,
    _json_path,
)
from .simulator import (
    DEFAULT_DT,
    ExchangePolicy,
    HarvestModel,
    NodePowerModel,
    Schedule,
    SimTrace,
    calibrate_harvest,
    calibrate_node_power,
    run,
)

_NUM = {"type": "number"}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["duration", "modules", "schedule"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "duration": _NUM,
        "dt": _NUM,
        "initial_soc": {"type": "array", "items": _NUM},
        "modules": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["battery", "power"],
                "additionalProperties": False,
                "properties": {
                    "server": {
                        "type": "object",
                        "required": ["name", "tdp"],
                        "properties": {"name": {"type": "string"}, "tdp": _NUM, "perf": _NUM, "price": _NUM},
                        "additionalProperties": False,
                    },
                    "battery": {
                        "type": "object",
                        "required": ["capacity"],
                        "properties": {"capacity": _NUM, "usable_fraction": _NUM, "price": _NUM},
                        "additionalProperties": False,
                    },
                    "panels": {
                        "type": "object",
                        "properties": {"peak_power": _NUM, "count": {"type": "integer", "minimum": 0}},
                        "additionalProperties": False,
                    },
                    "power": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "draw_full": _NUM,
                            "draw_half": _NUM,
                            "idle": _NUM,
                            "overhead": _NUM,
                            "runtime_full": _NUM,
                            "runtime_half": _NUM,
                        },
                    },
                    "count": {"type": "integer", "minimum": 1},
                },
            },
        },
        "harvest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shape": {"enum": ["constant", "half-sine-day"]},
                "mean_harvest": _NUM,
                "fill_time": _NUM,
                "sunrise": _NUM,
                "daylight": _NUM,
            },
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["none", "energy-balance", "workload-migrate"]},
                "transfer_efficiency": _NUM,
                "low_water": _NUM,
                "high_water": _NUM,
                "transfer_cap": _NUM,
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "interval": _NUM,
                "levels": {"type": "array", "items": {"type": "array", "items": _NUM}},
                "constant": {"type": "array", "items": _NUM},
            },
        },
    },
}

_GENERIC_SERVER = {"name": "node", "tdp": 1.0}


@dataclass(frozen=True)
class Scenario:
    name: str
    fleet: FleetConfig
    power_models: tuple[NodePowerModel, ...]
    harvest: HarvestModel
    policy: ExchangePolicy
    schedule: Schedule
    duration: float
    dt: float = DEFAULT_DT
    initial_soc: tuple[float, ...] | None = None

    def run(self) -> SimTrace:
        return run(
            self.fleet,
            self.power_models,
            self.harvest,
            self.policy,
            self.schedule,
            self.duration,
            self.dt,
            initial_soc=self.initial_soc,
        )


def _power_model(raw: Mapping[str, Any], battery: BatterySpec) -> NodePowerModel:
    raw = dict(raw)
    if "runtime_full" in raw:
        raw["draw_full"] = calibrate_node_power(battery, raw.pop("runtime_full"))
    if "runtime_half" in raw:
        raw["draw_half"] = calibrate_node_power(battery, raw.pop("runtime_half"))
    if "draw_full" not in raw or "draw_half" not in raw:
        raise SchemaError("power needs draw_full/draw_half or runtime_full/runtime_half", "$.modules[].power")
    return NodePowerModel(**raw)


def parse_scenario(doc: Mapping[str, Any]) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise SchemaError(error.message, _json_path(error.absolute_path))

    modules: list[ModuleSpec] = []
    models: list[NodePowerModel] = []
    for raw in doc["modules"]:
        battery = BatterySpec(**raw["battery"])
        server = ProcessorModel(**{"release_year": 0, "perf": 0.0, **raw.get("server", _GENERIC_SERVER)})
        panels = PanelSpec(**raw.get("panels", {"count": 1}))
        model = _power_model(raw["power"], battery)
        n = raw.get("count", 1)
        modules.extend([ModuleSpec(server=server, battery=battery, panels=panels)] * n)
        models.extend([model] * n)
    name = doc.get("name", "scenario")
    fleet = FleetConfig(id=name, kind=FleetKind.GENESIS, modules=tuple(modules))

    harvest_doc = dict(doc.get("harvest", {}))
    if "fill_time" in harvest_doc:
        first = modules[0]
        harvest = calibrate_harvest(
            first.battery,
            harvest_doc.pop("fill_time"),
            PanelSpec(peak_power=first.panels.peak_power, count=1),
            shape=harvest_doc.pop("shape", "constant"),
            **harvest_doc,
        )
    else:
        harvest = HarvestModel(**harvest_doc)

    duration = float(doc["duration"])
    sched = doc["schedule"]
    interval = float(sched.get("interval", duration))
    if "levels" in sched:
        schedule = Schedule(interval, sched["levels"])
    elif "constant" in sched:
        schedule = Schedule.constant(sched["constant"], duration, interval)
    else:
        raise SchemaError("schedule needs 'levels' or 'constant'", "$.schedule")

    initial = doc.get("initial_soc")
    return Scenario(
        name=name,
        fleet=fleet,
        power_models=tuple(models),
        harvest=harvest,
        policy=ExchangePolicy(**doc.get("policy", {})),
        schedule=schedule,
        duration=duration,
        dt=float(doc.get("dt", DEFAULT_DT)),
        initial_soc=tuple(initial) if initial is not None else None,
    )


def bundled_scenarios() -> list[str]:
    folder = resources.files("minidc").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_scenario(source: str | Path | Mapping[str, Any]) -> Scenario:
    """Load a bundled scenario by name, a JSON file, or a parsed document."""
    if isinstance(source, Mapping):
        return parse_scenario(source)
    if str(source) in bundled_scenarios():
        text = resources.files("minidc").joinpath(f"data/scenarios/{source}.json").read_text()
    else:
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return parse_scenario(doc)
