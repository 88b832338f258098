import json
from dataclasses import asdict, replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from minidc.accounting import (
    CostModel,
    UndefinedMetricError,
    carbon_efficiency,
    cost_efficiency,
    daily_emissions,
    efficiency_matrix,
    energy_efficiency,
    total_cost,
)
from minidc.catalog import FleetConfig, FleetKind, ModuleSpec, OperatingProfile, load_catalog

CAT = load_catalog()
PROFILE = CAT.profile
F = {f.id: f for f in CAT.fleets}
LOC = {loc.city: loc for loc in CAT.locations}
CONVENTIONAL = [f for f in CAT.fleets if f.kind is FleetKind.CONVENTIONAL]
GENESIS = [f for f in CAT.fleets if f.kind is FleetKind.GENESIS]


def test_energy_efficiency_values():
    # 460.35 GFLOPs x 10 h / 3477.5 Wh
    assert energy_efficiency(F["C1"], PROFILE) == pytest.approx(4603.5 / 3477.5, rel=1e-12)
    assert energy_efficiency(F["C1"], PROFILE) == pytest.approx(1.3238, abs=1e-4)
    # 390.24 x 10 / 12198 Wh
    assert energy_efficiency(F["C_ref"], PROFILE) == pytest.approx(0.320, abs=1e-3)


def test_energy_efficiency_ordering():
    ranked = sorted(CAT.fleets, key=lambda f: energy_efficiency(f, PROFILE), reverse=True)
    assert [f.id for f in ranked[:2]] == ["C1", "C2"]


def test_energy_efficiency_undefined_at_zero_duty():
    with pytest.raises(UndefinedMetricError):
        energy_efficiency(F["C1"], replace(PROFILE, duty_hours=0))


def test_daily_emissions_examples():
    assert daily_emissions(F["C2"], PROFILE, LOC["Dubai"]) == pytest.approx(4.25 * 44)
    assert daily_emissions(F["C2"], PROFILE, LOC["Paris"]) == pytest.approx(187.0)
    assert daily_emissions(F["C1"], PROFILE, LOC["Paris"]) == pytest.approx(182.5, abs=1)
    assert daily_emissions(F["C0"], replace(PROFILE, duty_hours=0), LOC["Paris"]) == 0


def test_carbon_paris_c1_slightly_ahead_of_c2():
    c1 = carbon_efficiency(F["C1"], PROFILE, LOC["Paris"])
    c2 = carbon_efficiency(F["C2"], PROFILE, LOC["Paris"])
    assert c1 == pytest.approx(2.52, abs=0.005)
    assert c2 == pytest.approx(2.46, abs=0.005)
    assert 1 < c1 / c2 < 1.05


@pytest.mark.parametrize("city", ["Johannesburg", "Dubai", "Virginia"])
def test_genesis_beats_conventional_on_carbon(city):
    loc = LOC[city]
    worst_genesis = min(carbon_efficiency(f, PROFILE, loc) for f in GENESIS)
    best_conventional = max(carbon_efficiency(f, PROFILE, loc) for f in CONVENTIONAL)
    assert worst_genesis > best_conventional


def test_doubling_solar_factor_halves_genesis_carbon_eff():
    loc = LOC["Virginia"]
    doubled = replace(loc, solar_emissions=2 * loc.solar_emissions)
    for f in GENESIS:
        assert carbon_efficiency(f, PROFILE, doubled) == pytest.approx(carbon_efficiency(f, PROFILE, loc) / 2)


def test_carbon_undefined_when_no_emissions():
    with pytest.raises(UndefinedMetricError):
        carbon_efficiency(F["C1"], replace(PROFILE, duty_hours=0), LOC["Paris"])


def test_total_cost_examples():
    cm = CostModel(horizon_days=1095)
    assert total_cost(F["C2"], PROFILE, LOC["Paris"], cm) == pytest.approx(1439.00, abs=1e-9)
    assert total_cost(F["C1"], PROFILE, LOC["Paris"], cm) == pytest.approx(2238, abs=1)
    assert total_cost(F["C1"], PROFILE, LOC["Paris"], cm) == pytest.approx(1439 + 3.4775 * 1095 * 0.21)
    one_day = CostModel(horizon_days=1, include_acquisition=False)
    assert total_cost(F["C0"], PROFILE, LOC["Dubai"], one_day) == pytest.approx(10.7856 * 0.8)
    with pytest.raises(ValueError):
        CostModel(horizon_days=0)


def test_reused_servers_are_free():
    # C3, C4 only buy the five new i7-8700; C5 buys four
    for fid, cost in [("C3", 1439.0), ("C4", 1439.0), ("C5", 4 * 287.80)]:
        assert total_cost(F[fid], PROFILE, LOC["Paris"]) == pytest.approx(cost)


def test_battery_and_panel_prices_counted():
    m = F["C2"].modules[0]
    priced = replace(m, battery=replace(m.battery, price=100.0), panels=replace(m.panels, price=50.0))
    fleet = FleetConfig("p", FleetKind.GENESIS, (priced,) * 5)
    assert total_cost(fleet, PROFILE, LOC["Paris"]) == pytest.approx(1439 + 5 * 150)


@pytest.mark.parametrize("city", ["Johannesburg", "Dubai", "Virginia", "Paris"])
def test_genesis_more_cost_effective(city):
    loc = LOC[city]
    worst_genesis = min(cost_efficiency(f, PROFILE, loc) for f in GENESIS)
    best_conventional = max(cost_efficiency(f, PROFILE, loc) for f in CONVENTIONAL)
    assert worst_genesis > best_conventional


def test_c3_more_cost_effective_than_c4():
    paris = LOC["Paris"]
    assert cost_efficiency(F["C3"], PROFILE, paris) == pytest.approx(744.48 / 1439)
    assert cost_efficiency(F["C4"], PROFILE, paris) == pytest.approx(523.49 / 1439)
    assert cost_efficiency(F["C3"], PROFILE, paris) > cost_efficiency(F["C4"], PROFILE, paris)


def test_cost_undefined_when_free():
    cm = CostModel(horizon_days=1, include_acquisition=False)
    with pytest.raises(UndefinedMetricError):
        cost_efficiency(F["C2"], PROFILE, LOC["Paris"], cm)


def _scaled_catalog(k):
    from minidc.catalog import serialize, load_catalog as load

    doc = serialize(CAT)
    for p in doc["processors"]:
        p["price"] *= k
    for loc in doc["locations"]:
        loc["grid_price"] *= k
    return load(doc)


@given(st.floats(0.01, 100))
def test_price_scaling(k):
    scaled = _scaled_catalog(k)
    cm = CostModel(solar_energy_price=0.05)
    cm_k = CostModel(solar_energy_price=0.05 * k)
    for city in LOC:
        base = {f.id: total_cost(f, PROFILE, CAT.location(city), cm) for f in CAT.fleets}
        new = {f.id: total_cost(f, PROFILE, scaled.location(city), cm_k) for f in scaled.fleets}
        for fid in base:
            assert new[fid] == pytest.approx(k * base[fid], rel=1e-9)
        best = max(CAT.fleets, key=lambda f: cost_efficiency(f, PROFILE, CAT.location(city), cm)).id
        best_k = max(scaled.fleets, key=lambda f: cost_efficiency(f, PROFILE, scaled.location(city), cm_k)).id
        assert best == best_k


def test_efficiency_matrix_shape_and_order():
    records = efficiency_matrix(CAT.fleets, PROFILE, CAT.locations)
    assert len(records) == 28
    keys = [(r.city, r.config_id) for r in records]
    assert keys == sorted(keys)
    by = {(r.config_id, r.city): r for r in records}
    assert by[("C2", "Dubai")].carbon_eff == by[("C2", "Paris")].carbon_eff


def test_efficiency_matrix_deterministic():
    a = efficiency_matrix(CAT.fleets, PROFILE, CAT.locations)
    b = efficiency_matrix(list(reversed(CAT.fleets)), PROFILE, list(reversed(CAT.locations)))
    dump = lambda rs: json.dumps([asdict(r) for r in rs])
    assert dump(a) == dump(b)


def test_efficiency_matrix_needs_input():
    with pytest.raises(ValueError):
        efficiency_matrix([], PROFILE, CAT.locations)


def test_genesis_carbon_location_independent():
    for f in GENESIS:
        values = {carbon_efficiency(f, PROFILE, loc) for loc in CAT.locations}
        assert len(values) == 1


@pytest.mark.parametrize("proc", [p.name for p in CAT.processors])
def test_single_server_efficiency_matches_table(proc):
    from tests.test_catalog import PUBLISHED_EFFICIENCY

    fleet = FleetConfig("s", FleetKind.CONVENTIONAL, (ModuleSpec(CAT.processor(proc)),))
    prof = OperatingProfile(duty_hours=10, cooling_fraction=0.0)
    assert energy_efficiency(fleet, prof) == pytest.approx(PUBLISHED_EFFICIENCY[proc], abs=1e-3)


@given(st.floats(0.1, 1e4), st.floats(0.1, 1e4))
def test_metrics_decrease_in_denominator(a, b):
    # capacity fixed: larger emissions factor -> lower carbon efficiency
    lo, hi = sorted((a, b))
    loc_lo = replace(LOC["Paris"], grid_emissions=lo)
    loc_hi = replace(LOC["Paris"], grid_emissions=hi)
    e_lo = carbon_efficiency(F["C1"], PROFILE, loc_lo)
    e_hi = carbon_efficiency(F["C1"], PROFILE, loc_hi)
    assert e_lo >= e_hi
    if hi > lo:
        assert e_lo > e_hi
