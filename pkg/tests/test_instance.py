import json

import pytest

from rauc.instance import (
    InstanceError,
    dumps,
    instance_from_dict,
    load_bundled,
    loads,
    validate_instance,
)


def test_bundled_shape(fleet):
    assert fleet.n_generators == 10
    assert fleet.horizon_T == 24
    assert fleet.scenario_spec.branch_periods == (7, 13, 19)
    assert fleet.scenario_spec.branch_probs == (0.5, 0.5)


def test_bundled_demand_sums(fleet):
    d = fleet.demand.base_demand
    assert sum(d) == 27100
    assert sum(d[:6]) == 5350
    assert sum(d[6:]) == 21750
    assert d[6] == 1150


def test_bundled_fleet_capacity(fleet):
    assert sum(g.q_max for g in fleet.generators) == pytest.approx(2493.0)


def test_generator_three_row(fleet):
    g = fleet.generators[2]
    assert (g.fixed_cost_a, g.prod_cost_b, g.prod_cost_c) == (700, 16.6, 0.002)
    assert (g.q_min, g.q_max, g.min_up_M, g.startup_cost_SU) == (30, 195, 5, 550)


def test_bundled_validates_clean(fleet):
    rep = validate_instance(fleet)
    assert rep.ok
    assert len(rep) == 0
    assert str(rep).startswith("0 violations")


def test_round_trip(fleet):
    again = loads(dumps(fleet))
    assert again == fleet
    assert again.fingerprint() == fleet.fingerprint()


def test_missing_initial_state_means_all_off(fleet_doc):
    doc = dict(fleet_doc)
    doc.pop("initial_state", None)
    inst = instance_from_dict(doc)
    assert not any(inst.initial_state.on)
    assert all(x == 0 for x in inst.initial_state.output)
    for i, g in enumerate(inst.generators):
        assert inst.initial_state.forced_on_periods(g, i) == 0
        assert inst.initial_state.forced_off_periods(g, i) == 0


def test_q_min_above_q_max_is_schema_error(fleet_doc):
    doc = json.loads(json.dumps(fleet_doc))
    doc["generators"][3]["q_min"] = 500
    with pytest.raises(InstanceError, match="q_min"):
        instance_from_dict(doc)


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda d: d.pop("horizon"), "horizon"),
        (lambda d: d["generators"][0].pop("SU"), "SU"),
        (lambda d: d["generators"][0].__setitem__("b", -1.0), "nonnegative"),
        (lambda d: d["generators"][0].__setitem__("M", 2.5), "integer"),
        (lambda d: d["base_demand"].pop(), "length"),
        (lambda d: d["base_demand"].__setitem__(0, "x"), "base_demand"),
    ],
)
def test_schema_errors(fleet_doc, mutate, needle):
    doc = json.loads(json.dumps(fleet_doc))
    mutate(doc)
    with pytest.raises(InstanceError, match=needle):
        instance_from_dict(doc)


def test_parse_error():
    with pytest.raises(InstanceError, match="parse error"):
        loads("{not json")


def test_startup_rate_below_q_min_reported_once(fleet_doc):
    doc = json.loads(json.dumps(fleet_doc))
    doc["generators"][4]["V_prime"] = 10.0
    rep = validate_instance(instance_from_dict(doc))
    assert len(rep.errors) == 1
    assert "generator 5" in rep.errors[0]


def test_capacity_shortfall_warning(fleet):
    # 1.6 * 1600 = 2560 MW against 2493 MW of capacity
    base = list(fleet.demand.base_demand)
    base[11] = 1600
    inst = fleet.with_demand(base).with_epsilon(0.6)
    rep = validate_instance(inst)
    assert rep.ok
    assert any("capacity shortfall" in w for w in rep.warnings)


def test_no_shortfall_at_fleet_demand(fleet):
    # peak 1500 MW scaled by 1.6 is 2400 MW, inside the fleet
    assert not validate_instance(fleet.with_epsilon(0.6)).warnings


def test_initial_output_must_match_status(fleet_doc):
    doc = json.loads(json.dumps(fleet_doc))
    doc["initial_state"] = {"on": [False] * 10, "output": [5.0] + [0.0] * 9}
    rep = validate_instance(instance_from_dict(doc))
    assert any("while off" in e for e in rep.errors)


def test_branch_periods_must_increase(fleet_doc):
    doc = json.loads(json.dumps(fleet_doc))
    doc["scenario"]["branch_periods"] = [13, 7]
    rep = validate_instance(instance_from_dict(doc))
    assert any("strictly increasing" in e for e in rep.errors)


def test_bundled_loader_is_stable():
    assert load_bundled() == load_bundled()
