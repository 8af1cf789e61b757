import copy
import json

import pytest
from hypothesis import given, strategies as st

from precond import expr as ex
from precond.domains import BUILTIN, builtin_schema
from precond.schema import (
    SchemaError,
    action_groundings,
    load_schema,
    save_schema,
    schema_from_dict,
    schema_to_dict,
)
from support import random_schema


def test_restaurants_shape(restaurants):
    names = {v.name for v in restaurants.state_vars}
    assert names == {
        "informed_intent",
        "informed_slot",
        "requested_slot",
        "no_more",
        "selected",
        "affirmed",
        "affirm_intent",
        "negate_intent",
        "request_alternatives",
        "query_success",
    }
    assert len(restaurants.observations) == 12
    assert len(restaurants.actions) == 12
    assert restaurants.var("query_success").kind == "TriState"


def test_household_shape(household):
    kinds = {v.name: v.kind for v in household.state_vars}
    assert kinds == {"object_states": "PropMap", "inventory": "OptString", "visible_objects": "StringSet"}
    assert [f.short_name for f in household.actions] == [
        "goto",
        "open",
        "close",
        "take",
        "put",
        "clean",
        "heat",
        "cool",
        "toggle",
    ]


def test_ground_truth_rows(restaurants, buses, household):
    fr = restaurants.function("system.FindRestaurants").gt_precondition
    assert set(ex.conjuncts(fr)) == {
        ex.Lookup("informed_slot", (ex.Lit("city"),)),
        ex.Lookup("informed_slot", (ex.Lit("cuisine"),)),
        ex.Lookup("informed_intent", (ex.Lit("FindRestaurants"),)),
    }
    assert ex.render(buses.function("system.REQ_MORE").gt_precondition) == "selected or no_more"
    assert household.function("agent.goto").gt_precondition == ex.In(ex.Param("recep"), ex.Var("visible_objects"))


def test_actions_have_no_effects():
    for name in BUILTIN:
        for f in builtin_schema(name).actions:
            assert f.effects == ()


def test_groundings(restaurants, household):
    assert action_groundings(restaurants, restaurants.function("system.GOODBYE")) == [()]
    inform = restaurants.function("system.INFORM")
    assert len(action_groundings(restaurants, inform)) == len(restaurants.vocab("attribute"))
    take = household.function("agent.take")
    n = len(household.vocab(take.params[0].vocab)) * len(household.vocab(take.params[1].vocab))
    assert len(action_groundings(household, take)) == n
    with pytest.raises(ValueError):
        action_groundings(restaurants, restaurants.function("user.INFORM"))


def test_take_grounding_count_small():
    data = {
        "name": "tiny",
        "state_vars": [{"name": "visible", "kind": "StringSet"}],
        "vocabularies": {"obj": ["a 1", "b 1", "c 1"], "recep": ["r 1", "r 2", "r 3", "r 4"]},
        "functions": [
            {
                "name": "agent.take",
                "kind": "action",
                "params": [{"name": "obj", "vocab": "obj"}, {"name": "recep", "vocab": "recep"}],
            }
        ],
    }
    s = schema_from_dict(data)
    assert len(action_groundings(s, s.function("agent.take"))) == 12


def _restaurants_dict():
    return schema_to_dict(builtin_schema("restaurants"))


def test_zero_actions_rejected():
    d = _restaurants_dict()
    d["functions"] = [f for f in d["functions"] if f["kind"] != "action"]
    with pytest.raises(SchemaError, match="action"):
        schema_from_dict(d)


def test_duplicate_names_rejected():
    d = _restaurants_dict()
    d["functions"].append(copy.deepcopy(d["functions"][0]))
    with pytest.raises(SchemaError):
        schema_from_dict(d)


def test_unknown_vocab_rejected():
    d = _restaurants_dict()
    for f in d["functions"]:
        if f["name"] == "system.INFORM":
            f["params"][0]["vocab"] = "nope"
    with pytest.raises(SchemaError):
        schema_from_dict(d)


def test_gt_with_undeclared_symbol_rejected():
    d = _restaurants_dict()
    for f in d["functions"]:
        if f["name"] == "system.GOODBYE":
            f["gt_precondition"] = "self.user.no_such_flag"
    with pytest.raises(SchemaError):
        schema_from_dict(d)


def test_action_with_effects_rejected():
    d = _restaurants_dict()
    for f in d["functions"]:
        if f["name"] == "system.GOODBYE":
            f["effects"] = [{"target": "no_more", "op": "set_true"}]
    with pytest.raises(SchemaError):
        schema_from_dict(d)


@pytest.mark.parametrize("name", BUILTIN)
def test_round_trip_builtin(name, tmp_path):
    s = builtin_schema(name)
    save_schema(s, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json") == s
    assert json.loads((tmp_path / "s.json").read_text())["name"] == name


@given(st.randoms(use_true_random=False))
def test_round_trip_random(rng):
    s = random_schema(rng)
    assert schema_from_dict(json.loads(json.dumps(schema_to_dict(s)))) == s


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin_schema("airline")
