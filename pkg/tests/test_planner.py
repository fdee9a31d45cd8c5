from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import pytest

from r2xsim.catalog import ALL_SKILLS, ActionKind
from r2xsim.planner import (
    ActionNode,
    Endpoint,
    NoFeasibleAction,
    PlanGraph,
    SchemaError,
    Task,
    TransportError,
    baseline_plan,
    build_prompt,
    external_plan,
    validate_plan,
)
from r2xsim.state import AreaState, ObjectState, Predicate, RobotState, SemanticState, serialize_state

from .oracles import dfs_has_cycle
from .test_world import pi

STUB = str(Path(__file__).with_name("stub_planner.py"))


def fleet(**skills) -> dict:
    out = {"r1": RobotState("r1", (0, 0), skills=ALL_SKILLS), "r2": RobotState("r2", (9, 9), skills=ALL_SKILLS)}
    for rid, s in skills.items():
        out[rid] = RobotState(rid, (5, 5), skills=frozenset(s))
    return out


def o(oid, typ, p, rec=None, room="kitchen", **bits) -> ObjectState:
    return ObjectState(oid, typ, p, rec, pi(**bits), room, "scenario", 0)


def belief(objects=(), observed=None) -> SemanticState:
    areas = {
        "kitchen": AreaState("kitchen", "kitchen", ((0, 0, 4, 4),)),
        "living": AreaState("living", "living", ((5, 0, 9, 4),)),
        "office": AreaState("office", "office", ((0, 5, 9, 9),)),
    }
    if observed:
        for aid in observed:
            areas[aid] = AreaState(aid, aid, areas[aid].bounds, frozenset(areas[aid].cells))
    return SemanticState(fleet(), {x.id: x for x in objects}, areas, 0)


def test_satisfied_goal_gives_empty_plan():
    s = belief([o("tv1", "TV", (1, 1))])
    task = Task("tv off", (Predicate("PropertyIs", "tv1", prop="isToggled", value=0),))
    assert baseline_plan(task, s, s.robots).nodes == {}


def test_open_cabinet_before_fetch_chain():
    s = belief([o("cab", "Cabinet", (1, 1)), o("apple", "Apple", (1, 1), rec="cab"), o("fridge", "Fridge", (4, 4))])
    task = Task("apple to fridge", (Predicate("ObjectInReceptacle", "apple", "fridge"),))
    plan = baseline_plan(task, s, s.robots)
    assert [(n.a, n.params) for _, n in sorted(plan.nodes.items())] == [
        ("open_close", {"object": "cab", "state": "open"}),
        ("fetch_and_place", {"object": "apple", "receptacle": "fridge"}),
    ]
    assert plan.edges == {("n000", "n001")}
    assert validate_plan(plan, s.robots, s) == []


def test_unknown_target_gives_independent_explore_nodes():
    s = belief([o("fridge", "Fridge", (4, 4))])
    task = Task("apple to fridge", (Predicate("ObjectInReceptacle", "apple", "fridge"),))
    plan = baseline_plan(task, s, s.robots)
    assert sorted(n.a for n in plan.nodes.values()) == ["explore_room"] * 3
    assert plan.edges == set()
    assert all(n.r_pref is None for n in plan.nodes.values())


def test_explore_order_is_by_distance_then_room_id():
    # kitchen and office are both 3 cells away; the id breaks the tie
    s = belief([o("fridge", "Fridge", (4, 4))])
    s.robots = {"r1": RobotState("r1", (7, 2), skills=ALL_SKILLS)}
    task = Task("apple to fridge", (Predicate("ObjectInReceptacle", "apple", "fridge"),))
    plan = baseline_plan(task, s, s.robots)
    assert [plan.nodes[n].params["room"] for n in sorted(plan.nodes)] == ["living", "kitchen", "office"]


def test_all_explored_and_never_seen_is_infeasible():
    s = belief([o("fridge", "Fridge", (4, 4))], observed=("kitchen", "living", "office"))
    task = Task("apple to fridge", (Predicate("ObjectInReceptacle", "apple", "fridge"),))
    with pytest.raises(NoFeasibleAction):
        baseline_plan(task, s, s.robots)


def test_lost_object_triggers_sweep():
    lost = o("apple", "Apple", None, room=None)
    s = belief([o("fridge", "Fridge", (4, 4)), lost], observed=("kitchen", "living", "office"))
    task = Task("apple to fridge", (Predicate("ObjectInReceptacle", "apple", "fridge"),))
    plan = baseline_plan(task, s, s.robots)
    assert {n.params.get("mode") for n in plan.nodes.values()} == {"sweep"}
    assert len(plan.nodes) == 3


def test_baseline_is_pure():
    s = belief([o("tv1", "TV", (1, 1), isToggled=1), o("lamp", "Lamp", (7, 7), room="office", isToggled=1)])
    task = Task("power down", tuple(Predicate("PropertyIs", d, prop="isToggled", value=0) for d in ("tv1", "lamp", "tv9")))
    a = baseline_plan(task, s, s.robots).to_dict()
    b = baseline_plan(task, s.copy(), dict(s.robots)).to_dict()
    assert a == b


def test_slices_are_serialized_on_the_knife():
    s = belief([o("knife", "Knife", (0, 0)), o("t1", "Tomato", (2, 2)), o("t2", "Tomato", (3, 3))])
    goal = tuple(Predicate("PropertyIs", t, prop="isSliced", value=1) for t in ("t1", "t2"))
    plan = baseline_plan(Task("slice", goal), s, s.robots)
    assert plan.edges == {("n000", "n001")}


# -- prompt ---------------------------------------------------------------


def test_prompt_is_deterministic_and_lists_each_object_once():
    s = belief([o("tv1", "TV", (1, 1)), o("apple", "Apple", (2, 2))])
    task = Task("tv off", (Predicate("PropertyIs", "tv1", prop="isToggled", value=0),))
    a = build_prompt(task, s, s.robots)
    assert a.document == build_prompt(task, s, s.robots).document
    doc = json.loads(a.document)
    assert sorted(doc["state"]["objects"]) == ["apple", "tv1"]
    assert doc["state"] == json.loads(serialize_state(s))
    assert a.token_proxy == -(-len(a.document) // 4)


def test_prompt_for_empty_belief_is_schema_complete():
    doc = json.loads(build_prompt(Task("nothing", ()), SemanticState(), {}).document)
    assert doc["state"]["objects"] == {}
    assert {"task", "goal", "state", "fleet", "schema", "example", "max_nodes"} <= set(doc)


# -- validation -----------------------------------------------------------


def _node(nid, skills=(ActionKind.MOVE,), a="navigate_to", params=None, r_pref=None):
    return ActionNode(nid, a, params or {"room": "kitchen"}, frozenset(skills), r_pref)


def test_empty_plan_is_valid():
    s = belief()
    assert validate_plan(PlanGraph(), s.robots, s) == []


def test_slice_without_capable_robot_is_skill_unsatisfiable():
    s = belief([o("t1", "Tomato", (2, 2))])
    f = {"r9": RobotState("r9", (0, 0), skills=frozenset({ActionKind.MOVE, ActionKind.PICKUP}))}
    plan = PlanGraph({"n000": _node("n000", (ActionKind.MOVE, ActionKind.SLICE), "slice_object", {"object": "t1"})})
    assert [v.kind for v in validate_plan(plan, f, s)] == ["SkillUnsatisfiable"]


def test_bad_preference_unknown_reference_and_params():
    s = belief()
    plan = PlanGraph(
        {
            "n000": _node("n000", r_pref="r7"),
            "n001": _node("n001", a="toggle_device", params={"object": "ghost", "state": "on"}),
            "n002": _node("n002", a="toggle_device", params={"object": "ghost"}),
            "n003": _node("n003", a="fly", params={}),
        },
        {("n000", "n404")},
    )
    kinds = sorted(v.kind for v in validate_plan(plan, s.robots, s))
    assert kinds == ["BadParams", "BadParams", "BadPreference", "DanglingEdge", "UnknownReference"]


def _random_dag(rng: random.Random, n: int) -> PlanGraph:
    order = list(range(n))
    rng.shuffle(order)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.add((f"n{order[i]:03d}", f"n{order[j]:03d}"))
    return PlanGraph({f"n{k:03d}": _node(f"n{k:03d}") for k in range(n)}, edges)


@pytest.mark.parametrize("seed", range(200))
def test_cycle_detection_matches_dfs_oracle(seed):
    rng = random.Random(seed)
    plan = _random_dag(rng, rng.randint(2, 12))
    s = belief()
    assert validate_plan(plan, s.robots, s) == []
    if plan.edges:
        a, b = rng.choice(sorted(plan.edges))
        # close a cycle: any path a -> ... -> b plus the back edge b -> a
        plan.edges.add((b, a))
    assert dfs_has_cycle(plan.nodes, plan.edges) == bool(plan.edges)
    found = [v for v in validate_plan(plan, s.robots, s) if v.kind == "Acyclicity"]
    assert len(found) == int(dfs_has_cycle(plan.nodes, plan.edges))
    assert (plan.topological_order() is None) == dfs_has_cycle(plan.nodes, plan.edges)


def test_plan_json_round_trip():
    s = belief([o("cab", "Cabinet", (1, 1)), o("apple", "Apple", (1, 1), rec="cab"), o("fridge", "Fridge", (4, 4))])
    plan = baseline_plan(Task("x", (Predicate("ObjectInReceptacle", "apple", "fridge"),)), s, s.robots)
    back = PlanGraph.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert back.to_dict() == plan.to_dict()


# -- external protocol ----------------------------------------------------


def _request():
    s = belief([o("cab", "Cabinet", (1, 1)), o("apple", "Apple", (1, 1), rec="cab"), o("fridge", "Fridge", (4, 4))])
    return s, build_prompt(Task("x", (Predicate("ObjectInReceptacle", "apple", "fridge"),)), s, s.robots)


def _stub(mode: str) -> Endpoint:
    return Endpoint(command=[sys.executable, STUB, mode], timeout=30)


def test_stub_valid_plan_parsed_with_reported_usage():
    from .stub_planner import VALID

    s, req = _request()
    res = external_plan(req, _stub("valid"))
    assert res.tokens == 1000
    expected = {k: VALID[k] for k in ("nodes", "edges")}
    assert res.plan.to_dict() == expected
    assert validate_plan(res.plan, s.robots, s) == []


def test_stub_malformed_response_is_schema_error():
    _, req = _request()
    with pytest.raises(SchemaError):
        external_plan(req, _stub("malformed"))


def test_stub_cyclic_plan_rejected_by_validation():
    s, req = _request()
    res = external_plan(req, _stub("cyclic"))
    assert [v.kind for v in validate_plan(res.plan, s.robots, s)] == ["Acyclicity"]


def test_stub_transport_failure_retried_then_raised(caplog):
    _, req = _request()
    with pytest.raises(TransportError):
        external_plan(req, _stub("down"))
    assert sum("transport failure" in r.message for r in caplog.records) == 3


def test_http_endpoint_unreachable_is_transport_error():
    _, req = _request()
    with pytest.raises(TransportError):
        external_plan(req, Endpoint(url="http://127.0.0.1:9/plan", timeout=2, retries=0))
