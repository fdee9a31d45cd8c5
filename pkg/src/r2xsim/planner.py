"""Plan DAGs over high-level actions: prompt construction, a deterministic baseline planner,
an adapter for external (LLM) planners and structural validation."""

from __future__ import annotations

import enum
import json
import logging
import math
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Iterable

from .catalog import ActionKind, object_class
from .state import (
    Predicate,
    SemanticState,
    StateError,
    predicate_holds,
    serialize_state,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_MAX_NODES = 32


class PlanningError(Exception):
    pass


class NoFeasibleAction(PlanningError):
    pass


class SchemaError(PlanningError):
    pass


class TransportError(PlanningError):
    pass


class NodeStatus(str, enum.Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"


# action kind -> (required params, optional params)
SIGNATURES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "fetch_and_place": (("object", "receptacle"), ()),
    "dispose": (("object", "receptacle"), ()),
    "toggle_device": (("object", "state"), ()),
    "open_close": (("object", "state"), ()),
    "slice_object": (("object",), ()),
    "explore_room": (("room",), ("mode",)),
    "navigate_to": (("room",), ()),
}
STATE_VALUES = {"toggle_device": ("on", "off"), "open_close": ("open", "close")}
OBJECT_PARAMS = ("object", "receptacle")
NAVIGATION_KINDS = ("explore_room", "navigate_to")


@dataclass
class ActionNode:
    node_id: str
    a: str
    params: dict[str, str]
    req_skills: frozenset[ActionKind]
    r_pref: str | None = None
    status: NodeStatus = NodeStatus.PENDING

    @property
    def object(self) -> str | None:
        return self.params.get("object")

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "action": self.a,
            "params": dict(sorted(self.params.items())),
            "req_skills": sorted(s.value for s in self.req_skills),
            "r_pref": self.r_pref,
        }


@dataclass
class PlanGraph:
    nodes: dict[str, ActionNode] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)

    def add(self, node: ActionNode, after: Iterable[str] = ()) -> ActionNode:
        self.nodes[node.node_id] = node
        for dep in after:
            self.edges.add((dep, node.node_id))
        return node

    def deps(self, node_id: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == node_id)

    def deps_done(self, node_id: str) -> bool:
        return all(self.nodes[d].status is NodeStatus.DONE for d in self.deps(node_id) if d in self.nodes)

    def ready(self) -> list[ActionNode]:
        return [
            n
            for nid, n in sorted(self.nodes.items())
            if n.status is NodeStatus.PENDING and self.deps_done(nid)
        ]

    def active(self) -> list[ActionNode]:
        return [n for n in self.nodes.values() if n.status in (NodeStatus.PENDING, NodeStatus.RUNNING)]

    def topological_order(self) -> list[str] | None:
        """Kahn's algorithm with sorted tie-break; None when the graph has a cycle."""
        indeg = {n: 0 for n in self.nodes}
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            if a in indeg and b in indeg:
                indeg[b] += 1
                out[a].append(b)
        frontier = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while frontier:
            n = frontier.pop(0)
            order.append(n)
            for m in sorted(out[n]):
                indeg[m] -= 1
                if indeg[m] == 0:
                    frontier.append(m)
            frontier.sort()
        return order if len(order) == len(self.nodes) else None

    def to_dict(self) -> dict:
        return {
            "nodes": [self.nodes[n].to_dict() for n in sorted(self.nodes)],
            "edges": sorted([a, b] for a, b in self.edges),
        }

    @classmethod
    def from_dict(cls, doc) -> PlanGraph:
        """Parse a planner response; anything structurally off raises SchemaError."""
        try:
            if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
                raise SchemaError("response must be an object with a 'nodes' list")
            plan = cls()
            for raw in doc["nodes"]:
                nid = str(raw["id"])
                if nid in plan.nodes:
                    raise SchemaError(f"duplicate node id {nid}")
                params = raw.get("params", {})
                if not isinstance(params, dict):
                    raise SchemaError(f"{nid}: params must be an object")
                plan.nodes[nid] = ActionNode(
                    nid,
                    str(raw["action"]),
                    {str(k): str(v) for k, v in params.items()},
                    frozenset(ActionKind(s) for s in raw.get("req_skills", [])),
                    raw.get("r_pref"),
                )
            for e in doc.get("edges", []):
                if not isinstance(e, (list, tuple)) or len(e) != 2:
                    raise SchemaError(f"edge {e!r} is not a pair")
                plan.edges.add((str(e[0]), str(e[1])))
            return plan
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise SchemaError(f"malformed plan: {exc!r}") from exc


@dataclass(frozen=True)
class Task:
    description: str
    goal: tuple[Predicate, ...]

    def to_dict(self) -> dict:
        return {"description": self.description, "goal": [p.to_dict() for p in self.goal]}

    @classmethod
    def from_dict(cls, d: dict) -> Task:
        return cls(d["description"], tuple(Predicate.from_dict(p) for p in d["goal"]))


# --------------------------------------------------------------------------- prompt

OUTPUT_SCHEMA = {
    "type": "object",
    "required": ["nodes", "edges"],
    "properties": {
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "action", "params", "req_skills"],
                "properties": {
                    "id": {"type": "string"},
                    "action": {"enum": sorted(SIGNATURES)},
                    "params": {"type": "object"},
                    "req_skills": {"type": "array", "items": {"enum": sorted(k.value for k in ActionKind)}},
                    "r_pref": {"type": ["string", "null"]},
                },
            },
        },
        "edges": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2}},
        "usage": {"type": "object"},
    },
    "signatures": {k: {"required": list(r), "optional": list(o)} for k, (r, o) in sorted(SIGNATURES.items())},
}

OUTPUT_EXAMPLE = {
    "nodes": [
        {"id": "n000", "action": "open_close", "params": {"object": "cabinet_1", "state": "open"}, "req_skills": ["MoveStep", "Open"], "r_pref": None},
        {"id": "n001", "action": "fetch_and_place", "params": {"object": "apple_1", "receptacle": "fridge_1"}, "req_skills": ["MoveStep", "Pickup", "Put"], "r_pref": None},
    ],
    "edges": [["n000", "n001"]],
}


@dataclass(frozen=True)
class PlannerRequest:
    document: str

    @property
    def chars(self) -> int:
        return len(self.document)

    @property
    def token_proxy(self) -> int:
        return math.ceil(len(self.document) / 4)


def build_prompt(task: Task, state: SemanticState, fleet: dict, max_nodes: int = DEFAULT_MAX_NODES) -> PlannerRequest:
    """Serialize task, belief, fleet capabilities and the output schema into one request document."""
    doc = {
        "version": PROTOCOL_VERSION,
        "task": task.description,
        "goal": [p.to_dict() for p in task.goal],
        "state": json.loads(serialize_state(state)),
        "fleet": {rid: sorted(s.value for s in r.skills) for rid, r in sorted(fleet.items())},
        "schema": OUTPUT_SCHEMA,
        "example": OUTPUT_EXAMPLE,
        "max_nodes": max_nodes,
    }
    return PlannerRequest(json.dumps(doc, sort_keys=True, separators=(",", ":")))


# --------------------------------------------------------------------------- baseline


def _known(state: SemanticState, oid: str) -> bool:
    o = state.objects.get(oid)
    return o is not None and o.p is not None


def _room_distance(state: SemanticState, room_id: str, fleet: dict) -> int:
    area = state.areas[room_id]
    best = None
    for r in fleet.values():
        for x0, y0, x1, y1 in area.bounds:
            dx = max(x0 - r.p[0], 0, r.p[0] - x1)
            dy = max(y0 - r.p[1], 0, r.p[1] - y1)
            d = dx + dy
            best = d if best is None or d < best else best
    return 0 if best is None else best


def _knife_available(state: SemanticState, fleet: dict) -> bool:
    for r in fleet.values():
        if r.inv and state.objects.get(r.inv) and state.objects[r.inv].type == "Knife":
            return True
    return any(
        o.type == "Knife" and o.p is not None and o.rec not in state.robots and state.closed_ancestor(oid) is None
        for oid, o in state.objects.items()
    )


def _skills(*kinds: ActionKind) -> frozenset[ActionKind]:
    return frozenset((ActionKind.MOVE,) + kinds)


class _Builder:
    def __init__(self):
        self.plan = PlanGraph()
        self._opened: dict[str, str] = {}

    def node(self, a: str, params: dict, skills: frozenset, after: Iterable[str] = (), r_pref: str | None = None) -> str:
        nid = f"n{len(self.plan.nodes):03d}"
        self.plan.add(ActionNode(nid, a, params, skills, r_pref), after)
        return nid

    def open_first(self, container: str) -> str:
        if container not in self._opened:
            self._opened[container] = self.node(
                "open_close", {"object": container, "state": "open"}, _skills(ActionKind.OPEN)
            )
        return self._opened[container]


def baseline_plan(task: Task, state: SemanticState, fleet: dict) -> PlanGraph:
    """Deterministic planner: one node per unsatisfied predicate whose targets are known,
    exploration of unexplored rooms (nearest first) for the rest."""
    b = _Builder()
    unknown: list[str] = []
    last_slice: str | None = None
    for pred in task.goal:
        if predicate_holds(state, pred):
            continue
        o = pred.obj
        if pred.kind == "RobotInRoom":
            b.node("navigate_to", {"room": pred.target}, _skills(), r_pref=pred.obj)
            continue
        if not _known(state, o):
            unknown.append(o)
            continue
        if pred.kind == "PropertyIs":
            cls = object_class(state.objects[o].type)
            if pred.prop not in cls.applicable:
                continue
            after = []
            if state.closed_ancestor(o) is not None:
                after.append(b.open_first(state.closed_ancestor(o)))
            if pred.prop == "isToggled":
                kind = ActionKind.TOGGLE_ON if pred.value else ActionKind.TOGGLE_OFF
                b.node("toggle_device", {"object": o, "state": "on" if pred.value else "off"}, _skills(kind), after)
            elif pred.prop == "isOpen":
                kind = ActionKind.OPEN if pred.value else ActionKind.CLOSE
                b.node("open_close", {"object": o, "state": "open" if pred.value else "close"}, _skills(kind), after)
            elif pred.prop == "isSliced" and pred.value == 1:
                if not _knife_available(state, fleet):
                    unknown.append("Knife")
                    continue
                if last_slice is not None:
                    after.append(last_slice)
                last_slice = b.node("slice_object", {"object": o}, _skills(ActionKind.PICKUP, ActionKind.SLICE), after)
            continue
        if pred.kind == "ObjectInReceptacle":
            k = pred.target
            if not _known(state, k):
                unknown.append(k)
                continue
            dest = k
        else:  # ObjectInRoom
            dest = _surface_in_room(state, pred.target)
            if dest is None:
                unknown.append(pred.target)
                continue
        after = []
        holder = state.closed_ancestor(o)
        if holder is not None and holder != dest:
            after.append(b.open_first(holder))
        a = "dispose" if state.objects[dest].type == "GarbageCan" else "fetch_and_place"
        skills = _skills(ActionKind.PICKUP, ActionKind.PUT)
        if object_class(state.objects[dest].type).openable:
            skills |= {ActionKind.OPEN}
        b.node(a, {"object": o, "receptacle": dest}, skills, after)

    if unknown:
        frontier = [aid for aid, a in state.areas.items() if a.explored_fraction < 1.0]
        mode = "frontier"
        if not frontier and any(oid in state.objects for oid in unknown):
            # every room was seen but a target was lost since: sweep again
            frontier, mode = list(state.areas), "sweep"
        frontier.sort(key=lambda aid: (_room_distance(state, aid, fleet), aid))
        for aid in frontier:
            params = {"room": aid} if mode == "frontier" else {"room": aid, "mode": "sweep"}
            b.node("explore_room", params, _skills(ActionKind.SCAN))
    if not b.plan.nodes and not all(predicate_holds(state, p) for p in task.goal):
        raise NoFeasibleAction(f"no action available; unknown targets {sorted(set(unknown))}")
    return b.plan


def _surface_in_room(state: SemanticState, room: str) -> str | None:
    for oid in sorted(state.objects):
        o = state.objects[oid]
        cls = object_class(o.type)
        if o.room == room and o.p is not None and cls.receptacle and not cls.openable and o.type != "GarbageCan":
            return oid
    return None


# --------------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    kind: str
    node: str | None
    detail: str


def validate_plan(plan: PlanGraph, fleet: dict, state: SemanticState) -> list[Violation]:
    """Structural and feasibility checks; an empty list means the plan is valid."""
    out: list[Violation] = []
    for a, b in sorted(plan.edges):
        for end in (a, b):
            if end not in plan.nodes:
                out.append(Violation("DanglingEdge", end, f"edge {a}->{b} names a missing node"))
    if plan.topological_order() is None:
        out.append(Violation("Acyclicity", None, "dependency graph contains a cycle"))
    for nid in sorted(plan.nodes):
        n = plan.nodes[nid]
        sig = SIGNATURES.get(n.a)
        if sig is None:
            out.append(Violation("BadParams", nid, f"unknown action {n.a!r}"))
            continue
        required, optional = sig
        keys = set(n.params)
        if not set(required) <= keys or not keys <= set(required) | set(optional):
            out.append(Violation("BadParams", nid, f"{n.a} params {sorted(keys)} != {list(required)}"))
            continue
        if n.a in STATE_VALUES and n.params["state"] not in STATE_VALUES[n.a]:
            out.append(Violation("BadParams", nid, f"state {n.params['state']!r}"))
        if not n.req_skills:
            out.append(Violation("BadParams", nid, "req_skills is empty"))
        if not any(n.req_skills <= r.skills for r in fleet.values()):
            out.append(Violation("SkillUnsatisfiable", nid, f"no robot has {sorted(s.value for s in n.req_skills)}"))
        if n.r_pref is not None:
            pref = fleet.get(n.r_pref)
            if pref is None or not n.req_skills <= pref.skills:
                out.append(Violation("BadPreference", nid, f"r_pref {n.r_pref} missing or under-skilled"))
        if n.a in NAVIGATION_KINDS:
            if n.params["room"] not in state.areas:
                out.append(Violation("UnknownReference", nid, f"room {n.params['room']}"))
        else:
            for key in OBJECT_PARAMS:
                if key in n.params and not _known(state, n.params[key]):
                    out.append(Violation("UnknownReference", nid, f"{key} {n.params[key]} not in belief"))
            rec = state.objects.get(n.params.get("receptacle", ""))
            if rec is not None and not object_class(rec.type).receptacle:
                out.append(Violation("BadParams", nid, f"{rec.id} ({rec.type}) is not a receptacle"))
    return out


# --------------------------------------------------------------------------- planner backends


@dataclass(frozen=True)
class PlanResult:
    plan: PlanGraph
    tokens: int


class BaselinePlanner:
    """The in-process stand-in for the language model; it 'reads' its own prompt for the token proxy."""

    name = "baseline"

    def plan(self, task: Task, state: SemanticState, fleet: dict) -> PlanResult:
        request = build_prompt(task, state, fleet)
        return PlanResult(baseline_plan(task, state, fleet), request.token_proxy)


@dataclass
class Endpoint:
    url: str | None = None
    command: list[str] | None = None
    timeout: float = 60.0
    retries: int = 2
    api_key: str | None = None

    def __post_init__(self):
        if (self.url is None) == (self.command is None):
            raise ValueError("endpoint needs exactly one of url or command")

    @classmethod
    def parse(cls, spec: str, api_key: str | None = None) -> Endpoint:
        if spec.startswith(("http://", "https://")):
            return cls(url=spec, api_key=api_key)
        import shlex

        return cls(command=shlex.split(spec), api_key=api_key)


def _send(request: PlannerRequest, endpoint: Endpoint) -> str:
    if endpoint.url is not None:
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key:
            headers["Authorization"] = f"Bearer {endpoint.api_key}"
        req = urllib.request.Request(endpoint.url, request.document.encode(), headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=endpoint.timeout) as resp:
                return resp.read().decode()
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise TransportError(str(exc)) from exc
    try:
        proc = subprocess.run(
            endpoint.command,
            input=request.document + "\n",
            capture_output=True,
            text=True,
            timeout=endpoint.timeout,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise TransportError(str(exc)) from exc
    if proc.returncode != 0:
        raise TransportError(f"planner command exited {proc.returncode}: {proc.stderr.strip()[:200]}")
    return proc.stdout


def external_plan(request: PlannerRequest, endpoint: Endpoint) -> PlanResult:
    """Send one request; transport errors are retried ``endpoint.retries`` times, schema errors are not."""
    last: TransportError | None = None
    for attempt in range(endpoint.retries + 1):
        try:
            raw = _send(request, endpoint)
            break
        except TransportError as exc:
            log.warning("planner transport failure (attempt %d): %s", attempt + 1, exc)
            last = exc
    else:
        raise last
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"response is not JSON: {exc}") from exc
    plan = PlanGraph.from_dict(doc)
    usage = doc.get("usage") if isinstance(doc, dict) else None
    if isinstance(usage, dict) and ("prompt_tokens" in usage or "completion_tokens" in usage):
        tokens = int(usage.get("prompt_tokens", 0)) + int(usage.get("completion_tokens", 0))
    else:
        tokens = request.token_proxy
    return PlanResult(plan, tokens)


class ExternalPlanner:
    name = "external"

    def __init__(self, endpoint: Endpoint, max_nodes: int = DEFAULT_MAX_NODES):
        self.endpoint = endpoint
        self.max_nodes = max_nodes

    def plan(self, task: Task, state: SemanticState, fleet: dict) -> PlanResult:
        return external_plan(build_prompt(task, state, fleet, self.max_nodes), self.endpoint)


__all__ = [
    "ActionNode",
    "BaselinePlanner",
    "Endpoint",
    "ExternalPlanner",
    "NoFeasibleAction",
    "NodeStatus",
    "PlanGraph",
    "PlanResult",
    "PlannerRequest",
    "PlanningError",
    "SchemaError",
    "StateError",
    "Task",
    "TransportError",
    "Violation",
    "baseline_plan",
    "build_prompt",
    "external_plan",
    "validate_plan",
]
