"""Global semantic state held by the coordination hub, and its transition function.

Fusion is a per-field last-writer-wins register keyed on ``(tau, priority, src)``:
the pose group ``(p, rec, room)`` and every property bit carry their own stamp,
so the final belief does not depend on the order in which observations arrive.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

from .catalog import PROP_INDEX, PROPERTIES, ActionKind, D, object_class

log = logging.getLogger(__name__)

Cell = tuple[int, int]
Stamp = tuple[int, int, str]  # (tau, source priority, source id)

NEVER: Stamp = (-1, -1, "")
ROBOT_PRIORITY = 1
DEVICE_PRIORITY = 0
FORMAT_VERSION = 1
POSE = 0  # stamp slot of the pose group; property i lives at slot 1 + i


class StateError(Exception):
    pass


class UnknownSource(StateError):
    pass


class InvariantViolation(StateError):
    pass


class StateMismatch(StateError):
    pass


class MalformedGoal(StateError):
    pass


class Status(str, enum.Enum):
    IDLE = "IDLE"
    EXECUTING = "EXECUTING"
    CANCELING = "CANCELING"


@dataclass(frozen=True)
class RobotState:
    id: str
    p: Cell
    theta: int = 0
    phi: int = 30
    sigma: Status = Status.IDLE
    inv: str | None = None
    skills: frozenset[ActionKind] = frozenset()
    offset: tuple[float, float] = (0.0, 0.0)
    stamp: Stamp = NEVER


@dataclass(frozen=True)
class ObjectState:
    id: str
    type: str
    p: Cell | None  # None once the hub has positive evidence the object left its last cell
    rec: str | None
    pi: tuple[int, ...]
    room: str | None
    src: str
    tau: int
    stamps: tuple[Stamp, ...] = (NEVER,) * (1 + D)

    def prop(self, name: str) -> int:
        return self.pi[PROP_INDEX[name]]


@dataclass(frozen=True)
class AreaState:
    id: str
    name: str
    bounds: tuple[tuple[int, int, int, int], ...]  # inclusive (x0, y0, x1, y1) rectangles
    observed: frozenset[Cell] = frozenset()

    @cached_property
    def cells(self) -> tuple[Cell, ...]:
        out: list[Cell] = []
        for x0, y0, x1, y1 in self.bounds:
            out.extend((x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1))
        return tuple(out)

    @cached_property
    def cell_set(self) -> frozenset[Cell]:
        return frozenset(self.cells)

    @property
    def explored_fraction(self) -> float:
        return len(self.observed) / len(self.cells) if self.cells else 1.0


@dataclass
class SemanticState:
    robots: dict[str, RobotState] = field(default_factory=dict)
    objects: dict[str, ObjectState] = field(default_factory=dict)
    areas: dict[str, AreaState] = field(default_factory=dict)
    clock: int = 0
    devices: frozenset[str] = frozenset()

    def copy(self) -> SemanticState:
        return SemanticState(dict(self.robots), dict(self.objects), dict(self.areas), self.clock, self.devices)

    def priority(self, src: str) -> int:
        return ROBOT_PRIORITY if src in self.robots else DEVICE_PRIORITY

    def area_of(self, cell: Cell | None) -> str | None:
        if cell is None:
            return None
        for area in self.areas.values():
            if cell in area.cell_set:
                return area.id
        return None

    def closed_ancestor(self, obj_id: str) -> str | None:
        """First closed receptacle on the containment chain above ``obj_id``."""
        seen = set()
        rec = self.objects[obj_id].rec
        while rec is not None and rec in self.objects and rec not in seen:
            seen.add(rec)
            holder = self.objects[rec]
            if object_class(holder.type).openable and not holder.prop("isOpen"):
                return rec
            rec = holder.rec
        return None

    def directly_reachable(self, obj_id: str) -> bool:
        obj = self.objects.get(obj_id)
        return obj is not None and obj.p is not None and self.closed_ancestor(obj_id) is None


@dataclass(frozen=True)
class Entry:
    """One object sighting. The pose group is always reported; properties may be partial."""

    obj: str
    type: str
    p: Cell
    rec: str | None
    room: str | None
    props: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class RobotPose:
    p: Cell
    theta: int
    phi: int
    inv: str | None = None
    inv_type: str | None = None


@dataclass(frozen=True)
class Observation:
    src: str
    tau: int
    entries: tuple[Entry, ...] = ()
    visited_cells: frozenset[Cell] = frozenset()
    pose: RobotPose | None = None


@dataclass(frozen=True)
class CompletedAction:
    kind: ActionKind
    target: str | None
    tick: int


# --------------------------------------------------------------------------- fusion


def _max_stamp(stamps: Iterable[Stamp]) -> Stamp:
    return max(stamps)


def _rebuild(obj: ObjectState, **changes) -> ObjectState:
    obj = replace(obj, **changes)
    top = _max_stamp(obj.stamps)
    return replace(obj, src=top[2], tau=top[0])


def _creates_cycle(state: SemanticState, obj_id: str, rec: str | None) -> bool:
    seen = {obj_id}
    while rec is not None and rec in state.objects:
        if rec in seen:
            return True
        seen.add(rec)
        rec = state.objects[rec].rec
    return False


def _set_pose(state: SemanticState, obj_id: str, p: Cell | None, rec: str | None, room: str | None, key: Stamp) -> None:
    old = state.objects[obj_id]
    stamps = list(old.stamps)
    stamps[POSE] = key
    state.objects[obj_id] = _rebuild(old, p=p, rec=rec, room=room, stamps=tuple(stamps))
    _reconcile_carry(state, obj_id, old.rec, rec, key)


def _reconcile_carry(state: SemanticState, obj_id: str, old_rec: str | None, new_rec: str | None, key: Stamp) -> None:
    if old_rec == new_rec:
        return
    if old_rec in state.robots and state.robots[old_rec].inv == obj_id:
        state.robots[old_rec] = replace(state.robots[old_rec], inv=None)
    if new_rec in state.robots:
        robot = state.robots[new_rec]
        prev = robot.inv
        state.robots[new_rec] = replace(robot, inv=obj_id)
        if prev is not None and prev != obj_id and prev in state.objects and state.objects[prev].rec == new_rec:
            _lose(state, prev, key)


def _lose(state: SemanticState, obj_id: str, key: Stamp) -> None:
    old = state.objects[obj_id]
    stamps = list(old.stamps)
    stamps[POSE] = max(key, old.stamps[POSE])
    state.objects[obj_id] = _rebuild(old, p=None, rec=None, room=None, stamps=tuple(stamps))


def _apply_entry(state: SemanticState, entry: Entry, key: Stamp) -> None:
    old = state.objects.get(entry.obj)
    if old is None:
        old = ObjectState(entry.obj, entry.type, None, None, (0,) * D, None, "", -1)
        state.objects[entry.obj] = old
    stamps = list(old.stamps)
    pi = list(old.pi)
    for name, bit in entry.props:
        i = PROP_INDEX[name]
        if key > stamps[1 + i]:
            stamps[1 + i] = key
            pi[i] = int(bit)
    state.objects[entry.obj] = _rebuild(old, pi=tuple(pi), stamps=tuple(stamps))
    if key > stamps[POSE]:
        p = entry.p
        if entry.rec in state.robots:
            p = state.robots[entry.rec].p
        _set_pose(state, entry.obj, p, entry.rec, entry.room, key)


def _entry_rejected(state: SemanticState, entry: Entry, known: set[str]) -> str | None:
    if entry.rec is None:
        return None
    if entry.rec in state.robots:
        return None
    if entry.rec not in known:
        return f"{entry.obj}: parent {entry.rec} is not a known object or tracked robot"
    if _creates_cycle(state, entry.obj, entry.rec):
        return f"{entry.obj}: containment cycle through {entry.rec}"
    return None


def fuse(state: SemanticState, obs: Observation) -> SemanticState:
    """Integrate one observation into a copy of ``state``.

    Entries that would break containment (unknown parent, cycle) are dropped and
    logged; the rest of the observation is still applied.
    """
    if obs.src not in state.robots and obs.src not in state.devices:
        raise UnknownSource(obs.src)
    new = state.copy()
    new.clock = max(new.clock, obs.tau)
    key: Stamp = (obs.tau, new.priority(obs.src), obs.src)

    if obs.pose is not None and obs.src in new.robots:
        _apply_pose(new, obs.src, obs.pose, key)

    known = set(new.objects) | {e.obj for e in obs.entries}
    for entry in obs.entries:
        reason = _entry_rejected(new, entry, known)
        if reason is not None:
            log.debug("fuse(%s@%d) dropped entry: %s", obs.src, obs.tau, reason)
            continue
        _apply_entry(new, entry, key)

    if obs.visited_cells:
        for aid, area in new.areas.items():
            fresh = (obs.visited_cells & area.cell_set) - area.observed
            if fresh:
                new.areas[aid] = replace(area, observed=area.observed | fresh)
    return new


def _apply_pose(state: SemanticState, rid: str, pose: RobotPose, key: Stamp) -> None:
    robot = state.robots[rid]
    if not key > robot.stamp:
        return
    state.robots[rid] = replace(robot, p=pose.p, theta=pose.theta % 360, phi=pose.phi, stamp=key)
    if pose.inv is not None:
        if pose.inv not in state.objects:
            state.objects[pose.inv] = ObjectState(
                pose.inv, pose.inv_type or "Unknown", pose.p, None, (0,) * D, None, "", -1
            )
        held = state.objects[pose.inv]
        if held.rec != rid or held.p != pose.p:
            _set_pose(state, pose.inv, pose.p, rid, state.area_of(pose.p), max(key, held.stamps[POSE]))
    else:
        for oid, obj in list(state.objects.items()):
            if obj.rec == rid:
                _lose(state, oid, key)
        state.robots[rid] = replace(state.robots[rid], inv=None)


def mark_missing(state: SemanticState, obs: Observation) -> SemanticState:
    """Negative evidence from a robot's view: believed-visible objects that were not sighted lose their position."""
    if obs.src not in state.robots or not obs.visited_cells:
        return state
    key: Stamp = (obs.tau, ROBOT_PRIORITY, obs.src)
    sighted = {e.obj for e in obs.entries}
    new = None
    for oid, obj in state.objects.items():
        if obj.p is None or oid in sighted or obj.p not in obs.visited_cells:
            continue
        if obj.rec in state.robots or not key > obj.stamps[POSE]:
            continue
        if state.closed_ancestor(oid) is not None:
            continue
        if new is None:
            new = state.copy()
        _lose(new, oid, key)
    return state if new is None else new


# --------------------------------------------------------------------------- effects


def apply_manipulation_effects(state: SemanticState, robot: str, action: CompletedAction) -> SemanticState:
    """Book-keep a successful manipulation primitive performed by ``robot``."""
    if robot not in state.robots:
        raise StateMismatch(f"unknown robot {robot}")
    new = state.copy()
    new.clock = max(new.clock, action.tick)
    key: Stamp = (action.tick, ROBOT_PRIORITY, robot)
    r = new.robots[robot]
    kind, target = action.kind, action.target
    if kind not in (ActionKind.PICKUP, ActionKind.PUT) and target not in new.objects:
        raise StateMismatch(f"{kind.value}: {target} not in belief")

    if kind is ActionKind.PICKUP:
        if r.inv is not None:
            raise StateMismatch(f"Pickup({target}) while {robot} holds {r.inv}")
        if target not in new.objects:
            raise StateMismatch(f"Pickup({target}) of an object absent from belief")
        _set_pose(new, target, r.p, robot, new.area_of(r.p), key)
    elif kind is ActionKind.PUT:
        if r.inv is None:
            raise StateMismatch(f"Put into {target} while {robot} holds nothing")
        if target not in new.objects:
            raise StateMismatch(f"Put into unknown receptacle {target}")
        held = r.inv
        if held not in new.objects:
            raise StateMismatch(f"{robot} holds {held} which is absent from belief")
        k = new.objects[target]
        _set_pose(new, held, k.p, target, k.room, key)
        new.robots[robot] = replace(new.robots[robot], inv=None)
    elif kind in (ActionKind.OPEN, ActionKind.CLOSE):
        _set_bit(new, target, "isOpen", int(kind is ActionKind.OPEN), key)
    elif kind in (ActionKind.TOGGLE_ON, ActionKind.TOGGLE_OFF):
        _set_bit(new, target, "isToggled", int(kind is ActionKind.TOGGLE_ON), key)
    elif kind is ActionKind.SLICE:
        _set_bit(new, target, "isSliced", 1, key)
    else:
        raise StateMismatch(f"{kind.value} has no manipulation effect")
    return new


def _set_bit(state: SemanticState, oid: str, prop: str, value: int, key: Stamp) -> None:
    obj = state.objects[oid]
    i = PROP_INDEX[prop]
    pi = list(obj.pi)
    stamps = list(obj.stamps)
    pi[i] = value
    stamps[1 + i] = max(key, stamps[1 + i])
    state.objects[oid] = _rebuild(obj, pi=tuple(pi), stamps=tuple(stamps))


# --------------------------------------------------------------------------- goals


PREDICATE_KINDS = ("ObjectInRoom", "ObjectInReceptacle", "PropertyIs", "RobotInRoom")


@dataclass(frozen=True)
class Predicate:
    kind: str
    obj: str
    target: str | None = None
    prop: str | None = None
    value: int | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "obj": self.obj}
        if self.target is not None:
            d["target"] = self.target
        if self.prop is not None:
            d["prop"] = self.prop
            d["value"] = self.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Predicate:
        return cls(d["kind"], d["obj"], d.get("target"), d.get("prop"), d.get("value"))


GoalCondition = tuple[Predicate, ...]


def check_predicate(pred: Predicate) -> None:
    if pred.kind not in PREDICATE_KINDS:
        raise MalformedGoal(f"unknown predicate kind {pred.kind!r}")
    if pred.kind == "PropertyIs":
        if pred.prop not in PROP_INDEX:
            raise MalformedGoal(f"unknown property {pred.prop!r}")
        if pred.value not in (0, 1):
            raise MalformedGoal(f"property value must be 0 or 1, got {pred.value!r}")
    elif pred.target is None:
        raise MalformedGoal(f"{pred.kind} needs a target")


def predicate_holds(state: SemanticState, pred: Predicate) -> bool:
    check_predicate(pred)
    if pred.kind == "RobotInRoom":
        robot = state.robots.get(pred.obj)
        return robot is not None and state.area_of(robot.p) == pred.target
    obj = state.objects.get(pred.obj)
    if obj is None:
        return False
    if pred.kind == "PropertyIs":
        return obj.prop(pred.prop) == pred.value
    if obj.p is None:
        return False
    if pred.kind == "ObjectInReceptacle":
        return obj.rec == pred.target
    return obj.room == pred.target and obj.rec not in state.robots


def query_goal(state: SemanticState, goal: Iterable[Predicate]) -> bool:
    goal = tuple(goal)
    for pred in goal:
        check_predicate(pred)
    return all(predicate_holds(state, pred) for pred in goal)


# --------------------------------------------------------------------------- invariants


def check_invariants(state: SemanticState) -> list[str]:
    problems: list[str] = []
    for oid, obj in state.objects.items():
        if obj.rec is not None and obj.rec not in state.objects and obj.rec not in state.robots:
            problems.append(f"{oid}.rec={obj.rec} names nothing")
        if _creates_cycle(state, oid, obj.rec):
            problems.append(f"containment cycle at {oid}")
        if obj.tau > state.clock:
            problems.append(f"{oid}.tau={obj.tau} > clock {state.clock}")
        if len(obj.pi) != D or any(b not in (0, 1) for b in obj.pi):
            problems.append(f"{oid}.pi malformed")
    for rid, robot in state.robots.items():
        carried = [oid for oid, o in state.objects.items() if o.rec == rid]
        if len(carried) > 1:
            problems.append(f"{rid} carries {carried}")
        if carried and robot.inv != carried[0]:
            problems.append(f"{rid}.inv={robot.inv} but {carried[0]}.rec={rid}")
        if robot.inv is not None and robot.inv in state.objects and state.objects[robot.inv].rec != rid:
            problems.append(f"{rid}.inv={robot.inv} whose rec is {state.objects[robot.inv].rec}")
        if not 0 <= robot.theta < 360:
            problems.append(f"{rid}.theta out of range")
        if robot.inv is not None and ActionKind.PICKUP not in robot.skills:
            problems.append(f"{rid} holds {robot.inv} without Pickup skill")
    return problems


# --------------------------------------------------------------------------- serialization


def _stamp_out(s: Stamp) -> list | None:
    return None if s == NEVER else [s[0], s[1], s[2]]


def _stamp_in(v) -> Stamp:
    return NEVER if v is None else (int(v[0]), int(v[1]), str(v[2]))


def _bitmap(area: AreaState) -> str:
    bits = 0
    for i, cell in enumerate(area.cells):
        if cell in area.observed:
            bits |= 1 << i
    return format(bits, "x")


def _unbitmap(area: AreaState, text: str) -> frozenset[Cell]:
    bits = int(text, 16)
    return frozenset(cell for i, cell in enumerate(area.cells) if bits >> i & 1)


def state_to_dict(state: SemanticState) -> dict:
    robots = {
        rid: {
            "p": list(r.p),
            "offset": list(r.offset),
            "theta": r.theta,
            "phi": r.phi,
            "sigma": r.sigma.value,
            "inv": r.inv,
            "skills": sorted(s.value for s in r.skills),
            "stamp": _stamp_out(r.stamp),
        }
        for rid, r in state.robots.items()
    }
    objects = {}
    for oid, o in state.objects.items():
        top = _max_stamp(o.stamps)
        odd = {
            name: _stamp_out(s)
            for name, s in zip(("pose",) + PROPERTIES, o.stamps)
            if s != top
        }
        objects[oid] = {
            "type": o.type,
            "p": None if o.p is None else list(o.p),
            "rec": o.rec,
            "pi": "".join(map(str, o.pi)),
            "room": o.room,
            "src": o.src,
            "tau": o.tau,
            "top": _stamp_out(top),
            "stamps": odd,
        }
    areas = {
        aid: {
            "name": a.name,
            "bounds": [list(b) for b in a.bounds],
            "explored_fraction": round(a.explored_fraction, 4),
            "observed": _bitmap(a),
        }
        for aid, a in state.areas.items()
    }
    return {
        "version": FORMAT_VERSION,
        "clock": state.clock,
        "devices": sorted(state.devices),
        "robots": robots,
        "objects": objects,
        "areas": areas,
    }


def serialize_state(state: SemanticState) -> str:
    """Canonical, key-sorted JSON rendering; equal states give identical bytes."""
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"))


def state_from_dict(doc: dict) -> SemanticState:
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported state format version {doc.get('version')!r}")
    robots = {
        rid: RobotState(
            id=rid,
            p=tuple(r["p"]),
            theta=r["theta"],
            phi=r["phi"],
            sigma=Status(r["sigma"]),
            inv=r["inv"],
            skills=frozenset(ActionKind(s) for s in r["skills"]),
            offset=tuple(r["offset"]),
            stamp=_stamp_in(r["stamp"]),
        )
        for rid, r in doc["robots"].items()
    }
    objects = {}
    for oid, o in doc["objects"].items():
        top = _stamp_in(o["top"])
        stamps = tuple(
            _stamp_in(o["stamps"][name]) if name in o["stamps"] else top for name in ("pose",) + PROPERTIES
        )
        objects[oid] = ObjectState(
            id=oid,
            type=o["type"],
            p=None if o["p"] is None else tuple(o["p"]),
            rec=o["rec"],
            pi=tuple(int(c) for c in o["pi"]),
            room=o["room"],
            src=o["src"],
            tau=o["tau"],
            stamps=stamps,
        )
    areas = {}
    for aid, a in doc["areas"].items():
        area = AreaState(aid, a["name"], tuple(tuple(b) for b in a["bounds"]))
        areas[aid] = replace(area, observed=_unbitmap(area, a["observed"]))
    return SemanticState(robots, objects, areas, doc["clock"], frozenset(doc["devices"]))


def parse_state(text: str) -> SemanticState:
    return state_from_dict(json.loads(text))
