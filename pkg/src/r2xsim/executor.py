"""Compiles high-level plan nodes into primitive action steps and runs them with retries."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .catalog import ActionKind, object_class
from .planner import ActionNode
from .state import Cell, SemanticState
from .world import (
    ActionStep,
    FailureReason,
    GridWorld,
    StepResult,
    Unreachable,
    interaction_cells,
    path_to_any,
)

DEFAULT_RETRIES = 2
MAX_COLLISIONS = 3


class UnresolvableTarget(Exception):
    pass


def _moves(path: list[Cell]) -> list[ActionStep]:
    return [ActionStep(ActionKind.MOVE, c) for c in path]


class _Expander:
    """Tracks the robot's hypothetical position while steps are appended."""

    def __init__(self, world: GridWorld, belief: SemanticState, robot: str, avoid: frozenset[Cell]):
        self.world = world
        self.belief = belief
        self.robot = robot
        r = belief.robots[robot]
        self.pos: Cell = r.p
        self.inv: str | None = r.inv
        self.opened: set[str] = set()
        self.blocked = {o.p for rid, o in belief.robots.items() if rid != robot} | set(avoid)
        self.steps: list[ActionStep] = []

    def go_near(self, target: Cell) -> None:
        goals = interaction_cells(self.world, target) - self.blocked
        if not goals:
            goals = interaction_cells(self.world, target)
        try:
            path = path_to_any(self.world, self.pos, goals, self.blocked - {self.pos})
        except Unreachable:
            path = path_to_any(self.world, self.pos, goals)
        self.steps.extend(_moves(path))
        if path:
            self.pos = path[-1]

    def go_into(self, cells: set[Cell]) -> None:
        goals = cells - self.blocked or cells
        try:
            path = path_to_any(self.world, self.pos, goals, self.blocked - {self.pos} - goals)
        except Unreachable:
            path = path_to_any(self.world, self.pos, goals)
        self.steps.extend(_moves(path))
        if path:
            self.pos = path[-1]

    def is_closed(self, oid: str) -> bool:
        o = self.belief.objects[oid]
        return object_class(o.type).openable and not o.prop("isOpen") and oid not in self.opened

    def closed_holder(self, oid: str) -> str | None:
        seen = set()
        rec = self.belief.objects[oid].rec
        while rec is not None and rec in self.belief.objects and rec not in seen:
            seen.add(rec)
            if self.is_closed(rec):
                return rec
            rec = self.belief.objects[rec].rec
        return None

    def located(self, oid: str) -> Cell:
        o = self.belief.objects.get(oid)
        if o is None or o.p is None:
            raise UnresolvableTarget(f"{oid} has no known position")
        if o.rec in self.belief.robots and o.rec != self.robot:
            raise UnresolvableTarget(f"{oid} is carried by {o.rec}")
        return o.p

    def manipulate(self, kind: ActionKind, oid: str) -> None:
        """Approach ``oid``, open whatever closed receptacle encloses it, then act on it."""
        p = self.located(oid)
        self.go_near(p)
        holder = self.closed_holder(oid)
        if holder is not None and kind is not ActionKind.PUT:
            self.steps.append(ActionStep(ActionKind.OPEN, holder))
            self.opened.add(holder)
        if kind is ActionKind.PUT and self.is_closed(oid):
            self.steps.append(ActionStep(ActionKind.OPEN, oid))
            self.opened.add(oid)
        self.steps.append(ActionStep(kind, oid))
        if kind is ActionKind.PICKUP:
            self.inv = oid
        elif kind is ActionKind.PUT:
            self.inv = None
        elif kind is ActionKind.OPEN:
            self.opened.add(oid)

    def drop_inventory(self, keep: str | None = None, exclude: tuple[str, ...] = ()) -> None:
        if self.inv is None or self.inv == keep:
            return
        spot = self._nearest_dropoff(exclude)
        if spot is None:
            raise UnresolvableTarget(f"nowhere to put down {self.inv}")
        self.manipulate(ActionKind.PUT, spot)

    def _nearest_dropoff(self, exclude: tuple[str, ...]) -> str | None:
        dist = self.world.distances_from(self.pos)
        best = None
        for oid in sorted(self.belief.objects):
            o = self.belief.objects[oid]
            cls = object_class(o.type)
            if not cls.receptacle or o.type == "GarbageCan" or oid in exclude or o.p is None:
                continue
            if cls.openable or self.closed_holder(oid) is not None or o.rec is not None:
                continue
            d = dist.get(o.p)
            if d is not None and (best is None or d < best[0]):
                best = (d, oid)
        return None if best is None else best[1]

    def nearest_knife(self) -> str:
        dist = self.world.distances_from(self.pos)
        best = None
        for oid in sorted(self.belief.objects):
            o = self.belief.objects[oid]
            if o.type != "Knife" or o.p is None:
                continue
            if o.rec in self.belief.robots and o.rec != self.robot:
                continue
            d = dist.get(o.p)
            if d is not None and (best is None or d < best[0]):
                best = (d, oid)
        if best is None:
            raise UnresolvableTarget("no reachable knife in belief")
        return best[1]


def _room_cells(belief: SemanticState, world: GridWorld, room: str) -> set[Cell]:
    if room in belief.areas:
        return set(belief.areas[room].cells)
    return set(world.room(room).cells())


def _centre_cell(cells: set[Cell]) -> Cell:
    xs = sorted(c[0] for c in cells)
    ys = sorted(c[1] for c in cells)
    mid = (xs[len(xs) // 2], ys[len(ys) // 2])
    return min(cells, key=lambda c: (abs(c[0] - mid[0]) + abs(c[1] - mid[1]), c))


def expand_to_steps(
    world: GridWorld,
    node: ActionNode,
    belief: SemanticState,
    robot: str,
    avoid: frozenset[Cell] = frozenset(),
) -> list[ActionStep]:
    """Primitive steps that carry out ``node`` for ``robot`` given the hub's current belief.

    Exploration is compiled one leg at a time: a walk to the nearest unobserved
    cell of the room followed by a Scan. An empty list means the node has nothing
    left to do.
    """
    ex = _Expander(world, belief, robot, avoid)
    a, params = node.a, node.params

    if a == "explore_room":
        room = params["room"]
        cells = _room_cells(belief, world, room)
        if params.get("mode") == "sweep":
            target = _centre_cell(cells)
            ex.go_into({target})
            return ex.steps + [ActionStep(ActionKind.SCAN)]
        observed = belief.areas[room].observed if room in belief.areas else frozenset()
        frontier = cells - observed
        if not frontier:
            return []
        ex.go_into(frontier)
        return ex.steps + [ActionStep(ActionKind.SCAN)]

    if a == "navigate_to":
        cells = _room_cells(belief, world, params["room"])
        if ex.pos in cells:
            return []
        ex.go_into(cells)
        return ex.steps

    if a in ("fetch_and_place", "dispose"):
        o, k = params["object"], params["receptacle"]
        ex.located(k)
        ex.drop_inventory(keep=o, exclude=(k,))
        if ex.inv != o:
            ex.manipulate(ActionKind.PICKUP, o)
        ex.manipulate(ActionKind.PUT, k)
        return ex.steps

    if a == "toggle_device":
        kind = ActionKind.TOGGLE_ON if params["state"] == "on" else ActionKind.TOGGLE_OFF
        ex.manipulate(kind, params["object"])
        return ex.steps

    if a == "open_close":
        kind = ActionKind.OPEN if params["state"] == "open" else ActionKind.CLOSE
        o = params["object"]
        ex.located(o)
        ex.go_near(ex.located(o))
        holder = ex.closed_holder(o)
        if holder is not None:
            ex.steps.append(ActionStep(ActionKind.OPEN, holder))
        ex.steps.append(ActionStep(kind, o))
        return ex.steps

    if a == "slice_object":
        o = params["object"]
        ex.located(o)
        held = belief.objects.get(ex.inv) if ex.inv else None
        if held is None or held.type != "Knife":
            ex.drop_inventory()
            ex.manipulate(ActionKind.PICKUP, ex.nearest_knife())
        ex.manipulate(ActionKind.SLICE, o)
        return ex.steps

    raise UnresolvableTarget(f"unknown action {a!r}")


class JobState(str, enum.Enum):
    ACTIVE = "ACTIVE"
    DONE = "DONE"
    FAILED = "FAILED"


@dataclass
class Job:
    """A plan node being executed by one robot, one primitive per tick."""

    node: ActionNode
    robot: str
    plan_version: int
    max_retries: int = DEFAULT_RETRIES
    steps: deque = field(default_factory=deque)
    retries: int = 0
    collisions: int = 0
    state: JobState = JobState.ACTIVE
    last_failure: FailureReason | None = None
    error: str | None = None
    _started: bool = False
    _stale: bool = False

    @property
    def explore(self) -> bool:
        # frontier exploration re-expands after each Scan; a sweep is one leg
        return self.node.a == "explore_room" and self.node.params.get("mode") != "sweep"

    def next_step(self, world: GridWorld, belief: SemanticState) -> ActionStep | None:
        """The step to run this tick; None once the node is finished (state DONE or FAILED)."""
        if self.state is not JobState.ACTIVE:
            return None
        if self._stale:
            self._stale = False
            if not self._expand(world, belief):
                return None
        if not self.steps:
            if self._started and not self.explore:
                self.state = JobState.DONE
                return None
            if not self._expand(world, belief):
                return None
            if not self.steps:
                self.state = JobState.DONE
                return None
        self._started = True
        return self.steps[0]

    def _expand(self, world: GridWorld, belief: SemanticState, avoid: frozenset[Cell] = frozenset()) -> bool:
        try:
            try:
                self.steps = deque(expand_to_steps(world, self.node, belief, self.robot, avoid))
            except Unreachable:
                if not avoid:
                    raise
                # no way around the blocked cell: keep the route and try it again next tick
                self.steps = deque(expand_to_steps(world, self.node, belief, self.robot))
        except (UnresolvableTarget, Unreachable) as exc:
            self.state = JobState.FAILED
            self.error = str(exc)
            return False
        return True

    def reset(self) -> None:
        """Drop the remaining steps; they are recompiled from fresh belief on the next tick."""
        self.steps.clear()
        self._stale = True

    def record(self, step: ActionStep, result: StepResult, world: GridWorld, belief: SemanticState) -> None:
        """Book-keep the outcome of ``step``; failures trigger re-path or re-expansion."""
        if result.ok:
            self.steps.popleft()
            self.collisions = 0
            if not self.steps and not self.explore:
                self.state = JobState.DONE
            return
        self.last_failure = result.reason
        if result.reason is FailureReason.COLLISION:
            self.collisions += 1
            if self.collisions < MAX_COLLISIONS:
                self._expand(world, belief, frozenset({step.target}))
                return
        self.collisions = 0
        self.retries += 1
        if self.retries > self.max_retries:
            self.state = JobState.FAILED
            self.error = result.label
            return
        self._expand(world, belief)


__all__ = ["Job", "JobState", "UnresolvableTarget", "expand_to_steps", "DEFAULT_RETRIES"]
