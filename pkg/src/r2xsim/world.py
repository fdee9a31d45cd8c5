"""Ground-truth grid world: rooms, walls, visibility, shortest paths and primitive actions."""

from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace

from .catalog import D, PROPERTIES, ActionKind, object_class
from .state import (
    AreaState,
    Cell,
    Entry,
    ObjectState,
    RobotPose,
    RobotState,
    SemanticState,
    Status,
)

Edge = tuple[Cell, Cell]

# neighbour expansion order doubles as the path tie-break: smaller (dx, dy) first
STEPS: tuple[Cell, ...] = ((-1, 0), (0, -1), (0, 1), (1, 0))
YAW_OF_STEP = {(1, 0): 0, (0, 1): 90, (-1, 0): 180, (0, -1): 270}

DEFAULT_FOV_RANGE = 12
DEFAULT_FOV_HALF_ANGLE = 60.0
INTERACTION_RANGE = 1


class WorldError(Exception):
    pass


class Unreachable(WorldError):
    pass


class UnknownRobot(WorldError):
    pass


class FailureReason(str, enum.Enum):
    COLLISION = "Collision"
    OUT_OF_RANGE = "OutOfRange"
    HANDS_FULL = "HandsFull"
    HANDS_EMPTY = "HandsEmpty"
    NOT_APPLICABLE = "NotApplicable"
    BLOCKED = "BlockedByClosedReceptacle"


def edge(a: Cell, b: Cell) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ActionStep:
    kind: ActionKind
    target: Cell | int | str | None = None

    def __post_init__(self):
        k, t = self.kind, self.target
        if k is ActionKind.MOVE:
            ok = isinstance(t, tuple) and len(t) == 2
        elif k is ActionKind.ROTATE:
            ok = isinstance(t, int)
        elif k is ActionKind.SCAN:
            ok = t is None
        else:
            ok = isinstance(t, str)
        if not ok:
            raise ValueError(f"{k.value} cannot target {t!r}")

    def to_json(self):
        t = list(self.target) if isinstance(self.target, tuple) else self.target
        return {"kind": self.kind.value, "target": t}


@dataclass(frozen=True)
class StepResult:
    ok: bool
    reason: FailureReason | None = None

    @property
    def label(self) -> str:
        return "SUCCESS" if self.ok else f"FAILURE({self.reason.value})"


SUCCESS = StepResult(True)


def failure(reason: FailureReason) -> StepResult:
    return StepResult(False, reason)


@dataclass(frozen=True)
class Room:
    id: str
    name: str
    bounds: tuple[tuple[int, int, int, int], ...]
    doors: tuple[Cell, ...] = ()

    def cells(self) -> list[Cell]:
        out = []
        for x0, y0, x1, y1 in self.bounds:
            out.extend((x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1))
        return out


# --------------------------------------------------------------------------- line of sight


def _vertex_blocked(walls: frozenset[Edge], k: int, m: int) -> bool:
    return (
        edge((k - 1, m - 1), (k, m - 1)) in walls
        or edge((k - 1, m), (k, m)) in walls
        or edge((k - 1, m - 1), (k - 1, m)) in walls
        or edge((k, m - 1), (k, m)) in walls
    )


def line_of_sight(walls: frozenset[Edge], a: Cell, b: Cell) -> bool:
    """True iff the segment between the centres of ``a`` and ``b`` touches no wall edge.

    Works in doubled coordinates so every crossing is exact: centres sit on odd
    coordinates, grid lines on even ones. A crossing exactly through a grid
    vertex is blocked when any wall edge ends at that vertex.
    """
    if a == b or not walls:
        return True
    sx, sy = 2 * a[0] + 1, 2 * a[1] + 1
    ex, ey = 2 * b[0] + 1, 2 * b[1] + 1
    dx, dy = ex - sx, ey - sy
    # vertical grid lines x = k, walked outward from the source
    if dx:
        step = 1 if dx > 0 else -1
        k = a[0] + (1 if dx > 0 else 0)
        for _ in range(abs(b[0] - a[0])):
            num = sy * dx + dy * (2 * k - sx)  # 2y * dx
            if num % (2 * dx) == 0:
                if _vertex_blocked(walls, k, num // (2 * dx)):
                    return False
            else:
                row = num // (2 * dx)
                if edge((k - 1, row), (k, row)) in walls:
                    return False
            k += step
    if dy:
        step = 1 if dy > 0 else -1
        m = a[1] + (1 if dy > 0 else 0)
        for _ in range(abs(b[1] - a[1])):
            num = sx * dy + dx * (2 * m - sy)
            if num % (2 * dy) == 0:
                if _vertex_blocked(walls, num // (2 * dy), m):
                    return False
            else:
                col = num // (2 * dy)
                if edge((col, m - 1), (col, m)) in walls:
                    return False
            m += step
    return True


def in_cone(src: Cell, dst: Cell, yaw: float, half_angle: float) -> bool:
    if src == dst or half_angle >= 180:
        return True
    ang = math.degrees(math.atan2(dst[1] - src[1], dst[0] - src[0]))
    diff = (ang - yaw + 180.0) % 360.0 - 180.0
    return abs(diff) <= half_angle + 1e-9


# --------------------------------------------------------------------------- world


@dataclass
class GridWorld:
    width: int
    height: int
    walls: frozenset[Edge]
    rooms: tuple[Room, ...]
    truth_objects: dict[str, ObjectState] = field(default_factory=dict)
    truth_robots: dict[str, RobotState] = field(default_factory=dict)
    cell_size: float = 0.25
    fov_range: int = DEFAULT_FOV_RANGE
    fov_half_angle: float = DEFAULT_FOV_HALF_ANGLE
    tick: int = 0
    action_steps: Counter = field(default_factory=Counter)
    moves: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.walls = frozenset(edge(*e) for e in self.walls)
        self._room_of: dict[Cell, str] = {}
        for room in self.rooms:
            for c in room.cells():
                self._room_of[c] = room.id
        self._dist_cache: dict[Cell, dict[Cell, int]] = {}
        self._vis_cache: dict[tuple[Cell, int], frozenset[Cell]] = {}
        self._cone_cache: dict[tuple[Cell, int, float, int], frozenset[Cell]] = {}
        self._clear_rooms = self._rooms_without_inner_walls()

    def clone(self) -> GridWorld:
        """Fresh copy of the mutable ground truth; geometry caches are shared (they depend only on walls)."""
        new = GridWorld.__new__(GridWorld)
        new.__dict__.update(self.__dict__)
        new.truth_objects = dict(self.truth_objects)
        new.truth_robots = dict(self.truth_robots)
        new.action_steps = Counter(self.action_steps)
        new.moves = Counter(self.moves)
        return new

    # -- geometry ---------------------------------------------------------

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def cells(self) -> list[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def passable(self, a: Cell, b: Cell) -> bool:
        return (
            abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
            and self.in_bounds(a)
            and self.in_bounds(b)
            and edge(a, b) not in self.walls
        )

    def neighbors(self, c: Cell) -> list[Cell]:
        out = []
        for dx, dy in STEPS:
            n = (c[0] + dx, c[1] + dy)
            if self.in_bounds(n) and edge(c, n) not in self.walls:
                out.append(n)
        return out

    def room_of(self, c: Cell | None) -> str | None:
        return None if c is None else self._room_of.get(c)

    def room(self, room_id: str) -> Room:
        for r in self.rooms:
            if r.id == room_id:
                return r
        raise KeyError(room_id)

    def is_connected(self) -> bool:
        cells = self.cells()
        return len(self.distances_from(cells[0])) == len(cells)

    def _rooms_without_inner_walls(self) -> dict[str, frozenset[Cell]]:
        clear = {}
        for room in self.rooms:
            if len(room.bounds) != 1:
                continue
            cs = frozenset(room.cells())
            if not any(a in cs and b in cs for a, b in self.walls):
                clear[room.id] = cs
        return clear

    # -- distances --------------------------------------------------------

    def distances_from(self, src: Cell) -> dict[Cell, int]:
        d = self._dist_cache.get(src)
        if d is None:
            d = {src: 0}
            q = deque([src])
            while q:
                c = q.popleft()
                for n in self.neighbors(c):
                    if n not in d:
                        d[n] = d[c] + 1
                        q.append(n)
            self._dist_cache[src] = d
        return d

    def distance(self, a: Cell, b: Cell) -> int | None:
        return self.distances_from(b).get(a)

    # -- visibility -------------------------------------------------------

    def visible_from(self, src: Cell, rng: int | None = None) -> frozenset[Cell]:
        """All cells within ``rng`` (Euclidean, cell centres) with a clear sight line."""
        rng = self.fov_range if rng is None else rng
        key = (src, rng)
        vis = self._vis_cache.get(key)
        if vis is not None:
            return vis
        same_room = self._clear_rooms.get(self.room_of(src), frozenset())
        r2 = rng * rng
        out = []
        for y in range(max(0, src[1] - rng), min(self.height, src[1] + rng + 1)):
            for x in range(max(0, src[0] - rng), min(self.width, src[0] + rng + 1)):
                if (x - src[0]) ** 2 + (y - src[1]) ** 2 > r2:
                    continue
                c = (x, y)
                if c in same_room or line_of_sight(self.walls, src, c):
                    out.append(c)
        vis = frozenset(out)
        self._vis_cache[key] = vis
        return vis

    def view_cells(self, src: Cell, yaw: float, half_angle: float | None = None, rng: int | None = None) -> frozenset[Cell]:
        half_angle = self.fov_half_angle if half_angle is None else half_angle
        rng = self.fov_range if rng is None else rng
        key = (src, int(yaw) % 360, half_angle, rng)
        cells = self._cone_cache.get(key)
        if cells is None:
            cells = frozenset(c for c in self.visible_from(src, rng) if in_cone(src, c, yaw, half_angle))
            self._cone_cache[key] = cells
        return cells

    def hidden(self, obj_id: str) -> bool:
        """Inside a closed receptacle (at any depth)."""
        seen = set()
        rec = self.truth_objects[obj_id].rec
        while rec is not None and rec in self.truth_objects and rec not in seen:
            seen.add(rec)
            holder = self.truth_objects[rec]
            if object_class(holder.type).openable and not holder.prop("isOpen"):
                return True
            rec = holder.rec
        return False

    def sightings(self, cells: frozenset[Cell]) -> list[Entry]:
        out = []
        for oid in sorted(self.truth_objects):
            o = self.truth_objects[oid]
            if o.p in cells and not self.hidden(oid):
                out.append(
                    Entry(oid, o.type, o.p, o.rec, o.room, tuple(zip(PROPERTIES, o.pi)))
                )
        return out

    def field_of_view(self, robot: str, scan: bool = False) -> tuple[frozenset[Cell], list[Entry]]:
        if robot not in self.truth_robots:
            raise UnknownRobot(robot)
        r = self.truth_robots[robot]
        cells = self.view_cells(r.p, r.theta, 180.0 if scan else None)
        return cells, self.sightings(cells)

    def robot_pose(self, robot: str) -> RobotPose:
        r = self.truth_robots[robot]
        inv_type = self.truth_objects[r.inv].type if r.inv else None
        return RobotPose(r.p, r.theta, r.phi, r.inv, inv_type)

    # -- snapshots --------------------------------------------------------

    def areas(self) -> dict[str, AreaState]:
        return {r.id: AreaState(r.id, r.name, r.bounds) for r in self.rooms}

    def truth_state(self) -> SemanticState:
        return SemanticState(dict(self.truth_robots), dict(self.truth_objects), self.areas(), self.tick)

    def occupied(self, exclude: str | None = None) -> set[Cell]:
        return {r.p for rid, r in self.truth_robots.items() if rid != exclude}

    @property
    def path_length_m(self) -> float:
        return self.cell_size * sum(self.moves.values())

    @property
    def total_action_steps(self) -> int:
        return sum(self.action_steps.values())

    def ascii(self, marks: dict[Cell, str] | None = None) -> str:
        marks = marks or {}
        for o in self.truth_objects.values():
            if o.p is not None and o.rec not in self.truth_robots:
                marks.setdefault(o.p, "o")
        for rid, r in self.truth_robots.items():
            marks[r.p] = rid[-1]
        rows = []
        for y in range(self.height):
            line = ""
            for x in range(self.width):
                line += marks.get((x, y), ".")
                if x + 1 < self.width:
                    line += "|" if edge((x, y), (x + 1, y)) in self.walls else " "
            rows.append(line)
            if y + 1 < self.height:
                rows.append(
                    " ".join("-" if edge((x, y), (x, y + 1)) in self.walls else " " for x in range(self.width))
                )
        return "\n".join(rows)


# --------------------------------------------------------------------------- paths


def plan_path(world: GridWorld, start: Cell, goal: Cell, blocked: frozenset[Cell] | set[Cell] = frozenset()) -> list[Cell]:
    """Shortest 4-connected path, excluding ``start``; ties broken by neighbour order."""
    if not world.in_bounds(start):
        raise Unreachable(f"start {start} out of bounds")
    if start == goal:
        return []
    if not world.in_bounds(goal) or goal in blocked:
        raise Unreachable(f"{goal} is not navigable")
    parent: dict[Cell, Cell | None] = {start: None}
    q = deque([start])
    while q:
        c = q.popleft()
        if c == goal:
            break
        for n in world.neighbors(c):
            if n not in parent and n not in blocked:
                parent[n] = c
                q.append(n)
    if goal not in parent:
        raise Unreachable(f"no path {start} -> {goal}")
    path = []
    c = goal
    while c != start:
        path.append(c)
        c = parent[c]
    path.reverse()
    return path


def path_to_any(world: GridWorld, start: Cell, goals: set[Cell], blocked: frozenset[Cell] | set[Cell] = frozenset()) -> list[Cell]:
    """Shortest path to the nearest of ``goals``."""
    if start in goals:
        return []
    parent: dict[Cell, Cell | None] = {start: None}
    q = deque([start])
    hit = None
    while q:
        c = q.popleft()
        if c in goals:
            hit = c
            break
        for n in world.neighbors(c):
            if n not in parent and n not in blocked:
                parent[n] = c
                q.append(n)
    if hit is None:
        raise Unreachable(f"none of {len(goals)} goal cells reachable from {start}")
    path = []
    while hit != start:
        path.append(hit)
        hit = parent[hit]
    path.reverse()
    return path


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def interaction_cells(world: GridWorld, target: Cell) -> set[Cell]:
    return {
        (target[0] + dx, target[1] + dy)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        if world.in_bounds((target[0] + dx, target[1] + dy))
    }


# --------------------------------------------------------------------------- primitive execution


def _set_truth_object(world: GridWorld, oid: str, **changes) -> None:
    world.truth_objects[oid] = replace(world.truth_objects[oid], tau=world.tick, **changes)


def _set_truth_bit(world: GridWorld, oid: str, prop: str, value: int) -> None:
    pi = list(world.truth_objects[oid].pi)
    pi[PROPERTIES.index(prop)] = value
    _set_truth_object(world, oid, pi=tuple(pi))


def execute_action_step(world: GridWorld, robot: str, step: ActionStep) -> StepResult:
    """Run one primitive for ``robot`` against ground truth. Failures are return values, never raised."""
    if robot not in world.truth_robots:
        raise UnknownRobot(robot)
    r = world.truth_robots[robot]
    if r.sigma is not Status.EXECUTING:
        raise WorldError(f"{robot} is {r.sigma.value}, not EXECUTING")
    world.action_steps[robot] += 1
    kind = step.kind

    if kind is ActionKind.MOVE:
        dest = step.target
        if abs(dest[0] - r.p[0]) + abs(dest[1] - r.p[1]) != 1:
            return failure(FailureReason.NOT_APPLICABLE)
        yaw = YAW_OF_STEP[(dest[0] - r.p[0], dest[1] - r.p[1])]
        if not world.passable(r.p, dest) or dest in world.occupied(exclude=robot):
            world.truth_robots[robot] = replace(r, theta=yaw)
            return failure(FailureReason.COLLISION)
        world.truth_robots[robot] = replace(r, p=dest, theta=yaw)
        world.moves[robot] += 1
        if r.inv is not None:
            _set_truth_object(world, r.inv, p=dest, room=world.room_of(dest))
        return SUCCESS
    if kind is ActionKind.ROTATE:
        world.truth_robots[robot] = replace(r, theta=step.target % 360)
        return SUCCESS
    if kind is ActionKind.SCAN:
        return SUCCESS

    target = step.target
    obj = world.truth_objects.get(target)
    if obj is None or obj.p is None:
        return failure(FailureReason.OUT_OF_RANGE)
    cls = object_class(obj.type)
    if kind is ActionKind.PICKUP:
        if not cls.pickupable or obj.rec in world.truth_robots:
            return failure(FailureReason.NOT_APPLICABLE)
        if r.inv is not None:
            return failure(FailureReason.HANDS_FULL)
    elif kind is ActionKind.PUT:
        if r.inv is None:
            return failure(FailureReason.HANDS_EMPTY)
        if not cls.receptacle or target == r.inv:
            return failure(FailureReason.NOT_APPLICABLE)
    elif kind in (ActionKind.OPEN, ActionKind.CLOSE):
        if not cls.openable:
            return failure(FailureReason.NOT_APPLICABLE)
    elif kind in (ActionKind.TOGGLE_ON, ActionKind.TOGGLE_OFF):
        if not cls.toggleable:
            return failure(FailureReason.NOT_APPLICABLE)
    elif kind is ActionKind.SLICE:
        if not cls.sliceable:
            return failure(FailureReason.NOT_APPLICABLE)
        if r.inv is None:
            return failure(FailureReason.HANDS_EMPTY)
        if world.truth_objects[r.inv].type != "Knife":
            return failure(FailureReason.NOT_APPLICABLE)
    if chebyshev(r.p, obj.p) > INTERACTION_RANGE:
        return failure(FailureReason.OUT_OF_RANGE)
    if kind is not ActionKind.PUT and obj.rec not in world.truth_robots and world.hidden(target):
        return failure(FailureReason.BLOCKED)

    if kind is ActionKind.PICKUP:
        _set_truth_object(world, target, p=r.p, rec=robot, room=world.room_of(r.p))
        world.truth_robots[robot] = replace(r, inv=target, phi=cls.horizon)
    elif kind is ActionKind.PUT:
        if cls.openable and not obj.prop("isOpen") or world.hidden(target):
            return failure(FailureReason.BLOCKED)
        _set_truth_object(world, r.inv, p=obj.p, rec=target, room=obj.room)
        world.truth_robots[robot] = replace(r, inv=None, phi=cls.horizon)
    else:
        if kind in (ActionKind.OPEN, ActionKind.CLOSE):
            _set_truth_bit(world, target, "isOpen", int(kind is ActionKind.OPEN))
        elif kind in (ActionKind.TOGGLE_ON, ActionKind.TOGGLE_OFF):
            _set_truth_bit(world, target, "isToggled", int(kind is ActionKind.TOGGLE_ON))
        else:
            _set_truth_bit(world, target, "isSliced", 1)
        world.truth_robots[robot] = replace(r, phi=cls.horizon)
    return SUCCESS


def relocate(world: GridWorld, oid: str, receptacle: str) -> bool:
    """Scripted external move of ``oid`` into ``receptacle`` (scenario events only)."""
    obj = world.truth_objects.get(oid)
    rec = world.truth_objects.get(receptacle)
    if obj is None or rec is None or obj.rec in world.truth_robots:
        return False
    _set_truth_object(world, oid, p=rec.p, rec=receptacle, room=rec.room)
    return True


def blank_pi() -> tuple[int, ...]:
    return (0,) * D
