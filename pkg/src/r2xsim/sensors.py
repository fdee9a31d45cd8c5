"""Simulated IoT devices: CCTV cameras and device-status reporters, plus failure injection."""

from __future__ import annotations

import enum
import heapq
import random
import warnings
from dataclasses import dataclass, field

from .catalog import object_class
from .state import Cell, Entry, Observation
from .world import DEFAULT_FOV_HALF_ANGLE, DEFAULT_FOV_RANGE, GridWorld

DEFAULT_PERIOD = 5
DEFAULT_BUDGET = 12
COVERAGE_TOLERANCE = 0.05


class CoverageInfeasible(UserWarning):
    pass


class DeviceKind(str, enum.Enum):
    CCTV = "CCTV"
    STATUS = "StatusReporter"


@dataclass(frozen=True)
class IoTDevice:
    id: str
    kind: DeviceKind
    cell: Cell
    yaw: int = 0
    coverage: frozenset[Cell] = frozenset()
    attached_object: str | None = None
    period: int = DEFAULT_PERIOD

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind.value, "cell": list(self.cell), "period": self.period}
        if self.kind is DeviceKind.CCTV:
            d["yaw"] = self.yaw
        else:
            d["attached_object"] = self.attached_object
        return d

    @classmethod
    def from_dict(cls, d: dict, world: GridWorld) -> IoTDevice:
        kind = DeviceKind(d["kind"])
        cell = tuple(d["cell"])
        if kind is DeviceKind.CCTV:
            return cctv(d["id"], world, cell, d["yaw"], d.get("period", DEFAULT_PERIOD))
        return IoTDevice(d["id"], kind, cell, 0, frozenset({cell}), d["attached_object"], d.get("period", DEFAULT_PERIOD))


@dataclass(frozen=True)
class FailureProfile:
    t_delay: int = 0
    p_omit: float = 0.0
    p_corrupt: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.t_delay < 0:
            raise ValueError("t_delay must be >= 0")
        for name in ("p_omit", "p_corrupt"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"t_delay": self.t_delay, "p_omit": self.p_omit, "p_corrupt": self.p_corrupt, "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d: dict) -> FailureProfile:
        return cls(int(d.get("t_delay", 0)), float(d.get("p_omit", 0.0)), float(d.get("p_corrupt", 0.0)), int(d.get("rng_seed", 0)))


@dataclass(frozen=True)
class DelayedObservation:
    obs: Observation
    deliver_at: int


def cctv(device_id: str, world: GridWorld, cell: Cell, yaw: int, period: int = DEFAULT_PERIOD) -> IoTDevice:
    # same visibility rule (and code path) as robot cameras
    cov = world.view_cells(cell, yaw, DEFAULT_FOV_HALF_ANGLE, DEFAULT_FOV_RANGE)
    return IoTDevice(device_id, DeviceKind.CCTV, cell, yaw, cov, None, period)


def _candidates(world: GridWorld) -> list[tuple[Cell, int]]:
    """Wall-adjacent mounting poses: room corners (diagonal and both axis yaws) and wall midpoints."""
    out = []
    for room in world.rooms:
        for x0, y0, x1, y1 in room.bounds:
            corners = (((x0, y0), (45, 0, 90)), ((x1, y0), (135, 180, 90)), ((x0, y1), (315, 0, 270)), ((x1, y1), (225, 180, 270)))
            for cell, yaws in corners:
                out.extend((cell, yaw) for yaw in yaws)
            mx, my = (x0 + x1) // 2, (y0 + y1) // 2
            out.extend((((mx, y0), 90), ((mx, y1), 270), ((x0, my), 0), ((x1, my), 180)))
    return sorted(set(out))


def coverage_fraction(devices: list[IoTDevice], world: GridWorld) -> float:
    covered: set[Cell] = set()
    for d in devices:
        if d.kind is DeviceKind.CCTV:
            covered |= d.coverage
    return len(covered) / (world.width * world.height)


def status_reporters(world: GridWorld, period: int = DEFAULT_PERIOD) -> list[IoTDevice]:
    out = []
    for oid in sorted(world.truth_objects):
        o = world.truth_objects[oid]
        cls = object_class(o.type)
        if cls.toggleable and not cls.pickupable and o.p is not None:
            out.append(IoTDevice(f"sr_{oid}", DeviceKind.STATUS, o.p, 0, frozenset({o.p}), oid, period))
    return out


def generate_layout(
    world: GridWorld,
    target_coverage: float,
    rng: random.Random,
    budget: int = DEFAULT_BUDGET,
    period: int = DEFAULT_PERIOD,
) -> list[IoTDevice]:
    """Greedy CCTV placement towards ``target_coverage`` of navigable cells, plus status reporters."""
    if not 0.0 <= target_coverage <= 1.0:
        raise ValueError(f"target coverage {target_coverage} outside [0, 1]")
    total = world.width * world.height
    lo, hi = target_coverage - COVERAGE_TOLERANCE, target_coverage + COVERAGE_TOLERANCE
    pool = [(cell, yaw, world.view_cells(cell, yaw)) for cell, yaw in _candidates(world)]
    rng.shuffle(pool)
    covered: set[Cell] = set()
    cameras: list[IoTDevice] = []
    used: set[Cell] = set()
    while target_coverage > 0 and len(covered) / total < lo and len(cameras) < budget:
        scored = []
        for cell, yaw, cov in pool:
            if cell in used:
                continue
            gain = len(cov - covered)
            if gain and (len(covered) + gain) / total <= hi:
                scored.append((gain, cell, yaw, cov))
        if not scored:
            break
        best = max(g for g, *_ in scored)
        near_best = [s for s in scored if s[0] * 2 >= best]
        gain, cell, yaw, cov = near_best[rng.randrange(len(near_best))]
        cameras.append(cctv(f"cam{len(cameras)}", world, cell, yaw, period))
        covered |= cov
        used.add(cell)
    achieved = len(covered) / total
    if target_coverage > 0 and achieved < lo:
        warnings.warn(CoverageInfeasible(f"coverage {achieved:.3f} below target {target_coverage:.2f}"), stacklevel=2)
    return cameras + status_reporters(world, period)


def emit(device: IoTDevice, world: GridWorld, tick: int) -> Observation | None:
    if tick % device.period:
        return None
    if device.kind is DeviceKind.CCTV:
        return Observation(device.id, tick, tuple(world.sightings(device.coverage)))
    o = world.truth_objects.get(device.attached_object)
    if o is None or o.p is None:
        return Observation(device.id, tick)
    cls = object_class(o.type)
    props = tuple((p, o.prop(p)) for p in ("isOpen", "isToggled") if p in cls.applicable)
    return Observation(device.id, tick, (Entry(o.id, o.type, o.p, o.rec, o.room, props),))


def degrade(obs: Observation, profile: FailureProfile, rng: random.Random) -> DelayedObservation:
    """Drop and corrupt entries of an IoT observation; delivery is late but ``tau`` is untouched.

    The number of draws depends only on the observation, never on the
    probabilities, so runs that differ only in the profile see common random numbers.
    """
    kept = []
    for entry in obs.entries:
        drop = rng.random() < profile.p_omit
        mask = object_class(entry.type).applicable
        props = []
        for name, bit in entry.props:
            if name in mask:
                flip = rng.random() < profile.p_corrupt
                props.append((name, 1 - bit if flip else bit))
            else:
                props.append((name, bit))
        if not drop:
            kept.append(Entry(entry.obj, entry.type, entry.p, entry.rec, entry.room, tuple(props)))
    degraded = Observation(obs.src, obs.tau, tuple(kept), obs.visited_cells, obs.pose)
    return DelayedObservation(degraded, obs.tau + profile.t_delay)


@dataclass
class DeliveryQueue:
    """Observations ordered by delivery tick, then by enqueue order."""

    items: list[tuple[int, int, Observation]] = field(default_factory=list)
    _seq: int = 0

    def push(self, d: DelayedObservation) -> None:
        heapq.heappush(self.items, (d.deliver_at, self._seq, d.obs))
        self._seq += 1

    def pop_due(self, tick: int) -> list[Observation]:
        out = []
        while self.items and self.items[0][0] <= tick:
            out.append(heapq.heappop(self.items)[2])
        return out
