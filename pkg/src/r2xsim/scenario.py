"""Scenario files: world, fleet, devices, task, failure profile and scripted events in one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import PROPERTIES, ActionKind, D
from .planner import Task
from .sensors import FailureProfile, IoTDevice
from .state import ObjectState, RobotState, Status
from .world import GridWorld, Room

SCENARIO_VERSION = 1
DEFAULT_TICK_BUDGET = 2000


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class RelocationEvent:
    """At ``tick`` something outside the fleet moves ``obj`` into ``receptacle``."""

    tick: int
    obj: str
    receptacle: str

    def to_dict(self) -> dict:
        return {"tick": self.tick, "obj": self.obj, "receptacle": self.receptacle}


@dataclass
class Scenario:
    world: GridWorld
    devices: list[IoTDevice]
    task: Task
    failure: FailureProfile = field(default_factory=FailureProfile)
    seeds: dict[str, int] = field(default_factory=lambda: {"scene_seed": 0, "failure_seed": 0})
    events: list[RelocationEvent] = field(default_factory=list)
    tick_budget: int = DEFAULT_TICK_BUDGET
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        w = self.world
        if not w.truth_robots:
            raise ScenarioInvalid("scenario has no robots")
        if not w.is_connected():
            raise ScenarioInvalid("navigable space is not connected")
        cells = set()
        for r in w.truth_robots.values():
            if not w.in_bounds(r.p) or r.p in cells:
                raise ScenarioInvalid(f"robot {r.id} at invalid or shared cell {r.p}")
            cells.add(r.p)
        ids = set(w.truth_objects) | set(w.truth_robots)
        for o in w.truth_objects.values():
            if o.rec is not None and o.rec not in ids:
                raise ScenarioInvalid(f"{o.id}.rec={o.rec} does not resolve")
        for d in self.devices:
            if d.attached_object is not None and d.attached_object not in w.truth_objects:
                raise ScenarioInvalid(f"device {d.id} attached to unknown {d.attached_object}")
        for e in self.events:
            if e.obj not in w.truth_objects or e.receptacle not in w.truth_objects:
                raise ScenarioInvalid(f"event at tick {e.tick} names unknown ids")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        w = self.world
        return {
            "version": SCENARIO_VERSION,
            "seeds": dict(sorted(self.seeds.items())),
            "params": self.params,
            "tick_budget": self.tick_budget,
            "world": {
                "width": w.width,
                "height": w.height,
                "cell_size": w.cell_size,
                "fov_range": w.fov_range,
                "fov_half_angle": w.fov_half_angle,
                "walls": sorted([list(a), list(b)] for a, b in w.walls),
                "rooms": [
                    {"id": r.id, "name": r.name, "bounds": [list(b) for b in r.bounds], "doors": [list(c) for c in r.doors]}
                    for r in w.rooms
                ],
            },
            "objects": [
                {
                    "id": o.id,
                    "type": o.type,
                    "p": list(o.p),
                    "rec": o.rec,
                    "room": o.room,
                    "props": {p: o.pi[i] for i, p in enumerate(PROPERTIES) if o.pi[i]},
                }
                for o in sorted(w.truth_objects.values(), key=lambda o: o.id)
            ],
            "robots": [
                {
                    "id": r.id,
                    "p": list(r.p),
                    "theta": r.theta,
                    "phi": r.phi,
                    "skills": sorted(s.value for s in r.skills),
                }
                for r in sorted(w.truth_robots.values(), key=lambda r: r.id)
            ],
            "devices": [d.to_dict() for d in self.devices],
            "task": self.task.to_dict(),
            "failure": self.failure.to_dict(),
            "events": [e.to_dict() for e in self.events],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, doc: dict) -> Scenario:
        if doc.get("version") != SCENARIO_VERSION:
            raise ScenarioInvalid(f"unsupported scenario version {doc.get('version')!r}")
        try:
            wd = doc["world"]
            rooms = tuple(
                Room(r["id"], r["name"], tuple(tuple(b) for b in r["bounds"]), tuple(tuple(c) for c in r.get("doors", [])))
                for r in wd["rooms"]
            )
            world = GridWorld(
                wd["width"],
                wd["height"],
                frozenset((tuple(a), tuple(b)) for a, b in wd["walls"]),
                rooms,
                cell_size=wd.get("cell_size", 0.25),
                fov_range=wd.get("fov_range", 12),
                fov_half_angle=wd.get("fov_half_angle", 60.0),
            )
            for o in doc["objects"]:
                pi = [0] * D
                for name, bit in o.get("props", {}).items():
                    pi[PROPERTIES.index(name)] = int(bit)
                world.truth_objects[o["id"]] = ObjectState(
                    o["id"], o["type"], tuple(o["p"]), o.get("rec"), tuple(pi), o.get("room"), "scenario", 0
                )
            for r in doc["robots"]:
                world.truth_robots[r["id"]] = RobotState(
                    r["id"],
                    tuple(r["p"]),
                    r.get("theta", 0),
                    r.get("phi", 30),
                    Status.IDLE,
                    None,
                    frozenset(ActionKind(s) for s in r["skills"]),
                )
            for o in world.truth_objects.values():
                if o.rec in world.truth_robots:
                    r = world.truth_robots[o.rec]
                    world.truth_robots[o.rec] = RobotState(r.id, r.p, r.theta, r.phi, r.sigma, o.id, r.skills)
            devices = [IoTDevice.from_dict(d, world) for d in doc.get("devices", [])]
            scen = cls(
                world,
                devices,
                Task.from_dict(doc["task"]),
                FailureProfile.from_dict(doc.get("failure", {})),
                {k: int(v) for k, v in doc.get("seeds", {}).items()},
                [RelocationEvent(e["tick"], e["obj"], e["receptacle"]) for e in doc.get("events", [])],
                int(doc.get("tick_budget", DEFAULT_TICK_BUDGET)),
                doc.get("params", {}),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            if isinstance(exc, ScenarioInvalid):
                raise
            raise ScenarioInvalid(f"malformed scenario: {exc!r}") from exc
        return scen

    @classmethod
    def loads(cls, text: str) -> Scenario:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ScenarioInvalid(f"scenario is not JSON: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.loads(Path(path).read_text())
