"""Scene generation, task templates, the experiment matrix and directional trend tests."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from statistics import mean
from typing import Callable

from .catalog import ALL_SKILLS, D, PROP_INDEX, object_class
from .orchestrator import OrchestratorConfig, Protocol, run_episode
from .planner import Task
from .scenario import DEFAULT_TICK_BUDGET, RelocationEvent, Scenario
from .sensors import FailureProfile, generate_layout
from .state import ObjectState, Predicate, RobotState, Status, query_goal
from .world import YAW_OF_STEP, GridWorld, Room, edge

MAX_TEAM = 6
TEMPLATES = ("consolidate", "dispose", "power_down", "fetch")


class GenerationFailed(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


# --------------------------------------------------------------------------- scenes

# receptacles, devices, loose items per room kind
ROOM_KINDS: dict[str, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]] = {
    "kitchen": (("Fridge", "CounterTop", "Cabinet", "GarbageCan"), ("CoffeeMachine", "Microwave"), ("Apple", "Tomato", "Bread", "Mug", "Plate")),
    "living": (("Sofa", "Table", "Shelf", "Box"), ("TV", "Lamp"), ("Book", "CellPhone", "Pillow", "Mug")),
    "bedroom": (("Shelf", "Desk", "Box", "Cabinet"), ("Lamp", "TV"), ("Book", "Pillow", "CellPhone", "TennisRacket")),
    "office": (("Desk", "Shelf", "GarbageCan", "Cabinet"), ("Lamp",), ("Book", "Laptop", "Mug", "CellPhone")),
    "bathroom": (("Shelf", "Cabinet", "GarbageCan"), ("Lamp",), ("Towel",)),
}
ROOM_ORDER = ("kitchen", "living", "bedroom", "office", "bathroom")
PERISHABLES = ("Apple", "Tomato", "Bread", "Lettuce")
SURFACES = ("Table", "CounterTop", "Shelf", "Sofa", "Desk")


@dataclass(frozen=True)
class SceneParams:
    rooms: int = 4
    size: int = 10  # room side in cells
    object_density: float = 0.04  # loose items per cell
    team_size: int = 3
    coverage: float = 0.5
    template: str | None = None  # None: uniform over TEMPLATES
    start: str = "scattered"  # "scattered": anywhere; "dock": the whole team starts in one room
    relocation_tick: int | None = None
    tick_budget: int = DEFAULT_TICK_BUDGET

    def __post_init__(self):
        if not 3 <= self.rooms <= 8:
            raise ValueError("rooms must be in 3..8")
        if not 2 <= self.team_size <= MAX_TEAM:
            raise ValueError(f"team_size must be in 2..{MAX_TEAM}")
        if self.size < 6:
            raise ValueError("room size must be >= 6 cells")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must be in [0, 1]")
        if self.template is not None and self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; expected one of {TEMPLATES}")
        if self.start not in ("dock", "scattered"):
            raise ValueError("start must be 'dock' or 'scattered'")
        if not 0 < self.object_density < 0.5:
            raise ValueError("object_density must be in (0, 0.5)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _room_rects(n: int, size: int) -> list[tuple[int, int, int, int]]:
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    width = cols * size
    rects = []
    for r in range(rows):
        in_row = min(cols, n - r * cols)
        edges = [round(i * width / in_row) for i in range(in_row + 1)]
        for i in range(in_row):
            rects.append((edges[i], r * size, edges[i + 1] - 1, (r + 1) * size - 1))
    return rects


def _layout(n: int, size: int, rng: random.Random) -> GridWorld:
    rects = _room_rects(n, size)
    width = max(x1 for _, _, x1, _ in rects) + 1
    height = max(y1 for _, _, _, y1 in rects) + 1
    owner = {}
    for i, (x0, y0, x1, y1) in enumerate(rects):
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                owner[(x, y)] = i
    boundary: dict[tuple[int, int], list] = {}
    for (x, y), i in owner.items():
        for n2 in ((x + 1, y), (x, y + 1)):
            j = owner.get(n2)
            if j is not None and j != i:
                boundary.setdefault((min(i, j), max(i, j)), []).append(edge((x, y), n2))
    # random spanning tree over room adjacency plus a few extra doors
    pairs = sorted(boundary)
    rng.shuffle(pairs)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    doors: dict[tuple[int, int], list] = {}
    for pair in pairs:
        a, b = find(pair[0]), find(pair[1])
        if a != b or rng.random() < 0.25:
            parent[a] = b
            segment = sorted(boundary[pair])
            width_d = min(len(segment) - 2, rng.choice((1, 2)))
            start = rng.randrange(1, len(segment) - width_d)
            doors[pair] = segment[start : start + width_d]
    walls = set()
    for pair, edges in boundary.items():
        walls.update(set(edges) - set(doors.get(pair, ())))
    rooms = []
    for i, rect in enumerate(rects):
        kind = ROOM_ORDER[i % len(ROOM_ORDER)]
        door_cells = sorted({c for pair, es in doors.items() if i in pair for e in es for c in e if owner[c] == i})
        rooms.append(Room(f"room{i}", kind, (rect,), tuple(door_cells)))
    return GridWorld(width, height, frozenset(walls), tuple(rooms))


class _Namer:
    def __init__(self):
        self.counts: dict[str, int] = {}

    def __call__(self, typ: str) -> str:
        k = self.counts.get(typ, 0)
        self.counts[typ] = k + 1
        return f"{typ.lower()}{k}"


def _bits(**named) -> tuple[int, ...]:
    out = [0] * D
    for name, bit in named.items():
        out[PROP_INDEX[name]] = bit
    return tuple(out)


def _furnish(world: GridWorld, params: SceneParams, rng: random.Random) -> None:
    name = _Namer()
    objs = world.truth_objects
    for room in world.rooms:
        recs, devices, items = ROOM_KINDS[room.name]
        door = set(room.doors)
        free = [c for c in room.cells() if c not in door]
        rng.shuffle(free)
        chosen = list(recs[:2]) + rng.sample(recs[2:], k=min(len(recs) - 2, rng.randint(0, 2)))
        if room.name == "kitchen":
            chosen += [t for t in ("GarbageCan", "Fridge") if t not in chosen]
        chosen += rng.sample(devices, k=rng.randint(1, len(devices)))
        spots = iter(free)
        placed = []
        for typ in chosen:
            oid = name(typ)
            cls = object_class(typ)
            bits = _bits(isToggled=int(rng.random() < 0.6)) if cls.toggleable else _bits()
            objs[oid] = ObjectState(oid, typ, next(spots), None, bits, room.id, "scenario", 0)
            if cls.receptacle:
                placed.append(oid)
        n_items = max(1, round(params.object_density * len(free)))
        for _ in range(n_items):
            typ = rng.choice(items)
            _spawn(world, name(typ), typ, room, placed, next(spots), rng)
    world._namer = name  # reused when templates need extra items


def _spawn(world: GridWorld, oid: str, typ: str, room: Room, receptacles: list[str], floor, rng: random.Random) -> None:
    if receptacles and rng.random() < 0.7:
        rec = world.truth_objects[rng.choice(receptacles)]
        world.truth_objects[oid] = ObjectState(oid, typ, rec.p, rec.id, _bits(), room.id, "scenario", 0)
    else:
        world.truth_objects[oid] = ObjectState(oid, typ, floor, None, _bits(), room.id, "scenario", 0)


def _of_type(world: GridWorld, pred: Callable[[ObjectState], bool]) -> list[ObjectState]:
    return [o for _, o in sorted(world.truth_objects.items()) if pred(o)]


def _add_item(world: GridWorld, typ: str, rng: random.Random) -> ObjectState:
    room = rng.choice(world.rooms)
    taken = {o.p for o in world.truth_objects.values()}
    free = [c for c in room.cells() if c not in taken and c not in set(room.doors)]
    oid = world._namer(typ)
    o = ObjectState(oid, typ, rng.choice(free), None, _bits(), room.id, "scenario", 0)
    world.truth_objects[oid] = o
    return o


def _uncover(world: GridWorld, o: ObjectState) -> None:
    """Goal targets never start inside closed receptacles: searching containers is not a skill."""
    rec = world.truth_objects.get(o.rec) if o.rec else None
    if rec is not None and object_class(rec.type).openable and not rec.prop("isOpen"):
        world.truth_objects[o.id] = replace(o, rec=None)


def _sample_task(world: GridWorld, template: str, rng: random.Random) -> Task:
    objs = world.truth_objects
    if template == "power_down":
        devices = _of_type(world, lambda o: object_class(o.type).toggleable and not object_class(o.type).pickupable)
        k = min(len(devices), rng.randint(2, 3))
        chosen = rng.sample(devices, k)
        for d in chosen:
            objs[d.id] = replace(d, pi=_set_bit(d.pi, "isToggled", 1))
        goal = tuple(Predicate("PropertyIs", d.id, prop="isToggled", value=0) for d in sorted(chosen, key=lambda d: d.id))
        return Task("power down the devices that were left on", goal)
    if template == "dispose":
        bins = _of_type(world, lambda o: o.type == "GarbageCan")
        target = rng.choice(bins)
        food = [o for o in _of_type(world, lambda o: object_class(o.type).perishable) if o.rec != target.id]
        while len(food) < 2:
            food.append(_add_item(world, rng.choice(PERISHABLES), rng))
        chosen = rng.sample(food, min(len(food), rng.randint(2, 3)))
        goal = tuple(Predicate("ObjectInReceptacle", o.id, target.id) for o in sorted(chosen, key=lambda o: o.id))
        return Task(f"throw the perishable food into {target.id}", goal)
    if template == "consolidate":
        dests = _of_type(world, lambda o: o.type in ("Box", "Shelf", "Desk"))
        dest = rng.choice(dests)
        items = [o for o in _of_type(world, lambda o: object_class(o.type).pickupable and not object_class(o.type).perishable) if o.rec != dest.id]
        while len(items) < 2:
            items.append(_add_item(world, rng.choice(("Book", "CellPhone", "Mug")), rng))
        chosen = rng.sample(items, min(len(items), rng.randint(2, 3)))
        goal = tuple(Predicate("ObjectInReceptacle", o.id, dest.id) for o in sorted(chosen, key=lambda o: o.id))
        return Task(f"gather the listed items in {dest.id}", goal)
    if template == "fetch":
        items = _of_type(world, lambda o: object_class(o.type).pickupable)
        item = rng.choice(items)
        dests = [o for o in _of_type(world, lambda o: o.type in SURFACES) if o.room != item.room] or _of_type(
            world, lambda o: o.type in SURFACES and o.id != item.rec
        )
        dest = rng.choice(dests)
        return Task(f"bring {item.id} to {dest.id}", (Predicate("ObjectInReceptacle", item.id, dest.id),))
    raise ValueError(f"unknown template {template!r}")


def _set_bit(pi: tuple[int, ...], name: str, bit: int) -> tuple[int, ...]:
    out = list(pi)
    out[PROP_INDEX[name]] = bit
    return tuple(out)


def _place_robots(world: GridWorld, targets: list[str], start: str, rng: random.Random, tries: int = 200) -> list[RobotState]:
    for _ in range(tries):
        cells = world.cells() if start == "scattered" else rng.choice(world.rooms).cells()
        spots = rng.sample(cells, MAX_TEAM)
        robots = [
            RobotState(f"r{i + 1}", c, rng.choice(sorted(YAW_OF_STEP.values())), 30, Status.IDLE, None, ALL_SKILLS)
            for i, c in enumerate(spots)
        ]
        seen = set()
        for r in robots:
            world.truth_robots = {r.id: r}
            _, entries = world.field_of_view(r.id)
            seen |= {e.obj for e in entries}
        world.truth_robots = {}
        if sum(t not in seen for t in targets) * 2 >= len(targets):
            return robots
    raise GenerationFailed("could not hide enough goal targets from the initial views")


def generate_scene(params: SceneParams, seed: int) -> Scenario:
    """Deterministic scenario for ``(params, seed)``.

    The first ``team_size`` of six sampled robots are used, so scenes with different team sizes
    share world, task and the leading robots' poses.
    """
    rng = random.Random(f"scene:{seed}")
    for _ in range(20):
        world = _layout(params.rooms, params.size, rng)
        _furnish(world, params, rng)
        template = params.template or rng.choice(TEMPLATES)
        task = _sample_task(world, template, rng)
        for pred in task.goal:
            _uncover(world, world.truth_objects[pred.obj])
        if query_goal(world.truth_state(), task.goal):
            continue
        targets = sorted({p.obj for p in task.goal})
        try:
            robots = _place_robots(world, targets, params.start, rng)
        except GenerationFailed:
            continue
        break
    else:
        raise GenerationFailed(f"seed {seed}: constraints unsatisfiable after 20 attempts")
    del world._namer
    world.truth_robots = {r.id: r for r in robots[: params.team_size]}
    devices = generate_layout(world, params.coverage, random.Random(f"layout:{seed}"))
    events = []
    if params.relocation_tick is not None:
        events = _relocation(world, task, params.relocation_tick, rng)
    scen = Scenario(
        world,
        devices,
        task,
        FailureProfile(),
        {"scene_seed": seed, "failure_seed": seed},
        events,
        params.tick_budget,
        {**params.to_dict(), "template": template},
    )
    scen.validate()
    return scen


def _relocation(world: GridWorld, task: Task, tick: int, rng: random.Random) -> list[RelocationEvent]:
    movable = [p.obj for p in task.goal if object_class(world.truth_objects[p.obj].type).pickupable]
    if not movable:
        return []
    oid = rng.choice(sorted(movable))
    here = world.truth_objects[oid].room
    goal_recs = {p.target for p in task.goal if p.target}
    dests = _of_type(
        world,
        lambda o: o.type in SURFACES and o.room != here and o.id not in goal_recs,
    )
    if not dests:
        return []
    return [RelocationEvent(tick, oid, rng.choice(dests).id)]


# --------------------------------------------------------------------------- suites


@dataclass(frozen=True)
class Matrix:
    protocols: tuple[str, ...] = ("IR", "R2R", "R2X")
    t_delay: tuple[int, ...] = (0,)
    p_omit: tuple[float, ...] = (0.0,)
    p_corrupt: tuple[float, ...] = (0.0,)
    team_sizes: tuple[int, ...] = (3,)
    scene: dict = field(default_factory=dict)  # SceneParams overrides; "rooms" may be [lo, hi]
    config: dict = field(default_factory=dict)  # OrchestratorConfig overrides

    @classmethod
    def from_dict(cls, doc: dict) -> Matrix:
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown matrix keys {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items() if k not in ("scene", "config")}
        m = cls(**kw, scene=dict(doc.get("scene", {})), config=dict(doc.get("config", {})))
        for p in m.protocols:
            Protocol(p.upper())
        return m

    def cells(self) -> list[dict]:
        return [
            {"protocol": pr.upper(), "t_delay": td, "p_omit": po, "p_corrupt": pc, "team_size": n}
            for n, td, po, pc, pr in itertools.product(self.team_sizes, self.t_delay, self.p_omit, self.p_corrupt, self.protocols)
        ]

    def scene_params(self, seed: int, team_size: int) -> SceneParams:
        kw = dict(self.scene)
        rooms = kw.get("rooms", 4)
        if isinstance(rooms, (list, tuple)):
            kw["rooms"] = random.Random(f"rooms:{seed}").randint(rooms[0], rooms[1])
        return SceneParams(**{**kw, "team_size": team_size})


def cell_key(cell: dict) -> str:
    return "|".join(f"{k}={cell[k]}" for k in ("protocol", "t_delay", "p_omit", "p_corrupt", "team_size"))


CSV_COLUMNS = (
    "cell",
    "seed",
    "protocol",
    "t_delay",
    "p_omit",
    "p_corrupt",
    "team_size",
    "success_truth",
    "success_belief",
    "action_steps",
    "path_length_m",
    "planner_calls",
    "token_proxy",
    "ticks",
    "fail_count",
    "termination",
    "error",
)


@lru_cache(maxsize=64)
def _scene_json(params: SceneParams, seed: int) -> str:
    return generate_scene(params, seed).dumps()


def scenario_for(matrix: Matrix, cell: dict, seed: int) -> Scenario:
    """The paired scenario: identical world and task bytes across protocol and failure cells."""
    scen = Scenario.loads(_scene_json(matrix.scene_params(seed, cell["team_size"]), seed))
    if cell["protocol"] != "R2X":
        scen.devices = []
    scen.failure = FailureProfile(cell["t_delay"], cell["p_omit"], cell["p_corrupt"], scen.seeds["failure_seed"])
    return scen


def run_cell(matrix: Matrix, cell: dict, seed: int, planner=None) -> dict:
    row = {"cell": cell_key(cell), "seed": seed, **cell}
    try:
        scen = scenario_for(matrix, cell, seed)
        config = OrchestratorConfig(protocol=cell["protocol"], **matrix.config)
        res = run_episode(scen, config, planner)
        row.update(res.to_dict())
        row.pop("trace_path")
        row["termination"] = res.termination
        row["error"] = ""
    except Exception as exc:  # recorded, never aborts the suite
        row.update({k: "" for k in CSV_COLUMNS if k not in row})
        row.update(success_truth=False, success_belief=False, error=f"{type(exc).__name__}: {exc}")
    return row


def _run_cell_args(args):
    return run_cell(*args)


@dataclass
class SuiteResult:
    rows: list[dict]

    def cells(self) -> list[str]:
        return sorted({r["cell"] for r in self.rows})

    def select(self, **cell) -> dict[int, dict]:
        """Rows of the matching cell keyed by seed."""
        out = {}
        for r in self.rows:
            if all(_same(r[k], v) for k, v in cell.items()):
                if r["seed"] in out:
                    raise ValueError(f"selection {cell} is ambiguous")
                out[r["seed"]] = r
        return out

    def aggregates(self) -> dict[str, dict]:
        out = {}
        for key in self.cells():
            rows = [r for r in self.rows if r["cell"] == key]
            ok = [r for r in rows if not r["error"]]
            out[key] = {
                "n": len(rows),
                "errors": len(rows) - len(ok),
                "success_rate": sum(bool(r["success_truth"]) for r in rows) / len(rows),
                "avg_action_steps": _avg(r["action_steps"] for r in ok),
                "avg_path_length_m": _avg(r["path_length_m"] for r in ok),
                "avg_token_proxy": _avg(r["token_proxy"] for r in ok),
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in sorted(self.rows, key=lambda r: (r["cell"], r["seed"])):
            w.writerow({k: _fmt(r[k]) for k in CSV_COLUMNS})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SuiteResult:
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            row = dict(r)
            for k in ("seed", "t_delay", "team_size", "action_steps", "planner_calls", "token_proxy", "ticks", "fail_count"):
                row[k] = int(row[k]) if row[k] != "" else ""
            for k in ("p_omit", "p_corrupt", "path_length_m"):
                row[k] = float(row[k]) if row[k] != "" else ""
            for k in ("success_truth", "success_belief"):
                row[k] = row[k] == "true"
            rows.append(row)
        return cls(rows)

    def write(self, out_dir: str | Path, plots: bool = False) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episodes.csv").write_text(self.to_csv())
        (out / "aggregates.json").write_text(json.dumps(self.aggregates(), sort_keys=True, indent=1) + "\n")
        if plots:
            plot_aggregates(self, out)


def _same(a, b) -> bool:
    if isinstance(b, float) or isinstance(a, float):
        return a != "" and math.isclose(float(a), float(b))
    return a == b


def _avg(values) -> float | None:
    vals = [v for v in values if v != ""]
    return round(mean(vals), 6) if vals else None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def run_suite(matrix: Matrix, n_seeds: int, planner=None, jobs: int = 1, first_seed: int = 0) -> SuiteResult:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    work = [(matrix, cell, seed, planner) for seed in range(first_seed, first_seed + n_seeds) for cell in matrix.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, work, chunksize=max(1, len(work) // (jobs * 4))))
    else:
        rows = [run_cell(*w) for w in work]
    rows.sort(key=lambda r: (r["cell"], r["seed"]))
    return SuiteResult(rows)


def plot_aggregates(result: SuiteResult, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    agg = result.aggregates()
    keys = list(agg)
    paths = []
    for metric in ("success_rate", "avg_path_length_m", "avg_action_steps", "avg_token_proxy"):
        fig, ax = plt.subplots(figsize=(max(4, len(keys) * 0.8), 3.5))
        ax.bar(range(len(keys)), [agg[k][metric] or 0 for k in keys])
        ax.set_xticks(range(len(keys)), [k.replace("|", "\n") for k in keys], fontsize=6)
        ax.set_ylabel(metric)
        fig.tight_layout()
        p = out_dir / f"{metric}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        paths.append(p)
    return paths


# --------------------------------------------------------------------------- trends


def sign_test(a: list[float], b: list[float]) -> float:
    """One-sided exact sign test p-value for ``a < b`` on paired samples; ties are dropped."""
    if len(a) != len(b):
        raise ValueError("paired samples differ in length")
    wins = sum(x < y for x, y in zip(a, b))
    losses = sum(x > y for x, y in zip(a, b))
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2**n


@dataclass(frozen=True)
class TrendOutcome:
    name: str
    passed: bool
    p_value: float | None
    effect: dict
    detail: str = ""

    def line(self) -> str:
        p = "n/a" if self.p_value is None else f"{self.p_value:.3g}"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: p={p} {self.detail}".rstrip()


def _paired(result: SuiteResult, metric: str, a: dict, b: dict, min_seeds: int) -> tuple[list, list]:
    ra, rb = result.select(**a), result.select(**b)
    seeds = sorted(s for s in set(ra) & set(rb) if not ra[s]["error"] and not rb[s]["error"])
    if len(seeds) < min_seeds:
        raise InsufficientData(f"{len(seeds)} paired seeds for {a} vs {b}; need {min_seeds}")
    return [float(ra[s][metric]) for s in seeds], [float(rb[s][metric]) for s in seeds]


def _rate(result: SuiteResult, cell: dict) -> float:
    rows = list(result.select(**cell).values())
    return sum(bool(r["success_truth"]) for r in rows) / len(rows) if rows else float("nan")


def paired_less(result: SuiteResult, metric: str, a: dict, b: dict, alpha: float = 0.05, min_seeds: int = 30) -> TrendOutcome:
    xa, xb = _paired(result, metric, a, b, min_seeds)
    p = sign_test(xa, xb)
    ma, mb = mean(xa), mean(xb)
    effect = {"mean_a": ma, "mean_b": mb, "reduction": (mb - ma) / mb if mb else 0.0}
    return TrendOutcome(f"{metric} {_label(a)} < {_label(b)}", ma < mb and p < alpha, p, effect, f"{ma:.3f} vs {mb:.3f}")


def monotone(
    result: SuiteResult,
    metric: str,
    axis: str,
    values: list,
    fixed: dict,
    increasing: bool = True,
    alpha: float = 0.05,
    min_seeds: int = 30,
) -> TrendOutcome:
    """Means non-decreasing (or non-increasing) along ``axis``, strictly between the ends by a sign test."""
    cols = [_paired(result, metric, {**fixed, axis: values[0]}, {**fixed, axis: v}, min_seeds)[1] for v in values]
    means = [mean(c) for c in cols]
    steps = zip(means, means[1:])
    ordered = all(x <= y for x, y in steps) if increasing else all(x >= y for x, y in steps)
    p = sign_test(cols[0], cols[-1]) if increasing else sign_test(cols[-1], cols[0])
    detail = " -> ".join(f"{m:.3f}" for m in means)
    name = f"{metric} {'non-decreasing' if increasing else 'non-increasing'} over {axis}={values}"
    return TrendOutcome(name, ordered and p < alpha, p, {"means": means}, detail)


def _label(cell: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in cell.items())


@dataclass(frozen=True)
class Trend:
    name: str
    needs: tuple[dict, ...]  # cells that must be present
    check: Callable[[SuiteResult, int], TrendOutcome]


def _protocol_trends() -> list[Trend]:
    cell = {"t_delay": 0, "p_omit": 0.0, "p_corrupt": 0.0, "team_size": 3}
    ir, r2r, r2x = ({**cell, "protocol": p} for p in ("IR", "R2R", "R2X"))

    def success(result, min_seeds):
        _paired(result, "ticks", ir, r2x, min_seeds)
        a, b, c = _rate(result, ir), _rate(result, r2r), _rate(result, r2x)
        ok = a < b and abs(b - c) <= 0.05
        return TrendOutcome("success IR < R2R = R2X (+-5 points)", ok, None, {"IR": a, "R2R": b, "R2X": c}, f"{a:.2f} / {b:.2f} / {c:.2f}")

    return [
        Trend("success_protocols", (ir, r2r, r2x), success),
        Trend("path_r2x_lt_r2r", (r2x, r2r), lambda r, m: paired_less(r, "path_length_m", r2x, r2r, min_seeds=m)),
        Trend("path_r2r_lt_ir", (r2r, ir), lambda r, m: paired_less(r, "path_length_m", r2r, ir, min_seeds=m)),
        Trend("tokens_r2x_lt_r2r", (r2x, r2r), lambda r, m: paired_less(r, "token_proxy", r2x, r2r, min_seeds=m)),
    ]


DEFAULT_TRENDS: list[Trend] = _protocol_trends()


def trend_report(result: SuiteResult, trends: list[Trend] | None = None, min_seeds: int = 30) -> list[TrendOutcome]:
    """Evaluate every registered trend whose cells the suite covers."""
    out = []
    for trend in trends if trends is not None else DEFAULT_TRENDS:
        if any(not result.select(**c) for c in trend.needs):
            continue
        out.append(trend.check(result, min_seeds))
    return out
