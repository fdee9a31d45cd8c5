"""The coordination loop: online fusion, gated replanning, parallel dispatch and event monitoring."""

from __future__ import annotations

import enum
import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .catalog import MANIPULATIONS, ActionKind, object_class
from .executor import DEFAULT_RETRIES, Job, JobState
from .planner import (
    NAVIGATION_KINDS,
    ActionNode,
    BaselinePlanner,
    NodeStatus,
    PlanGraph,
    PlanningError,
    Task,
    validate_plan,
)
from .scenario import Scenario, ScenarioInvalid
from .sensors import DeliveryQueue, degrade, emit
from .state import (
    CompletedAction,
    Observation,
    Predicate,
    SemanticState,
    StateMismatch,
    Status,
    check_invariants,
    fuse,
    mark_missing,
    predicate_holds,
    query_goal,
)
from .world import ActionStep, FailureReason, GridWorld, StepResult, execute_action_step, relocate

log = logging.getLogger(__name__)

SHARED_HUB = "hub"


class Protocol(str, enum.Enum):
    IR = "IR"
    R2R = "R2R"
    R2X = "R2X"


class PlannerUnavailable(PlanningError):
    pass


@dataclass(frozen=True)
class OrchestratorConfig:
    protocol: Protocol = Protocol.R2X
    max_fails: int = 5
    wait_window: int = 1
    stall_horizon: int = 50
    tick_budget: int | None = None  # None: use the scenario's budget
    max_retries: int = DEFAULT_RETRIES
    replan_threshold: int = 2

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        for name in ("max_fails", "wait_window", "stall_horizon", "replan_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tick_budget is not None and self.tick_budget <= 0:
            raise ValueError("tick_budget must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


# --------------------------------------------------------------------------- events


@dataclass(frozen=True)
class ActionDone:
    src: str
    act: str
    res: StepResult


@dataclass(frozen=True)
class IoTUpdate:
    obs: Observation


@dataclass(frozen=True)
class Timeout:
    pass


Event = Union[ActionDone, IoTUpdate, Timeout]


# --------------------------------------------------------------------------- dispatch


def _distance_to_node(node: ActionNode, robot_p, belief: SemanticState, world: GridWorld) -> int:
    dist = world.distances_from(robot_p)
    far = world.width * world.height
    if node.a in NAVIGATION_KINDS:
        area = belief.areas.get(node.params["room"])
        if area is None:
            return far
        return min((dist.get(c, far) for c in area.cells), default=far)
    o = belief.objects.get(node.params.get("object", ""))
    if o is None or o.p is None:
        return far
    return dist.get(o.p, far)


def _inventory_rank(node: ActionNode, robot, belief: SemanticState) -> int:
    obj = node.params.get("object")
    if robot.inv is not None and robot.inv == obj:
        return -1
    if node.a == "slice_object" and robot.inv is not None:
        held = belief.objects.get(robot.inv)
        if held is not None and held.type == "Knife":
            return -1
    return 0 if robot.inv is None else 1


def _horizon_of(node: ActionNode, belief: SemanticState) -> int:
    o = belief.objects.get(node.params.get("object", ""))
    return object_class(o.type).horizon if o is not None else 30


def match_robot(node: ActionNode, idle: Iterable[str], belief: SemanticState, world: GridWorld) -> str | None:
    """Best idle robot for ``node``: skills and preference are hard filters, then
    (path distance, inventory compatibility, camera-horizon change, id)."""
    candidates = [rid for rid in idle if rid in belief.robots and node.req_skills <= belief.robots[rid].skills]
    if node.r_pref is not None:
        candidates = [rid for rid in candidates if rid == node.r_pref]
    if not candidates:
        return None
    target_phi = _horizon_of(node, belief)

    def score(rid: str):
        r = belief.robots[rid]
        return (
            _distance_to_node(node, r.p, belief, world),
            _inventory_rank(node, r, belief),
            abs(target_phi - r.phi),
            rid,
        )

    return min(candidates, key=score)


def dispatch_ready(plan: PlanGraph, idle: Iterable[str], belief: SemanticState, world: GridWorld) -> list[tuple[str, str]]:
    """Assign dependency-satisfied PENDING nodes to idle robots (at most one node per robot)."""
    free = sorted(idle)
    out = []
    for node in plan.ready():
        if not free:
            break
        rid = match_robot(node, free, belief, world)
        if rid is None:
            continue
        node.status = NodeStatus.RUNNING
        free.remove(rid)
        out.append((rid, node.node_id))
    return out


# --------------------------------------------------------------------------- replanning triggers


_RELEVANT_BITS = {"toggle_device": ("isToggled",), "open_close": ("isOpen",), "slice_object": ("isSliced",)}


def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _node_refs(node: ActionNode) -> list[str]:
    return [node.params[k] for k in ("object", "receptacle") if k in node.params]


def _precondition_broken(node: ActionNode, belief: SemanticState, plan: PlanGraph) -> bool:
    o = belief.objects.get(node.params.get("object", ""))
    if o is None or o.p is None:
        return False
    if node.a == "toggle_device":
        return o.prop("isToggled") == int(node.params["state"] == "on")
    if node.a == "open_close":
        return o.prop("isOpen") == int(node.params["state"] == "open")
    if node.a == "slice_object":
        return o.prop("isSliced") == 1
    if node.a in ("fetch_and_place", "dispose") and node.status is NodeStatus.PENDING:
        holder = belief.closed_ancestor(o.id)
        if holder is None:
            return False
        # fine if the plan itself opens it first
        return not any(
            n.a == "open_close" and n.params.get("object") == holder and n.status is not NodeStatus.FAILED
            for n in plan.nodes.values()
        )
    return False


def needs_replan(
    plan: PlanGraph | None,
    belief: SemanticState,
    plan_belief: SemanticState,
    events: Iterable[Event] = (),
    goal: tuple[Predicate, ...] = (),
    threshold: int = 2,
) -> bool:
    """Whether the current plan is out of date with respect to the belief."""
    if plan is None:
        return True
    active = plan.active()
    if not active:
        return not query_goal(belief, goal)
    referenced: dict[str, list[ActionNode]] = {}
    for node in active:
        for oid in _node_refs(node):
            referenced.setdefault(oid, []).append(node)
            before, now = plan_belief.objects.get(oid), belief.objects.get(oid)
            if before is None or before.p is None or now is None:
                continue
            if now.p is None:
                return True
            if now.rec not in belief.robots and _manhattan(now.p, before.p) >= threshold:
                return True
        if _precondition_broken(node, belief, plan):
            return True
    for ev in events:
        if not isinstance(ev, IoTUpdate):
            continue
        for e in ev.obs.entries:
            if e.obj not in referenced or e.rec in belief.robots:
                continue
            before = plan_belief.objects.get(e.obj)
            if before is None or before.p is None or _manhattan(before.p, e.p) >= threshold:
                return True
            bits = dict(e.props)
            for node in referenced[e.obj]:
                for name in _RELEVANT_BITS.get(node.a, ()):
                    if name in bits and bits[name] != before.prop(name):
                        return True
    for pred in goal:
        ids = [pred.obj] + ([pred.target] if pred.kind == "ObjectInReceptacle" else [])
        for oid in ids:
            before, now = plan_belief.objects.get(oid), belief.objects.get(oid)
            unknown_then = before is None or before.p is None
            if unknown_then and now is not None and now.p is not None and not predicate_holds(belief, pred):
                return True
    return False


def detect_stall(plan: PlanGraph | None, last_progress: int, tick: int, horizon: int) -> bool:
    """No node finished and nobody moved for ``horizon`` ticks while something is RUNNING."""
    if plan is None or not any(n.status is NodeStatus.RUNNING for n in plan.nodes.values()):
        return False
    return tick - last_progress >= horizon


def route_observations(
    protocol: Protocol,
    robot_obs: dict[str, Observation],
    iot_obs: list[Observation],
) -> dict[str, list[Observation]]:
    """Which hub receives which observation under each sharing protocol."""
    protocol = Protocol(protocol)
    if protocol is Protocol.IR:
        return {rid: [obs] for rid, obs in sorted(robot_obs.items())}
    shared = [robot_obs[rid] for rid in sorted(robot_obs)]
    if protocol is Protocol.R2X:
        shared += iot_obs
    return {SHARED_HUB: shared}


# --------------------------------------------------------------------------- hubs


@dataclass
class Hub:
    name: str
    robots: tuple[str, ...]
    belief: SemanticState
    task: Task
    plan: PlanGraph | None = None
    plan_belief: SemanticState | None = None
    plan_version: int = 0
    replan: bool = True
    fails: int = 0
    fail_total: int = 0
    planner_calls: int = 0
    tokens: int = 0
    last_progress: int = 0
    finished: str | None = None  # "goal" or "fails"
    jobs: dict[str, Job] = field(default_factory=dict)


def split_goal(goal: tuple[Predicate, ...], robots: dict) -> dict[str, tuple[Predicate, ...]]:
    """Greedy predicate assignment for isolated robots: fewest-assigned capable robot, ties by id."""
    out: dict[str, list[Predicate]] = {rid: [] for rid in sorted(robots)}
    for pred in goal:
        if pred.kind == "RobotInRoom":
            if pred.obj in out:
                out[pred.obj].append(pred)
            continue
        need = _skills_for(pred)
        capable = [rid for rid in sorted(robots) if need <= robots[rid].skills] or sorted(robots)
        best = min(capable, key=lambda rid: (len(out[rid]), rid))
        out[best].append(pred)
    return {rid: tuple(ps) for rid, ps in out.items()}


def _skills_for(pred: Predicate) -> frozenset[ActionKind]:
    if pred.kind in ("ObjectInRoom", "ObjectInReceptacle"):
        return frozenset({ActionKind.MOVE, ActionKind.PICKUP, ActionKind.PUT})
    if pred.prop == "isToggled":
        return frozenset({ActionKind.MOVE, ActionKind.TOGGLE_ON if pred.value else ActionKind.TOGGLE_OFF})
    if pred.prop == "isOpen":
        return frozenset({ActionKind.MOVE, ActionKind.OPEN if pred.value else ActionKind.CLOSE})
    if pred.prop == "isSliced":
        return frozenset({ActionKind.MOVE, ActionKind.PICKUP, ActionKind.SLICE})
    return frozenset({ActionKind.MOVE})


# --------------------------------------------------------------------------- results


@dataclass
class EpisodeResult:
    success_truth: bool
    success_belief: bool
    action_steps: int
    path_length_m: float
    planner_calls: int
    token_proxy: int
    ticks: int
    fail_count: int
    trace_path: str | None = None
    termination: str = ""
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "success_truth": self.success_truth,
            "success_belief": self.success_belief,
            "action_steps": self.action_steps,
            "path_length_m": round(self.path_length_m, 6),
            "planner_calls": self.planner_calls,
            "token_proxy": self.token_proxy,
            "ticks": self.ticks,
            "fail_count": self.fail_count,
            "trace_path": self.trace_path,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


# --------------------------------------------------------------------------- episode loop


class Episode:
    """One run of the coordination loop over a private copy of the scenario's world."""

    def __init__(self, scenario: Scenario, config: OrchestratorConfig, planner=None, check_safety: bool = False):
        scenario.validate()
        self.scenario = scenario
        self.config = config
        self.planner = planner or BaselinePlanner()
        self.check_safety = check_safety
        self.world = scenario.world.clone()
        for rid, r in self.world.truth_robots.items():
            self.world.truth_robots[rid] = _with_status(r, Status.IDLE)
        self.budget = config.tick_budget or scenario.tick_budget
        self.protocol = config.protocol
        self.devices = list(scenario.devices) if self.protocol is Protocol.R2X else []
        self.queue = DeliveryQueue()
        self.rng = random.Random(scenario.failure.rng_seed)
        self.events_by_tick = {}
        for ev in scenario.events:
            self.events_by_tick.setdefault(ev.tick, []).append(ev)
        self.trace: list[dict] = []
        self.violations: list[str] = []
        self.scanned: set[str] = set()
        self.yield_for: dict[str, str] = {}  # idle robot -> teammate it is blocking
        self.hubs = self._make_hubs()
        self.hub_of = {rid: h for h in self.hubs for rid in h.robots}

    def _make_hubs(self) -> list[Hub]:
        w, task = self.world, self.scenario.task
        areas = w.areas()
        if self.protocol is Protocol.IR:
            parts = split_goal(task.goal, w.truth_robots)
            return [
                Hub(rid, (rid,), SemanticState({rid: w.truth_robots[rid]}, {}, dict(areas), 0), Task(task.description, parts[rid]))
                for rid in sorted(w.truth_robots)
            ]
        devices = frozenset(d.id for d in self.devices)
        belief = SemanticState(dict(w.truth_robots), {}, areas, 0, devices)
        return [Hub(SHARED_HUB, tuple(sorted(w.truth_robots)), belief, task)]

    # -- phases -----------------------------------------------------------

    def _sense(self, t: int) -> None:
        w = self.world
        robot_obs = {}
        for rid in sorted(w.truth_robots):
            cells, entries = w.field_of_view(rid, scan=rid in self.scanned)
            robot_obs[rid] = Observation(rid, t, tuple(entries), cells, w.robot_pose(rid))
        self.scanned.clear()
        for d in self.devices:
            obs = emit(d, w, t)
            if obs is not None:
                self.queue.push(degrade(obs, self.scenario.failure, self.rng))
        iot = self.queue.pop_due(t)
        routed = route_observations(self.protocol, robot_obs, iot)
        for hub in self.hubs:
            belief = hub.belief
            for obs in routed.get(hub.name, ()):
                belief = fuse(belief, obs)
                if obs.src in belief.robots:
                    belief = mark_missing(belief, obs)
            hub.belief = belief
        self.iot_events = [IoTUpdate(o) for o in iot] if self.protocol is Protocol.R2X else []

    def _halt(self, hub: Hub) -> None:
        for rid in list(hub.jobs):
            self._release(hub, rid)
        hub.jobs.clear()

    def _release(self, hub: Hub, rid: str) -> None:
        hub.jobs.pop(rid, None)
        w = self.world
        w.truth_robots[rid] = _with_status(w.truth_robots[rid], Status.IDLE)
        if rid in hub.belief.robots:
            hub.belief.robots[rid] = _with_status(hub.belief.robots[rid], Status.IDLE)

    def _plan(self, hub: Hub, t: int) -> bool:
        self._halt(hub)
        hub.plan_version += 1
        hub.planner_calls += 1
        fleet = {rid: hub.belief.robots[rid] for rid in hub.robots}
        try:
            result = self.planner.plan(hub.task, hub.belief, fleet)
        except PlanningError as exc:
            log.info("t=%d %s planning failed: %s", t, hub.name, exc)
            hub.plan = None
            return False
        hub.tokens += result.tokens
        violations = validate_plan(result.plan, fleet, hub.belief)
        if violations:
            log.info("t=%d %s plan rejected: %s", t, hub.name, [v.kind for v in violations])
            hub.plan = None
            return False
        hub.plan = result.plan
        hub.plan_belief = hub.belief.copy()
        hub.replan = False
        return True

    def _fail(self, hub: Hub) -> None:
        hub.fails += 1
        hub.fail_total += 1
        if hub.fails >= self.config.max_fails:
            hub.finished = "fails"
            self._halt(hub)

    def _dispatch(self, hub: Hub) -> None:
        idle = [rid for rid in hub.robots if rid not in hub.jobs]
        if not idle or hub.plan is None:
            return
        for rid, nid in dispatch_ready(hub.plan, idle, hub.belief, self.world):
            node = hub.plan.nodes[nid]
            hub.jobs[rid] = Job(node, rid, hub.plan_version, self.config.max_retries)
            w = self.world
            w.truth_robots[rid] = _with_status(w.truth_robots[rid], Status.EXECUTING)
            hub.belief.robots[rid] = _with_status(hub.belief.robots[rid], Status.EXECUTING)

    def _execute(self, t: int) -> dict[str, list[ActionDone]]:
        done: dict[str, list[ActionDone]] = {h.name: [] for h in self.hubs}
        for rid in sorted(self.world.truth_robots):
            hub = self.hub_of[rid]
            job = hub.jobs.get(rid)
            record = {"t": t, "robot": rid, "plan": hub.plan_version, "node": None, "step": None, "result": None}
            if rid in self.yield_for:
                step = self._yield_step(hub, rid)
                if step is not None:
                    res = self._step_aside(rid, step)
                    record["step"] = step.to_json()
                    record["result"] = res.label
                    if job is not None:
                        record["node"] = job.node.node_id
                        job.reset()
                        job = None
            if job is not None:
                record["node"] = job.node.node_id
                step = job.next_step(self.world, hub.belief)
                if step is not None:
                    if self.check_safety and job.plan_version != hub.plan_version:
                        self.violations.append(f"t={t} {rid} runs a step of plan {job.plan_version} after replan")
                    res = execute_action_step(self.world, rid, step)
                    record["step"] = step.to_json()
                    record["result"] = res.label
                    if res.reason is FailureReason.COLLISION:
                        occupant = self._occupant(step.target)
                        if occupant in hub.robots and self._should_yield(hub, occupant, rid):
                            self.yield_for[occupant] = rid
                    if res.ok:
                        if step.kind is ActionKind.MOVE:
                            hub.last_progress = t
                        elif step.kind is ActionKind.SCAN:
                            self.scanned.add(rid)
                        elif step.kind in MANIPULATIONS:
                            hub.belief = apply_effects(hub.belief, rid, step, t + 1)
                    job.record(step, res, self.world, hub.belief)
                if job.state is not JobState.ACTIVE:
                    ok = job.state is JobState.DONE
                    if not ok:
                        log.info("t=%d %s node %s failed: %s", t, rid, job.node.node_id, job.error)
                    res = StepResult(True) if ok else StepResult(False, job.last_failure)
                    done[hub.name].append(ActionDone(rid, job.node.node_id, res))
            r = self.world.truth_robots[rid]
            record["pose"] = [r.p[0], r.p[1], r.theta]
            record["inv"] = r.inv
            self.trace.append(record)
        return done

    def _occupant(self, cell) -> str | None:
        for rid, r in self.world.truth_robots.items():
            if r.p == cell:
                return rid
        return None

    def _should_yield(self, hub: Hub, occupant: str, mover: str) -> bool:
        """Idle teammates always make way; in a head-on meeting the higher id does."""
        other = hub.jobs.get(occupant)
        if other is None:
            return True
        head_on = bool(other.steps) and other.steps[0].target == self.world.truth_robots[mover].p
        return head_on and occupant > mover

    def _yield_step(self, hub: Hub, rid: str) -> ActionStep | None:
        """First move of an idle robot towards the nearest free cell off a teammate's route."""
        w = self.world
        job = hub.jobs.get(self.yield_for[rid])
        if job is None:
            del self.yield_for[rid]
            return None
        blocked = {w.truth_robots[job.robot].p} | {s.target for s in job.steps if s.kind is ActionKind.MOVE}
        start = w.truth_robots[rid].p
        if start not in blocked:
            del self.yield_for[rid]
            return None
        others = w.occupied(exclude=rid)
        first = {start: None}
        frontier = deque([start])
        while frontier:
            c = frontier.popleft()
            if c not in blocked:
                while first[c] != start and first[c] is not None:
                    c = first[c]
                return ActionStep(ActionKind.MOVE, c)
            for n in w.neighbors(c):
                if n not in first and n not in others:
                    first[n] = c
                    frontier.append(n)
        return None

    def _step_aside(self, rid: str, step: ActionStep) -> StepResult:
        w = self.world
        before = w.truth_robots[rid].sigma
        w.truth_robots[rid] = _with_status(w.truth_robots[rid], Status.EXECUTING)
        try:
            return execute_action_step(w, rid, step)
        finally:
            w.truth_robots[rid] = _with_status(w.truth_robots[rid], before)

    def _monitor(self, hub: Hub, t: int, done: list[ActionDone]) -> None:
        if not done and not self.iot_events:
            if detect_stall(hub.plan, hub.last_progress, t, self.config.stall_horizon):
                log.info("t=%d %s stall detected", t, hub.name)
                hub.replan = True
                hub.last_progress = t
            return
        for ev in done:
            node = hub.plan.nodes[ev.act]
            self._release(hub, ev.src)
            if ev.res.ok:
                node.status = NodeStatus.DONE
                hub.fails = 0
                hub.last_progress = t
            else:
                node.status = NodeStatus.FAILED
                hub.replan = True
                self._fail(hub)

    # -- safety -----------------------------------------------------------

    def _audit(self, t: int) -> None:
        for hub in self.hubs:
            plan = hub.plan
            running = [] if plan is None else [n for n in plan.nodes.values() if n.status is NodeStatus.RUNNING]
            for n in running:
                if not plan.deps_done(n.node_id):
                    self.violations.append(f"t={t} {n.node_id} RUNNING before its dependencies are DONE")
            owners = [job.node.node_id for job in hub.jobs.values()]
            if len(owners) != len(set(owners)):
                self.violations.append(f"t={t} a node is held by two robots")
            if sorted(owners) != sorted(n.node_id for n in running) and hub.finished is None:
                self.violations.append(f"t={t} RUNNING nodes {sorted(n.node_id for n in running)} != jobs {sorted(owners)}")
            for rid in hub.robots:
                executing = self.world.truth_robots[rid].sigma is Status.EXECUTING
                if executing != (rid in hub.jobs):
                    self.violations.append(f"t={t} {rid} sigma/job mismatch")
            if hub.fails > self.config.max_fails:
                self.violations.append(f"t={t} {hub.name} fails={hub.fails} exceeds max")
            for problem in check_invariants(hub.belief):
                self.violations.append(f"t={t} belief: {problem}")
        for problem in check_invariants(self.world.truth_state()):
            self.violations.append(f"t={t} truth: {problem}")

    # -- main loop --------------------------------------------------------

    def run(self) -> EpisodeResult:
        w = self.world
        t = 0
        termination = "budget"
        while t < self.budget:
            w.tick = t
            for ev in self.events_by_tick.get(t, ()):
                relocate(w, ev.obj, ev.receptacle)
            self._sense(t)
            for hub in self.hubs:
                if hub.finished is None and query_goal(hub.belief, hub.task.goal):
                    hub.finished = "goal"
                    self._halt(hub)
            if all(h.finished for h in self.hubs):
                termination = "goal" if all(h.finished == "goal" for h in self.hubs) else "fails"
                break
            planned_ok = {}
            for hub in self.hubs:
                if hub.finished:
                    continue
                stale = hub.replan or needs_replan(
                    hub.plan, hub.belief, hub.plan_belief or hub.belief, self.iot_events, hub.task.goal, self.config.replan_threshold
                )
                if stale:
                    planned_ok[hub.name] = self._plan(hub, t)
                    if not planned_ok[hub.name]:
                        hub.replan = True
                        self._fail(hub)
                        continue
                self._dispatch(hub)
            if self.check_safety:
                self._audit(t)
            try:
                done = self._execute(t)
            except StateMismatch as exc:
                self.violations.append(f"t={t} state mismatch: {exc}")
                termination = "aborted"
                t += 1
                break
            for hub in self.hubs:
                if hub.finished is None and planned_ok.get(hub.name, True):
                    self._monitor(hub, t, done[hub.name])
            if self.check_safety:
                self._audit(t)
            t += 1
        else:
            termination = "budget"
        success_belief = all(h.finished == "goal" for h in self.hubs)
        return EpisodeResult(
            success_truth=query_goal(w.truth_state(), self.scenario.task.goal),
            success_belief=success_belief,
            action_steps=w.total_action_steps,
            path_length_m=w.path_length_m,
            planner_calls=sum(h.planner_calls for h in self.hubs),
            token_proxy=sum(h.tokens for h in self.hubs),
            ticks=t,
            fail_count=sum(h.fail_total for h in self.hubs),
            termination=termination,
            violations=self.violations,
        )

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _with_status(robot, sigma: Status):
    from dataclasses import replace

    return replace(robot, sigma=sigma)


def apply_effects(belief: SemanticState, robot: str, step, tick: int) -> SemanticState:
    from .state import apply_manipulation_effects

    return apply_manipulation_effects(belief, robot, CompletedAction(step.kind, step.target, tick))


def run_episode(
    scenario: Scenario,
    config: OrchestratorConfig | None = None,
    planner=None,
    trace_path: str | Path | None = None,
    check_safety: bool = False,
) -> EpisodeResult:
    episode = Episode(scenario, config or OrchestratorConfig(), planner, check_safety)
    result = episode.run()
    if trace_path is not None:
        episode.write_trace(trace_path)
        result.trace_path = str(trace_path)
    return result


__all__ = [
    "ActionDone",
    "Episode",
    "EpisodeResult",
    "Event",
    "Hub",
    "IoTUpdate",
    "OrchestratorConfig",
    "PlannerUnavailable",
    "Protocol",
    "ScenarioInvalid",
    "Timeout",
    "detect_stall",
    "dispatch_ready",
    "match_robot",
    "needs_replan",
    "route_observations",
    "run_episode",
    "split_goal",
]
