"""Command-line entry point: ``r2xsim gen | run | bench | replay``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .bench import DEFAULT_TRENDS, InsufficientData, Matrix, SceneParams, generate_scene, run_suite, trend_report
from .orchestrator import OrchestratorConfig, run_episode
from .planner import BaselinePlanner, Endpoint, ExternalPlanner
from .scenario import Scenario, ScenarioInvalid
from .world import GridWorld

ENDPOINT_ENV = "R2XSIM_PLANNER_ENDPOINT"
API_KEY_ENV = "R2XSIM_PLANNER_API_KEY"

EXIT_OK, EXIT_EPISODE_FAILED, EXIT_USAGE = 0, 1, 2

MATRIX_HELP = """matrix file (JSON): {"protocols": ["IR","R2R","R2X"], "t_delay": [0], "p_omit": [0.0],
"p_corrupt": [0.0], "team_sizes": [3], "scene": {"rooms": [3, 8], ...SceneParams}, "config": {...OrchestratorConfig}}"""


class UsageError(Exception):
    pass


def make_planner(spec: str):
    """``baseline`` or ``external[:<url or command>]``; the endpoint falls back to the environment."""
    if spec == "baseline":
        return BaselinePlanner()
    if spec == "external" or spec.startswith("external:"):
        target = spec.partition(":")[2] or os.environ.get(ENDPOINT_ENV)
        if not target:
            raise UsageError(f"external planner needs an endpoint (external:<url|command> or ${ENDPOINT_ENV})")
        return ExternalPlanner(Endpoint.parse(target, os.environ.get(API_KEY_ENV)))
    raise UsageError(f"unknown planner {spec!r}; expected 'baseline' or 'external:<endpoint>'")


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


# --------------------------------------------------------------------------- subcommands


def cmd_gen(args) -> int:
    try:
        params = SceneParams(
            rooms=args.rooms,
            size=args.size,
            team_size=args.team,
            coverage=args.coverage,
            template=args.template,
            start=args.start,
            relocation_tick=args.relocation_tick,
            tick_budget=args.tick_budget,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write(args.output, generate_scene(params, args.seed).dumps())
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        scen = Scenario.load(args.scenario)
    except OSError as exc:
        raise UsageError(f"cannot read {args.scenario}: {exc.strerror}") from exc
    except ScenarioInvalid as exc:
        raise UsageError(f"{args.scenario}: {exc}") from exc
    file_cfg = _read_json(args.config) if args.config else {}
    cfg = {k: v for k, v in file_cfg.items() if k in OrchestratorConfig.__dataclass_fields__}
    fail = {k: v for k, v in file_cfg.items() if k in ("t_delay", "p_omit", "p_corrupt", "failure_seed")}
    unknown = set(file_cfg) - set(cfg) - set(fail)
    if unknown:
        raise UsageError(f"{args.config}: unknown keys {sorted(unknown)}")
    for flag, key in (("protocol", "protocol"), ("max_fails", "max_fails"), ("stall_horizon", "stall_horizon"), ("tick_budget", "tick_budget")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    for key in ("t_delay", "p_omit", "p_corrupt", "failure_seed"):
        if getattr(args, key) is not None:
            fail[key] = getattr(args, key)
    if "protocol" in cfg:
        cfg["protocol"] = str(cfg["protocol"]).upper()
    try:
        config = OrchestratorConfig(**cfg)
        f = scen.failure
        scen.failure = replace(
            f,
            t_delay=int(fail.get("t_delay", f.t_delay)),
            p_omit=float(fail.get("p_omit", f.p_omit)),
            p_corrupt=float(fail.get("p_corrupt", f.p_corrupt)),
            rng_seed=int(fail.get("failure_seed", scen.seeds.get("failure_seed", f.rng_seed))),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    planner = make_planner(args.planner)
    result = run_episode(scen, config, planner, trace_path=args.trace, check_safety=args.safety)
    text = result.to_json()
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    if result.violations:
        for v in result.violations:
            print(f"safety violation: {v}", file=sys.stderr)
    return EXIT_OK if result.success_truth else EXIT_EPISODE_FAILED


def cmd_bench(args) -> int:
    try:
        matrix = Matrix.from_dict(_read_json(args.matrix))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.matrix}: {exc}\n{MATRIX_HELP}") from exc
    if args.seeds < 1 or args.jobs < 1:
        raise UsageError("--seeds and --jobs must be >= 1")
    planner = make_planner(args.planner)
    result = run_suite(matrix, args.seeds, planner if args.planner != "baseline" else None, jobs=args.jobs, first_seed=args.first_seed)
    try:
        result.write(args.output, plots=args.plots)
    except OSError as exc:
        raise UsageError(f"cannot write to {args.output}: {exc.strerror}") from exc
    lines = []
    for trend in DEFAULT_TRENDS:
        try:
            lines += [o.line() for o in trend_report(result, [trend])]
        except InsufficientData as exc:
            lines.append(f"SKIP {trend.name}: {exc}")
    _write(str(Path(args.output) / "trends.txt"), "".join(line + "\n" for line in lines))
    for line in lines:
        print(line)
    return EXIT_OK


def render_frames(records: list[dict], world: GridWorld | None = None) -> list[str]:
    """One top-down ASCII frame per tick; robots drawn by the digit of their id."""
    by_tick: dict[int, list[dict]] = {}
    for rec in records:
        by_tick.setdefault(rec["t"], []).append(rec)
    if world is None:
        w = 1 + max(rec["pose"][0] for rec in records)
        h = 1 + max(rec["pose"][1] for rec in records)
        world = GridWorld(w, h, frozenset(), ())
    else:
        # walls only; poses come from the trace, not the scene's start state
        world = GridWorld(world.width, world.height, world.walls, world.rooms)
    frames = []
    for t in sorted(by_tick):
        marks = {}
        lines = []
        for rec in sorted(by_tick[t], key=lambda r: r["robot"]):
            x, y = rec["pose"][0], rec["pose"][1]
            marks[(x, y)] = rec["robot"][-1]
            step = rec["step"]
            what = "idle" if step is None else f"{step['kind']} {step['target']} -> {rec['result']}"
            lines.append(f"  {rec['robot']} plan={rec['plan']} node={rec['node']} {what}")
        frames.append(f"tick {t}\n" + world.ascii(marks) + "\n" + "\n".join(lines))
    return frames


def cmd_replay(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.trace}: {exc.strerror}") from exc
    try:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.trace}: malformed trace line: {exc}") from exc
    if not records:
        raise UsageError(f"{args.trace} is empty")
    world = None
    if args.scene:
        try:
            world = Scenario.load(args.scene).world
        except (OSError, ScenarioInvalid) as exc:
            raise UsageError(f"{args.scene}: {exc}") from exc
    if args.ascii:
        print("\n\n".join(render_frames(records, world)))
    else:
        ticks = 1 + max(r["t"] for r in records)
        robots = sorted({r["robot"] for r in records})
        moves = sum(1 for r in records if r["step"] and r["step"]["kind"] == "MoveStep" and r["result"] == "SUCCESS")
        steps = sum(1 for r in records if r["step"])
        print(f"{ticks} ticks, robots {', '.join(robots)}, {steps} action steps, {moves} successful moves")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="r2xsim", description="Multi-robot planning simulator with robot and IoT perception.")
    p.add_argument("-v", "--verbose", action="store_true", help="log planner and replan events")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a scenario file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--rooms", type=int, default=4)
    g.add_argument("--size", type=int, default=10, help="room side in cells")
    g.add_argument("--team", type=int, default=3)
    g.add_argument("--coverage", type=float, default=0.5)
    g.add_argument("--template", choices=("consolidate", "dispose", "power_down", "fetch"))
    g.add_argument("--start", choices=("scattered", "dock"), default="scattered")
    g.add_argument("--relocation-tick", type=int)
    g.add_argument("--tick-budget", type=int, default=2000)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("scenario")
    r.add_argument("--config", help="JSON with orchestrator/failure fields; flags override it")
    r.add_argument("--protocol", type=str.upper, choices=("IR", "R2R", "R2X"))
    r.add_argument("--t-delay", type=int)
    r.add_argument("--p-omit", type=float)
    r.add_argument("--p-corrupt", type=float)
    r.add_argument("--failure-seed", type=int)
    r.add_argument("--max-fails", type=int)
    r.add_argument("--stall-horizon", type=int)
    r.add_argument("--tick-budget", type=int)
    r.add_argument("--planner", default="baseline", help="baseline | external:<url or command>")
    r.add_argument("--trace", help="write the per-tick JSONL trace here")
    r.add_argument("--safety", action="store_true", help="audit loop invariants every tick")
    r.add_argument("-o", "--output", help="result JSON (default: stdout)")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run an experiment matrix", epilog=MATRIX_HELP)
    b.add_argument("--matrix", required=True)
    b.add_argument("--seeds", type=int, default=30)
    b.add_argument("--first-seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--planner", default="baseline")
    b.add_argument("--plots", action="store_true", help="also render per-cell summary plots (needs matplotlib)")
    b.add_argument("-o", "--output", required=True, help="output directory")
    b.set_defaults(func=cmd_bench)

    y = sub.add_parser("replay", help="summarise or render a trace")
    y.add_argument("trace")
    y.add_argument("--ascii", action="store_true", help="print one top-down frame per tick")
    y.add_argument("--scene", help="scenario file, to draw walls")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"r2xsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
