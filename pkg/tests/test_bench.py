from __future__ import annotations

import csv
import io
import json
import random
from statistics import mean

import pytest

from r2xsim.bench import (
    InsufficientData,
    Matrix,
    SceneParams,
    SuiteResult,
    generate_scene,
    monotone,
    paired_less,
    run_cell,
    run_suite,
    scenario_for,
    sign_test,
    trend_report,
)
from r2xsim.catalog import object_class
from r2xsim.scenario import Scenario
from r2xsim.sensors import coverage_fraction
from r2xsim.state import query_goal


def test_same_seed_gives_identical_scenario_bytes():
    p = SceneParams(rooms=5)
    assert generate_scene(p, 11).dumps() == generate_scene(p, 11).dumps()
    assert generate_scene(p, 11).dumps() != generate_scene(p, 12).dumps()


@pytest.mark.parametrize("seed", range(100))
def test_generated_scene_is_connected_covered_and_hides_targets(seed):
    scen = generate_scene(SceneParams(rooms=3 + seed % 6), seed)
    w = scen.world
    # flood fill from every robot reaches every cell
    start = next(iter(w.truth_robots.values())).p
    seen, stack = {start}, [start]
    while stack:
        c = stack.pop()
        for n in w.neighbors(c):
            if n not in seen:
                seen.add(n)
                stack.append(n)
    assert len(seen) == w.width * w.height
    assert 0.45 <= coverage_fraction(scen.devices, w) <= 0.55
    assert not query_goal(w.truth_state(), scen.task.goal)
    targets = {p.obj for p in scen.task.goal}
    for t in targets:
        o = w.truth_objects[t]
        holder = w.truth_objects.get(o.rec) if o.rec else None
        assert holder is None or not object_class(holder.type).openable or holder.prop("isOpen")


def test_half_the_targets_start_outside_every_view():
    for seed in range(30):
        scen = generate_scene(SceneParams(rooms=4, team_size=6), seed)
        w = scen.world
        seen = set()
        for rid in w.truth_robots:
            seen |= {e.obj for e in w.field_of_view(rid)[1]}
        targets = {p.obj for p in scen.task.goal}
        assert len(targets - seen) * 2 >= len(targets)


def test_scenario_round_trip_is_lossless():
    scen = generate_scene(SceneParams(rooms=6, relocation_tick=7), 3)
    text = scen.dumps()
    assert Scenario.loads(text).dumps() == text
    assert scen.events and scen.events[0].tick == 7


def test_team_sizes_share_world_task_and_leading_robots():
    small = generate_scene(SceneParams(team_size=2), 5).to_dict()
    large = generate_scene(SceneParams(team_size=6), 5).to_dict()
    for key in ("world", "objects", "task"):
        assert small[key] == large[key]
    assert large["robots"][:2] == small["robots"]
    assert len(large["robots"]) == 6


def test_templates_and_param_validation():
    for template in ("consolidate", "dispose", "power_down", "fetch"):
        scen = generate_scene(SceneParams(template=template), 1)
        assert scen.params["template"] == template
    with pytest.raises(ValueError):
        SceneParams(rooms=9)
    with pytest.raises(ValueError):
        SceneParams(team_size=1)
    with pytest.raises(ValueError):
        SceneParams(template="slice")


# -- suites ---------------------------------------------------------------

SMALL = {"rooms": 3, "size": 7}


def test_single_cell_single_seed_gives_one_row():
    res = run_suite(Matrix(protocols=("R2X",), scene=SMALL), 1)
    assert len(res.rows) == 1 and res.rows[0]["error"] == ""


def test_protocol_cells_share_world_and_task_bytes():
    m = Matrix(scene=SMALL)
    cell = {"t_delay": 0, "p_omit": 0.0, "p_corrupt": 0.0, "team_size": 3}
    docs = {p: scenario_for(m, {**cell, "protocol": p}, 7).to_dict() for p in ("IR", "R2R", "R2X")}
    for key in ("world", "objects", "robots", "task", "events"):
        assert docs["IR"][key] == docs["R2X"][key] == docs["R2R"][key]
    assert docs["IR"]["devices"] == [] and docs["R2X"]["devices"]


def _recompute(text: str) -> dict:
    """Aggregates straight from the CSV text, independent of SuiteResult."""
    groups: dict[str, list[dict]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        groups.setdefault(row["cell"], []).append(row)
    out = {}
    for cell, rows in groups.items():
        ok = [r for r in rows if not r["error"]]
        out[cell] = {
            "n": len(rows),
            "success_rate": sum(r["success_truth"] == "true" for r in rows) / len(rows),
            "avg_action_steps": mean(int(r["action_steps"]) for r in ok),
            "avg_path_length_m": mean(float(r["path_length_m"]) for r in ok),
            "avg_token_proxy": mean(int(r["token_proxy"]) for r in ok),
        }
    return out


def test_aggregates_match_csv_recomputation_and_runs_are_deterministic():
    m = Matrix(protocols=("IR", "R2X"), p_omit=(0.0, 1.0), scene=SMALL)
    a = run_suite(m, 3)
    b = run_suite(m, 3, jobs=2)
    assert a.to_csv() == b.to_csv()
    agg = json.loads(json.dumps(a.aggregates()))
    oracle = _recompute(a.to_csv())
    assert agg.keys() == oracle.keys()
    for cell, values in oracle.items():
        for k, v in values.items():
            assert agg[cell][k] == pytest.approx(v, abs=1e-5)
    assert SuiteResult.from_csv(a.to_csv()).to_csv() == a.to_csv()


def test_suite_writes_csv_json_and_plots(tmp_path):
    res = run_suite(Matrix(protocols=("R2R", "R2X"), scene=SMALL), 2)
    res.write(tmp_path, plots=True)
    assert (tmp_path / "episodes.csv").read_text() == res.to_csv()
    assert json.loads((tmp_path / "aggregates.json").read_text()) == json.loads(json.dumps(res.aggregates()))
    assert (tmp_path / "success_rate.png").stat().st_size > 0


class _Exploding:
    def plan(self, task, state, fleet):
        raise RuntimeError("backend exploded")


def test_episode_errors_are_recorded_not_raised():
    m = Matrix(protocols=("R2X",), scene=SMALL)
    cell = m.cells()[0]
    row = run_cell(m, cell, 0, _Exploding())
    assert row["error"].startswith("RuntimeError") and row["success_truth"] is False


# -- trends ---------------------------------------------------------------


def test_sign_test_matches_scipy_binomial():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = random.Random(0)
    for _ in range(50):
        n = rng.randint(1, 40)
        a = [rng.randint(0, 3) for _ in range(n)]
        b = [rng.randint(0, 3) for _ in range(n)]
        wins = sum(x < y for x, y in zip(a, b))
        trials = sum(x != y for x, y in zip(a, b))
        expected = 1.0 if trials == 0 else scipy_stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue
        assert sign_test(a, b) == pytest.approx(expected, rel=1e-9)


def _synthetic(metric_by_cell: dict[str, list[float]], success=None) -> SuiteResult:
    rows = []
    for proto, values in metric_by_cell.items():
        for seed, v in enumerate(values):
            rows.append(
                {
                    "cell": proto,
                    "seed": seed,
                    "protocol": proto,
                    "t_delay": 0,
                    "p_omit": 0.0,
                    "p_corrupt": 0.0,
                    "team_size": 3,
                    "success_truth": True if success is None else success[proto][seed],
                    "path_length_m": v,
                    "token_proxy": v,
                    "action_steps": v,
                    "ticks": 1,
                    "error": "",
                }
            )
    return SuiteResult(rows)


def test_identical_cells_have_no_direction():
    data = [random.Random(i).uniform(10, 20) for i in range(30)]
    res = _synthetic({"R2R": data, "R2X": list(data)})
    out = paired_less(res, "path_length_m", {"protocol": "R2X"}, {"protocol": "R2R"})
    assert not out.passed and out.p_value == 1.0


def test_injected_twenty_percent_reduction_passes():
    rng = random.Random(1)
    base = [rng.uniform(10, 20) for _ in range(30)]
    res = _synthetic({"R2R": base, "R2X": [0.8 * x for x in base]})
    out = paired_less(res, "path_length_m", {"protocol": "R2X"}, {"protocol": "R2R"})
    assert out.passed and out.effect["reduction"] == pytest.approx(0.2)


def test_monotone_delay_trend():
    rng = random.Random(2)
    base = [rng.uniform(10, 20) for _ in range(30)]
    rows = []
    for d, scale in ((0, 1.0), (5, 1.1), (10, 1.25)):
        part = _synthetic({"R2X": [scale * x for x in base]}).rows
        for r in part:
            r["t_delay"] = d
        rows += part
    res = SuiteResult(rows)
    assert monotone(res, "path_length_m", "t_delay", [0, 5, 10], {"protocol": "R2X"}).passed
    assert not monotone(res, "path_length_m", "t_delay", [10, 5, 0], {"protocol": "R2X"}).passed


def test_too_few_seeds_is_insufficient_data():
    res = _synthetic({"R2R": [1.0] * 10, "R2X": [0.5] * 10})
    with pytest.raises(InsufficientData):
        paired_less(res, "path_length_m", {"protocol": "R2X"}, {"protocol": "R2R"})


def test_trend_report_evaluates_registered_protocol_trends():
    rng = random.Random(3)
    ir = [rng.uniform(30, 40) for _ in range(30)]
    r2r = [0.7 * x for x in ir]
    r2x = [0.8 * x for x in r2r]
    ok = {p: [True] * 30 for p in ("IR", "R2R", "R2X")}
    ok["IR"][:3] = [False] * 3
    res = _synthetic({"IR": ir, "R2R": r2r, "R2X": r2x}, ok)
    outcomes = trend_report(res)
    assert len(outcomes) == 4 and all(o.passed for o in outcomes)
    assert trend_report(_synthetic({"R2X": r2x})) == []
