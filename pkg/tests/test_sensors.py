from __future__ import annotations

import random
import warnings

import pytest

from r2xsim.state import Entry, Observation
from r2xsim.sensors import (
    CoverageInfeasible,
    DeliveryQueue,
    DeviceKind,
    FailureProfile,
    IoTDevice,
    cctv,
    coverage_fraction,
    degrade,
    emit,
    generate_layout,
)
from r2xsim.world import GridWorld, Room

from .oracles import fov_oracle
from .test_world import obj


def four_rooms(n: int = 20) -> GridWorld:
    """n x n house split into four rooms by a cross of walls with one 2-cell door per wall."""
    h = n // 2
    walls = set()
    for y in range(n):
        if y not in (h // 2, h // 2 + 1, h + h // 2, h + h // 2 + 1):
            walls.add(((h - 1, y), (h, y)))
    for x in range(n):
        if x not in (h // 2, h // 2 + 1, h + h // 2, h + h // 2 + 1):
            walls.add(((x, h - 1), (x, h)))
    rooms = (
        Room("room0", "kitchen", ((0, 0, h - 1, h - 1),)),
        Room("room1", "living", ((h, 0, n - 1, h - 1),)),
        Room("room2", "bedroom", ((0, h, h - 1, n - 1),)),
        Room("room3", "office", ((h, h, n - 1, n - 1),)),
    )
    world = GridWorld(n, n, frozenset(walls), rooms)
    world.truth_objects["tv1"] = obj("tv1", "TV", (15, 3), room="room1", isToggled=1)
    world.truth_objects["lamp1"] = obj("lamp1", "Lamp", (2, 15), room="room2")
    world.truth_objects["phone"] = obj("phone", "CellPhone", (3, 3))
    world.truth_objects["apple"] = obj("apple", "Apple", (12, 12), room="room3")
    return world


def test_four_room_fixture_is_connected():
    assert four_rooms().is_connected()


def test_zero_target_gives_no_cameras_but_status_reporters():
    devices = generate_layout(four_rooms(), 0.0, random.Random(0))
    assert [d.kind for d in devices] == [DeviceKind.STATUS, DeviceKind.STATUS]
    assert sorted(d.attached_object for d in devices) == ["lamp1", "tv1"]
    assert all(d.coverage == {d.cell} for d in devices)


@pytest.mark.parametrize("seed", range(10))
def test_half_coverage_within_tolerance(seed):
    world = four_rooms()
    with warnings.catch_warnings():
        warnings.simplefilter("error", CoverageInfeasible)
        devices = generate_layout(world, 0.5, random.Random(seed))
    assert 0.45 <= coverage_fraction(devices, world) <= 0.55
    assert sum(d.kind is DeviceKind.CCTV for d in devices) <= 12


@pytest.mark.parametrize("seed", range(5))
def test_coverage_equals_independent_union_count(seed):
    world = four_rooms()
    devices = generate_layout(world, 0.5, random.Random(seed))
    covered = set()
    for d in devices:
        if d.kind is DeviceKind.CCTV:
            covered |= fov_oracle(20, 20, world.walls, d.cell, d.yaw)
    navigable = [(x, y) for x in range(20) for y in range(20)]
    assert coverage_fraction(devices, world) == len(covered) / len(navigable)


def test_unreachable_target_warns_and_returns_layout():
    with pytest.warns(CoverageInfeasible):
        devices = generate_layout(four_rooms(), 1.0, random.Random(0), budget=2)
    assert sum(d.kind is DeviceKind.CCTV for d in devices) == 2


def test_layout_is_deterministic_per_seed():
    a = generate_layout(four_rooms(), 0.5, random.Random(3))
    b = generate_layout(four_rooms(), 0.5, random.Random(3))
    assert [d.to_dict() for d in a] == [d.to_dict() for d in b]


def test_emit_only_on_period_ticks():
    world = four_rooms()
    cam = cctv("cam0", world, (10, 0), 90)
    assert emit(cam, world, 3) is None
    assert emit(cam, world, 10) is not None


def test_status_reporter_reports_toggle_bit_only():
    world = four_rooms()
    sr = [d for d in generate_layout(world, 0.0, random.Random(0)) if d.attached_object == "tv1"][0]
    obs = emit(sr, world, 40)
    assert obs.src == sr.id and obs.tau == 40
    (entry,) = obs.entries
    assert entry.obj == "tv1" and dict(entry.props) == {"isToggled": 1}


def test_cctv_entries_match_visibility_oracle():
    world = four_rooms()
    cam = cctv("cam0", world, (10, 0), 90)
    seen_cells = fov_oracle(20, 20, world.walls, (10, 0), 90)
    expected = sorted(oid for oid, o in world.truth_objects.items() if o.p in seen_cells)
    assert sorted(e.obj for e in emit(cam, world, 0).entries) == expected


def test_cctv_skips_contents_of_closed_receptacle():
    world = four_rooms()
    world.truth_objects["fridge"] = obj("fridge", "Fridge", (15, 2), room="room1")
    world.truth_objects["milk"] = obj("milk", "Mug", (15, 2), rec="fridge", room="room1")
    cam = cctv("cam0", world, (19, 0), 135)
    names = {e.obj for e in emit(cam, world, 0).entries}
    assert "fridge" in names and "milk" not in names


def test_device_round_trip():
    world = four_rooms()
    for d in generate_layout(world, 0.5, random.Random(1)):
        assert IoTDevice.from_dict(d.to_dict(), world) == d


def _obs(n: int, tau: int = 10) -> Observation:
    entries = tuple(Entry(f"tv{i}", "TV", (i % 20, 0), None, "room0", (("isToggled", 1), ("isOpen", 0))) for i in range(n))
    return Observation("cam0", tau, entries)


def test_identity_profile_changes_nothing():
    obs = _obs(5)
    out = degrade(obs, FailureProfile(), random.Random(0))
    assert out.obs == obs and out.deliver_at == obs.tau


def test_full_omission_delivers_empty_entries_late():
    out = degrade(_obs(5, tau=7), FailureProfile(t_delay=5, p_omit=1.0), random.Random(0))
    assert out.obs.entries == () and out.obs.tau == 7 and out.deliver_at == 12


def test_omission_rate_monte_carlo():
    rng = random.Random(2024)
    out = degrade(_obs(10_000), FailureProfile(p_omit=0.3), rng)
    assert abs(1 - len(out.obs.entries) / 10_000 - 0.3) <= 0.02


def test_corruption_flips_only_applicable_bits():
    out = degrade(_obs(2_000), FailureProfile(p_corrupt=1.0), random.Random(0))
    for e in out.obs.entries:
        # isOpen is not applicable to a TV and stays as reported
        assert dict(e.props) == {"isToggled": 0, "isOpen": 0}
        assert e.p == (int(e.obj[2:]) % 20, 0)


def test_degrade_uses_common_random_numbers():
    obs = _obs(50)
    r1, r2 = random.Random(9), random.Random(9)
    degrade(obs, FailureProfile(p_omit=0.1), r1)
    degrade(obs, FailureProfile(p_omit=0.9, p_corrupt=0.5), r2)
    assert r1.random() == r2.random()


def test_failure_profile_validation():
    with pytest.raises(ValueError):
        FailureProfile(p_omit=1.5)
    with pytest.raises(ValueError):
        FailureProfile(t_delay=-1)


def test_delivery_queue_orders_by_delivery_tick():
    q = DeliveryQueue()
    q.push(degrade(_obs(1, tau=5), FailureProfile(t_delay=5), random.Random(0)))
    q.push(degrade(_obs(1, tau=8), FailureProfile(), random.Random(0)))
    assert [o.tau for o in q.pop_due(9)] == [8]
    assert q.pop_due(9) == []
    assert [o.tau for o in q.pop_due(10)] == [5]
