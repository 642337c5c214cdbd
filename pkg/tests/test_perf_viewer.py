import csv
import io
import math

import numpy as np
import pytest

from forgecam.die_model import Tool
from forgecam.geometry import Polyline
from forgecam.perf_viewer import (ConfigError, MachineModel, NcuModel, corner_speed_limit, detect_feed_loss,
                                  machining_time, plan_feed_profile)
from forgecam.toolpath import Move, Toolpath

from oracles import brute_force_time, corner_limit, polyline_toolpath, random_polyline

SIMPLE = MachineModel.uniform(v_max=333.0, a_max=1000.0)
NCU = NcuModel(corner_tolerance=0.01, block_cycle_time=0.002, lookahead_blocks=200)
# unequal axes so the per-axis projection matters
SKEWED = MachineModel((333.0, 300.0, 200.0), (2000.0, 1500.0, 1000.0), (50000.0,) * 3)


def straight(length, feed_mm_s=100.0):
    return polyline_toolpath([[0, 0, 0], [length, 0, 0]], feed_mm_s * 60.0)


# ---------------------------------------------------------------- closed forms
def test_trapezoid_time():
    p = plan_feed_profile(straight(100.0), SIMPLE, NCU)
    assert machining_time(p) == pytest.approx(1.1, abs=1e-9)
    assert p.v.max() == pytest.approx(100.0)


def test_triangle_peak():
    p = plan_feed_profile(straight(5.0), SIMPLE, NCU)
    assert p.v.max() == pytest.approx(math.sqrt(1000.0 * 5.0), rel=1e-9)
    assert p.v.max() == pytest.approx(70.71, abs=0.01)
    assert machining_time(p) == pytest.approx(2 * math.sqrt(5.0 / 1000.0))


def test_chain_starts_and_ends_at_rest():
    p = plan_feed_profile(straight(100.0), SIMPLE, NCU)
    assert p.v[0] == 0.0 and p.v[-1] == 0.0
    assert np.all(np.diff(p.s) > 0) and np.all(np.diff(p.t) > 0) and np.all(p.v >= 0)


def test_block_cycle_cap():
    pts = np.column_stack([np.arange(0, 1001) * 0.1, np.zeros(1001), np.zeros(1001)])
    p = plan_feed_profile(polyline_toolpath(pts, 100.0 * 60.0), SIMPLE, NCU)
    assert p.v.max() == pytest.approx(50.0, rel=1e-9)


def test_scurve_closed_form():
    p = plan_feed_profile(straight(100.0), SIMPLE, NCU, jerk_limited=True)
    assert machining_time(p) == pytest.approx(100.0 / 100.0 + 100.0 / 1000.0 + 1000.0 / 50000.0, rel=1e-9)


def test_scurve_never_faster(rng):
    for _ in range(5):
        tp = polyline_toolpath(random_polyline(rng, 40), 5000.0)
        a = machining_time(plan_feed_profile(tp, SKEWED, NCU))
        b = machining_time(plan_feed_profile(tp, SKEWED, NCU, jerk_limited=True))
        assert b >= a - 1e-12


def test_empty_toolpath_takes_no_time():
    tp = Toolpath((), Tool("T", "ball_end", 3.0, 3.0, 50.0), "imported", "one_way")
    p = plan_feed_profile(tp, SIMPLE, NCU)
    assert machining_time(p) == 0.0 and p.empty


def test_rapids_run_at_axis_cap():
    tool = Tool("T", "ball_end", 3.0, 3.0, 50.0)
    tp = Toolpath((Move("link", Polyline([[0, 0, 0], [333, 0, 0]])),), tool, "imported", "one_way")
    assert machining_time(plan_feed_profile(tp, SIMPLE, NCU)) == pytest.approx(1.0)


# ---------------------------------------------------------------- corners
def test_collinear_corner_is_unbounded():
    assert corner_speed_limit([1, 0, 0], [1, 0, 0], SIMPLE, NCU) == 333.0


def test_reversal_corner_is_zero():
    assert corner_speed_limit([1, 0, 0], [-1, 0, 0], SIMPLE, NCU) == 0.0


def test_right_angle_corner():
    v = corner_speed_limit([1, 0, 0], [0, 1, 0], MachineModel.uniform(333.0, 2000.0), NCU)
    r = 0.01 * (math.sqrt(2) + 1)
    assert v == pytest.approx(math.sqrt(2000.0 * r), rel=1e-12)
    assert v == pytest.approx(6.95, abs=0.005)


def test_corner_matches_oracle(rng):
    for _ in range(50):
        a, b = rng.normal(size=3), rng.normal(size=3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        assert corner_speed_limit(a, b, SKEWED, NCU) == pytest.approx(corner_limit(a, b, SKEWED, NCU), rel=1e-9)


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        corner_speed_limit([0, 0, 0], [1, 0, 0], SIMPLE, NCU)


def test_smaller_tolerance_never_raises_corner_limit(rng):
    for _ in range(30):
        a, b = rng.normal(size=3), rng.normal(size=3)
        lims = [corner_speed_limit(a, b, SKEWED, NcuModel(corner_tolerance=d)) for d in (0.1, 0.03, 0.01, 0.001)]
        assert all(x >= y for x, y in zip(lims, lims[1:]))


# ---------------------------------------------------------------- feed loss
def test_long_straight_has_no_loss():
    assert detect_feed_loss(plan_feed_profile(straight(200.0), SIMPLE, NCU)) == []


def test_right_angle_gives_one_corner_area():
    tp = polyline_toolpath([[0, 0, 0], [50, 0, 0], [50, 50, 0]], 6000.0)
    areas = detect_feed_loss(plan_feed_profile(tp, SIMPLE, NCU))
    assert len(areas) == 1
    (a,) = areas
    assert a.s_start < 50.0 < a.s_end
    assert a.cause == "corner"
    assert a.min_ratio < 0.9


def test_threshold_checked():
    with pytest.raises(ValueError):
        detect_feed_loss(plan_feed_profile(straight(10.0), SIMPLE, NCU), threshold=1.2)


def test_loss_area_ratios_below_threshold(rng):
    tp = polyline_toolpath(random_polyline(rng, 200), 5000.0)
    for a in detect_feed_loss(plan_feed_profile(tp, SKEWED, NCU)):
        assert a.s_start < a.s_end and a.min_ratio < 0.9


# ---------------------------------------------------------------- oracle equivalence and limits
@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _random_cases(rng, count=10):
    sizes = [20, 35, 50, 80, 120, 200, 260, 330, 420, 500][:count]
    return [(random_polyline(rng, n), float(rng.uniform(2000.0, 12000.0))) for n in sizes]


def test_time_matches_brute_force_integrator(rng):
    for pts, feed in _random_cases(rng):
        planned = machining_time(plan_feed_profile(polyline_toolpath(pts, feed), SKEWED, NCU))
        oracle = brute_force_time(pts, feed / 60.0, SKEWED, NCU)
        assert planned == pytest.approx(oracle, rel=0.01)


def _axis_checks(profile, machine, F):
    for g in profile.segments:
        if g.rapid:
            continue
        t = np.abs((g.end - g.start) / g.length)
        assert g.v_peak <= min(F, *(machine.v_max[i] / t[i] for i in range(3) if t[i] > 1e-12)) * (1 + 1e-9)
        # path acceleration projected on each axis
        assert np.all(g.accel * t <= np.asarray(machine.a_max) * (1 + 1e-3))
    s, t, v = profile.s, profile.t, profile.v
    starts = np.array([g.s0 for g in profile.segments])
    ends = starts + np.array([g.length for g in profile.segments])
    mid = 0.5 * (s[1:] + s[:-1])
    seg = np.clip(np.searchsorted(starts, mid, side="right") - 1, 0, len(starts) - 1)
    checked = 0
    for k, i in enumerate(seg):
        g = profile.segments[i]
        # only pairs inside one block: the direction is constant there
        if g.rapid or s[k] < starts[i] - 1e-9 or s[k + 1] > ends[i] + 1e-9:
            continue
        assert abs(v[k + 1] - v[k]) / (t[k + 1] - t[k]) <= g.accel * (1 + 1e-3)
        checked += 1
    assert checked > len(s) // 2


def test_limit_respect(rng):
    for pts, feed in _random_cases(rng, 6):
        p = plan_feed_profile(polyline_toolpath(pts, feed), SKEWED, NCU)
        assert p.v.max() <= feed / 60.0 * (1 + 1e-9)
        _axis_checks(p, SKEWED, feed / 60.0)


def test_corner_respect(rng):
    for pts, feed in _random_cases(rng, 6):
        p = plan_feed_profile(polyline_toolpath(pts, feed), SKEWED, NCU)
        segs = p.segments
        for k in range(1, len(segs)):
            T0 = (segs[k - 1].end - segs[k - 1].start) / segs[k - 1].length
            T1 = (segs[k].end - segs[k].start) / segs[k].length
            assert segs[k].v_entry <= corner_limit(T0, T1, SKEWED, NCU) * (1 + 1e-3)
            assert segs[k].v_entry == pytest.approx(segs[k - 1].v_exit)


def test_more_acceleration_never_slower(rng):
    for pts, feed in _random_cases(rng, 5):
        tp = polyline_toolpath(pts, feed)
        times = [machining_time(plan_feed_profile(tp, MachineModel.uniform(333.0, a), NCU))
                 for a in (500.0, 1000.0, 2000.0, 4000.0)]
        assert all(x >= y - 1e-12 for x, y in zip(times, times[1:]))


def test_time_at_least_length_over_feed(rng):
    for pts, feed in _random_cases(rng, 5):
        tp = polyline_toolpath(pts, feed)
        assert machining_time(plan_feed_profile(tp, SKEWED, NCU)) >= tp.cut_length / (feed / 60.0)


def test_profile_is_deterministic(rng):
    pts, feed = _random_cases(rng, 1)[0]
    a = plan_feed_profile(polyline_toolpath(pts, feed), SKEWED, NCU)
    b = plan_feed_profile(polyline_toolpath(pts, feed), SKEWED, NCU)
    assert a.to_csv() == b.to_csv()


# ---------------------------------------------------------------- export and config
def test_profile_csv_format():
    text = plan_feed_profile(straight(5.0), SIMPLE, NCU).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["s_mm", "t_s", "v_mm_s"]
    assert rows[1] == ["0", "0", "0"]
    assert rows[-1] == ["5", "0.141421", "0"]
    assert "\r" not in text


def test_machine_config_round_trip():
    assert MachineModel.from_dict(SKEWED.to_dict()) == SKEWED


@pytest.mark.parametrize("build", [
    lambda: MachineModel((1.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0)),
    lambda: MachineModel.uniform(0.0, 1.0),
    lambda: MachineModel(strokes=((0, 1), (0, 1), (1, 0))),
    lambda: NcuModel(corner_tolerance=0.0),
    lambda: NcuModel(block_cycle_time=-1.0),
    lambda: NcuModel(lookahead_blocks=0),
    lambda: NcuModel.from_dict({"corner_tol": 0.1}),
    lambda: MachineModel.from_dict({"axes": {"X": {}}}),
])
def test_invalid_kinematic_config(build):
    with pytest.raises(ConfigError):
        build()
