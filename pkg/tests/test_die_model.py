import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forgecam.die_model import (DieModel, Technology, Tool, check_machinability, parse_die_model,
                                sample_surface, slope_range)
from forgecam.errors import DieModelError
from forgecam.fixtures import fixture_die, single_plane_die
from forgecam.surfaces import Blend, Extruded, Plane, Revolved, Ruled


def _doc(surfaces, **tech):
    t = {"extraction_direction": [0, 0, 1], "slope_angle": 3.0, "target_scallop": 0.01,
         "programmed_feed": 5000.0, "clearance_z": 50.0}
    t.update(tech)
    return {"surfaces": surfaces, "technology": t}


PLANE = {"id": "p1", "kind": "plane", "origin": [0, 0, 0], "normal": [0, 0, 1],
         "boundary": [[0, 0, 0], [10, 0, 0], [10, 10, 0], [0, 10, 0]]}


def quarter_cylinder(radius=20.0, length=30.0, count=91):
    phi = np.linspace(0.0, np.pi / 2, count)
    prof = np.column_stack([radius * np.sin(phi), np.zeros_like(phi), radius * np.cos(phi)])
    return Extruded("q1", generatrix_curve=prof, direction=[0, 1, 0], extent=length)


# ---------------------------------------------------------------- parsing
def test_parse_minimal_plane_document():
    die = parse_die_model(json.dumps(_doc([PLANE])))
    assert len(die.surfaces) == 1
    assert die.surfaces[0].kind == "plane"


def test_dangling_blend_reference_rejected():
    blend = {"id": "b1", "kind": "blend", "spine": [[0, 0, 3], [10, 0, 3]], "radius": 3.0,
             "adjacent": ["p1", "S99"]}
    with pytest.raises(DieModelError, match="S99"):
        parse_die_model(_doc([PLANE, blend]))


def test_fixture_document_round_trip():
    die = fixture_die()
    again = parse_die_model(die.to_json())
    assert len(again.surfaces) == 25
    assert again.to_json() == die.to_json()


@pytest.mark.parametrize("direction", [[0, 0, -1], [0, 0.6, 0.8]])
def test_extraction_direction_must_be_plus_z(direction):
    with pytest.raises(DieModelError):
        parse_die_model(_doc([PLANE], extraction_direction=direction))


def test_non_unit_extraction_direction_rejected():
    with pytest.raises(DieModelError):
        parse_die_model(_doc([PLANE], extraction_direction=[0, 0, 2]))


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.pop("technology"), "technology"),
    (lambda d: d.update(surfaces=[]), "empty"),
    (lambda d: d["surfaces"][0].pop("normal"), "normal"),
    (lambda d: d["surfaces"][0].update(kind="nurbs"), "nurbs"),
    (lambda d: d["technology"].update(slope_angle=95.0), "slope"),
    (lambda d: d["technology"].update(target_scallop=-1.0), "scallop"),
])
def test_schema_violations(mutate, message):
    doc = _doc([dict(PLANE)])
    mutate(doc)
    with pytest.raises(DieModelError, match=message):
        parse_die_model(doc)


def test_duplicate_ids_rejected():
    with pytest.raises(DieModelError, match="duplicate"):
        parse_die_model(_doc([PLANE, dict(PLANE)]))


def test_invalid_json_text():
    with pytest.raises(DieModelError):
        parse_die_model("{not json")


def test_ruled_rails_need_equal_counts():
    with pytest.raises(DieModelError):
        Ruled("r", rail0=[[0, 0, 0], [5, 0, 0], [10, 0, 0]], rail1=[[0, 1, 5], [10, 1, 5]])


def test_blend_radius_positive():
    with pytest.raises(DieModelError):
        Blend("b", spine=[[0, 0, 0], [1, 0, 0]], radius=0.0, adjacent=("a", "c"))


def test_revolved_angle_range_checked():
    with pytest.raises(DieModelError):
        Revolved("r", axis_point=[0, 0, 0], axis_direction=[0, 0, 1],
                 profile=[[5, 0, 0], [5, 0, 5]], angle_range=(0.0, 400.0))


def test_tool_invariants():
    with pytest.raises(DieModelError):
        Tool("t", "ball_end", 5.0, 4.0, 50.0)
    with pytest.raises(DieModelError):
        Tool("t", "drill", 5.0, 5.0, 50.0)
    t = Tool.from_dict(Tool("t", "flat_end", 5.0, 6.0, 50.0).to_dict())
    assert t.body_radius == 6.0


def test_technology_rejects_non_positive_feed():
    with pytest.raises(DieModelError):
        Technology(programmed_feed=0.0)


# ---------------------------------------------------------------- sampling and slopes
def test_plane_sampling_resolution_three():
    die = single_plane_die(size=10.0, z=10.0)
    g = sample_surface(die.surfaces[0], 3)
    pts, nrm, slopes = g.valid()
    assert len(pts) == 9
    assert np.allclose(nrm, [0, 0, 1], atol=1e-9)
    assert np.allclose(slopes, 0.0)
    assert np.allclose(pts[:, 2], 10.0)


def test_sampling_is_deterministic():
    s = quarter_cylinder()
    a, b = sample_surface(s, 21), sample_surface(s, 21)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.normals, b.normals)


def test_quarter_cylinder_slopes_vary_continuously():
    g = sample_surface(quarter_cylinder(), 33)
    slopes = g.slopes[:, 0]
    assert slopes[0] == pytest.approx(0.0, abs=1.0)
    assert slopes[-1] == pytest.approx(90.0, abs=1.0)
    assert np.all(np.diff(slopes) > 0)
    assert np.max(np.diff(slopes)) < 5.0
    lo, hi = slope_range(quarter_cylinder())
    assert lo == pytest.approx(0.0, abs=1.0) and hi == pytest.approx(90.0, abs=1.0)


def test_ruled_between_horizontal_lines_has_constant_slope():
    s = Ruled("r", rail0=[[0, 0, 0], [10, 0, 0]], rail1=[[0, 10, 5], [10, 10, 5]])
    expected = np.degrees(np.arctan2(5.0, 10.0))
    g = sample_surface(s, 9)
    assert np.allclose(g.slopes, expected, atol=1e-9)
    lo, hi = slope_range(s)
    assert lo == pytest.approx(expected) and hi == pytest.approx(expected)


def test_plane_slope_range_is_zero():
    assert slope_range(single_plane_die().surfaces[0]) == (0.0, 0.0)


def test_drafted_wall_slope_range():
    z = 6.0
    run = z * np.tan(np.radians(3.0))
    # rails run along -x so the normal faces +y and up (the air side)
    s = Ruled("w", rail0=[[20, 0, 0], [0, 0, 0]], rail1=[[20, -run, z], [0, -run, z]])
    lo, hi = slope_range(s)
    assert lo == pytest.approx(87.0, abs=1e-9) and hi == pytest.approx(87.0, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=3, max_value=40), st.integers(min_value=3, max_value=40))
def test_slope_range_contains_every_sample(r_range, r_sample):
    s = quarter_cylinder()
    lo, hi = slope_range(s, r_range)
    g = sample_surface(s, max(r_sample, r_range))
    sl = g.slopes[g.mask]
    assert lo - 1e-9 <= sl.min() and sl.max() <= hi + 1e-9


def test_plane_normals_equal_declared_normal():
    n = np.array([0.2, -0.1, 1.0])
    n /= np.linalg.norm(n)
    p = Plane("p", origin=[0, 0, 0], normal=n,
              boundary=[[0, 0, 0], [10, 0, -2], [10, 10, -1], [0, 10, 1]])
    g = sample_surface(p, 7)
    assert np.allclose(g.normals[g.mask], n, atol=1e-9)


def test_degenerate_surface_sampling_error():
    with pytest.raises(DieModelError):
        sample_surface(Plane("p", origin=[0, 0, 0], normal=[0, 0, 1],
                             boundary=[[0, 0, 0], [1, 0, 0], [2, 0, 0]]), 5)


# ---------------------------------------------------------------- machinability
def test_planes_and_drafted_walls_are_machinable(pocket):
    report = check_machinability(pocket)
    assert report.machinable
    assert report.undercuts == {}
    assert tuple(report.direction) == (0.0, 0.0, 1.0)


def _dome(sweep_deg):
    phi = np.radians(np.linspace(0.0, sweep_deg, 40))
    prof = np.column_stack([10 * np.sin(phi), np.zeros_like(phi), 10 * np.cos(phi)])
    prof[0, 0] = 1e-3
    return Revolved("dome", axis_point=[0, 0, 0], axis_direction=[0, 0, 1], profile=prof,
                    angle_range=(0.0, 360.0))


@pytest.mark.parametrize("resolution", [9, 17, 33, 65])
def test_revolved_past_vertical_reports_undercut(resolution):
    report = check_machinability(DieModel((_dome(120.0),)), resolution)
    assert not report.machinable
    pts = report.undercuts["dome"]
    # the profile facet straddling the equator already faces slightly downward
    facet_rise = 10.0 * np.sin(np.radians(120.0 / 39))
    assert np.all(pts[:, 2] < facet_rise)
    assert pts[:, 2].min() < -4.9
    assert "dome" in report.describe()


def test_revolved_hemisphere_is_machinable():
    assert check_machinability(DieModel((_dome(80.0),))).machinable
