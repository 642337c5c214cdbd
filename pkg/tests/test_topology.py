from collections import Counter

import numpy as np
import pytest

from forgecam.bmfe import blend_neighbors, extract_features
from forgecam.die_model import DieModel
from forgecam.errors import AmbiguousDihedralError
from forgecam.fixtures import pocket_die, single_plane_die
from forgecam.surfaces import Extruded, Plane
from forgecam.topology import (BoundaryIndex, Relation, TopologyGraph, build_topology_graph,
                               classify_relation, export_graph_dot, feature_boundaries, parse_graph_dot,
                               shared_boundary)

# frozen from the fixture construction
FIXTURE_EDGES = [
    ("B1", "FF2", "leans_on island opened"), ("B1", "HP3", "leans_on island opened"),
    ("B2", "CP1", "leans_on cavity opened"), ("B2", "FC4", "leans_on cavity opened"),
    ("B3", "FC4", "leans_on island opened"), ("B3", "HP3", "leans_on island opened"),
    ("B4", "FC2", "leans_on island opened"), ("B4", "HP2", "leans_on island opened"),
    ("B5", "FC3", "leans_on island opened"), ("B5", "HP1", "leans_on island opened"),
    ("B6", "FC3", "leans_on island opened"), ("B6", "HP1", "leans_on island opened"),
    ("FC1", "CP3", "leans_on cavity closed"),
    ("FC3", "HP1", "leans_on island opened"), ("FC3", "HP1", "leans_on island opened"),
    ("FF1", "CP1", "leans_on cavity opened"), ("FF1", "CP2", "leans_on cavity opened"),
    ("FF1", "FC2", "leads_into flank opened"), ("FF2", "CP2", "leans_on cavity opened"),
]


def square(sid, x0, z=0.0, size=10.0):
    return Plane(sid, origin=[x0, 0, z], normal=[0, 0, 1],
                 boundary=[[x0, 0, z], [x0 + size, 0, z], [x0 + size, size, z], [x0, size, z]])


def _graph(die):
    fs = extract_features(die)
    return fs, build_topology_graph(die, fs, index=fs.index)


# ---------------------------------------------------------------- shared boundaries
def test_disjoint_surfaces_share_nothing():
    assert shared_boundary(square("a", 0.0), square("b", 20.0), eps=0.01) == []


def test_floor_and_one_wall_share_an_open_edge(pocket):
    pieces = shared_boundary(pocket.surface("cp1_floor"), pocket.surface("fc1_wall_b"))
    assert len(pieces) == 1
    assert not pieces[0].closed
    assert pieces[0].length == pytest.approx(30.0, abs=0.3)


def test_pocket_rim_is_one_closed_loop(pocket, pocket_features):
    fc, cp = pocket_features.get("FC1"), pocket_features.get("CP1")
    bounds = feature_boundaries(pocket_features.index, fc, cp)
    assert len(bounds) == 1 and bounds[0].closed
    assert bounds[0].polyline.length == pytest.approx(2 * (40 + 30), rel=0.01)


def test_shared_boundary_symmetry(die):
    a, b = die.surface("ff1_wall"), die.surface("cp1_incline")
    ab = np.vstack([p.points for p in shared_boundary(a, b)])
    ba = np.vstack([p.points for p in shared_boundary(b, a)])
    idx = BoundaryIndex([a, b])
    assert np.max(idx.distance("cp1_incline", ab)) <= 0.01
    assert np.max(idx.distance("ff1_wall", ba)) <= 0.01
    span = lambda p: np.ptp(p, axis=0)  # noqa: E731
    assert np.allclose(span(ab), span(ba), atol=0.3)


def test_shared_boundary_needs_two_surfaces():
    s = square("a", 0.0)
    with pytest.raises(ValueError):
        shared_boundary(s, s)


# ---------------------------------------------------------------- relations quoted for the fixture
@pytest.mark.parametrize("source, target, verb, jtype, openness", [
    ("FF1", "CP1", "leans_on", "cavity", "opened"),
    ("FC1", "CP3", "leans_on", "cavity", "closed"),
    ("FF1", "FC2", "leads_into", "flank", "opened"),
    ("FF1", "CP2", "leans_on", "cavity", "opened"),
    ("FF2", "CP2", "leans_on", "cavity", "opened"),
])
def test_fixture_relations(graph, source, target, verb, jtype, openness):
    edges = graph.find(source, target)
    assert len(edges) == 1
    r = edges[0].relation
    assert (r.kind, r.verb, r.junction_type, r.openness) == ("junction", verb, jtype, openness)


def test_fixture_edge_list(graph):
    assert [e.key() for e in graph.edges] == FIXTURE_EDGES


def test_classify_relation_direct(die, features):
    ff1, cp1 = features.get("FF1"), features.get("CP1")
    (b,) = feature_boundaries(features.index, cp1, ff1)
    e = classify_relation(features.index, cp1, ff1, b)
    assert (e.source, e.target, e.relation.label()) == ("FF1", "CP1", "leans_on cavity opened")


def test_openness_matches_loop_closure(graph):
    for e in graph.edges:
        if e.relation.kind == "junction":
            assert (e.relation.openness == "closed") == e.relation.boundary.closed


def test_blends_touch_both_declared_neighbours(die, features, graph):
    for f in features:
        if f.kind != "B":
            continue
        for other in blend_neighbors(f, die, features):
            assert any(e.relation.kind == "junction" for e in graph.find(f.id, other) + graph.find(other, f.id))


def test_graph_is_deterministic(die, graph):
    fs = extract_features(die)
    again = build_topology_graph(die, fs, index=fs.index)
    assert [e.key() for e in again.edges] == [e.key() for e in graph.edges]
    assert export_graph_dot(again) == export_graph_dot(graph)


# ---------------------------------------------------------------- small dies
def test_single_hp_graph():
    _, g = _graph(single_plane_die())
    assert g.nodes == ("HP1",) and g.edges == ()


def test_pocket_without_fillet():
    _, g = _graph(pocket_die(rim_fillet=False))
    assert g.nodes == ("CP1", "FC1", "HP1")
    assert [e.key() for e in g.edges] == [("FC1", "CP1", "leans_on cavity closed"),
                                          ("FC1", "HP1", "leans_on island closed")]


def test_top_relation_for_stacked_planes():
    lower = square("a", 0.0, z=0.0, size=20.0)
    upper = Plane("b", origin=[5, 5, 10], normal=[0, 0, 1],
                  boundary=[[5, 5, 10], [15, 5, 10], [15, 15, 10], [5, 15, 10]])
    _, g = _graph(DieModel((lower, upper)))
    assert [e.key() for e in g.edges] == [("HP2", "HP1", "top")]


def test_property_relations():
    # an incline whose footprint lies inside a ramp spanning the same heights
    n = np.cross([10, 0, 0], [0, 10, 2])
    n = n / np.linalg.norm(n)
    big = Plane("a", origin=[0, 0, 0], normal=n, boundary=[[0, 0, 0], [40, 0, 0], [40, 40, 8], [0, 40, 8]])
    small = Plane("b", origin=[10, 10, 3], normal=n,
                  boundary=[[10, 10, 3], [20, 10, 3], [20, 20, 5], [10, 20, 5]])
    _, g = _graph(DieModel((big, small)))
    (e,) = g.edges
    assert (e.relation.kind, e.relation.verb, e.relation.property_extent) == ("property", "belongs_to", "total")


def test_tangent_continuation_is_ambiguous():
    flat = Plane("a_flat", origin=[-20, 0, 0], normal=[0, 0, 1],
                 boundary=[[-20, 0, 0], [0, 0, 0], [0, 20, 0], [-20, 20, 0]])
    x = np.linspace(0.0, 20.0, 201)
    prof = np.column_stack([x, np.zeros_like(x), 4.0 * (1 - np.cos(np.pi * x / 20.0))])
    ramp = Extruded("b_ramp", generatrix_curve=prof, direction=[0, 1, 0], extent=20.0)
    die = DieModel((flat, ramp))
    fs = extract_features(die)
    with pytest.raises(AmbiguousDihedralError) as info:
        build_topology_graph(die, fs, index=fs.index)
    assert info.value.diagnostics["features"] == ("CP1", "HP1")
    assert info.value.diagnostics["angle_deg"] > 179.0


def test_interpenetration_gives_intersection_edge():
    floor = square("a", 0.0, z=0.0, size=40.0)
    # a steep plate stabbing through the floor
    n = np.array([np.cos(np.radians(3.0)), 0.0, np.sin(np.radians(3.0))])
    wall = Plane("w", origin=[20.26, 10, -5], normal=n,
                 boundary=[[20.26, 10, -5], [20.26, 30, -5], [20.26 - 10 * n[2] / n[0], 30, 5], [20.26 - 10 * n[2] / n[0], 10, 5]])
    _, g = _graph(DieModel((floor, wall)))
    kinds = [e.relation.kind for e in g.edges]
    assert kinds == ["intersection"]


# ---------------------------------------------------------------- DOT export
def test_empty_graph_dot():
    assert export_graph_dot(TopologyGraph((), (), {})) == "digraph topology {\n}\n"


def test_single_edge_dot():
    _, g = _graph(pocket_die(rim_fillet=False))
    one = TopologyGraph(g.nodes, g.edges[:1], g.kinds)
    assert export_graph_dot(one).count("->") == 1


def test_dot_round_trip(graph):
    text = export_graph_dot(graph)
    nodes, edges = parse_graph_dot(text)
    assert nodes == list(graph.nodes)
    assert Counter(edges) == Counter(e.key() for e in graph.edges)
    assert text.endswith("}\n") and "\r" not in text


def test_relation_field_invariants():
    with pytest.raises(ValueError):
        Relation("junction", "leans_on")
    with pytest.raises(ValueError):
        Relation("property", "belongs_to")
    with pytest.raises(ValueError):
        Relation("top", "top", junction_type="cavity", openness="opened")
