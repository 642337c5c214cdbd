"""Basic machining feature extraction.

Surfaces are first classified by slope (horizontal, shallow, steep, blend),
adjacent surfaces of the same class are grouped, and steep groups are split
into flank-contoured (FC) and flank-followed (FF) by how far their rulings
lean away from the tool axis.

Feature ids are the kind followed by a 1-based rank; features of one kind are
ranked by their smallest member surface id.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.ops import unary_union

from .die_model import DEFAULT_RESOLUTION, DieModel, Technology, sample_surface, slope_range
from .errors import ClassificationError
from .geometry import ZAXIS, Polyline, unit
from .surfaces import Blend, Plane, Surface
from .topology import BoundaryIndex, surface_adjacency

log = logging.getLogger(__name__)

KINDS = ("HP", "CP", "FC", "FF", "B")
RAW_KINDS = ("horizontal", "shallow", "steep", "blend")
RULING_COUNT = 9


def classify_surface(surface: Surface, technology: Technology, resolution: int = DEFAULT_RESOLUTION) -> str:
    """Raw slope class of one surface: horizontal, shallow, steep or blend."""
    if isinstance(surface, Blend):
        return "blend"
    lo, hi = slope_range(surface, resolution)
    if hi <= technology.flat_tol:
        return "horizontal"
    lower = technology.steep_lower
    if hi < lower:
        return "shallow"
    grid = sample_surface(surface, resolution)
    mean = float(grid.slopes[grid.mask].mean())
    if lo < lower - technology.steep_band or mean < lower:
        raise ClassificationError(
            f"surface {surface.id} straddles the shallow and steep bands (slopes {lo:.2f} to {hi:.2f} deg, "
            f"steep band starts at {lower:.2f} deg); subdivide it upstream")
    return "steep"


@dataclass(frozen=True, eq=False)
class BasicFeature:
    id: str
    kind: str
    surface_ids: tuple
    z_extent: tuple
    footprint: Polyline
    footprint_polygon: object = field(repr=False, default=None)
    mean_slope: float = 0.0
    slope_min: float = 0.0
    slope_max: float = 0.0
    generatrix_direction: np.ndarray | None = None
    ruling_samples: tuple = ()
    ruling_tilt: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not self.surface_ids:
            raise ValueError("feature needs at least one surface")

    @property
    def z_min(self) -> float:
        return self.z_extent[0]

    @property
    def z_max(self) -> float:
        return self.z_extent[1]

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "surfaces": list(self.surface_ids),
             "z_extent": [round(self.z_extent[0], 6), round(self.z_extent[1], 6)],
             "slope": {"min": round(self.slope_min, 4), "mean": round(self.mean_slope, 4),
                       "max": round(self.slope_max, 4)}}
        if self.generatrix_direction is not None:
            d["generatrix_direction"] = [round(float(x), 6) for x in self.generatrix_direction]
        if self.ruling_tilt is not None:
            d["ruling_tilt"] = round(self.ruling_tilt, 4)
        return d


@dataclass(frozen=True, eq=False)
class FeatureSet:
    features: tuple
    surface_index: dict
    adjacency: dict = field(default_factory=dict, repr=False)   # surface pair -> shared pieces
    index: BoundaryIndex | None = field(default=None, repr=False)

    def __post_init__(self):
        seen = {}
        for f in self.features:
            for s in f.surface_ids:
                if s in seen:
                    raise ClassificationError(f"surface {s} belongs to both {seen[s]} and {f.id}")
                seen[s] = f.id

    def __iter__(self):
        return iter(self.features)

    def __len__(self):
        return len(self.features)

    def get(self, fid: str) -> BasicFeature:
        for f in self.features:
            if f.id == fid:
                return f
        raise KeyError(fid)

    def of_surface(self, sid: str) -> BasicFeature:
        return self.get(self.surface_index[sid])

    def census(self) -> dict:
        out = {k: 0 for k in KINDS}
        for f in self.features:
            out[f.kind] += 1
        return out

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features], "census": self.census()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


# --------------------------------------------------------------------------------------
def _components(ids, edges):
    parent = {i: i for i in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for i in ids:
        groups.setdefault(find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def ruling_polylines(surface: Surface, count: int = RULING_COUNT) -> list[Polyline]:
    """Straight generatrix lines of a surface; planes use their fall lines.  Empty when not ruled."""
    if isinstance(surface, Plane):
        n = surface.normal
        horiz = n - (n @ ZAXIS) * ZAXIS
        if np.linalg.norm(horiz) < 1e-12:
            return []
        fall = unit(np.cross(np.cross(n, ZAXIS), n))
        if fall[2] < 0:
            fall = -fall
        poly = surface.polygon_uv()
        e1, e2 = surface._frame
        fu = np.array([fall @ e1, fall @ e2])
        across = np.array([-fu[1], fu[0]])
        coords = np.asarray(poly.exterior.coords)
        proj = coords @ across
        out = []
        for c in np.linspace(proj.min(), proj.max(), count + 2)[1:-1]:
            along = coords @ fu
            p0 = across * c + fu * (along.min() - 1.0)
            p1 = across * c + fu * (along.max() + 1.0)
            seg = shapely.LineString([p0, p1]).intersection(poly)
            for g in getattr(seg, "geoms", [seg]):
                if g.geom_type == "LineString" and g.length > 1e-6:
                    uv = np.asarray(g.coords)
                    out.append(Polyline(surface.evaluate(uv[:, 0], uv[:, 1])[0]))
        return out
    if surface.directrix_range() is None:
        return []
    t0, t1 = surface.directrix_range()
    return [Polyline(surface.generatrix(t, 2)[0]) for t in np.linspace(t0, t1, count)]


def ruling_tilt(rulings: list[Polyline]) -> float | None:
    """Mean angle (degrees) between rulings and the +Z axis, weighted by ruling length."""
    if not rulings:
        return None
    ang, w = [], []
    for r in rulings:
        d = r.points[-1] - r.points[0]
        L = np.linalg.norm(d)
        ang.append(np.degrees(np.arccos(min(1.0, abs(d[2]) / L))))
        w.append(L)
    return float(np.average(ang, weights=w))


def resolve_flank_kind(rulings: list[Polyline], technology: Technology, label: str = "") -> str:
    """FF when the rulings lean more than ``ruling_tilt_threshold`` off the tool axis, else FC."""
    tilt = ruling_tilt(rulings)
    if tilt is None:
        log.warning("no rulings available for steep feature %s; classified FC", label or "?")
        return "FC"
    return "FF" if tilt > technology.ruling_tilt_threshold else "FC"


def _footprint(die: DieModel, ids) -> Polygon:
    polys = []
    for sid in ids:
        loops = []
        for pts, _ in die.surface(sid).boundary_loops(step=1.0):
            xy = pts[:, :2]
            p = Polygon(xy).buffer(0)
            if p.area < 1e-9:
                # near-vertical surface: thicken its projected outline a hair
                p = shapely.LineString(xy).buffer(1e-3)
            loops.append(p)
        loops.sort(key=lambda p: -p.area)
        shape = loops[0]
        for p in loops[1:]:
            # loops inside the outer one are holes
            shape = shape.difference(p) if shape.contains(p) else shape.union(p)
        polys.append(shape)
    return unary_union(polys).buffer(0)


def _footprint_polyline(poly, z: float) -> Polyline:
    if poly.geom_type == "MultiPolygon":
        poly = max(poly.geoms, key=lambda g: g.area)
    xy = np.asarray(poly.exterior.coords)
    pts = np.column_stack([xy, np.full(len(xy), z)])
    keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
    return Polyline(pts[keep])


def _generatrix_direction(die: DieModel, ids, poly) -> np.ndarray:
    """Horizontal direction the cutting planes are normal to."""
    best = max(ids, key=lambda s: _area(die.surface(s)))
    s = die.surface(best)
    d = None
    if s.kind == "extruded":
        d = s.direction.copy()
    elif s.kind == "ruled":
        d = s.rail0.points[-1] - s.rail0.points[0]
    elif s.kind == "plane":
        n = s.normal
        d = np.cross(n, ZAXIS)      # contour direction; passes then follow the fall line
    if d is not None:
        d = np.array([d[0], d[1], 0.0])
    if d is None or np.linalg.norm(d) < 1e-9:
        # planes normal to the short side give the fewest, longest passes
        rect = np.asarray(poly.minimum_rotated_rectangle.exterior.coords)
        e = np.diff(rect, axis=0)[:2]
        k = int(np.argmin(np.linalg.norm(e, axis=1)))
        d = np.array([e[k, 0], e[k, 1], 0.0])
    d = unit(d)
    # canonical sign for determinism
    if d[0] < -1e-12 or (abs(d[0]) <= 1e-12 and d[1] < 0):
        d = -d
    return d


def _area(surface) -> float:
    m = surface.tessellate(max_edge=5.0)
    v = m.vertices[m.triangles]
    return float(0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum())


def aggregate_features(die: DieModel, raw: dict, adjacency: dict, technology: Technology | None = None,
                       resolution: int = DEFAULT_RESOLUTION) -> list[BasicFeature]:
    """Group adjacent surfaces of the same raw class into features.

    Horizontal planes never merge.  Steep surfaces merge only when their own
    FC/FF verdicts agree, so a group has a single machining process.
    """
    tech = technology or die.technology
    ids = sorted(raw)
    rulings = {}
    flank = {}
    for sid in ids:
        if raw[sid] == "steep":
            rulings[sid] = ruling_polylines(die.surface(sid))
            flank[sid] = resolve_flank_kind(rulings[sid], tech, sid)
    pairs = set(adjacency) | {tuple(sorted(p)) for p in die.explicit_adjacency}
    edges = []
    for a, b in sorted(pairs):
        if raw[a] != raw[b] or raw[a] == "horizontal":
            continue
        if raw[a] == "steep" and flank[a] != flank[b]:
            continue
        edges.append((a, b))
    groups = _components(ids, edges)

    pending = []
    for g in groups:
        rk = raw[g[0]]
        kind = {"horizontal": "HP", "shallow": "CP", "blend": "B"}.get(rk)
        if kind is None:
            kind = flank[g[0]]
        pending.append((kind, g))

    feats = []
    counters = {k: 0 for k in KINDS}
    for kind, g in sorted(pending, key=lambda x: (KINDS.index(x[0]), x[1][0])):
        counters[kind] += 1
        feats.append(_make_feature(die, f"{kind}{counters[kind]}", kind, g, rulings, tech, resolution))
    return feats


def _make_feature(die, fid, kind, ids, rulings, tech, resolution) -> BasicFeature:
    slopes, zs = [], []
    for sid in ids:
        grid = sample_surface(die.surface(sid), resolution)
        slopes.append(grid.slopes[grid.mask])
        zs.append(grid.points[grid.mask][:, 2])
        for pts, _ in die.surface(sid).boundary_loops(step=1.0):
            zs.append(pts[:, 2])
    sl = np.concatenate(slopes)
    z = np.concatenate(zs)
    poly = _footprint(die, ids)
    rs = ()
    tilt = None
    if kind in ("FC", "FF", "B"):
        rs = tuple(r for sid in ids for r in (rulings.get(sid) or ruling_polylines(die.surface(sid))))
        tilt = ruling_tilt(list(rs))
    gen = _generatrix_direction(die, ids, poly) if kind == "CP" else None
    return BasicFeature(fid, kind, tuple(ids), (float(z.min()), float(z.max())),
                        _footprint_polyline(poly, float(z.min())), poly, float(sl.mean()), float(sl.min()),
                        float(sl.max()), gen, rs, tilt)


def validate_feature(feature: BasicFeature, die: DieModel, technology: Technology,
                     resolution: int = DEFAULT_RESOLUTION) -> None:
    """Raise :class:`ClassificationError` naming the violated kind invariant."""
    k = feature.kind
    lower = technology.steep_lower
    for sid in feature.surface_ids:
        s = die.surface(sid)
        if k == "B":
            if not isinstance(s, Blend):
                raise ClassificationError(f"feature {feature.id}: member {sid} is not a blend surface")
            continue
        lo, hi = slope_range(s, resolution)
        if k == "HP" and hi > technology.flat_tol:
            raise ClassificationError(f"feature {feature.id}: HP member {sid} has slope {hi:.3f} deg "
                                      f"> flat_tol {technology.flat_tol}")
        if k == "CP" and hi >= lower:
            raise ClassificationError(f"feature {feature.id}: CP member {sid} reaches slope {hi:.3f} deg "
                                      f"(steep band from {lower:.3f})")
    if k == "HP" and len(feature.surface_ids) != 1:
        raise ClassificationError(f"feature {feature.id}: HP must be a single plane")
    if k in ("FC", "FF") and not lower <= feature.mean_slope <= 90.0 + 1e-9:
        raise ClassificationError(f"feature {feature.id}: mean slope {feature.mean_slope:.3f} deg outside "
                                  f"[{lower:.3f}, 90]")


def extract_features(die: DieModel, technology: Technology | None = None,
                     resolution: int = DEFAULT_RESOLUTION, eps: float = 0.01,
                     index: BoundaryIndex | None = None) -> FeatureSet:
    """Classify, aggregate and validate; the result partitions the die's surfaces."""
    tech = technology or die.technology
    raw = {s.id: classify_surface(s, tech, resolution) for s in die.surfaces}
    index = index or BoundaryIndex(die.surfaces)
    adjacency = surface_adjacency(die, eps, index)
    feats = aggregate_features(die, raw, adjacency, tech, resolution)
    for f in feats:
        validate_feature(f, die, tech, resolution)
    fs = FeatureSet(tuple(feats), {s: f.id for f in feats for s in f.surface_ids}, adjacency, index)
    for f in feats:
        if f.kind != "B":
            continue
        neigh = set()
        for sid in f.surface_ids:
            for other in die.surface(sid).adjacent:
                neigh.add(fs.surface_index[other])
        if len(neigh) != 2:
            raise ClassificationError(f"feature {f.id}: blend must touch exactly 2 non-blend features, "
                                      f"found {sorted(neigh)}")
    log.info("extracted %d features: %s", len(feats), fs.census())
    return fs


def blend_neighbors(feature: BasicFeature, die: DieModel, features: FeatureSet) -> tuple:
    """The two non-blend features a blend feature joins, sorted by id."""
    out = set()
    for sid in feature.surface_ids:
        for other in die.surface(sid).adjacent:
            out.add(features.surface_index[other])
    return tuple(sorted(out))
