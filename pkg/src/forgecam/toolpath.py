"""Finishing toolpaths: moves, stepover, the four cutting strategies, linking,
local gouge check and G-code export.

All positions are tool-tip positions.  A ball tool touching a surface point
``P`` with outward normal ``n`` has its tip at ``P + R n - R z``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import shapely
from scipy.spatial import cKDTree

from .die_model import Technology, Tool
from .errors import ToolpathError
from .geometry import ZAXIS, Polyline, dedupe, distance_to_polyline, polygon_signed_area, remove_collinear
from .slicing import HeightMap, ball_tip, section_surfaces

log = logging.getLogger(__name__)

MOVE_KINDS = ("cut", "approach", "clearance", "retract", "link")
STRATEGIES = ("parallel_plane", "zlevel_contour", "spiral", "along_generatrix", "imported")
SWEEPINGS = ("one_way", "zigzag", "spiral", "morph_out_spiral")
PLUNGE_RATIO = 0.5


@dataclass(frozen=True, eq=False)
class Move:
    """One toolpath move.  ``feed`` is mm/min; ``None`` makes the whole move rapid.

    ``rapid_prefix`` counts leading segments traversed at rapid speed (used by
    approaches, which drop rapidly to the lead-in point and then plunge at feed).
    """

    kind: str
    polyline: Polyline
    feed: float | None = None
    rapid_prefix: int = 0

    def __post_init__(self):
        if self.kind not in MOVE_KINDS:
            raise ValueError(f"unknown move kind {self.kind!r}")
        if not isinstance(self.polyline, Polyline):
            object.__setattr__(self, "polyline", Polyline(self.polyline))
        if self.feed is not None and not self.feed > 0:
            raise ValueError("feed must be > 0")
        if not 0 <= self.rapid_prefix <= len(self.polyline) - 1:
            raise ValueError("rapid_prefix out of range")

    @property
    def points(self) -> np.ndarray:
        return self.polyline.points

    @property
    def rapid(self) -> bool:
        return self.feed is None

    def segment_feeds(self) -> list[float | None]:
        n = len(self.polyline) - 1
        if self.feed is None:
            return [None] * n
        return [None] * self.rapid_prefix + [self.feed] * (n - self.rapid_prefix)

    @property
    def length(self) -> float:
        return self.polyline.length


@dataclass(frozen=True, eq=False)
class Toolpath:
    moves: tuple
    tool: Tool
    strategy: str
    sweeping: str
    feature_id: str = ""
    up_milling: bool = True
    notes: tuple = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.sweeping not in SWEEPINGS:
            raise ValueError(f"unknown sweeping {self.sweeping!r}")
        object.__setattr__(self, "moves", tuple(self.moves))

    @property
    def tool_id(self) -> str:
        return self.tool.id

    @property
    def cuts(self) -> list[Move]:
        return [m for m in self.moves if m.kind == "cut"]

    @property
    def retract_count(self) -> int:
        return sum(1 for m in self.moves if m.kind == "retract")

    @property
    def cut_length(self) -> float:
        return float(sum(m.length for m in self.cuts))

    def kinds(self) -> list[str]:
        return [m.kind for m in self.moves]

    def with_moves(self, moves, **kw) -> "Toolpath":
        return replace(self, moves=tuple(moves), **kw)


def stepover_for_scallop(tool: Tool, scallop: float) -> float:
    """Lateral pass spacing leaving a cusp of height ``scallop`` on a flat surface."""
    if tool.shape == "flat_end":
        return tool.engagement * tool.diameter
    R = tool.cutting_radius
    if not 0.0 < scallop < R:
        raise ToolpathError(f"scallop {scallop:g} must lie in (0, cutting radius {R:g})")
    return 2.0 * float(np.sqrt(scallop * (2.0 * R - scallop)))


def _approach(start, clearance_z, lead_in, feed) -> Move:
    top = np.array([start[0], start[1], clearance_z])
    lead_z = min(start[2] + lead_in, clearance_z)
    pts = [top]
    prefix = 0
    if lead_z < clearance_z - 1e-9:
        pts.append(np.array([start[0], start[1], lead_z]))
        prefix = 1
    pts.append(np.asarray(start, dtype=float))
    pts = dedupe(np.asarray(pts), 1e-9)
    if len(pts) < 2:
        # start is already at clearance height: nudge the approach a hair above it
        pts = np.vstack([pts[0] + [0, 0, 1e-3], pts[0]])
        prefix = 1
    return Move("approach", Polyline(pts), feed=feed, rapid_prefix=min(prefix, len(pts) - 1))


def _lift(end, clearance_z, kind) -> Move | None:
    if end[2] >= clearance_z - 1e-9:
        return None
    return Move(kind, Polyline([end, [end[0], end[1], clearance_z]]))


def link_moves(toolpath: Toolpath, technology: Technology) -> Toolpath:
    """Add approach, retract and final clearance moves around the cut (and link) moves.

    Consecutive cuts joined by ``link`` moves stay connected; any other break
    between cuts becomes retract + approach.  Existing approach/retract/clearance
    moves are discarded first, so the operation is idempotent.
    """
    body = [m for m in toolpath.moves if m.kind in ("cut", "link")]
    if not any(m.kind == "cut" for m in body):
        raise ToolpathError(f"toolpath for {toolpath.feature_id or '?'} has no cut moves")
    cz = technology.clearance_z
    plunge = PLUNGE_RATIO * technology.programmed_feed
    lead = toolpath.tool.cutting_radius
    for m in body:
        if m.points[:, 2].max() > cz:
            raise ToolpathError(f"cut above clearance plane z={cz:g} in {toolpath.feature_id}")
    out = [_approach(body[0].points[0], cz, lead, plunge)]
    for k, m in enumerate(body):
        if k > 0 and m.kind == "cut" and body[k - 1].kind == "cut":
            r = _lift(body[k - 1].points[-1], cz, "retract")
            if r is not None:
                out.append(r)
            out.append(_approach(m.points[0], cz, lead, plunge))
        out.append(m)
    final = _lift(body[-1].points[-1], cz, "clearance")
    if final is not None:
        out.append(final)
    return toolpath.with_moves(out)


# --------------------------------------------------------------------------------------
def _fmt(x: float) -> str:
    s = f"{x:.4f}"
    return "0.0000" if s == "-0.0000" else s


def export_gcode(toolpath: Toolpath) -> str:
    """G-code subset: ``G0`` rapids and ``G1`` feed moves, 4 decimals, one target per line."""
    lines = [f"(feature {toolpath.feature_id})",
             f"(strategy {toolpath.strategy} {toolpath.sweeping})",
             f"(tool {toolpath.tool.id} {toolpath.tool.shape} R{_fmt(toolpath.tool.cutting_radius)})"]
    cur = None
    for m in toolpath.moves:
        pts = m.points
        feeds = m.segment_feeds()
        if cur is None or np.linalg.norm(cur - pts[0]) > 1e-9:
            x, y, z = pts[0]
            lines.append(f"G0 X{_fmt(x)} Y{_fmt(y)} Z{_fmt(z)}")
        for p, f in zip(pts[1:], feeds):
            x, y, z = p
            if f is None:
                lines.append(f"G0 X{_fmt(x)} Y{_fmt(y)} Z{_fmt(z)}")
            else:
                lines.append(f"G1 X{_fmt(x)} Y{_fmt(y)} Z{_fmt(z)} F{_fmt(f)}")
        cur = pts[-1]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------------------
# strategies
MESH_EDGE = 0.5
SLICE_INSET = 1e-5
RING_MIN_AREA = 1.0
SPIRAL_BLOCK = 1.0
RULING_STEP = 0.5
EXTENSION_STEP = 1.0
MIN_BLOCK = 0.01        # section points closer than this are merged
FACET_TOL = 1e-7        # contact points this close to a chord lie inside one planar facet


def _meshes(feature, die, max_edge=MESH_EDGE):
    return [die.surface(s).tessellate(max_edge) for s in feature.surface_ids]


def _cut(points: np.ndarray, feed: float) -> Move | None:
    points = np.asarray(points, dtype=float)
    pts = dedupe(points, MIN_BLOCK)
    if len(pts) >= 2 and np.linalg.norm(pts[-1] - points[-1]) > 0.0:
        pts[-1] = points[-1]
    pts = remove_collinear(pts, tol=1e-6)
    if len(pts) < 2:
        return None
    return Move("cut", Polyline(pts), feed=feed)


def _drop_facet_points(pts, nrm, closed):
    """Drop section points interior to planar facets (triangle diagonals), keeping a closed loop closed."""
    if closed and len(pts) > 3:
        p, n = remove_collinear(pts[:-1], nrm[:-1], tol=FACET_TOL)
        return np.vstack([p, p[:1]]), np.vstack([n, n[:1]])
    return remove_collinear(pts, nrm, tol=FACET_TOL)


def _xy_distance(points: np.ndarray, poly: Polyline) -> np.ndarray:
    q = poly.points.copy()
    q[:, 2] = 0.0
    p = np.column_stack([points[:, :2], np.zeros(len(points))])
    return distance_to_polyline(p, q)


def _split_outside(contact, tips, exclude):
    """Split a pass into the pieces whose contact points keep clear of every exclusion band."""
    if not exclude:
        return [tips]

    def clear(c):
        return min(float(_xy_distance(c[None], poly)[0]) - dist for poly, dist in exclude)

    margin = np.min(np.column_stack([_xy_distance(contact, poly) - dist for poly, dist in exclude]), axis=1)
    ok = margin >= 0.0
    pieces, cur = [], []
    for i in range(len(tips)):
        if i > 0 and ok[i] != ok[i - 1]:
            lo, hi = 0.0, 1.0
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                c = contact[i - 1] + mid * (contact[i] - contact[i - 1])
                if (clear(c) >= 0.0) == ok[i - 1]:
                    lo = mid
                else:
                    hi = mid
            f = lo if ok[i - 1] else hi
            x = tips[i - 1] + f * (tips[i] - tips[i - 1])
            if ok[i - 1]:
                cur.append(x)
                pieces.append(np.asarray(cur))
                cur = []
            else:
                cur = [x]
        if ok[i]:
            cur.append(tips[i])
    if cur:
        pieces.append(np.asarray(cur))
    return [p for p in pieces if len(p) >= 2]


def parallel_plane_sweep(feature, die, tool: Tool, technology: Technology, sweeping: str = "one_way",
                         up_milling: bool = True, exclude=(), max_edge: float = MESH_EDGE) -> Toolpath:
    """Passes in vertical planes normal to the feature's generatrix direction.

    ``exclude`` holds ``(polyline, distance)`` bands (XY distance to the polyline)
    from which the passes are trimmed.
    """
    if feature.generatrix_direction is None:
        raise ToolpathError(f"feature {feature.id}: generatrix direction not set")
    if sweeping not in ("one_way", "zigzag"):
        raise ToolpathError(f"parallel planes support one_way or zigzag, not {sweeping}")
    g = np.asarray(feature.generatrix_direction, dtype=float)
    d = np.cross(ZAXIS, g)
    d /= np.linalg.norm(d)
    if not up_milling:
        d = -d
    step = stepover_for_scallop(tool, technology.target_scallop)
    R = tool.cutting_radius
    meshes = _meshes(feature, die, max_edge)
    proj = np.concatenate([m.vertices @ g for m in meshes])
    c0, c1 = float(proj.min()), float(proj.max())
    n = int(np.ceil((c1 - c0) / step - 1e-9)) + 1
    positions = np.linspace(c0 + SLICE_INSET, c1 - SLICE_INSET, max(n, 1))
    F = technology.programmed_feed
    passes = []
    for c in positions:
        chains = section_surfaces(meshes, g * c, g)
        cuts = []
        for pts, nrm, _ in chains:
            pts, nrm = remove_collinear(pts, nrm, tol=FACET_TOL)
            tips = ball_tip(pts, nrm, R) if tool.shape == "ball_end" else pts
            if (tips[-1] - tips[0]) @ d < 0:
                pts, tips = pts[::-1], tips[::-1]
            for piece in _split_outside(pts, tips, list(exclude)):
                m = _cut(piece, F)
                if m is not None:
                    cuts.append(m)
        cuts.sort(key=lambda m: float(m.points[0] @ d))
        if cuts:
            passes.append(cuts)
    if not passes:
        raise ToolpathError(f"feature {feature.id}: cutting planes miss the feature (empty section)")
    moves = []
    for k, cuts in enumerate(passes):
        if sweeping == "zigzag" and k % 2 == 1:
            cuts = [Move("cut", Polyline(m.points[::-1]), feed=m.feed) for m in cuts[::-1]]
        for m in cuts:
            if sweeping == "zigzag" and moves:
                a, b = moves[-1].points[-1], m.points[0]
                if np.linalg.norm(b - a) > 1e-9:
                    moves.append(Move("link", Polyline([a, b]), feed=F))
            moves.append(m)
    tp = Toolpath(tuple(moves), tool, "parallel_plane", sweeping, feature.id, up_milling)
    return link_moves(tp, technology)


def _reference_direction(feature) -> np.ndarray:
    poly = feature.footprint_polygon
    rect = np.asarray(poly.minimum_rotated_rectangle.exterior.coords)
    e = np.diff(rect, axis=0)
    k = int(np.argmax(np.linalg.norm(e, axis=1)))
    r = np.array([e[k, 0], e[k, 1], 0.0])
    r /= np.linalg.norm(r)
    if r[0] < -1e-9 or (abs(r[0]) <= 1e-9 and r[1] < 0):
        r = -r
    return r


def _start_at_lowest(loop: np.ndarray) -> np.ndarray:
    q = loop[:-1]
    key = np.lexsort((np.round(q[:, 1], 6), np.round(q[:, 0], 6)))
    k = int(key[0])
    q = np.roll(q, -k, axis=0)
    return np.vstack([q, q[:1]])


def zlevel_contour(feature, die, tool: Tool, technology: Technology, up_milling: bool = True,
                   max_edge: float = MESH_EDGE) -> Toolpath:
    """Horizontal sections from the top of the feature down, one cut per section chain."""
    z0, z1 = feature.z_extent
    H = z1 - z0
    if H <= 1e-9:
        raise ToolpathError(f"feature {feature.id}: z extent is degenerate")
    step = stepover_for_scallop(tool, technology.target_scallop)
    spacing = step * float(np.sin(np.radians(feature.mean_slope)))
    n = int(np.ceil(H / spacing - 1e-9)) + 1
    inset = min(1e-4, spacing / 10.0)
    levels = np.linspace(z1 - inset, z0 + inset, n)
    meshes = _meshes(feature, die, max_edge)
    ref = _reference_direction(feature)
    R = tool.cutting_radius
    F = technology.programmed_feed
    moves = []
    for z in levels:
        chains = section_surfaces(meshes, np.array([0.0, 0.0, z]), ZAXIS)
        if not chains:
            raise ToolpathError(f"feature {feature.id}: level z={z:.4f} yields an empty section")
        cuts = []
        for pts, nrm, closed in chains:
            pts, nrm = _drop_facet_points(pts, nrm, closed)
            tips = ball_tip(pts, nrm, R) if tool.shape == "ball_end" else pts
            if closed:
                area = polygon_signed_area(tips[:-1, :2])
                if (area < 0) == up_milling:
                    tips = tips[::-1]
                tips = _start_at_lowest(tips)
            elif (tips[-1] - tips[0]) @ ref < 0:
                tips = tips[::-1]
            m = _cut(tips, F)
            if m is not None:
                cuts.append(m)
        cuts.sort(key=lambda m: (round(float(m.points[0] @ ref), 6), round(float(m.points[0][1]), 6)))
        moves.extend(cuts)
    tp = Toolpath(tuple(moves), tool, "zlevel_contour", "one_way", feature.id, up_milling)
    return link_moves(tp, technology)


def _largest(geom):
    if geom.is_empty:
        return None
    if geom.geom_type == "MultiPolygon":
        geom = max(geom.geoms, key=lambda g: g.area)
    return geom if geom.geom_type == "Polygon" else None


def _ring_from_ray(ring: np.ndarray, centre: np.ndarray, count: int) -> np.ndarray:
    """Resample a closed CCW ring to ``count`` points starting where the +X ray from ``centre`` meets it."""
    xy = ring[:, :2]
    best, best_t = None, np.inf
    for k in range(len(xy) - 1):
        a, b = xy[k], xy[k + 1]
        # solve centre + t*(1,0) = a + u*(b-a)
        e = b - a
        den = -e[1]
        if abs(den) < 1e-15:
            continue
        u = (centre[1] - a[1]) / e[1]
        if not 0.0 <= u < 1.0:
            continue
        t = a[0] + u * e[0] - centre[0]
        if 0.0 <= t < best_t:
            best, best_t = (k, u), t
    if best is None:
        k = int(np.argmax(xy[:-1, 0]))
        best = (k, 0.0)
    k, u = best
    start = xy[k] + u * (xy[k + 1] - xy[k])
    loop = np.vstack([start, xy[k + 1:-1], xy[:k + 1], start])
    keep = np.concatenate([[True], np.linalg.norm(np.diff(loop, axis=0), axis=1) > 1e-12])
    loop = loop[keep]
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(loop, axis=0), axis=1))])
    s = np.linspace(0.0, cum[-1], count + 1)[:-1]
    return np.column_stack([np.interp(s, cum, loop[:, 0]), np.interp(s, cum, loop[:, 1])])


def offset_rings(polygon, step: float, start: float = 0.0) -> list:
    """Inward offsets of ``polygon`` by ``start + k*step`` keeping the largest piece, until too small."""
    rings = []
    k = 0
    while True:
        g = _largest(polygon.buffer(-(start + k * step)))
        if g is None or g.area < RING_MIN_AREA:
            break
        rings.append(g)
        k += 1
    return rings


def spiral_surface(feature, die, tool: Tool, technology: Technology, centre_out: bool = True) -> Toolpath:
    """Single continuous morphing spiral from the footprint centre out to its boundary.

    HP features are cut flat with the tool tip on the plane; other features follow
    a height map of their surfaces with ball tip offsets.
    """
    poly = feature.footprint_polygon
    if poly is None or poly.is_empty or poly.area <= 0.0:
        raise ToolpathError(f"feature {feature.id}: footprint has zero area")
    if not poly.is_valid or poly.geom_type != "Polygon":
        raise ToolpathError(f"feature {feature.id}: footprint polygon is not simple")
    flat = feature.kind == "HP"
    step = tool.engagement * tool.diameter if tool.shape == "flat_end" else stepover_for_scallop(
        tool, technology.target_scallop)
    rings = offset_rings(poly, step, 0.0 if flat else 1e-3)
    if not rings:
        raise ToolpathError(f"feature {feature.id}: footprint too small for a spiral")
    centre = np.asarray(rings[-1].centroid.coords[0])
    loops = []
    for g in rings:
        ring = shapely.geometry.polygon.orient(g, 1.0).exterior
        loops.append(np.asarray(ring.coords))
    seq = loops[::-1]       # innermost first
    xy = [centre[None, :]]
    prev_loop = None
    for loop in seq:
        per = float(np.linalg.norm(np.diff(loop, axis=0), axis=1).sum())
        count = max(16, int(np.ceil(per / SPIRAL_BLOCK)))
        outer = _ring_from_ray(loop, centre, count)
        if prev_loop is None:
            inner = np.broadcast_to(centre, outer.shape)
        else:
            inner = _ring_from_ray(prev_loop, centre, count)
        f = (np.arange(count) / count)[:, None]
        xy.append(inner + f * (outer - inner))
        prev_loop = loop
    last = _ring_from_ray(seq[-1], centre, max(16, int(np.ceil(
        float(np.linalg.norm(np.diff(seq[-1], axis=0), axis=1).sum()) / SPIRAL_BLOCK))))
    xy.append(last)
    xy.append(last[:1])
    xy = np.vstack(xy)
    if flat:
        zc = feature.z_extent[1]
        pts = np.column_stack([xy, np.full(len(xy), zc)])
    else:
        hm = HeightMap(_meshes(feature, die))
        contact, nrm, valid = hm(xy)
        pts = ball_tip(contact, nrm, tool.cutting_radius) if tool.shape == "ball_end" else contact
        pts = pts[valid]
    if not centre_out:
        pts = pts[::-1]
    m = _cut(pts, technology.programmed_feed)
    if m is None:
        raise ToolpathError(f"feature {feature.id}: spiral collapsed")
    sweeping = "morph_out_spiral" if flat else "spiral"
    tp = Toolpath((m,), tool, "spiral", sweeping, feature.id, True, ("centre_out" if centre_out else "outside_in",))
    return link_moves(tp, technology)


def _directrix_params(surface, step: float) -> np.ndarray:
    knots = surface.directrix_knots()
    dense = np.unique(np.concatenate([np.linspace(a, b, 9) for a, b in zip(knots[:-1], knots[1:])]))
    ends = surface.directrix_points(dense)
    gaps = np.max(np.column_stack([np.linalg.norm(np.diff(e, axis=0), axis=1) for e in ends]), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(gaps)])
    n = int(np.ceil(cum[-1] / step - 1e-9)) + 1
    return np.interp(np.linspace(0.0, cum[-1], max(n, 2)), cum, dense)


def along_generatrix(feature, die, tool: Tool, technology: Technology, up_milling: bool = True,
                     extension: tuple | None = None) -> Toolpath:
    """One cut per generatrix (ruling or fillet arc), spaced so the surface stepover holds.

    ``extension = (length, height_map)`` prolongs every pass from its lower end
    horizontally away from the wall across the surface described by ``height_map``.
    """
    step = stepover_for_scallop(tool, technology.target_scallop)
    R = tool.cutting_radius
    F = technology.programmed_feed
    moves = []
    for sid in feature.surface_ids:
        s = die.surface(sid)
        if s.directrix_range() is None:
            raise ToolpathError(f"feature {feature.id}: surface {sid} has no rulings to follow")
        for t in _directrix_params(s, step):
            a, b = s.directrix_points(np.array([t]))[:2]
            L = float(np.linalg.norm(b[0] - a[0]))
            pts, nrm = s.generatrix(float(t), max(2, int(np.ceil(L / RULING_STEP)) + 1))
            if pts[-1, 2] < pts[0, 2]:
                pts, nrm = pts[::-1], nrm[::-1]
            tips = ball_tip(pts, nrm, R) if tool.shape == "ball_end" else pts
            if extension is not None:
                tips = _extend(pts[0], nrm[0], tips, extension, R)
            if not up_milling:
                tips = tips[::-1]
            m = _cut(tips, F)
            if m is not None:
                moves.append(m)
    if not moves:
        raise ToolpathError(f"feature {feature.id}: no generatrix passes")
    tp = Toolpath(tuple(moves), tool, "along_generatrix", "one_way", feature.id, up_milling)
    return link_moves(tp, technology)


def _extend(foot, foot_normal, tips, extension, R):
    length, hm = extension
    h = np.array([foot_normal[0], foot_normal[1], 0.0])
    if np.linalg.norm(h) < 1e-9 or length <= 0:
        return tips
    h /= np.linalg.norm(h)
    k = int(np.ceil(length / EXTENSION_STEP))
    dist = np.linspace(length, 0.0, k + 1)[:-1]
    xy = foot[None, :2] + dist[:, None] * h[None, :2]
    contact, nrm, valid = hm(xy)
    if not valid.any():
        return tips
    first = int(np.argmax(valid))
    if not valid[first:].all():
        return tips
    strip = ball_tip(contact[first:], nrm[first:], R)
    return np.vstack([strip, tips])


# --------------------------------------------------------------------------------------
@dataclass(frozen=True)
class GougeViolation:
    surface_id: str
    point: tuple
    radius: float


GOUGE_TOL = 1e-3        # intrusion depth (mm) ignored as facet chord error


def gouge_check(feature, die, tool: Tool, resolution: int = 33) -> list[GougeViolation]:
    """Sample points where a ball touching the surface would cut into it nearby.

    The ball centre sits at ``P + R n``; any other sample of the same surface
    closer to it than ``R - GOUGE_TOL`` means the surface is locally concave
    tighter than the cutting radius.  The reported radius is the tangent circle through
    the deepest intruding sample, ``|Q-P|^2 / (2 (Q-P).n)``.
    """
    from .die_model import sample_surface

    R = tool.cutting_radius
    out = []
    for sid in feature.surface_ids:
        P, N, _ = sample_surface(die.surface(sid), resolution).valid()
        C = P + R * N
        for i, hits in enumerate(cKDTree(P).query_ball_point(C, R - GOUGE_TOL)):
            if not hits:
                continue
            Q = P[hits]
            depth = R - np.linalg.norm(Q - C[i], axis=1)
            k = int(np.argmax(depth))
            d = Q[k] - P[i]
            h = float(d @ N[i])
            radius = float(d @ d) / (2.0 * h) if h > 0 else 0.0
            out.append(GougeViolation(sid, tuple(float(x) for x in np.round(P[i], 6)), radius))
    out.sort(key=lambda v: (v.surface_id, v.point))
    dedup = []
    for v in out:
        if not dedup or (dedup[-1].surface_id, dedup[-1].point) != (v.surface_id, v.point):
            dedup.append(v)
    return dedup
