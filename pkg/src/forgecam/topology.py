"""Shared boundaries between surfaces and the feature relation graph.

Relations follow the interference/proximity taxonomy used for die features:

* junction (``leans_on`` / ``leads_into``) of type island, cavity or flank,
  opened or closed;
* intersection (``is_in_intersection_with``);
* property (``belongs_to``), total or partial;
* top.

Junction typing is geometric: participant kinds, the dihedral convexity at the
shared boundary and whether that boundary closes into a loop.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AmbiguousDihedralError, TopologyError
from .geometry import Polyline, arc_lengths, chain_pieces, interpolate_at, point_segment_distance, unit

DEFAULT_EPS = 0.01
BOUNDARY_STEP = 0.25
DIHEDRAL_OFFSET = 0.1
DIHEDRAL_SAMPLES = 8
AMBIGUOUS_DEG = 1.0

FLANKS = ("FC", "FF")
FLOORS = ("HP", "CP")


@dataclass(frozen=True, eq=False)
class Relation:
    kind: str                       # junction | intersection | property | top
    verb: str                       # leans_on | leads_into | is_in_intersection_with | belongs_to | top
    junction_type: str | None = None    # island | cavity | flank
    openness: str | None = None         # opened | closed
    property_extent: str | None = None  # total | partial
    boundary: Polyline | None = None

    def __post_init__(self):
        if (self.kind == "junction") != (self.junction_type is not None and self.openness is not None):
            raise ValueError("junction fields must be set iff kind == junction")
        if (self.kind == "property") != (self.property_extent is not None):
            raise ValueError("property_extent must be set iff kind == property")

    def label(self) -> str:
        parts = [self.verb]
        if self.kind == "junction":
            parts += [self.junction_type, self.openness]
        elif self.kind == "property":
            parts.append(self.property_extent)
        return " ".join(parts)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "verb": self.verb}
        if self.junction_type:
            d["junction_type"] = self.junction_type
            d["openness"] = self.openness
        if self.property_extent:
            d["property_extent"] = self.property_extent
        return d


@dataclass(frozen=True, eq=False)
class Edge:
    source: str
    target: str
    relation: Relation

    def key(self):
        return (self.source, self.target, self.relation.label())


@dataclass(frozen=True, eq=False)
class TopologyGraph:
    nodes: tuple
    edges: tuple
    kinds: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = set(self.nodes)
        for e in self.edges:
            if e.source not in ns or e.target not in ns:
                raise TopologyError(f"edge {e.source}->{e.target} references unknown node")

    def edges_of(self, fid: str) -> list[Edge]:
        return [e for e in self.edges if fid in (e.source, e.target)]

    def junctions_of(self, fid: str) -> list[Edge]:
        return [e for e in self.edges_of(fid) if e.relation.kind == "junction"]

    def neighbors(self, fid: str, kind: str = "junction") -> list[str]:
        out = set()
        for e in self.edges_of(fid):
            if e.relation.kind == kind:
                out.add(e.target if e.source == fid else e.source)
        return sorted(out)

    def find(self, source: str, target: str) -> list[Edge]:
        return [e for e in self.edges if e.source == source and e.target == target]

    def to_dict(self) -> dict:
        return {"nodes": [{"id": n, "kind": self.kinds.get(n)} for n in self.nodes],
                "edges": [{"source": e.source, "target": e.target, **e.relation.to_dict()} for e in self.edges]}


# --------------------------------------------------------------------------------------
class BoundaryIndex:
    """Boundary loops of every surface, sampled once, with KD-trees for proximity queries."""

    def __init__(self, surfaces, step: float = BOUNDARY_STEP):
        self.step = step
        self.loops = {}
        self.trees = {}
        self.bbox = {}
        self.sign = {}
        for s in surfaces:
            loops = s.boundary_loops(step)
            self.loops[s.id] = loops
            allp = np.vstack([lp[0] for lp in loops])
            self.trees[s.id] = cKDTree(allp)
            self.bbox[s.id] = (allp.min(axis=0), allp.max(axis=0))
            self.sign[s.id] = s.orientation()
        self._seg = {sid: self._segments(sid) for sid in self.loops}

    def _segments(self, sid):
        a, b = [], []
        for p, _ in self.loops[sid]:
            a.append(p[:-1])
            b.append(p[1:])
        a, b = np.vstack(a), np.vstack(b)
        # split long segments so the candidate radius in ``distance`` stays small
        pieces = np.maximum(1, np.ceil(np.linalg.norm(b - a, axis=1) / self.step)).astype(int)
        if pieces.max() > 1:
            row = np.repeat(np.arange(len(a)), pieces)
            k = np.arange(len(row)) - np.repeat(np.cumsum(pieces) - pieces, pieces)
            t0, t1 = (k / pieces[row])[:, None], ((k + 1) / pieces[row])[:, None]
            d = b[row] - a[row]
            a, b = a[row] + t0 * d, a[row] + t1 * d
        return a, b, cKDTree(0.5 * (a + b)), float(np.max(np.linalg.norm(b - a, axis=1)))

    def distance(self, sid: str, pts: np.ndarray) -> np.ndarray:
        """Distance from ``pts`` to the boundary of surface ``sid``."""
        a, b, tree, L = self._seg[sid]
        pts = np.atleast_2d(pts)
        d0, _ = tree.query(pts)
        cand = tree.query_ball_point(pts, d0 + L)
        counts = np.fromiter((len(c) for c in cand), dtype=int, count=len(cand))
        seg = np.fromiter((i for c in cand for i in c), dtype=int, count=int(counts.sum()))
        row = np.repeat(np.arange(len(pts)), counts)
        d = point_segment_distance(pts[row], a[seg], b[seg])
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return np.minimum.reduceat(d, starts)

    def within(self, sid: str, pts: np.ndarray, eps: float) -> np.ndarray:
        """Mask of ``pts`` lying within ``eps`` of the boundary of ``sid``."""
        a, b, tree, L = self._seg[sid]
        pts = np.atleast_2d(pts)
        # a segment is never closer than its midpoint distance minus half its length
        d0, _ = tree.query(pts, distance_upper_bound=eps + 0.5 * L + 1e-12)
        out = np.zeros(len(pts), dtype=bool)
        near = np.isfinite(d0)
        if near.any():
            out[near] = self.distance(sid, pts[near]) <= eps
        return out

    def bbox_close(self, a: str, b: str, eps: float) -> bool:
        lo1, hi1 = self.bbox[a]
        lo2, hi2 = self.bbox[b]
        return bool(np.all(lo1 <= hi2 + eps) and np.all(lo2 <= hi1 + eps))

    def inward(self, sid: str, point: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(inward unit direction, outward normal) of surface ``sid`` at boundary point ``point``."""
        best = None
        for p, n in self.loops[sid]:
            q = p[:-1]
            d = np.linalg.norm(q - point, axis=1)
            k = int(np.argmin(d))
            if best is None or d[k] < best[0]:
                best = (d[k], q, n[:-1], k)
        _, q, n, k = best
        m = len(q)
        t = q[(k + 1) % m] - q[(k - 1) % m]
        w = np.cross(n[k], t) * self.sign[sid]
        return unit(w), n[k]

    def shared(self, a: str, b: str, eps: float = DEFAULT_EPS, min_length: float | None = None) -> list[Polyline]:
        if not self.bbox_close(a, b, eps):
            return []
        min_length = 4 * self.step if min_length is None else min_length
        out = []
        for pts, _ in self.loops[a]:
            q = pts[:-1]
            hit = self.within(b, q, eps)
            if not hit.any():
                continue
            if hit.all():
                out.append(Polyline(np.vstack([q, q[:1]])))
                continue
            m = len(q)
            start = int(np.argmin(hit))  # an unmatched index, so runs never wrap past it
            order = [(start + i) % m for i in range(m)]
            runs, cur = [], []
            for idx in order:
                if hit[idx]:
                    cur.append(idx)
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            for run in runs:
                seg = [q[i] for i in run]
                before = q[(run[0] - 1) % m]
                after = q[(run[-1] + 1) % m]
                seg.insert(0, self._transition(b, before, q[run[0]], eps))
                seg.append(self._transition(b, after, q[run[-1]], eps))
                seg = np.asarray(seg)
                keep = np.concatenate([[True], np.linalg.norm(np.diff(seg, axis=0), axis=1) > 1e-9])
                seg = seg[keep]
                if len(seg) >= 2 and arc_lengths(seg)[-1] >= min_length:
                    out.append(Polyline(seg))
        return out

    def _transition(self, b, outside, inside, eps):
        lo, hi = outside, inside
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if self.distance(b, mid)[0] <= eps:
                hi = mid
            else:
                lo = mid
        return hi


def shared_boundary(a, b, eps: float = DEFAULT_EPS, step: float = BOUNDARY_STEP) -> list[Polyline]:
    """Maximal pieces of ``a``'s boundary lying within ``eps`` of ``b``'s boundary."""
    if a.id == b.id:
        raise ValueError("shared_boundary needs two different surfaces")
    return BoundaryIndex([a, b], step).shared(a.id, b.id, eps)


def surface_adjacency(die, eps: float = DEFAULT_EPS, index: BoundaryIndex | None = None) -> dict:
    """Map ``(id_a, id_b)`` (sorted) to the shared pieces for every touching surface pair."""
    index = index or BoundaryIndex(die.surfaces)
    ids = die.ids
    out = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            pieces = index.shared(a, b, eps)
            if pieces:
                out[tuple(sorted((a, b)))] = pieces
    return out


# --------------------------------------------------------------------------------------
def _sample_points(pieces: list[Polyline], count: int) -> list[tuple[int, np.ndarray]]:
    lengths = np.array([p.length for p in pieces])
    total = lengths.sum()
    out = []
    for k, p in enumerate(pieces):
        n = max(1, int(round(count * lengths[k] / total)))
        s = (np.arange(n) + 0.5) / n * lengths[k]
        for q in interpolate_at(p.points, s):
            out.append((k, q))
    return out


def dihedral(index: BoundaryIndex, sa: str, sb: str, pieces: list[Polyline],
             samples: int = DIHEDRAL_SAMPLES) -> dict:
    """Convexity and opening angle of two surfaces along their shared pieces.

    ``convexity`` > 0 means concave (B rises into A's air side).  ``angle`` is the angle
    between the two inward directions; 180 means tangent continuation.
    """
    conv, ang = [], []
    for _, m in _sample_points(pieces, samples):
        wa, na = index.inward(sa, m)
        wb, nb = index.inward(sb, m)
        pb = m + DIHEDRAL_OFFSET * wb
        conv.append(float((pb - m) @ na) / DIHEDRAL_OFFSET)
        ang.append(float(np.degrees(np.arccos(np.clip(wa @ wb, -1.0, 1.0)))))
    return {"convexity": float(np.mean(conv)), "angle": float(np.mean(ang)),
            "min_gap": float(np.min(np.abs(np.array(ang) - 180.0))), "samples": len(conv)}


@dataclass(frozen=True, eq=False)
class FeatureBoundary:
    """A chained shared boundary between two features, with the surface pairs composing it."""

    polyline: Polyline
    pairs: tuple            # ((surface_a, surface_b, [pieces]), ...)

    @property
    def closed(self) -> bool:
        return self.polyline.closed


def feature_boundaries(index: BoundaryIndex, fa, fb, eps: float = DEFAULT_EPS) -> list[FeatureBoundary]:
    raw = []
    for sa in fa.surface_ids:
        for sb in fb.surface_ids:
            for piece in index.shared(sa, sb, eps):
                raw.append((sa, sb, piece))
    if not raw:
        return []
    chains = chain_pieces([r[2].points for r in raw], tol=2 * index.step,
                          extras=[np.full((len(r[2]), 1), k) for k, r in enumerate(raw)])
    out = []
    for pts, ex, closed in chains:
        members = sorted({int(x) for x in ex.ravel()})
        pairs = {}
        for k in members:
            sa, sb, piece = raw[k]
            pairs.setdefault((sa, sb), []).append(piece)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
        pts = pts[keep]
        if closed and np.linalg.norm(pts[0] - pts[-1]) > 1e-9:
            pts = np.vstack([pts, pts[:1]])
        out.append(FeatureBoundary(Polyline(pts), tuple((a, b, p) for (a, b), p in pairs.items())))
    return out


def _lower_first(fa, fb):
    ka = (fa.z_extent[0], fa.id)
    kb = (fb.z_extent[0], fb.id)
    return (fa, fb) if ka <= kb else (fb, fa)


def classify_relation(index: BoundaryIndex, fa, fb, boundary: FeatureBoundary | None,
                      blend_concave: dict | None = None) -> Edge | None:
    """Classify the relation between features ``fa`` and ``fb``.

    With a boundary the result is a junction; without one a proximity relation
    (or ``None`` when the footprints do not overlap).
    """
    if boundary is None:
        return _proximity(fa, fb)
    openness = "closed" if boundary.closed else "opened"
    blend_concave = blend_concave or {}

    if fa.kind == "B" or fb.kind == "B":
        if fa.kind == "B" and fb.kind == "B":
            src, dst = sorted((fa, fb), key=lambda f: f.id)
            return Edge(src.id, dst.id, Relation("junction", "leads_into", "flank", openness,
                                                 boundary=boundary.polyline))
        blend, other = (fa, fb) if fa.kind == "B" else (fb, fa)
        concave = blend_concave.get(blend.id, True)
        return Edge(blend.id, other.id, Relation("junction", "leans_on", "cavity" if concave else "island",
                                                 openness, boundary=boundary.polyline))

    pieces_by_pair = boundary.pairs
    conv, ang, gaps = [], [], []
    for sa, sb, pieces in pieces_by_pair:
        if sa in fa.surface_ids:
            d = dihedral(index, sa, sb, pieces)
        else:
            d = dihedral(index, sb, sa, pieces)
        w = sum(p.length for p in pieces)
        conv.append((d["convexity"], w))
        ang.append((d["angle"], w))
        gaps.append(d["min_gap"])
    total = sum(w for _, w in conv)
    convexity = sum(c * w for c, w in conv) / total
    angle = sum(a * w for a, w in ang) / total
    if max(gaps) < AMBIGUOUS_DEG:
        raise AmbiguousDihedralError(
            f"ambiguous dihedral between {fa.id} and {fb.id}: surfaces continue tangentially "
            f"(angle {angle:.3f} deg)",
            {"features": (fa.id, fb.id), "angle_deg": angle, "convexity": convexity,
             "boundary_length": boundary.polyline.length})
    concave = convexity > 0.0

    if fa.kind in FLANKS and fb.kind in FLANKS:
        lo, hi = _lower_first(fa, fb)
        return Edge(lo.id, hi.id, Relation("junction", "leads_into", "flank", openness,
                                           boundary=boundary.polyline))
    if (fa.kind in FLANKS) != (fb.kind in FLANKS):
        flank, floor = (fa, fb) if fa.kind in FLANKS else (fb, fa)
        return Edge(flank.id, floor.id, Relation("junction", "leans_on", "cavity" if concave else "island",
                                                 openness, boundary=boundary.polyline))
    # floor-like against floor-like: the steeper one leans on the flatter one
    src, dst = sorted((fa, fb), key=lambda f: (-f.mean_slope, f.id))
    return Edge(src.id, dst.id, Relation("junction", "leans_on", "cavity" if concave else "island",
                                         openness, boundary=boundary.polyline))


OVERLAP_MIN_AREA = 1.0


def _proximity(fa, fb) -> Edge | None:
    pa, pb = fa.footprint_polygon, fb.footprint_polygon
    if pa is None or pb is None or pa.is_empty or pb.is_empty:
        return None
    inter = pa.intersection(pb).area
    if inter < OVERLAP_MIN_AREA:
        return None
    tol = 1e-6
    if fa.z_extent[0] >= fb.z_extent[1] - tol:
        return Edge(fa.id, fb.id, Relation("top", "top"))
    if fb.z_extent[0] >= fa.z_extent[1] - tol:
        return Edge(fb.id, fa.id, Relation("top", "top"))
    small, big = (fa, fb) if pa.area <= pb.area else (fb, fa)
    extent = "total" if inter >= 0.99 * small.footprint_polygon.area else "partial"
    return Edge(small.id, big.id, Relation("property", "belongs_to", property_extent=extent))


# --------------------------------------------------------------------------------------
def _segment_triangle_hits(a, b, tri, tol=1e-9):
    """Möller-Trumbore: parameters t in (0,1) where segment a-b crosses triangles ``tri`` (m,3,3)."""
    d = b - a
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > tol
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = a - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-6) & (t < 1 - 1e-6)
    return t[hit]


def interior_crossings(index: BoundaryIndex, sa, sb, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Points where the boundary of ``sa`` pierces the interior of ``sb`` away from ``sb``'s boundary."""
    if not index.bbox_close(sa.id, sb.id, eps):
        return np.empty((0, 3))
    mesh = sb.tessellate(max_edge=5.0)
    tri = mesh.vertices[mesh.triangles]
    lo, hi = index.bbox[sb.id]
    pts = []
    for p, _ in index.loops[sa.id]:
        for a, b in zip(p[:-1], p[1:]):
            if np.any(np.maximum(a, b) < lo - eps) or np.any(np.minimum(a, b) > hi + eps):
                continue
            for t in _segment_triangle_hits(a, b, tri):
                x = a + t * (b - a)
                if index.distance(sb.id, x)[0] > 10 * eps and index.distance(sa.id, x)[0] <= 1e-6:
                    pts.append(x)
    return np.asarray(pts).reshape(-1, 3)


def build_topology_graph(die, features, eps: float = DEFAULT_EPS, index: BoundaryIndex | None = None,
                         detect_intersections: bool = True) -> TopologyGraph:
    """Nodes are features; edges are junctions, intersections and proximity relations."""
    feats = sorted(features, key=lambda f: f.id)
    index = index or BoundaryIndex(die.surfaces)
    blend_concave = {}
    for f in feats:
        if f.kind == "B":
            blend_concave[f.id] = bool(die.surface(f.surface_ids[0]).concave)
    by_surface = {s: f for f in feats for s in f.surface_ids}
    edges = []
    for i, fa in enumerate(feats):
        for fb in feats[i + 1:]:
            bounds = feature_boundaries(index, fa, fb, eps)
            if bounds:
                for fbd in bounds:
                    try:
                        edges.append(classify_relation(index, fa, fb, fbd, blend_concave))
                    except AmbiguousDihedralError as exc:
                        exc.diagnostics.setdefault("pair", (fa.id, fb.id))
                        raise
                continue
            crossing = None
            if detect_intersections:
                for sa in fa.surface_ids:
                    for sb in fb.surface_ids:
                        for x, y in ((sa, sb), (sb, sa)):
                            hits = interior_crossings(index, die.surface(x), die.surface(y), eps)
                            if len(hits):
                                crossing = hits
                                break
                        if crossing is not None:
                            break
                    if crossing is not None:
                        break
            if crossing is not None:
                pts = crossing if len(crossing) >= 2 else np.vstack([crossing, crossing + 1e-6])
                edges.append(Edge(fa.id, fb.id, Relation("intersection", "is_in_intersection_with",
                                                         boundary=Polyline(pts[:2]))))
                continue
            e = _proximity(fa, fb)
            if e is not None:
                edges.append(e)
    del by_surface
    edges.sort(key=lambda e: (e.source, e.target, e.relation.label(),
                              0.0 if e.relation.boundary is None else e.relation.boundary.length))
    return TopologyGraph(tuple(f.id for f in feats), tuple(edges), {f.id: f.kind for f in feats})


# --------------------------------------------------------------------------------------
def export_graph_dot(graph: TopologyGraph) -> str:
    lines = ["digraph topology {"]
    for n in graph.nodes:
        kind = graph.kinds.get(n, "")
        lines.append(f'  "{n}" [label="{n} ({kind})"];')
    for e in graph.edges:
        lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.relation.label()}"];')
    return "\n".join(lines) + "\n}\n"


_EDGE_RE = re.compile(r'^\s*"([^"]+)"\s*->\s*"([^"]+)"\s*\[label="([^"]*)"\];\s*$')
_NODE_RE = re.compile(r'^\s*"([^"]+)"\s*\[label="([^"]*)"\];\s*$')


def parse_graph_dot(text: str) -> tuple[list[str], list[tuple[str, str, str]]]:
    """Read back nodes and ``(source, target, label)`` edges from :func:`export_graph_dot` output."""
    nodes, edges = [], []
    for line in text.splitlines():
        m = _EDGE_RE.match(line)
        if m:
            edges.append(m.groups())
            continue
        m = _NODE_RE.match(line)
        if m:
            nodes.append(m.group(1))
    return nodes, edges
