"""Parametric surface primitives of a die model.

Every surface maps a rectangular parameter domain ``(u, v)`` to 3D points and
outward unit normals (pointing away from material, into the air of the die
cavity).  Orientation rules per kind:

* ``plane``     -- the declared normal; the boundary loop is re-oriented as needed.
* ``extruded``  -- ``n = tangent(generatrix) x direction``.
* ``ruled``     -- ``n = dP/du x dP/dv`` with ``u`` along the rails and ``v`` from rail 0 to rail 1.
* ``revolved``  -- ``n = dP/du x dP/dtheta`` with ``u`` along the profile.
* ``blend``     -- spherical interpolation of the two adjacent surfaces' normals
  along the fillet cross-section (the centre polyline is the spine).

Curves are polylines parametrised by vertex index, so ``u`` in ``[0, n-1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from .errors import DieModelError
from .geometry import (
    POINT_TOL, Polyline, plane_frame, polygon_signed_area, unit, unit_rows,
)

SURFACE_KINDS = ("plane", "extruded", "ruled", "revolved", "blend")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with per-vertex normals."""

    vertices: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray


def _is_knot(u):
    return np.abs(u - np.round(u)) < 1e-12


def curve_at(pts: np.ndarray, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    n = len(pts) - 1
    u = np.clip(u, 0.0, n)
    i = np.minimum(np.floor(u).astype(int), n - 1)
    f = (u - i)[..., None]
    return pts[i] + (pts[i + 1] - pts[i]) * f


def curve_deriv(pts: np.ndarray, u) -> np.ndarray:
    """Derivative along the polyline; at interior vertices the mean of the unit
    tangents of both sides, scaled by the mean segment length."""
    u = np.asarray(u, dtype=float)
    seg = np.diff(pts, axis=0)
    n = len(seg)
    u = np.clip(u, 0.0, n)
    i = np.floor(u + 1e-12).astype(int)
    right = seg[np.minimum(i, n - 1)]
    left = seg[np.clip(i - 1, 0, n - 1)]
    interior = _is_knot(u) & (i > 0) & (i < n)
    lr = np.linalg.norm(right, axis=-1, keepdims=True)
    ll = np.linalg.norm(left, axis=-1, keepdims=True)
    mean = (right / lr + left / ll) * 0.5 * (lr + ll) * 0.5
    out = np.where(interior[..., None], mean, right)
    # u == n exactly lands on the last segment
    at_end = i >= n
    out = np.where(at_end[..., None], seg[n - 1], out)
    return out


def _refine(knots: np.ndarray, lengths: np.ndarray, max_edge: float) -> np.ndarray:
    out = [knots[:1]]
    for a, b, L in zip(knots[:-1], knots[1:], lengths):
        k = max(1, int(np.ceil(L / max_edge - 1e-9)))
        out.append(a + (b - a) * np.arange(1, k + 1) / k)
    return np.concatenate(out)


def _grid_triangles(nu: int, nv: int) -> np.ndarray:
    idx = np.arange(nu * nv).reshape(nu, nv)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    return np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


@dataclass(frozen=True, eq=False)
class Surface:
    id: str

    kind = "abstract"
    straight_v = False  # True when iso-u curves are straight lines (no v refinement needed)

    # ---- parametric interface -------------------------------------------------
    def domain(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def evaluate(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def knots_u(self) -> np.ndarray:
        u0, u1, _, _ = self.domain()
        return np.array([u0, u1])

    def knots_v(self) -> np.ndarray:
        _, _, v0, v1 = self.domain()
        return np.array([v0, v1])

    def contains(self, u, v) -> np.ndarray:
        return np.ones(np.broadcast(np.asarray(u), np.asarray(v)).shape, dtype=bool)

    # ---- rulings ------------------------------------------------------------------
    def directrix_range(self) -> tuple[float, float] | None:
        """Parameter range of the guiding curve, or ``None`` when the surface has no rulings."""
        return None

    def generatrix(self, t: float, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Points and normals along the generatrix (ruling or arc) at directrix parameter ``t``."""
        raise NotImplementedError

    def directrix_points(self, t) -> tuple[np.ndarray, np.ndarray]:
        """End points of the generatrix at each ``t`` (used to measure pass spacing)."""
        raise NotImplementedError

    def directrix_knots(self) -> np.ndarray:
        r = self.directrix_range()
        return np.array(r)

    # ---- derived geometry ---------------------------------------------------------
    def orientation(self) -> float:
        """+1 when the normal equals ``dP/du x dP/dv`` (interior left of the param-order loop), else -1."""
        u0, u1, v0, v1 = self.domain()
        um, vm = 0.5 * (u0 + u1) + 0.137 * (u1 - u0) * 0.5, 0.5 * (v0 + v1) + 0.071 * (v1 - v0) * 0.5
        hu, hv = 1e-5 * (u1 - u0), 1e-5 * (v1 - v0)
        pu = self.evaluate(um + hu, vm)[0] - self.evaluate(um - hu, vm)[0]
        pv = self.evaluate(um, vm + hv)[0] - self.evaluate(um, vm - hv)[0]
        n = self.evaluate(um, vm)[1]
        return 1.0 if float(np.dot(np.cross(pu, pv), n)) >= 0.0 else -1.0

    def _param_lengths(self, knots, other, along_u):
        """Longest polygonal length of each knot interval over the iso-curves at ``other``."""
        knots = np.asarray(knots, dtype=float)
        f = np.linspace(0.0, 1.0, 5)
        t = knots[:-1, None] + (knots[1:] - knots[:-1])[:, None] * f          # (K, 5)
        w = np.asarray(other, dtype=float)
        T = np.broadcast_to(t[None], (len(w),) + t.shape)
        W = np.broadcast_to(w[:, None, None], T.shape)
        T, W = T.ravel(), W.ravel()
        p = (self.evaluate(T, W)[0] if along_u else self.evaluate(W, T)[0]).reshape(len(w), len(t), 5, 3)
        return np.linalg.norm(np.diff(p, axis=2), axis=3).sum(axis=2).max(axis=0)

    def _cached(self, key, build):
        cache = self.__dict__.setdefault("_geom_cache", {})
        if key not in cache:
            cache[key] = build()
        return cache[key]

    def param_grid(self, max_edge: float) -> tuple[np.ndarray, np.ndarray]:
        return self._cached(("grid", float(max_edge)), lambda: self._param_grid(max_edge))

    def _param_grid(self, max_edge):
        ku, kv = self.knots_u(), self.knots_v()
        _, _, v0, v1 = self.domain()
        u0, u1, _, _ = self.domain()
        U = _refine(ku, self._param_lengths(ku, [v0, 0.5 * (v0 + v1), v1], True), max_edge)
        if self.straight_v:
            V = kv
        else:
            V = _refine(kv, self._param_lengths(kv, [u0, 0.5 * (u0 + u1), u1], False), max_edge)
        return U, V

    def tessellate(self, max_edge: float = 1.0) -> Mesh:
        return self._cached(("mesh", float(max_edge)), lambda: self._tessellate(max_edge))

    def _tessellate(self, max_edge):
        U, V = self.param_grid(max_edge)
        UU, VV = np.meshgrid(U, V, indexing="ij")
        P, N = self.evaluate(UU.ravel(), VV.ravel())
        return Mesh(P, N, _grid_triangles(len(U), len(V)))

    def boundary_loops(self, step: float = 0.5) -> list[tuple[np.ndarray, np.ndarray]]:
        """Closed boundary loops as ``(points, normals)``; walked with the interior on the
        left of ``orientation() * normal``."""
        u0, u1, v0, v1 = self.domain()
        U, V = self.param_grid(step)
        edges = [
            (U, np.full(len(U), v0)),
            (np.full(len(V), u1), V),
            (U[::-1], np.full(len(U), v1)),
            (np.full(len(V), u0), V[::-1]),
        ]
        pts, nrm = [], []
        for uu, vv in edges:
            p, n = self.evaluate(uu, vv)
            pts.append(p[:-1])
            nrm.append(n[:-1])
        pts, nrm = np.vstack(pts), np.vstack(nrm)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
        pts, nrm = pts[keep], nrm[keep]
        if np.linalg.norm(pts[-1] - pts[0]) <= 1e-9:
            pts, nrm = pts[:-1], nrm[:-1]
        return [(np.vstack([pts, pts[:1]]), np.vstack([nrm, nrm[:1]]))]

    def to_dict(self) -> dict:
        raise NotImplementedError


def _vec(x, name, sid):
    try:
        a = np.asarray(x, dtype=float).reshape(3)
    except Exception as exc:  # noqa: BLE001
        raise DieModelError(f"surface {sid}: field '{name}' must be a 3-vector") from exc
    return a


def _direction(x, name, sid, tol=1e-6):
    a = _vec(x, name, sid)
    n = np.linalg.norm(a)
    if abs(n - 1.0) > tol:
        raise DieModelError(f"surface {sid}: '{name}' must be unit length (norm {n:.9g})")
    return a / n


def _polyline(x, name, sid, closed=False):
    try:
        return Polyline.loop(x) if closed else Polyline(x)
    except (ValueError, TypeError) as exc:
        raise DieModelError(f"surface {sid}: invalid polyline '{name}': {exc}") from exc


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Plane(Surface):
    origin: np.ndarray = None
    normal: np.ndarray = None
    boundary: Polyline = None
    holes: tuple = ()

    kind = "plane"

    def __post_init__(self):
        n = _direction(self.normal, "normal", self.id)
        o = _vec(self.origin, "origin", self.id)
        e1, e2 = plane_frame(n)
        loops = []
        for k, loop in enumerate((self.boundary,) + tuple(self.holes)):
            if not isinstance(loop, Polyline):
                loop = _polyline(loop, "boundary", self.id, closed=True)
            off = np.abs((loop.points - o) @ n)
            if off.max() > 1e-6:
                raise DieModelError(f"surface {self.id}: boundary point off plane by {off.max():.3g} mm")
            uv = np.column_stack([(loop.points - o) @ e1, (loop.points - o) @ e2])
            area = polygon_signed_area(uv[:-1])
            if abs(area) < 1e-12:
                raise DieModelError(f"surface {self.id}: degenerate (zero-area) boundary")
            if (area < 0) == (k == 0):
                loop = Polyline(loop.points[::-1])
            loops.append(loop)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "boundary", loops[0])
        object.__setattr__(self, "holes", tuple(loops[1:]))
        object.__setattr__(self, "_frame", (e1, e2))
        poly = Polygon(self._uv(loops[0].points), [self._uv(h.points) for h in loops[1:]])
        shapely.prepare(poly)
        object.__setattr__(self, "_poly", poly)

    def _uv(self, pts):
        e1, e2 = self._frame
        d = pts - self.origin
        return np.column_stack([d @ e1, d @ e2])

    def domain(self):
        x0, y0, x1, y1 = self._poly.bounds
        return (x0, x1, y0, y1)

    def evaluate(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        e1, e2 = self._frame
        P = self.origin + u[..., None] * e1 + v[..., None] * e2
        N = np.broadcast_to(self.normal, P.shape).copy()
        return P, N

    def contains(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        inside = shapely.contains_xy(self._poly, u, v)
        on_edge = shapely.dwithin(self._poly.boundary, shapely.points(u, v), 1e-9)
        return inside | on_edge

    def orientation(self):
        return 1.0

    def polygon_uv(self) -> Polygon:
        return self._poly

    def tessellate(self, max_edge: float = 1.0) -> Mesh:
        tris = shapely.constrained_delaunay_triangles(self._poly)
        coords, index, triangles = [], {}, []
        for tri in tris.geoms:
            ids = []
            for xy in list(tri.exterior.coords)[:3]:
                key = (round(xy[0], 9), round(xy[1], 9))
                if key not in index:
                    index[key] = len(coords)
                    coords.append(xy)
                ids.append(index[key])
            triangles.append(ids)
        uv = np.asarray(coords)
        P, N = self.evaluate(uv[:, 0], uv[:, 1])
        return Mesh(P, N, np.asarray(triangles, dtype=int).reshape(-1, 3))

    def boundary_loops(self, step: float = 0.5):
        from .geometry import resample
        out = []
        for loop in (self.boundary,) + self.holes:
            p = resample(loop.points, step)
            out.append((p, np.broadcast_to(self.normal, p.shape).copy()))
        return out

    def section_uv_line(self, origin, normal):
        """Intersection with the plane ``(x - origin) . normal = 0`` as 2D pieces (uv)."""
        e1, e2 = self._frame
        a, b = float(e1 @ normal), float(e2 @ normal)
        if np.hypot(a, b) < 1e-12:
            return []
        c = float((origin - self.origin) @ normal)
        g = np.array([a, b])
        p0 = g * c / (g @ g)
        d = np.array([-b, a]) / np.hypot(a, b)
        x0, y0, x1, y1 = self._poly.bounds
        span = 2.0 * np.hypot(x1 - x0, y1 - y0) + 1.0
        center = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        p0 = p0 + d * float((center - p0) @ d)
        cut = LineString([p0 - span * d, p0 + span * d]).intersection(self._poly)
        return [np.asarray(g_.coords) for g_ in getattr(cut, "geoms", [cut]) if g_.geom_type == "LineString"
                and not g_.is_empty]

    def to_dict(self):
        d = {"id": self.id, "kind": "plane", "origin": self.origin.tolist(), "normal": self.normal.tolist(),
             "boundary": self.boundary.points[:-1].tolist()}
        if self.holes:
            d["holes"] = [h.points[:-1].tolist() for h in self.holes]
        return d


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Extruded(Surface):
    generatrix_curve: Polyline = None
    direction: np.ndarray = None
    extent: float = 0.0

    kind = "extruded"
    straight_v = True

    def __post_init__(self):
        if not isinstance(self.generatrix_curve, Polyline):
            object.__setattr__(self, "generatrix_curve", _polyline(self.generatrix_curve, "generatrix", self.id))
        object.__setattr__(self, "direction", _direction(self.direction, "direction", self.id))
        if not float(self.extent) > 0.0:
            raise DieModelError(f"surface {self.id}: extent must be > 0")
        object.__setattr__(self, "extent", float(self.extent))
        g = self.generatrix_curve.points
        seg = np.diff(g, axis=0)
        if np.any(np.linalg.norm(np.cross(seg, self.direction), axis=1) < 1e-9):
            raise DieModelError(f"surface {self.id}: degenerate (generatrix segment parallel to direction)")

    def domain(self):
        return (0.0, float(len(self.generatrix_curve) - 1), 0.0, self.extent)

    def knots_u(self):
        return np.arange(len(self.generatrix_curve), dtype=float)

    def evaluate(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        g = self.generatrix_curve.points
        P = curve_at(g, u) + v[..., None] * self.direction
        N = unit_rows(np.cross(curve_deriv(g, u), self.direction))
        return P, N

    def directrix_range(self):
        return (0.0, float(len(self.generatrix_curve) - 1))

    def directrix_knots(self):
        return self.knots_u()

    def generatrix(self, t, count):
        return self.evaluate(np.full(count, t), np.linspace(0.0, self.extent, count))

    def directrix_points(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = self.evaluate(t, np.zeros_like(t))[0]
        b = self.evaluate(t, np.full_like(t, self.extent))[0]
        return a, b

    def to_dict(self):
        return {"id": self.id, "kind": "extruded", "generatrix": self.generatrix_curve.to_list(),
                "direction": self.direction.tolist(), "extent": self.extent}


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Ruled(Surface):
    rail0: Polyline = None
    rail1: Polyline = None

    kind = "ruled"

    def __post_init__(self):
        for name in ("rail0", "rail1"):
            r = getattr(self, name)
            if not isinstance(r, Polyline):
                object.__setattr__(self, name, _polyline(r, name, self.id))
        if len(self.rail0) != len(self.rail1):
            raise DieModelError(f"surface {self.id}: ruled rails must have equal point counts "
                                f"({len(self.rail0)} != {len(self.rail1)})")
        if np.any(np.linalg.norm(self.rail1.points - self.rail0.points, axis=1) <= POINT_TOL):
            raise DieModelError(f"surface {self.id}: degenerate ruling of zero length")

    def domain(self):
        return (0.0, float(len(self.rail0) - 1), 0.0, 1.0)

    def knots_u(self):
        return np.arange(len(self.rail0), dtype=float)

    def evaluate(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        c0, c1 = self.rail0.points, self.rail1.points
        a, b = curve_at(c0, u), curve_at(c1, u)
        w = v[..., None]
        P = (1.0 - w) * a + w * b
        Pu = (1.0 - w) * curve_deriv(c0, u) + w * curve_deriv(c1, u)
        N = unit_rows(np.cross(Pu, b - a))
        return P, N

    def directrix_range(self):
        return (0.0, float(len(self.rail0) - 1))

    def directrix_knots(self):
        return self.knots_u()

    def generatrix(self, t, count):
        return self.evaluate(np.full(count, t), np.linspace(0.0, 1.0, count))

    def directrix_points(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return curve_at(self.rail0.points, t), curve_at(self.rail1.points, t)

    def to_dict(self):
        return {"id": self.id, "kind": "ruled", "rail0": self.rail0.to_list(), "rail1": self.rail1.to_list()}


def _rotate(vecs, axis, theta):
    """Rodrigues rotation of ``vecs`` about unit ``axis`` by angles ``theta`` (radians)."""
    c, s = np.cos(theta)[..., None], np.sin(theta)[..., None]
    k = axis
    return vecs * c + np.cross(k, vecs) * s + np.outer(np.ravel(vecs @ k), k).reshape(vecs.shape) * (1 - c)


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Revolved(Surface):
    axis_point: np.ndarray = None
    axis_direction: np.ndarray = None
    profile: Polyline = None
    angle_range: tuple = (0.0, 360.0)

    kind = "revolved"

    def __post_init__(self):
        object.__setattr__(self, "axis_point", _vec(self.axis_point, "axis_point", self.id))
        object.__setattr__(self, "axis_direction", _direction(self.axis_direction, "axis_direction", self.id))
        if not isinstance(self.profile, Polyline):
            object.__setattr__(self, "profile", _polyline(self.profile, "profile", self.id))
        a0, a1 = (float(x) for x in self.angle_range)
        if not (0.0 < a1 - a0 <= 360.0):
            raise DieModelError(f"surface {self.id}: revolved angle range must span (0, 360] degrees")
        object.__setattr__(self, "angle_range", (a0, a1))
        rad = np.linalg.norm(np.cross(self.profile.points - self.axis_point, self.axis_direction), axis=1)
        if rad.max() < 1e-9:
            raise DieModelError(f"surface {self.id}: degenerate (profile lies on the axis)")

    def domain(self):
        return (0.0, float(len(self.profile) - 1), self.angle_range[0], self.angle_range[1])

    def knots_u(self):
        return np.arange(len(self.profile), dtype=float)

    def knots_v(self):
        # at most 45 degrees apart so even the coarsest tessellation keeps its area
        a0, a1 = self.angle_range
        return np.linspace(a0, a1, int(np.ceil((a1 - a0) / 45.0)) + 1)

    def _eval(self, u, v):
        pr = self.profile.points
        th = np.radians(v)
        rel = curve_at(pr, u) - self.axis_point
        P = self.axis_point + _rotate(rel, self.axis_direction, th)
        Pu = _rotate(curve_deriv(pr, u), self.axis_direction, th)
        Pt = np.cross(self.axis_direction, P - self.axis_point)
        return P, np.cross(Pu, Pt)

    def evaluate(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        shape = u.shape
        u, v = u.ravel(), v.ravel()
        P, N = self._eval(u, v)
        bad = np.linalg.norm(N, axis=1) < 1e-12
        if np.any(bad):
            n = len(self.profile) - 1
            un = u[bad] + np.where(u[bad] < n / 2.0, 1e-6, -1e-6)
            N[bad] = self._eval(un, v[bad])[1]
        N = unit_rows(N)
        return P.reshape(shape + (3,)), N.reshape(shape + (3,))

    def _straight_profile(self):
        pr = self.profile.points
        d = pr[-1] - pr[0]
        off = np.linalg.norm(np.cross(pr - pr[0], unit(d)), axis=1)
        return off.max() < 1e-6

    def directrix_range(self):
        return self.angle_range if self._straight_profile() else None

    def directrix_knots(self):
        a0, a1 = self.angle_range
        return np.linspace(a0, a1, max(2, int(np.ceil((a1 - a0) / 5.0)) + 1))

    def generatrix(self, t, count):
        n = len(self.profile) - 1
        return self.evaluate(np.linspace(0.0, n, count), np.full(count, t))

    def directrix_points(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = len(self.profile) - 1
        return self.evaluate(np.zeros_like(t), t)[0], self.evaluate(np.full_like(t, n), t)[0]

    def to_dict(self):
        return {"id": self.id, "kind": "revolved", "axis_point": self.axis_point.tolist(),
                "axis_direction": self.axis_direction.tolist(), "profile": self.profile.to_list(),
                "angle_range": list(self.angle_range)}


def slerp_rows(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    dot = np.clip(np.einsum("...i,...i->...", a, b), -1.0, 1.0)
    om = np.arccos(dot)
    s = np.sin(om)
    small = s < 1e-9
    s = np.where(small, 1.0, s)
    wa = np.where(small, 1.0 - t, np.sin((1.0 - t) * om) / s)
    wb = np.where(small, t, np.sin(t * om) / s)
    return unit_rows(wa[..., None] * a + wb[..., None] * b)


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Blend(Surface):
    """Rolling-ball fillet: ``spine`` is the locus of ball centres."""

    spine: Polyline = None
    radius: float = 0.0
    adjacent: tuple = ()
    frames_a: np.ndarray | None = field(default=None, repr=False)
    frames_b: np.ndarray | None = field(default=None, repr=False)
    concave: bool | None = None

    kind = "blend"

    def __post_init__(self):
        if not isinstance(self.spine, Polyline):
            object.__setattr__(self, "spine", _polyline(self.spine, "spine", self.id))
        if not float(self.radius) > 0.0:
            raise DieModelError(f"surface {self.id}: blend radius must be > 0")
        object.__setattr__(self, "radius", float(self.radius))
        adj = tuple(str(x) for x in self.adjacent)
        if len(adj) != 2 or adj[0] == adj[1]:
            raise DieModelError(f"surface {self.id}: blend needs two distinct adjacent surface ids")
        object.__setattr__(self, "adjacent", adj)

    @property
    def resolved(self) -> bool:
        return self.frames_a is not None

    def resolve(self, surf_a: Surface, surf_b: Surface) -> "Blend":
        """Attach the adjacent normals at every spine vertex (nearest boundary point of each neighbour)."""
        frames, signs = [], []
        for s in (surf_a, surf_b):
            loops = s.boundary_loops(step=min(0.25, self.radius / 4))
            pts = np.vstack([lp[0] for lp in loops])
            nrm = np.vstack([lp[1] for lp in loops])
            fr = []
            for c in self.spine.points:
                d = np.linalg.norm(pts - c, axis=1)
                k = int(np.argmin(d))
                if abs(d[k] - self.radius) > max(0.05 * self.radius, 0.05):
                    raise DieModelError(
                        f"surface {self.id}: blend spine point {np.round(c, 4).tolist()} is {d[k]:.4g} mm from "
                        f"surface {s.id}, expected the fillet radius {self.radius:g}")
                fr.append(nrm[k])
                signs.append(float((c - pts[k]) @ nrm[k]))
            frames.append(np.asarray(fr))
        signs = np.asarray(signs)
        if not (np.all(signs > 0) or np.all(signs < 0)):
            raise DieModelError(f"surface {self.id}: blend is neither consistently concave nor convex")
        return replace(self, frames_a=frames[0], frames_b=frames[1], concave=bool(signs[0] > 0))

    def _require(self):
        if not self.resolved:
            raise DieModelError(f"surface {self.id}: blend geometry not resolved against its neighbours")

    def domain(self):
        return (0.0, float(len(self.spine) - 1), 0.0, 1.0)

    def knots_u(self):
        return np.arange(len(self.spine), dtype=float)

    def _frames(self, u):
        na = unit_rows(curve_at(self.frames_a, u))
        nb = unit_rows(curve_at(self.frames_b, u))
        return na, nb

    def evaluate(self, u, v):
        self._require()
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        na, nb = self._frames(u)
        w = slerp_rows(na, nb, v)
        sigma = -1.0 if self.concave else 1.0
        P = curve_at(self.spine.points, u) + sigma * self.radius * w
        return P, w

    def directrix_range(self):
        return (0.0, float(len(self.spine) - 1))

    def directrix_knots(self):
        return self.knots_u()

    def generatrix(self, t, count):
        return self.evaluate(np.full(count, t), np.linspace(0.0, 1.0, count))

    def directrix_points(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = [self.evaluate(t, np.full_like(t, w))[0] for w in (0.0, 0.5, 1.0)]
        return out[0], out[2], out[1]

    def to_dict(self):
        return {"id": self.id, "kind": "blend", "spine": self.spine.to_list(), "radius": self.radius,
                "adjacent": list(self.adjacent)}


def surface_from_dict(d: dict) -> Surface:
    if not isinstance(d, dict):
        raise DieModelError("surface entry must be an object")
    sid = d.get("id")
    kind = d.get("kind")
    if not isinstance(sid, str) or not sid:
        raise DieModelError("surface is missing a string 'id'")
    if kind not in SURFACE_KINDS:
        raise DieModelError(f"surface {sid}: unknown kind {kind!r}")

    def need(name):
        if name not in d:
            raise DieModelError(f"surface {sid}: missing field '{name}'")
        return d[name]

    try:
        if kind == "plane":
            holes = tuple(_polyline(h, "holes", sid, closed=True) for h in d.get("holes", []))
            return Plane(sid, origin=need("origin"), normal=need("normal"),
                         boundary=_polyline(need("boundary"), "boundary", sid, closed=True), holes=holes)
        if kind == "extruded":
            return Extruded(sid, generatrix_curve=need("generatrix"), direction=need("direction"),
                            extent=float(need("extent")))
        if kind == "ruled":
            return Ruled(sid, rail0=need("rail0"), rail1=need("rail1"))
        if kind == "revolved":
            return Revolved(sid, axis_point=need("axis_point"), axis_direction=need("axis_direction"),
                            profile=need("profile"), angle_range=tuple(need("angle_range")))
        return Blend(sid, spine=need("spine"), radius=float(need("radius")), adjacent=tuple(need("adjacent")))
    except (TypeError, ValueError) as exc:
        raise DieModelError(f"surface {sid}: {exc}") from exc
