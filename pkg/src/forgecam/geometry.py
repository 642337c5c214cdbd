"""Small vector and polyline toolkit shared by every module.

Points are plain ``numpy`` arrays of shape ``(n, 3)``; directions are unit
vectors.  Lengths are millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZAXIS = np.array([0.0, 0.0, 1.0])
POINT_TOL = 1e-9


def unit(v, tol: float = 1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n <= tol:
        raise ValueError("zero-length direction")
    return v / n


def unit_rows(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    n[n == 0.0] = 1.0
    return v / n


def slope_deg(normals: np.ndarray) -> np.ndarray:
    """Angle between each normal and +Z, in degrees."""
    cz = np.clip(np.asarray(normals)[..., 2], -1.0, 1.0)
    return np.degrees(np.arccos(cz))


def slerp(a: np.ndarray, b: np.ndarray, t) -> np.ndarray:
    """Spherical interpolation between unit vectors ``a`` and ``b`` (broadcasts over ``t``)."""
    t = np.asarray(t, dtype=float)[..., None]
    dot = float(np.clip(np.dot(a, b), -1.0, 1.0))
    omega = np.arccos(dot)
    if omega < 1e-9:
        return np.broadcast_to(a, t.shape[:-1] + (3,)).copy()
    s = np.sin(omega)
    return (np.sin((1.0 - t) * omega) * a + np.sin(t * omega) * b) / s


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered 3D points; ``closed`` iff the first and last points coincide."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if len(pts) < 2:
            raise ValueError("polyline needs at least 2 points")
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(gaps <= POINT_TOL):
            raise ValueError("polyline has coincident consecutive points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def loop(cls, pts) -> "Polyline":
        """Build a closed polyline, appending the first point if needed."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if np.linalg.norm(pts[0] - pts[-1]) > POINT_TOL:
            pts = np.vstack([pts, pts[:1]])
        return cls(pts)

    @property
    def closed(self) -> bool:
        return bool(len(self.points) > 2 and np.linalg.norm(self.points[0] - self.points[-1]) <= POINT_TOL)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, Polyline) and self.points.shape == other.points.shape and np.array_equal(
            self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def to_list(self) -> list:
        return self.points.tolist()


def dedupe(points: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Drop consecutive points closer than ``tol``."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return points
    step = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if step.min() > tol:
        return points
    keep = [0]
    tol2 = tol * tol
    rows = points.tolist()
    last = rows[0]
    for i in range(1, len(rows)):
        p = rows[i]
        if (p[0] - last[0]) ** 2 + (p[1] - last[1]) ** 2 + (p[2] - last[2]) ** 2 > tol2:
            keep.append(i)
            last = p
    return points[keep]


def arc_lengths(points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(d)])


def resample(points: np.ndarray, step: float) -> np.ndarray:
    """Insert points so no segment exceeds ``step``; original vertices are kept."""
    points = np.asarray(points, dtype=float)
    out = [points[:1]]
    for a, b in zip(points[:-1], points[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / step - 1e-9)))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + (b - a) * t)
    return np.vstack(out)


def interpolate_at(points: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Points at arc-length positions ``s`` along a polyline."""
    cum = arc_lengths(points)
    return np.column_stack([np.interp(s, cum, points[:, k]) for k in range(3)])


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points ``p`` (n,3) to segments ``a``-``b`` (n,3), row by row."""
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    den[den == 0.0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / den, 0.0, 1.0)
    return np.linalg.norm(p - (a + ab * t[:, None]), axis=1)


def distance_to_polyline(p: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point of ``p`` to the polyline ``poly`` (brute force, chunked)."""
    p = np.atleast_2d(p)
    a, b = poly[:-1], poly[1:]
    out = np.empty(len(p))
    chunk = max(1, 200000 // max(1, len(a)))
    for i in range(0, len(p), chunk):
        q = p[i:i + chunk, None, :]
        ab = b - a
        den = np.einsum("ij,ij->i", ab, ab)
        den[den == 0.0] = 1.0
        t = np.clip(np.einsum("kij,ij->ki", q - a, ab) / den, 0.0, 1.0)
        d = np.linalg.norm(q - (a + ab * t[..., None]), axis=2)
        out[i:i + chunk] = d.min(axis=1)
    return out


def remove_collinear(points: np.ndarray, extra: np.ndarray | None = None, tol: float = 1e-7):
    """Remove interior points lying within ``tol`` of the chord between their neighbours.

    Works in rounds; each round drops non-adjacent removable points, so every
    removal is checked against the chord it leaves behind.  ``extra`` (per-point
    data such as normals) is filtered alongside.
    """
    points = np.asarray(points, dtype=float)
    idx = np.arange(len(points))
    while len(idx) >= 3:
        a, p, b = points[idx[:-2]], points[idx[1:-1]], points[idx[2:]]
        ab = b - a
        L2 = np.einsum("ij,ij->i", ab, ab)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.einsum("ij,ij->i", p - a, ab) / L2
        dev = np.linalg.norm(p - (a + np.clip(np.nan_to_num(t), 0.0, 1.0)[:, None] * ab), axis=1)
        drop = (L2 > 0.0) & (dev <= tol) & (t > 0.0) & (t < 1.0)
        if not drop.any():
            break
        # never drop two neighbours in the same round
        d = drop.copy()
        for k in np.flatnonzero(drop[1:] & drop[:-1]) + 1:
            if d[k - 1]:
                d[k] = False
        keep = np.concatenate([[True], ~d, [True]])
        idx = idx[keep]
    if extra is not None:
        return points[idx], np.asarray(extra)[idx]
    return points[idx]


def chain_pieces(pieces: list[np.ndarray], tol: float = 1e-6, extras: list[np.ndarray] | None = None):
    """Join open polylines sharing endpoints (within ``tol``) into maximal chains.

    Returns a list of ``(points, extra, closed)``; ``extra`` is ``None`` when not given.
    Output order is deterministic for a given input order.
    """
    items = [(np.asarray(p, dtype=float), None if extras is None else np.asarray(extras[i]))
             for i, p in enumerate(pieces) if len(p) >= 2]
    used = [False] * len(items)
    out = []

    def close(a, b):
        return np.linalg.norm(a - b) <= tol

    for i in range(len(items)):
        if used[i]:
            continue
        used[i] = True
        pts, ex = items[i]
        grown = True
        while grown:
            grown = False
            if len(pts) > 2 and close(pts[0], pts[-1]):
                break
            for j in range(len(items)):
                if used[j]:
                    continue
                q, qe = items[j]
                if close(pts[-1], q[0]):
                    pts = np.vstack([pts, q[1:]])
                    ex = None if ex is None else np.vstack([ex, qe[1:]])
                elif close(pts[-1], q[-1]):
                    pts = np.vstack([pts, q[::-1][1:]])
                    ex = None if ex is None else np.vstack([ex, qe[::-1][1:]])
                elif close(pts[0], q[-1]):
                    pts = np.vstack([q, pts[1:]])
                    ex = None if ex is None else np.vstack([qe, ex[1:]])
                elif close(pts[0], q[0]):
                    pts = np.vstack([q[::-1], pts[1:]])
                    ex = None if ex is None else np.vstack([qe[::-1], ex[1:]])
                else:
                    continue
                used[j] = True
                grown = True
                break
        closed = len(pts) > 2 and close(pts[0], pts[-1])
        if closed:
            pts = pts.copy()
            pts[-1] = pts[0]
        out.append((pts, ex, closed))
    return out


def polygon_signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def plane_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-handed in-plane axes ``(e1, e2)`` with ``e1 x e2 == normal``."""
    n = unit(normal)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(ref - (ref @ n) * n)
    e2 = np.cross(n, e1)
    return e1, e2
