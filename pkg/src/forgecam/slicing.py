"""Plane sections of triangle meshes and tool-tip offsets."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import LinearNDInterpolator

from .geometry import ZAXIS, chain_pieces, unit_rows
from .surfaces import Mesh

PERTURB = 1e-12


def section_mesh(mesh: Mesh, point, normal) -> list[tuple[np.ndarray, np.ndarray, bool]]:
    """Intersect ``mesh`` with the plane through ``point`` with ``normal``.

    Returns ``(points, normals, closed)`` chains.  Vertices lying exactly on the
    plane are nudged to its positive side so every crossing is an edge crossing.
    """
    n = np.asarray(normal, dtype=float)
    d = (mesh.vertices - np.asarray(point, dtype=float)) @ n
    d = np.where(np.abs(d) < PERTURB, PERTURB, d)
    tri = mesh.triangles
    s = d[tri] > 0
    crossing = ~(s.all(axis=1) | (~s).all(axis=1))
    if not crossing.any():
        return []
    tri = tri[crossing]
    s = s[crossing]
    # the two crossed edges of every triangle, as sorted vertex-id keys
    e_all = np.stack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=1)   # (m,3,2)
    cut = np.stack([s[:, 0] != s[:, 1], s[:, 1] != s[:, 2], s[:, 2] != s[:, 0]], axis=1)
    edges = e_all[cut].reshape(-1, 2, 2)
    edges = np.sort(edges, axis=2)

    # one section point per crossed edge, numbered in order of first appearance
    flat = edges.reshape(-1, 2).astype(np.int64)
    keys = flat[:, 0] * len(mesh.vertices) + flat[:, 1]
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    links = rank[inv.ravel()].reshape(-1, 2).tolist()
    a, b = flat[first[order], 0], flat[first[order], 1]
    t = (d[a] / (d[a] - d[b]))[:, None]
    V, N = mesh.vertices, mesh.normals
    pts = V[a] + t * (V[b] - V[a])
    nrm = unit_rows(N[a] + t * (N[b] - N[a]))

    adj = [[] for _ in range(len(pts))]
    for a, b in links:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(len(pts), dtype=bool)
    out = []

    def walk(start):
        chain = [start]
        seen[start] = True
        prev, cur = -1, start
        while True:
            nxt = [x for x in adj[cur] if x != prev and not seen[x]]
            if not nxt:
                closed = len(chain) > 2 and start in adj[cur]
                return chain, closed
            prev, cur = cur, nxt[0]
            seen[cur] = True
            chain.append(cur)

    for i in sorted(range(len(pts)), key=lambda i: len(adj[i])):
        if seen[i]:
            continue
        chain, closed = walk(i)
        if len(chain) < 2:
            continue
        idx = chain + [chain[0]] if closed else chain
        out.append((pts[idx], nrm[idx], closed))
    return out


def section_surfaces(meshes: list[Mesh], point, normal, tol: float = 1e-4):
    """Section several meshes and chain pieces meeting across shared edges."""
    pieces, extras = [], []
    closed_out = []
    for m in meshes:
        for p, nr, closed in section_mesh(m, point, normal):
            if closed:
                closed_out.append((p, nr, True))
            else:
                pieces.append(p)
                extras.append(nr)
    chained = chain_pieces(pieces, tol=tol, extras=extras)
    return closed_out + [(p, unit_rows(e), c) for p, e, c in chained]


def ball_tip(contact: np.ndarray, normals: np.ndarray, radius: float) -> np.ndarray:
    """Ball-end tool tip positions touching ``contact`` with outward ``normals``."""
    return contact + radius * normals - radius * ZAXIS


class HeightMap:
    """Piecewise-linear z(x, y) and normals over the meshes of near-horizontal surfaces."""

    def __init__(self, meshes: list[Mesh]):
        v = np.vstack([m.vertices for m in meshes])
        n = np.vstack([m.normals for m in meshes])
        xy = np.round(v[:, :2], 9)
        _, keep = np.unique(xy, axis=0, return_index=True)
        keep.sort()
        self._interp = LinearNDInterpolator(v[keep, :2], np.column_stack([v[keep, 2], n[keep]]))

    def __call__(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(points, normals, valid)`` at the given XY positions."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        r = self._interp(xy)
        valid = ~np.isnan(r).any(axis=1)
        r = np.where(valid[:, None], r, 0.0)
        pts = np.column_stack([xy, r[:, 0]])
        nrm = unit_rows(r[:, 1:4])
        nrm[~valid] = ZAXIS
        return pts, nrm, valid
