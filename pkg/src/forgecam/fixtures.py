"""Constructed dies, tools and machine settings used by the demos and tests.

``fixture_die`` is a three-zone forging die:

* a channel: a trough floor (CP2) between two slanted-ruling walls (FF1, FF2),
  an incline (CP1) at the foot of FF1, a wall (FC2) above FF1, a wall (FC4)
  above CP1 and two lands (HP2, HP3) joined by fillets;
* a pocket: a wavy two-strip floor (CP3) inside four drafted walls (FC1);
* a boss: a top (HP1) on four drafted walls (FC3) with two rounded edges.

Surface ids start with the id of the feature they are expected to form, so the
feature numbering follows the construction.
"""
from __future__ import annotations

import numpy as np
from shapely.geometry import MultiPoint, Polygon

from .die_model import DieModel, Technology, Tool
from .geometry import ZAXIS, unit
from .perf_viewer import MachineModel, NcuModel
from .surfaces import Blend, Extruded, Plane, Ruled

FILLET_R = 3.0
CONCAVE_R = 4.0


# --------------------------------------------------------------------------------------
def default_tools() -> tuple:
    return (Tool("B6", "ball_end", 3.0, 3.0, 60.0), Tool("B10", "ball_end", 5.0, 5.0, 60.0),
            Tool("F10", "flat_end", 5.0, 5.0, 60.0, engagement=0.5))


def default_machine() -> MachineModel:
    return MachineModel.uniform(v_max=333.0, a_max=2000.0, j_max=50000.0)


def default_ncu() -> NcuModel:
    return NcuModel(corner_tolerance=0.01, block_cycle_time=0.002, lookahead_blocks=200)


def default_technology(**kw) -> Technology:
    return Technology(**kw)


# --------------------------------------------------------------------------------------
def _ruled(sid, rail0, rail1) -> Ruled:
    """Ruled surface oriented so its normal points up (the air side)."""
    rail0, rail1 = np.asarray(rail0, float), np.asarray(rail1, float)
    s = Ruled(sid, rail0=rail0, rail1=rail1)
    u0, u1, v0, v1 = s.domain()
    if s.evaluate(np.array(0.5 * (u0 + u1)), np.array(0.5 * (v0 + v1)))[1][2] < 0:
        s = Ruled(sid, rail0=rail0[::-1], rail1=rail1[::-1])
    return s


def _plane(sid, boundary, holes=()) -> Plane:
    b = np.asarray(boundary, float)
    n = unit(np.cross(b[1] - b[0], b[2] - b[0]))
    if n[2] < 0:
        n = -n
    return Plane(sid, origin=b[0], normal=n, boundary=b, holes=tuple(np.asarray(h, float) for h in holes))


def fillet_offsets(n_wall, n_other, tangent, r, concave):
    """Offsets from a point of a sharp edge to the ball centre and the two contact points.

    Returns ``(centre, contact_wall, contact_other)`` relative to the edge point.
    """
    s = 1.0 if concave else -1.0
    A = np.array([n_wall, n_other, tangent], float)
    c = np.linalg.solve(A, np.array([s * r, s * r, 0.0]))
    return c, c - s * r * np.asarray(n_wall), c - s * r * np.asarray(n_other)


def _wall_normal(direction_air, slope_deg):
    """Unit normal of a wall of slope ``slope_deg`` facing horizontal direction ``direction_air``."""
    d = unit(np.array([direction_air[0], direction_air[1], 0.0]))
    a = np.radians(slope_deg)
    return np.sin(a) * d + np.cos(a) * ZAXIS


def _lift_to(points, direction, z):
    """Move each point along ``direction`` until it reaches height ``z``."""
    points = np.atleast_2d(points)
    lam = (z - points[:, 2]) / direction[2]
    return points + lam[:, None] * direction


def _blend(sid, spine, radius, a, b) -> Blend:
    return Blend(sid, spine=np.asarray(spine, float), radius=radius, adjacent=(a, b))


def _spine(p0, p1, count=7):
    return np.linspace(p0, p1, count)


# --------------------------------------------------------------------------------------
def _trough_profile(width=30.0, depth=3.0, x0=0.0):
    """Trough across y (from y=width down to y=0) with dense points near both walls."""
    ys = np.unique(np.concatenate([np.arange(0.0, 6.0, 0.03), np.arange(6.0, width - 6.0, 1.0),
                                   np.arange(width - 6.0, width, 0.03), [width]]))
    ys = ys[::-1]
    z = -depth * np.sin(np.pi * ys / width)
    return np.column_stack([np.full_like(ys, x0), ys, z])


def _channel_zone():
    surfaces = []
    h_ff = 15.0
    ty = h_ff * np.tan(np.radians(6.0))                  # 84 deg walls
    tx = np.sqrt((h_ff * np.tan(np.radians(40.0))) ** 2 - ty ** 2)   # rulings 40 deg off vertical

    # CP2 trough, extruded along +x between the two walls
    surfaces.append(Extruded("cp2_trough", generatrix_curve=_trough_profile(), direction=[1.0, 0.0, 0.0],
                             extent=60.0))

    # FF1: foot y=0, x in [0,100], leaning toward -y, rulings tilted toward +x
    o1 = np.array([tx, -ty, h_ff])
    foot1 = np.array([[100.0, 0, 0], [0.0, 0, 0]])
    top1 = foot1 + o1
    surfaces.append(_ruled("ff1_wall", foot1, top1))

    # FC2 above FF1, slope 88, top rounded into land HP2 by B4
    n_fc2 = _wall_normal([0, 1, 0], 88.0)
    d_fc2 = unit(np.cross(n_fc2, [1.0, 0, 0]))
    if d_fc2[2] < 0:
        d_fc2 = -d_fc2
    z_land2 = 25.0
    edge2 = _lift_to(top1, d_fc2, z_land2)
    c, qw, qo = fillet_offsets(n_fc2, ZAXIS, [1.0, 0, 0], FILLET_R, concave=False)
    fc2_top = _lift_to(top1, d_fc2, z_land2 + qw[2])
    surfaces.append(_ruled("fc2_wall", top1, fc2_top))
    spine4 = fc2_top - qw + c
    surfaces.append(_blend("b4_fillet", _spine(spine4[0], spine4[1]), FILLET_R, "fc2_wall", "hp2_land"))
    hp2_front = spine4 - c + (c - qw) + qo - (c - qw) if False else (spine4 + (qo - c))
    x_lo, x_hi = sorted(hp2_front[:, 0])
    yf = float(hp2_front[0, 1])
    surfaces.append(_plane("hp2_land", [[x_lo, yf, z_land2], [x_hi, yf, z_land2], [x_hi, -25.0, z_land2],
                                        [x_lo, -25.0, z_land2]]))
    del edge2

    # FF2: foot y=30, x in [0,60], leaning toward +y, rulings tilted toward -x, rounded into HP3 by B1
    z_land3 = 15.0
    o2 = unit(np.array([-tx, ty, h_ff]))
    n_ff2 = unit(np.cross([1.0, 0, 0], o2))
    if n_ff2[2] < 0:
        n_ff2 = -n_ff2
    foot2 = np.array([[0.0, 30, 0], [60.0, 30, 0]])
    c, qw, qo = fillet_offsets(n_ff2, ZAXIS, [1.0, 0, 0], FILLET_R, concave=False)
    top2 = _lift_to(foot2, o2, z_land3 + qw[2])
    surfaces.append(_ruled("ff2_wall", foot2, top2))
    spine1 = top2 - qw + c
    surfaces.append(_blend("b1_fillet", _spine(spine1[0], spine1[1]), FILLET_R, "ff2_wall", "hp3_land"))
    hp3_a = spine1 + (qo - c)

    # CP1 incline x in [70,100], rising from z=0 at y=0 to z=2 at y=30; FC4 wall above it
    n_cp1 = unit(np.array([0.0, -2.0 / 30.0, 1.0]))
    n_fc4 = _wall_normal([0, -1, 0], 87.0)
    d_fc4 = unit(np.cross([1.0, 0, 0], n_fc4))
    if d_fc4[2] < 0:
        d_fc4 = -d_fc4
    sharp_foot = np.array([[70.0, 30.0, 2.0], [100.0, 30.0, 2.0]])
    c2, qw2, qo2 = fillet_offsets(n_fc4, n_cp1, [1.0, 0, 0], CONCAVE_R, concave=True)
    fc4_foot = sharp_foot + qw2
    spine2 = sharp_foot + c2
    cp1_back = sharp_foot + qo2
    surfaces.append(_plane("cp1_incline", [[70.0, 0, 0], [100.0, 0, 0], cp1_back[1], cp1_back[0]]))
    surfaces.append(_blend("b2_fillet", _spine(spine2[0], spine2[1]), CONCAVE_R, "fc4_wall", "cp1_incline"))
    c3, qw3, qo3 = fillet_offsets(n_fc4, ZAXIS, [1.0, 0, 0], FILLET_R, concave=False)
    fc4_top = _lift_to(fc4_foot, d_fc4, z_land3 + qw3[2])
    surfaces.append(_ruled("fc4_wall", fc4_foot, fc4_top))
    spine3 = fc4_top - qw3 + c3
    surfaces.append(_blend("b3_fillet", _spine(spine3[0], spine3[1]), FILLET_R, "fc4_wall", "hp3_land"))
    hp3_b = spine3 + (qo3 - c3)

    a_lo, a_hi = hp3_a[np.argsort(hp3_a[:, 0])]
    b_lo, b_hi = hp3_b[np.argsort(hp3_b[:, 0])]
    surfaces.append(_plane("hp3_land", [a_lo, a_hi, b_lo, b_hi, [b_hi[0], 55.0, z_land3],
                                        [a_lo[0], 55.0, z_land3]]))
    return surfaces


def _box_walls(prefix, foot_edges, air_dirs, slope_deg, z_tops):
    """Four drafted walls around a rectangle sharing their corner rulings.

    ``foot_edges[k]`` is the foot polyline of wall ``k`` (walls in loop order, each
    edge running from corner k to corner k+1); ``air_dirs[k]`` the horizontal
    direction its air side faces; ``z_tops[k]`` the height its top is cut at.
    """
    normals = [_wall_normal(d, slope_deg) for d in air_dirs]
    corner_dirs = []
    for k in range(4):
        d = unit(np.cross(normals[k - 1], normals[k]))
        corner_dirs.append(d if d[2] > 0 else -d)       # corner k joins wall k-1 and wall k
    walls = []
    for k, foot in enumerate(foot_edges):
        foot = np.asarray(foot, float)
        a = _lift_to(foot[0], corner_dirs[k], z_tops[k])[0]
        b = _lift_to(foot[-1], corner_dirs[(k + 1) % 4], z_tops[k])[0]
        f = np.linalg.norm(foot - foot[0], axis=1)
        f = f / f[-1]
        top = a + f[:, None] * (b - a)
        # rulings interpolate the corner directions; the top stays a straight line at z_tops[k]
        walls.append(_ruled(f"{prefix}_{'abcd'[k]}", foot, top))
    return walls, normals, corner_dirs


def _pocket_zone():
    x0, x1, xm, y0, y1 = 140.0, 200.0, 170.0, 0.0, 60.0
    xs = np.arange(x0, x1 + 1e-9, 0.5)
    z = -15.0 + 1.0 * np.sin(2 * np.pi * (xs - x0) / 30.0)
    prof = np.column_stack([xs, np.zeros_like(xs), z])
    ia = xs <= xm + 1e-9
    ib = xs >= xm - 1e-9
    surfaces = [Extruded("cp3_strip_a", generatrix_curve=prof[ia], direction=[0, 1.0, 0], extent=y1 - y0),
                Extruded("cp3_strip_b", generatrix_curve=prof[ib], direction=[0, 1.0, 0], extent=y1 - y0)]
    zc = -15.0
    feet = [prof,                                                      # y=0, x0 -> x1
            np.array([[x1, y0, zc], [x1, y1, zc]]),                    # x=x1
            (prof + [0, y1, 0])[::-1],                                 # y=y1, x1 -> x0
            np.array([[x0, y1, zc], [x0, y0, zc]])]                    # x=x0
    airs = [(0, 1), (-1, 0), (0, -1), (1, 0)]
    walls, _, _ = _box_walls("fc1_wall", feet, airs, 87.0, [0.0] * 4)
    return surfaces + walls


def _boss_zone():
    ids = {"wall": "fc3_wall", "top": "hp1_top"}
    return _boss(ids, 220.0, 0.0, 40.0, 40.0, 20.0, 85.0, {1: "b6_fillet", 3: "b5_fillet"})


def _top_rail(wall, foot):
    """Top rail of a box wall in the order of its foot polyline."""
    r1 = wall.rail1.points
    return r1 if np.allclose(wall.rail0.points[0], foot[0]) else r1[::-1]


def fixture_die(technology: Technology | None = None) -> DieModel:
    """The three-zone reference die (18 features: 3 HP, 3 CP, 4 FC, 2 FF, 6 B)."""
    surfaces = _channel_zone() + _pocket_zone() + _boss_zone()
    return DieModel(tuple(sorted(surfaces, key=lambda s: s.id)), technology or default_technology())


def single_plane_die(size: float = 40.0, z: float = 0.0, technology: Technology | None = None) -> DieModel:
    p = _plane("hp1_plane", [[0, 0, z], [size, 0, z], [size, size, z], [0, size, z]])
    return DieModel((p,), technology or default_technology())


def _pocket(ids, x0, y0, width, depth_y, depth, slope, rise, fillet_wall, margin=20.0):
    """Pocket in a flat top at z=0: floor rising by ``rise`` along x, four walls, optional rim fillet."""
    x1, y1 = x0 + width, y0 + depth_y
    zf = -depth
    floor_pts = np.array([[x0, y0, zf], [x1, y0, zf + rise], [x1, y1, zf + rise], [x0, y1, zf]])
    feet = [floor_pts[[0, 1]], floor_pts[[1, 2]], floor_pts[[2, 3]], floor_pts[[3, 0]]]
    airs = [(0, 1), (-1, 0), (0, -1), (1, 0)]
    normals = [_wall_normal(d, slope) for d in airs]
    z_tops = [0.0] * 4
    if fillet_wall is not None:
        k = fillet_wall
        c, qw, qo = fillet_offsets(normals[k], ZAXIS, unit(feet[k][-1] - feet[k][0]), FILLET_R, concave=False)
        z_tops[k] = qw[2]
    walls, _, corner_dirs = _box_walls(ids["wall"], feet, airs, slope, z_tops)
    surfaces = [_plane(ids["floor"], floor_pts)] + list(walls)
    rim = [_lift_to(f[0], corner_dirs[k], 0.0)[0][:2] for k, f in enumerate(feet)]
    if fillet_wall is not None:
        k = fillet_wall
        spine = _top_rail(walls[k], feet[k]) - qw + c
        surfaces.append(_blend(ids["fillet"], _spine(spine[0], spine[-1]), FILLET_R, walls[k].id, ids["top"]))
        rim += [(spine[0] + qo - c)[:2], (spine[-1] + qo - c)[:2]]
    ring = np.asarray(MultiPoint(rim).convex_hull.exterior.coords)[:-1]
    ring = np.column_stack([ring, np.zeros(len(ring))])
    outer = [[x0 - margin, y0 - margin, 0.0], [x1 + margin, y0 - margin, 0.0],
             [x1 + margin, y1 + margin, 0.0], [x0 - margin, y1 + margin, 0.0]]
    surfaces.append(_plane(ids["top"], outer, holes=[ring]))
    return surfaces


def _boss(ids, x0, y0, width, depth_y, height, slope, filleted=(), z0=0.0):
    """Boss standing on z0: four drafted walls, a flat top and rounded top edges on ``filleted`` walls."""
    x1, y1, h = x0 + width, y0 + depth_y, z0 + height
    feet = [np.array([[x0, y0, z0], [x1, y0, z0]]), np.array([[x1, y0, z0], [x1, y1, z0]]),
            np.array([[x1, y1, z0], [x0, y1, z0]]), np.array([[x0, y1, z0], [x0, y0, z0]])]
    airs = [(0, -1), (1, 0), (0, 1), (-1, 0)]
    normals = [_wall_normal(d, slope) for d in airs]
    z_tops, offs = [], {}
    for k in range(4):
        if k in filleted:
            offs[k] = fillet_offsets(normals[k], ZAXIS, unit(feet[k][-1] - feet[k][0]), FILLET_R, concave=False)
            z_tops.append(h + offs[k][1][2])
        else:
            z_tops.append(h)
    walls, _, corner_dirs = _box_walls(ids["wall"], feet, airs, slope, z_tops)
    surfaces = list(walls)
    top = Polygon([_lift_to(f[0], corner_dirs[k], h)[0][:2] for k, f in enumerate(feet)])
    for k, w in enumerate(walls):
        if k in filleted:
            c, qw, qo = offs[k]
            spine = _top_rail(w, feet[k]) - qw + c
            surfaces.append(_blend(filleted[k], _spine(spine[0], spine[-1]), FILLET_R, w.id, ids["top"]))
            # keep the part of the top on the inner side of the contact line
            q0, q1 = (spine[0] + qo - c)[:2], (spine[-1] + qo - c)[:2]
            away = -np.asarray(airs[k], float) * 1e3
            top = top.intersection(Polygon([q0 - (q1 - q0) * 10, q1 + (q1 - q0) * 10,
                                            q1 + (q1 - q0) * 10 + away, q0 - (q1 - q0) * 10 + away]))
    ring = np.asarray(top.exterior.coords)[:-1]
    surfaces.append(_plane(ids["top"], np.column_stack([ring, np.full(len(ring), h)])))
    return surfaces


def _channel(tag, x0, length, width, height, depth, lean_deg=40.0, draft_deg=6.0):
    """Trough floor between two followed flanks whose rulings lean ``lean_deg`` off vertical."""
    ty = height * np.tan(np.radians(draft_deg))
    tx = np.sqrt((height * np.tan(np.radians(lean_deg))) ** 2 - ty ** 2)
    trough = Extruded(f"{tag}_trough", generatrix_curve=_trough_profile(width, depth, x0),
                      direction=[1.0, 0.0, 0.0], extent=length)
    foot_a = np.array([[x0 + length, 0.0, 0.0], [x0, 0.0, 0.0]])
    foot_b = np.array([[x0, width, 0.0], [x0 + length, width, 0.0]])
    wall_a = _ruled(f"{tag}_flank_a", foot_a, foot_a + [tx, -ty, height])
    wall_b = _ruled(f"{tag}_flank_b", foot_b, foot_b + [-tx, ty, height])
    return [trough, wall_a, wall_b]


def pocket_die(technology: Technology | None = None, rim_fillet: bool = True) -> DieModel:
    """A pocket in a flat top: HP top with a hole, four drafted walls (FC), a floor (CP) and one rim fillet."""
    ids = {"floor": "cp1_floor", "wall": "fc1_wall", "fillet": "b1_fillet", "top": "hp1_top"}
    surfaces = _pocket(ids, 0.0, 0.0, 40.0, 30.0, 10.0, 87.0, 1.5, fillet_wall=0 if rim_fillet else None)
    return DieModel(tuple(sorted(surfaces, key=lambda s: s.id)), technology or default_technology())


def random_die(seed: int, cells: int | None = None, technology: Technology | None = None) -> DieModel:
    """Seeded composite die: separate cells holding lands, ramps, pockets, bosses and channels."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4)) if cells is None else cells
    surfaces = []
    for k in range(n):
        x0 = 200.0 * k
        tag = f"z{k}"
        kind = rng.choice(["land", "ramp", "pocket", "boss", "channel"])
        w, d = rng.uniform(20.0, 45.0, size=2)
        slope = float(rng.uniform(84.0, 88.0))
        if kind == "land":
            z = float(rng.uniform(-5.0, 5.0))
            surfaces.append(_plane(f"{tag}_land", [[x0, 0, z], [x0 + w, 0, z], [x0 + w, d, z], [x0, d, z]]))
        elif kind == "ramp":
            rise = float(rng.uniform(1.0, 8.0))
            surfaces.append(_plane(f"{tag}_ramp", [[x0, 0, 0], [x0 + w, 0, rise], [x0 + w, d, rise], [x0, d, 0]]))
        elif kind == "pocket":
            ids = {"floor": f"{tag}_floor", "wall": f"{tag}_wall", "fillet": f"{tag}_rim", "top": f"{tag}_top"}
            fillet = int(rng.integers(0, 4)) if rng.random() < 0.5 else None
            surfaces += _pocket(ids, x0 + 20.0, 20.0, w, d, float(rng.uniform(6.0, 12.0)), slope,
                                float(rng.uniform(1.0, 3.0)), fillet)
        elif kind == "channel":
            surfaces += _channel(tag, x0, float(rng.uniform(40.0, 80.0)), float(rng.uniform(25.0, 40.0)),
                                 float(rng.uniform(10.0, 18.0)), float(rng.uniform(2.0, 4.0)))
        else:
            ids = {"wall": f"{tag}_wall", "top": f"{tag}_top"}
            # rounded edges only on opposite walls so no two fillets meet at a corner
            pair = (0, 2) if rng.random() < 0.5 else (1, 3)
            picks = [j for j in pair if rng.random() < 0.5]
            surfaces += _boss(ids, x0, 0.0, w, d, float(rng.uniform(8.0, 20.0)), slope,
                              {j: f"{tag}_round{j}" for j in picks})
    return DieModel(tuple(sorted(surfaces, key=lambda s: s.id)), technology or default_technology())


def floor_ramp_blend_die(technology: Technology | None = None) -> DieModel:
    """A floor rounded into a 10 deg ramp: the blend joins an HP and a CP feature."""
    n_cp = unit(np.array([-np.sin(np.radians(10.0)), 0.0, np.cos(np.radians(10.0))]))
    c, qw, qo = fillet_offsets(n_cp, ZAXIS, [0.0, 1.0, 0.0], FILLET_R, concave=True)
    edge = np.array([[0.0, 0.0, 0.0], [0.0, 30.0, 0.0]])
    xf = float(edge[0, 0] + qo[0])
    floor = _plane("a_floor", [[-30.0, 0, 0], [xf, 0, 0], [xf, 30.0, 0], [-30.0, 30.0, 0]])
    x0, z0 = float(qw[0]), float(qw[2])
    rise = 30.0 * np.tan(np.radians(10.0))
    ramp = _plane("b_ramp", [[x0, 0, z0], [x0 + 30.0, 0, z0 + rise], [x0 + 30.0, 30.0, z0 + rise], [x0, 30.0, z0]])
    fillet = _blend("c_fillet", _spine(*(edge + c)), FILLET_R, "b_ramp", "a_floor")
    return DieModel((floor, ramp, fillet), technology or default_technology())
