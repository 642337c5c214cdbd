"""Independent reference computations used by the tests.

Nothing here calls into the planner's kinematics: the brute-force integrator
steps time at 10 us and applies the same limits, recomputed from first principles.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from forgecam.die_model import Tool
from forgecam.geometry import Polyline
from forgecam.toolpath import Move, Toolpath

DT = 1e-5


# ---------------------------------------------------------------- path kinematics limits
def block_limits(points, feed_mm_s, machine, ncu):
    """Per-block length, tangent acceleration and speed cap, plus per-junction speed limits.

    Junction ``k`` (1..n-1) sits between block ``k-1`` and block ``k``; entries 0 and n
    are the chain ends (speed 0).
    """
    P = np.asarray(points, float)
    vec = np.diff(P, axis=0)
    L = np.linalg.norm(vec, axis=1)
    T = vec / L[:, None]
    vmax = np.asarray(machine.v_max, float)
    amax = np.asarray(machine.a_max, float)
    n = len(L)
    accel = np.empty(n)
    cap = np.empty(n)
    for k in range(n):
        acc_k, v_k = math.inf, math.inf
        for i in range(3):
            c = abs(T[k, i])
            if c > 1e-12:
                acc_k = min(acc_k, amax[i] / c)
                v_k = min(v_k, vmax[i] / c)
        accel[k] = acc_k
        cap[k] = min(feed_mm_s, v_k)
        if ncu.block_cycle_time > 0:
            cap[k] = min(cap[k], L[k] / ncu.block_cycle_time)
    w = np.zeros(n + 1)
    for k in range(1, n):
        w[k] = min(cap[k - 1], cap[k], corner_limit(T[k - 1], T[k], machine, ncu))
        # the controller must be able to stop within its look-ahead window
        j_end = min(k + ncu.lookahead_blocks, n)
        w[k] = min(w[k], math.sqrt(2.0 * float(np.sum(accel[k:j_end] * L[k:j_end]))))
    return L, accel, cap, w


def corner_limit(t_in, t_out, machine, ncu):
    """Blend-radius corner speed written directly from the included angle."""
    cosang = float(np.clip(np.dot(t_in, t_out), -1.0, 1.0))
    theta = math.pi - math.acos(cosang)          # included angle between the two segments
    involved = [i for i in range(3) if abs(t_in[i]) > 1e-12 or abs(t_out[i]) > 1e-12]
    v_cap = min(machine.v_max[i] for i in involved)
    a_n = min(machine.a_max[i] for i in involved)
    half = math.sin(theta / 2.0)
    if half >= 1.0 - 1e-12:
        return v_cap
    if half <= 0.0:
        return 0.0
    r = ncu.corner_tolerance * half / (1.0 - half)
    return min(v_cap, math.sqrt(a_n * r))


@njit(cache=True)
def _allowed(k, x, L, accel, cap, env_end):
    return min(cap[k], math.sqrt(env_end[k] ** 2 + 2.0 * accel[k] * max(L[k] - x, 0.0)))


@njit(cache=True)
def _integrate(L, accel, cap, w, dt):
    n = len(L)
    # highest speed at each block end from which every later limit can still be met
    env_end = np.empty(n)
    env_end[n - 1] = 0.0
    for k in range(n - 2, -1, -1):
        env_end[k] = min(w[k + 1], math.sqrt(env_end[k + 1] ** 2 + 2.0 * accel[k + 1] * L[k + 1]))
    k = 0
    x = 0.0
    v = 0.0
    t = 0.0
    while True:
        v_new = min(v + accel[k] * dt, cap[k])
        for _ in range(3):
            step = 0.5 * (v + v_new) * dt
            k2, x2 = k, x + step
            while k2 < n - 1 and x2 >= L[k2]:
                x2 -= L[k2]
                k2 += 1
            lim = _allowed(k2, min(x2, L[k2]), L, accel, cap, env_end)
            if v_new <= lim:
                break
            v_new = lim
        step = 0.5 * (v + v_new) * dt
        if k == n - 1 and x + step >= L[k]:
            frac = (L[k] - x) / step if step > 0 else 0.0
            return t + frac * dt
        x += step
        while k < n - 1 and x >= L[k]:
            x -= L[k]
            k += 1
        v = v_new
        t += dt
        if step <= 0.0 and v <= 0.0:
            # stalled at a zero-speed junction: nudge forward at the reachable speed
            v = accel[k] * dt


def brute_force_time(points, feed_mm_s, machine, ncu, dt=DT) -> float:
    """Greedy accelerate-unless-must-brake time stepping over one cut chain."""
    L, accel, cap, w = block_limits(points, feed_mm_s, machine, ncu)
    return float(_integrate(L, accel, cap, w, dt))


# ---------------------------------------------------------------- random toolpaths
def random_polyline(rng, n_blocks: int) -> np.ndarray:
    """Polyline mixing long straights, dense short blocks, gentle bends and sharp turns."""
    pts = [np.zeros(3)]
    d = np.array([1.0, 0.0, 0.0])
    for _ in range(n_blocks):
        r = rng.random()
        if r < 0.3:
            turn = 0.0
        elif r < 0.75:
            turn = rng.normal(0.0, 0.15)
        else:
            turn = rng.uniform(-2.5, 2.5)
        c, s = math.cos(turn), math.sin(turn)
        d = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1], 0.0])
        dz = rng.normal(0.0, 0.2)
        step = np.array([d[0], d[1], dz])
        step /= np.linalg.norm(step)
        length = float(np.exp(rng.uniform(np.log(0.05), np.log(25.0))))
        pts.append(pts[-1] + length * step)
    return np.asarray(pts)


def polyline_toolpath(points, feed_mm_min: float) -> Toolpath:
    tool = Tool("T", "ball_end", 3.0, 3.0, 50.0)
    return Toolpath((Move("cut", Polyline(points), feed=feed_mm_min),), tool, "imported", "one_way", "rand")


# ---------------------------------------------------------------- scallop measurement
def contact_on_plane(tips, R, point, normal):
    """Contact points of a ball of radius ``R`` whose tip is at ``tips`` on a plane."""
    n = np.asarray(normal, float) / np.linalg.norm(normal)
    centres = tips + np.array([0.0, 0.0, R])
    return centres - ((centres - point) @ n)[:, None] * n


def contact_on_cylinder(tips, R, axis_point, axis_dir):
    """Contact points on a convex cylinder (ball outside) from tip positions."""
    a = np.asarray(axis_dir, float) / np.linalg.norm(axis_dir)
    centres = tips + np.array([0.0, 0.0, R])
    rel = centres - axis_point
    along = (rel @ a)[:, None] * a
    radial = rel - along
    rho = np.linalg.norm(radial, axis=1)
    return axis_point + along + radial * ((rho - R) / rho)[:, None]


def _point_polyline_distance(p, poly):
    a, b = poly[:-1], poly[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    den[den == 0] = 1.0
    t = np.clip(((p - a) * ab).sum(axis=1) / den, 0.0, 1.0)
    return float(np.min(np.linalg.norm(p - (a + ab * t[:, None]), axis=1)))


def pass_spacings(contact_passes, rng, count=1000) -> np.ndarray:
    """Distance from random points on a pass to the next pass, sampled ``count`` times.

    Each sample picks an adjacent pass pair and a uniformly random arc-length position
    on the first; the reported value is the gap to the second pass.
    """
    out = np.empty(count)
    pairs = len(contact_passes) - 1
    for i in range(count):
        k = int(rng.integers(0, pairs))
        a, b = contact_passes[k], contact_passes[k + 1]
        seg = np.linalg.norm(np.diff(a, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = rng.uniform(0.0, cum[-1])
        j = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        f = (s - cum[j]) / seg[j] if seg[j] > 0 else 0.0
        p = a[j] + f * (a[j + 1] - a[j])
        out[i] = _point_polyline_distance(p[None, :], b)
    return out
