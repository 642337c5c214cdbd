"""Kinematic feed prediction along a toolpath.

The machine is reduced to per-axis velocity/acceleration/jerk limits and the
controller to a corner tolerance, a block cycle time and a look-ahead depth.
Per contiguous feed chain the planner caps junction speeds, runs forward and
backward acceleration passes and integrates each block in closed form.

Path-tangent limits from per-axis ones::

    v_cap(t) = min_k v_max_k / |t_k|        a(t) = min_k a_max_k / |t_k|
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ForgecamError

log = logging.getLogger(__name__)

AXES = ("X", "Y", "Z")
RAMP_SUBSAMPLES = 8
LOSS_MERGE_GAP = 1.0


class ConfigError(ForgecamError):
    module = "perf_viewer"


@dataclass(frozen=True)
class MachineModel:
    v_max: tuple = (333.0, 333.0, 333.0)           # mm/s
    a_max: tuple = (2000.0, 2000.0, 2000.0)        # mm/s^2
    j_max: tuple = (50000.0, 50000.0, 50000.0)     # mm/s^3
    strokes: tuple = ((-1000.0, 1000.0), (-1000.0, 1000.0), (-500.0, 500.0))
    spindle_max: float = 24000.0
    spindle_power: float = 15.0

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3,) or np.any(arr <= 0):
                raise ConfigError(f"machine: {name} needs three positive values")
            object.__setattr__(self, name, tuple(float(x) for x in arr))
        st = tuple((float(a), float(b)) for a, b in self.strokes)
        if len(st) != 3 or any(b <= a for a, b in st):
            raise ConfigError("machine: each stroke must be (min, max) with max > min")
        object.__setattr__(self, "strokes", st)

    @classmethod
    def uniform(cls, v_max: float, a_max: float, j_max: float = 50000.0) -> "MachineModel":
        return cls((v_max,) * 3, (a_max,) * 3, (j_max,) * 3)

    def to_dict(self) -> dict:
        return {"axes": {ax: {"stroke": list(self.strokes[i]), "v_max": self.v_max[i], "a_max": self.a_max[i],
                              "j_max": self.j_max[i]} for i, ax in enumerate(AXES)},
                "spindle_max": self.spindle_max, "spindle_power": self.spindle_power}

    @classmethod
    def from_dict(cls, d: dict) -> "MachineModel":
        try:
            axes = [d["axes"][ax] for ax in AXES]
            return cls(tuple(a["v_max"] for a in axes), tuple(a["a_max"] for a in axes),
                       tuple(a["j_max"] for a in axes), tuple(tuple(a["stroke"]) for a in axes),
                       float(d.get("spindle_max", 24000.0)), float(d.get("spindle_power", 15.0)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"machine config: missing or malformed field {exc}") from exc


@dataclass(frozen=True)
class NcuModel:
    corner_tolerance: float = 0.01
    block_cycle_time: float = 0.002
    lookahead_blocks: int = 200

    def __post_init__(self):
        if not self.corner_tolerance > 0:
            raise ConfigError("ncu: corner_tolerance must be > 0")
        if self.block_cycle_time < 0:
            raise ConfigError("ncu: block_cycle_time must be >= 0")
        if int(self.lookahead_blocks) < 1:
            raise ConfigError("ncu: lookahead_blocks must be >= 1")
        object.__setattr__(self, "lookahead_blocks", int(self.lookahead_blocks))

    def to_dict(self) -> dict:
        return {"corner_tolerance": self.corner_tolerance, "block_cycle_time": self.block_cycle_time,
                "lookahead_blocks": self.lookahead_blocks}

    @classmethod
    def from_dict(cls, d: dict) -> "NcuModel":
        unknown = set(d) - {"corner_tolerance", "block_cycle_time", "lookahead_blocks"}
        if unknown:
            raise ConfigError(f"ncu config: unknown fields {sorted(unknown)}")
        return cls(**d)


def load_machine(path) -> MachineModel:
    with open(path, encoding="utf-8") as fh:
        return MachineModel.from_dict(json.load(fh))


def load_ncu(path) -> NcuModel:
    with open(path, encoding="utf-8") as fh:
        return NcuModel.from_dict(json.load(fh))


# --------------------------------------------------------------------------------------
def _directional(limits, t) -> float:
    return float(_directional_rows(limits, np.atleast_2d(t))[0])


def _directional_rows(limits, T) -> np.ndarray:
    """Path-tangent limit ``min_k lim_k / |t_k|`` for every row of ``T``."""
    t = np.abs(np.asarray(T, dtype=float))
    lim = np.asarray(limits, dtype=float)
    with np.errstate(divide="ignore"):
        r = np.where(t > 1e-12, lim / np.where(t > 1e-12, t, 1.0), np.inf)
    return r.min(axis=1)


def corner_speed_limit(dir_in, dir_out, machine: MachineModel, ncu: NcuModel) -> float:
    """Speed allowed through the junction of two blocks (mm/s).

    The corner is replaced by the circular blend deviating ``corner_tolerance`` from
    the sharp vertex; the centripetal acceleration on it is bounded by the smallest
    ``a_max`` among the axes the two blocks move.
    """
    a = np.asarray(dir_in, dtype=float)
    b = np.asarray(dir_out, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 1e-12 or nb <= 1e-12:
        raise ValueError("zero-length direction")
    return float(corner_limits((a / na)[None], (b / nb)[None], machine, ncu)[0])


def corner_limits(T_in: np.ndarray, T_out: np.ndarray, machine: MachineModel, ncu: NcuModel) -> np.ndarray:
    """Vectorised :func:`corner_speed_limit` over unit direction rows."""
    involved = (np.abs(T_in) > 1e-12) | (np.abs(T_out) > 1e-12)
    v_cap = np.where(involved, np.asarray(machine.v_max, float), np.inf).min(axis=1)
    a_norm = np.where(involved, np.asarray(machine.a_max, float), np.inf).min(axis=1)
    # half included angle: sin(theta/2) = cos(deviation/2)
    c = np.clip(np.einsum("ij,ij->i", T_in, T_out), -1.0, 1.0)
    s = np.sqrt(np.maximum(0.0, (1.0 + c) / 2.0))
    straight = s >= 1.0 - 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        r = ncu.corner_tolerance * s / np.where(straight, 1.0, 1.0 - s)
        v = np.minimum(v_cap, np.sqrt(a_norm * r))
    v = np.where(straight, v_cap, v)
    return np.where(s <= 0.0, 0.0, v)


def _ramp_time(dv: float, a: float, j: float | None) -> float:
    if dv <= 0.0:
        return 0.0
    if j is None:
        return dv / a
    if dv >= a * a / j:
        return dv / a + a / j
    return 2.0 * float(np.sqrt(dv / j))


@dataclass(frozen=True, eq=False)
class SegmentPlan:
    move_index: int
    kind: str
    start: np.ndarray
    end: np.ndarray
    length: float
    feed: float             # mm/s commanded (rapid: machine cap)
    cap: float
    accel: float
    v_entry: float
    v_peak: float
    v_exit: float
    t_accel: float
    t_cruise: float
    t_decel: float
    d_accel: float
    d_decel: float
    s0: float
    t0: float
    chain: int
    rapid: bool

    @property
    def time(self) -> float:
        return self.t_accel + self.t_cruise + self.t_decel

    def speed_at(self, x: np.ndarray) -> np.ndarray:
        """Planned speed at distance ``x`` from the block start (trapezoid kinematics)."""
        x = np.asarray(x, dtype=float)
        up = np.sqrt(np.maximum(self.v_entry ** 2 + 2 * self.accel * x, 0.0))
        down = np.sqrt(np.maximum(self.v_exit ** 2 + 2 * self.accel * (self.length - x), 0.0))
        return np.minimum(np.minimum(up, down), self.v_peak)


@dataclass(frozen=True, eq=False)
class FeedProfile:
    s: np.ndarray
    t: np.ndarray
    v: np.ndarray
    cut: np.ndarray             # sample belongs to a cut block (bool)
    segments: tuple
    junction_limits: np.ndarray     # per segment: corner limit at its start (inf at chain starts)
    total_time: float
    programmed_feed: float       # mm/s
    jerk_limited: bool = False

    @property
    def empty(self) -> bool:
        return len(self.s) == 0

    @cached_property
    def segment_arrays(self) -> tuple:
        """``(s0, length, start, end)`` of every segment as arrays."""
        g = self.segments
        return (np.array([x.s0 for x in g]), np.array([x.length for x in g]),
                np.array([x.start for x in g]).reshape(-1, 3), np.array([x.end for x in g]).reshape(-1, 3))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s_mm", "t_s", "v_mm_s"])
        for s, t, v in zip(self.s, self.t, self.v):
            w.writerow([f"{s:.6g}", f"{t:.6g}", f"{v:.6g}"])
        return buf.getvalue()


@dataclass(frozen=True)
class FeedLossArea:
    s_start: float
    s_end: float
    min_ratio: float
    cause: str      # corner | short_blocks | acceleration

    def __post_init__(self):
        if not self.s_start < self.s_end:
            raise ValueError("feed-loss interval must have s_start < s_end")

    @property
    def length(self) -> float:
        return self.s_end - self.s_start

    def to_dict(self) -> dict:
        return {"s_start": round(self.s_start, 6), "s_end": round(self.s_end, 6),
                "min_ratio": round(self.min_ratio, 6), "cause": self.cause}


# --------------------------------------------------------------------------------------
def _blocks(toolpath):
    """Flatten moves into blocks ``(move_index, kind, a, b, feed_mm_s or None)``."""
    out = []
    for k, m in enumerate(toolpath.moves):
        pts = m.points
        for a, b, f in zip(pts[:-1], pts[1:], m.segment_feeds()):
            if np.linalg.norm(b - a) <= 1e-12:
                continue
            out.append((k, m.kind, a, b, None if f is None else f / 60.0))
    return out


def _plan_chain(blocks, machine, ncu, jerk):
    """Per-block kinematics of one feed chain; returns column arrays and the corner limits."""
    n = len(blocks)
    P0 = np.array([b[2] for b in blocks])
    vecs = np.array([b[3] for b in blocks]) - P0
    L = np.linalg.norm(vecs, axis=1)
    T = vecs / L[:, None]
    accel = _directional_rows(machine.a_max, T)
    cap = np.minimum(np.array([b[4] for b in blocks]), _directional_rows(machine.v_max, T))
    if ncu.block_cycle_time > 0:
        cap = np.minimum(cap, L / ncu.block_cycle_time)
    jer = _directional_rows(machine.j_max, T) if jerk else None

    corner = np.full(n + 1, np.inf)
    w = np.zeros(n + 1)
    if n > 1:
        corner[1:n] = corner_limits(T[:-1], T[1:], machine, ncu)
        w[1:n] = np.minimum(corner[1:n], np.minimum(cap[:-1], cap[1:]))
    A = np.concatenate([[0.0], np.cumsum(accel * L)])
    N = ncu.lookahead_blocks
    j = np.arange(1, n)
    w[1:n] = np.minimum(w[1:n], np.sqrt(2.0 * (A[np.minimum(j + N, n)] - A[j])))
    v = w.tolist()
    reach = (2.0 * accel * L).tolist()
    for k in range(n):
        v[k + 1] = min(v[k + 1], (v[k] ** 2 + reach[k]) ** 0.5)
    for k in range(n - 1, -1, -1):
        v[k] = min(v[k], (v[k + 1] ** 2 + reach[k]) ** 0.5)
    v = np.asarray(v)

    u, e = v[:-1], v[1:]
    peak = np.minimum(cap, np.sqrt((2 * accel * L + u * u + e * e) / 2.0))
    peak = np.maximum(peak, np.maximum(u, e))
    d1 = (peak ** 2 - u ** 2) / (2 * accel)
    d2 = (peak ** 2 - e ** 2) / (2 * accel)
    t1 = (peak - u) / accel
    t2 = (peak - e) / accel
    if jerk:
        for k in range(n):
            pk, tk1, tk2, dk1, dk2 = _jerk_block(u[k], e[k], peak[k], accel[k], jer[k], L[k])
            peak[k], t1[k], t2[k], d1[k], d2[k] = pk, tk1, tk2, dk1, dk2
    cruise = np.maximum(0.0, L - d1 - d2)
    tc = np.where(peak > 0, cruise / np.where(peak > 0, peak, 1.0), 0.0)
    cols = dict(length=L, cap=cap, accel=accel, v_entry=u, v_peak=peak, v_exit=e,
                t_accel=t1, t_cruise=tc, t_decel=t2, d_accel=d1, d_decel=d2)
    return cols, corner[:n]


def _jerk_block(u, e, peak, a, j, L):
    """Peak speed, ramp times and ramp distances of one block under S-curve ramps."""
    t1 = _ramp_time(peak - u, a, j)
    t2 = _ramp_time(peak - e, a, j)
    d1 = 0.5 * (u + peak) * t1
    d2 = 0.5 * (e + peak) * t2
    if d1 + d2 > L:
        lo, hi = max(u, e), peak
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            t1m = _ramp_time(mid - u, a, j)
            t2m = _ramp_time(mid - e, a, j)
            if 0.5 * (u + mid) * t1m + 0.5 * (e + mid) * t2m > L:
                hi = mid
            else:
                lo = mid
        peak = lo
        t1 = _ramp_time(peak - u, a, j)
        t2 = _ramp_time(peak - e, a, j)
        d1 = 0.5 * (u + peak) * t1
        d2 = 0.5 * (e + peak) * t2
    return peak, t1, t2, d1, d2


def plan_feed_profile(toolpath, machine: MachineModel, ncu: NcuModel, jerk_limited: bool = False,
                      programmed_feed: float | None = None) -> FeedProfile:
    """Feed profile of every feed block; rapids are traversed at the axis speed cap.

    Contiguous feed blocks form a chain that starts and ends at rest.
    """
    blocks = _blocks(toolpath)
    F = programmed_feed
    if F is None:
        cut_feeds = [m.feed for m in toolpath.moves if m.kind == "cut" and m.feed]
        F = max(cut_feeds) if cut_feeds else 0.0
    chains, cur = [], []
    for b in blocks:
        if b[4] is None:
            if cur:
                chains.append(("feed", cur))
                cur = []
            chains.append(("rapid", [b]))
        else:
            cur.append(b)
    if cur:
        chains.append(("feed", cur))

    S, Tt, V, C = [], [], [], []
    segs, jl = [], []
    s_acc, t_acc = 0.0, 0.0
    for ci, (kind, chain) in enumerate(chains):
        if kind == "rapid":
            k, mk, a, b, _ = chain[0]
            L = float(np.linalg.norm(b - a))
            vr = _directional(machine.v_max, (b - a) / L)
            segs.append(SegmentPlan(k, mk, a, b, L, vr, vr, np.inf, vr, vr, vr, 0.0, L / vr, 0.0, 0.0, 0.0,
                                    s_acc, t_acc, ci, True))
            jl.append(np.inf)
            s_acc += L
            t_acc += L / vr
            continue
        cols, corners = _plan_chain(chain, machine, ncu, jerk_limited)
        time = cols["t_accel"] + cols["t_cruise"] + cols["t_decel"]
        cols["s0"] = s_acc + np.concatenate([[0.0], np.cumsum(cols["length"])[:-1]])
        cols["t0"] = t_acc + np.concatenate([[0.0], np.cumsum(time)[:-1]])
        names = list(cols)
        rows = zip(*(cols[c].tolist() for c in names))
        for (k, mk, a, b, f), row in zip(chain, rows):
            segs.append(SegmentPlan(k, mk, a, b, feed=f, chain=ci, rapid=False, **dict(zip(names, row))))
        jl.extend(corners.tolist())
        ss, tt, vv = _chain_samples(cols, time)
        S.append(ss.ravel())
        Tt.append(tt.ravel())
        V.append(vv.ravel())
        C.append(np.repeat([mk == "cut" for _, mk, *_ in chain], ss.shape[1]))
        s_acc += float(cols["length"].sum())
        t_acc += float(time.sum())
    if S:
        s, t, v, c = (np.concatenate(x) for x in (S, Tt, V, C))
        ok = ~np.isnan(s)
        s, t, v, c = s[ok], t[ok], v[ok], c[ok]
    else:
        s = t = v = np.zeros(0)
        c = np.zeros(0, dtype=bool)
    keep = np.ones(len(s), dtype=bool)
    if len(s) > 1:
        # drop samples that do not advance in both s and t (zero-length phases, shared block ends)
        keep[1:] = (np.diff(s) > 1e-12) & (np.diff(t) > 1e-15)
    return FeedProfile(s[keep], t[keep], v[keep], c[keep].astype(bool), tuple(segs),
                       np.asarray(jl), float(t_acc), F / 60.0, jerk_limited)


def _chain_samples(cols, time):
    """Sample ``(s, t, v)`` at block starts, along the ramps and at cruise ends.

    Returns ``(nblocks, 2*RAMP_SUBSAMPLES + 2)`` arrays padded with NaN for absent phases.
    """
    n = RAMP_SUBSAMPLES
    s0, t0, L = cols["s0"], cols["t0"], cols["length"]
    u, pk, e = cols["v_entry"], cols["v_peak"], cols["v_exit"]
    ta, tcr, td = cols["t_accel"], cols["t_cruise"], cols["t_decel"]
    da, dd = cols["d_accel"], cols["d_decel"]
    f = np.arange(1, n + 1) / n
    m = len(L)
    S = np.full((m, 2 * n + 2), np.nan)
    T = np.full_like(S, np.nan)
    V = np.full_like(S, np.nan)
    S[:, 0], T[:, 0], V[:, 0] = s0, t0, u
    den = np.where(u + pk > 0, u + pk, 1.0)
    acc = (ta > 0)[:, None]
    S[:, 1:n + 1] = np.where(acc, s0[:, None] + da[:, None] * (2 * u[:, None] * f + (pk - u)[:, None] * f * f)
                             / den[:, None], np.nan)
    T[:, 1:n + 1] = np.where(acc, t0[:, None] + f * ta[:, None], np.nan)
    V[:, 1:n + 1] = np.where(acc, u[:, None] + f * (pk - u)[:, None], np.nan)
    cr = tcr > 0
    S[:, n + 1] = np.where(cr, s0 + L - dd, np.nan)
    T[:, n + 1] = np.where(cr, t0 + ta + tcr, np.nan)
    V[:, n + 1] = np.where(cr, pk, np.nan)
    dec = (td > 0)[:, None]
    den = np.where(e + pk > 0, e + pk, 1.0)
    g = 1.0 - f
    back = dd[:, None] * (2 * e[:, None] * g + (pk - e)[:, None] * g * g) / den[:, None]
    S[:, n + 2:] = np.where(dec, (s0 + L)[:, None] - back, np.nan)
    T[:, n + 2:] = np.where(dec, (t0 + ta + tcr)[:, None] + f * td[:, None], np.nan)
    V[:, n + 2:] = np.where(dec, pk[:, None] + f * (e - pk)[:, None], np.nan)
    # the last sample of every block is its exact end
    last = (2 * n + 1) - np.argmax(~np.isnan(S[:, ::-1]), axis=1)
    S[np.arange(m), last] = s0 + L
    T[np.arange(m), last] = t0 + time
    V[np.arange(m), last] = e
    return S, T, V


def machining_time(profile: FeedProfile) -> float:
    return profile.total_time


# --------------------------------------------------------------------------------------
def detect_feed_loss(profile: FeedProfile, feed: float | None = None, threshold: float = 0.9,
                     resolution: float = 0.05) -> list[FeedLossArea]:
    """Intervals of cut blocks where the planned speed stays below ``threshold`` x feed.

    Only the cruise-eligible part of each chain counts: where accelerating from
    the chain start and braking to the chain end alone would still allow
    ``threshold`` x feed.  Intervals closer than 1 mm are merged.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    F = profile.programmed_feed if feed is None else feed
    if F <= 0 or not profile.segments:
        return []
    target = threshold * F
    segs = profile.segments
    chain = np.array([g.chain for g in segs])
    rapid = np.array([g.rapid for g in segs])
    is_cut = np.array([g.kind == "cut" for g in segs])
    L = np.array([g.length for g in segs])
    acc = np.array([g.accel if not g.rapid else 0.0 for g in segs])
    jl = np.asarray(profile.junction_limits, dtype=float)
    nxt = np.full(len(segs), np.inf)
    same = chain[1:] == chain[:-1]
    nxt[:-1] = np.where(same, jl[1:], np.inf)
    jl_both = np.minimum(jl, nxt)
    raw = []
    for ci in np.unique(chain[~rapid]):
        idx = np.flatnonzero((chain == ci) & ~rapid)
        A = np.concatenate([[0.0], np.cumsum(acc[idx] * L[idx])])
        total = A[-1]
        sel = is_cut[idx]
        if not sel.any():
            continue
        blk = idx[sel]
        m = np.maximum(2, np.ceil(L[blk] / resolution).astype(int) + 1)
        owner = np.repeat(np.arange(len(blk)), m)
        first = np.concatenate([[0], np.cumsum(m)[:-1]])
        frac = (np.arange(len(owner)) - first[owner]) / (m[owner] - 1)
        x = frac * L[blk][owner]
        g = [segs[i] for i in blk]
        u = np.array([h.v_entry for h in g])[owner]
        e = np.array([h.v_exit for h in g])[owner]
        pk = np.array([h.v_peak for h in g])[owner]
        a = acc[blk][owner]
        Lb = L[blk][owner]
        v = np.minimum(np.minimum(np.sqrt(np.maximum(u ** 2 + 2 * a * x, 0.0)),
                                  np.sqrt(np.maximum(e ** 2 + 2 * a * (Lb - x), 0.0))), pk)
        Ax = A[:-1][sel][owner] + a * x
        env = np.sqrt(np.maximum(2.0 * np.minimum(Ax, total - Ax), 0.0))
        low = (v < target * (1 - 1e-9)) & (env >= target)
        if not low.any():
            continue
        sx = np.array([h.s0 for h in g])[owner] + x
        for r0, r1 in _runs_split(low, owner):
            k = owner[r0]
            mk = first[k]
            lo = sx[r0 - 1] if r0 > mk else sx[r0]
            hi = sx[r1 + 1] if r1 < mk + m[k] - 1 else sx[r1]
            if hi - lo <= 1e-9:
                continue
            i = blk[k]
            cause = "corner" if jl_both[i] < target else (
                "short_blocks" if segs[i].cap < target else "acceleration")
            raw.append([lo, hi, float(v[r0:r1 + 1].min() / F), cause])
    raw.sort(key=lambda r: r[0])
    merged = []
    for r in raw:
        if merged and r[0] - merged[-1][1] < LOSS_MERGE_GAP:
            last = merged[-1]
            last[1] = max(last[1], r[1])
            if r[2] < last[2]:
                last[2] = r[2]
            last[3] = _cause_rank(last[3], r[3])
        else:
            merged.append(list(r))
    return [FeedLossArea(float(a), float(b), float(r), c) for a, b, r, c in merged]


def _cause_rank(a, b):
    order = ("corner", "short_blocks", "acceleration")
    return a if order.index(a) <= order.index(b) else b


def _runs_split(mask, owner):
    """``(start, end)`` index runs of True in ``mask`` that stay within one owner block."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return []
    brk = np.ones(len(m) + 1, dtype=bool)
    brk[1:-1] = (m[1:] != m[:-1]) | (owner[1:] != owner[:-1])
    edges = np.flatnonzero(brk)
    return [(int(a), int(b) - 1) for a, b in zip(edges[:-1], edges[1:]) if m[a]]


def feed_loss_length(areas) -> float:
    return float(sum(a.length for a in areas))
