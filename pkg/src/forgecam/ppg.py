"""Process planning: strategy per feature, blend processes, the two path
adaptations and operation sequencing."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bmfe import FeatureSet, blend_neighbors, extract_features
from .die_model import DieModel, Technology, check_machinability
from .errors import PlanningError, ToolpathError
from .geometry import Polyline, distance_to_polyline
from .perf_viewer import (FeedProfile, MachineModel, NcuModel, detect_feed_loss, feed_loss_length,
                          machining_time, plan_feed_profile)
from .slicing import HeightMap
from .topology import TopologyGraph, build_topology_graph
from .toolpath import (Toolpath, _meshes, along_generatrix, gouge_check, parallel_plane_sweep, spiral_surface,
                       stepover_for_scallop, zlevel_contour)

log = logging.getLogger(__name__)

KIND_ORDER = ("HP", "CP", "FC", "FF", "B")
ADAPTATIONS = ("cavity", "feedloss")

_BLEND_CELLS = {
    ("HP", "CP"): "no_existence",
    ("HP", "FC"): "contoured",
    ("HP", "FF"): "curve_3d",
    ("CP", "FC"): "either",
    ("CP", "FF"): "curve_3d",
    ("FC", "FF"): "either",
}

PATH_DIRECTIONS = {
    "parallel_plane": "plane_containing_axis",
    "zlevel_contour": "plane_perpendicular_to_axis",
    "spiral": "plane_perpendicular_to_axis",
    "along_generatrix": "curve_3d",
}


def blend_process(kind_a: str, kind_b: str) -> str:
    """Machining process of a blend joining features of the two kinds (symmetric)."""
    for k in (kind_a, kind_b):
        if k not in KIND_ORDER[:4]:
            raise PlanningError(f"blend neighbour kind must be one of HP, CP, FC, FF, not {k!r}")
    if kind_a == kind_b:
        return "either"
    key = tuple(sorted((kind_a, kind_b), key=KIND_ORDER.index))
    return _BLEND_CELLS[key]


# --------------------------------------------------------------------------------------
@dataclass(frozen=True)
class Strategy:
    name: str               # toolpath strategy
    path_direction: str
    sweeping: str
    tool_id: str

    def to_dict(self) -> dict:
        return {"name": self.name, "path_direction": self.path_direction, "sweeping": self.sweeping,
                "tool_id": self.tool_id}


@dataclass(frozen=True, eq=False)
class MachiningOperation:
    feature_id: str
    kind: str
    strategy: Strategy
    toolpath: Toolpath
    profile: FeedProfile
    time_s: float
    feed_loss: tuple
    z_max: float
    notes: tuple = ()

    @property
    def retracts(self) -> int:
        return self.toolpath.retract_count

    @property
    def feed_loss_length(self) -> float:
        return feed_loss_length(self.feed_loss)

    def with_note(self, note: str) -> "MachiningOperation":
        return replace(self, notes=self.notes + (note,))

    def to_dict(self) -> dict:
        return {"feature_id": self.feature_id, "kind": self.kind, "strategy": self.strategy.to_dict(),
                "time_s": round(self.time_s, 6), "retracts": self.retracts,
                "cut_length_mm": round(self.toolpath.cut_length, 6),
                "feed_loss": [a.to_dict() for a in self.feed_loss],
                "feed_loss_length_mm": round(self.feed_loss_length, 6), "notes": list(self.notes)}


@dataclass(frozen=True, eq=False)
class ProcessPlan:
    operations: tuple
    notes: tuple = ()

    @property
    def total_time_s(self) -> float:
        return float(sum(op.time_s for op in self.operations))

    @property
    def retract_total(self) -> int:
        return int(sum(op.retracts for op in self.operations))

    @property
    def feed_loss_total(self) -> float:
        return float(sum(op.feed_loss_length for op in self.operations))

    def get(self, feature_id: str) -> MachiningOperation:
        for op in self.operations:
            if op.feature_id == feature_id:
                return op
        raise KeyError(feature_id)

    def census(self) -> dict:
        """``{feature_id: (strategy name, sweeping)}``."""
        return {op.feature_id: (op.strategy.name, op.strategy.sweeping) for op in self.operations}

    def to_dict(self) -> dict:
        return {"operations": [op.to_dict() for op in self.operations],
                "total_time_s": round(self.total_time_s, 6), "retract_total": self.retract_total,
                "feed_loss_total_mm": round(self.feed_loss_total, 6), "notes": list(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def report(self) -> str:
        lines = [f"{'#':>3} {'feature':<8} {'kind':<4} {'strategy':<17} {'sweeping':<17} {'tool':<6} "
                 f"{'time_s':>10} {'retracts':>8} {'losses':>6} {'loss_mm':>9}"]
        for k, op in enumerate(self.operations, 1):
            lines.append(f"{k:>3} {op.feature_id:<8} {op.kind:<4} {op.strategy.name:<17} "
                         f"{op.strategy.sweeping:<17} {op.strategy.tool_id:<6} {op.time_s:>10.3f} "
                         f"{op.retracts:>8d} {len(op.feed_loss):>6d} {op.feed_loss_length:>9.3f}")
            if op.feed_loss:
                spans = " ".join(f"[{a.s_start:.3f}, {a.s_end:.3f}]" for a in op.feed_loss)
                lines.append(f"      feed loss (s mm): {spans}")
            for n in op.notes:
                lines.append(f"      note: {n}")
        lines.append(f"total time {self.total_time_s:.3f} s, retracts {self.retract_total}, "
                     f"feed-loss length {self.feed_loss_total:.3f} mm")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------------------
@dataclass
class PlanContext:
    """Everything the planning steps share."""

    die: DieModel
    features: FeatureSet
    graph: TopologyGraph
    tools: dict                 # feature kind -> Tool
    machine: MachineModel
    ncu: NcuModel
    jerk_limited: bool = False
    feed_loss_threshold: float = 0.9
    candidates: dict = field(default_factory=dict)

    @property
    def technology(self) -> Technology:
        return self.die.technology


def simulate(toolpath: Toolpath, ctx: PlanContext) -> tuple:
    """``(profile, time_s, feed-loss areas)`` of a toolpath."""
    prof = plan_feed_profile(toolpath, ctx.machine, ctx.ncu, ctx.jerk_limited,
                             programmed_feed=ctx.technology.programmed_feed)
    loss = detect_feed_loss(prof, threshold=ctx.feed_loss_threshold)
    return prof, machining_time(prof), tuple(loss)


def _operation(feature, toolpath: Toolpath, ctx: PlanContext, notes=()) -> MachiningOperation:
    prof, t, loss = simulate(toolpath, ctx)
    strat = Strategy(toolpath.strategy, PATH_DIRECTIONS[toolpath.strategy], toolpath.sweeping, toolpath.tool_id)
    return MachiningOperation(feature.id, feature.kind, strat, toolpath, prof, t, loss,
                              float(feature.z_extent[1]), tuple(notes))


def select_tools(features: FeatureSet, die: DieModel, tools) -> dict:
    """One tool per feature kind: a flat tool for HP, otherwise the largest gouge-free ball."""
    tools = list(tools)
    flats = sorted((t for t in tools if t.shape == "flat_end"), key=lambda t: (-t.cutting_radius, t.id))
    balls = sorted((t for t in tools if t.shape == "ball_end"), key=lambda t: (-t.cutting_radius, t.id))
    kinds = sorted({f.kind for f in features.features}, key=KIND_ORDER.index)
    out = {}
    for kind in kinds:
        if kind == "HP":
            if not flats:
                raise PlanningError("no tool of shape flat_end")
            out[kind] = flats[0]
            continue
        if not balls:
            raise PlanningError("no tool of shape ball_end")
        members = [f for f in features.features if f.kind == kind]
        chosen = None
        for tool in balls:
            if all(not gouge_check(f, die, tool) for f in members):
                chosen = tool
                break
        if chosen is None:
            chosen = balls[-1]
            log.warning("no gouge-free ball for %s features; using the smallest, %s", kind, chosen.id)
        out[kind] = chosen
    return out


def assign_strategy(feature, ctx: PlanContext) -> MachiningOperation:
    """Basic toolpath of a feature from its kind (blends from the kinds of their neighbours)."""
    tool = ctx.tools[feature.kind]
    tech = ctx.technology
    die = ctx.die
    if feature.kind == "HP":
        return _operation(feature, spiral_surface(feature, die, tool, tech), ctx)
    if feature.kind == "CP":
        return _operation(feature, parallel_plane_sweep(feature, die, tool, tech, "one_way"), ctx)
    if feature.kind == "FC":
        return _operation(feature, zlevel_contour(feature, die, tool, tech), ctx)
    if feature.kind == "FF":
        return _operation(feature, along_generatrix(feature, die, tool, tech), ctx)
    if feature.kind != "B":
        raise PlanningError(f"feature {feature.id}: unknown kind {feature.kind!r}")

    neigh = blend_neighbors(feature, die, ctx.features)
    if len(neigh) != 2:
        raise PlanningError(f"blend {feature.id} joins {len(neigh)} features, expected 2")
    ka, kb = (ctx.features.get(n).kind for n in neigh)
    proc = blend_process(ka, kb)
    label = f"blend between {neigh[0]} ({ka}) and {neigh[1]} ({kb}): {proc}"
    if proc == "no_existence":
        raise PlanningError(f"{label} - this blend should not exist; check the model")
    if proc == "contoured":
        return _operation(feature, zlevel_contour(feature, die, tool, tech), ctx, [label])
    if proc == "curve_3d":
        return _operation(feature, along_generatrix(feature, die, tool, tech), ctx, [label])
    cands = [_operation(feature, zlevel_contour(feature, die, tool, tech), ctx),
             _operation(feature, along_generatrix(feature, die, tool, tech), ctx)]
    ctx.candidates[feature.id] = {c.strategy.name: c.time_s for c in cands}
    best = pick_fastest(cands)
    times = ", ".join(f"{c.strategy.name} {c.time_s:.3f} s" for c in cands)
    return replace(best, notes=(f"{label}; simulated {times}; kept {best.strategy.name}",))


def pick_fastest(candidates):
    """Candidate with the lowest machining time (first one wins ties)."""
    return min(candidates, key=lambda c: c.time_s)


# --------------------------------------------------------------------------------------
def adapt_closed_cavity(operations, ctx: PlanContext) -> list:
    """Spiral from the centre for floors enclosed by a closed cavity junction."""
    targets = sorted({e.target for e in ctx.graph.edges
                      if e.relation.verb == "leans_on" and e.relation.junction_type == "cavity"
                      and e.relation.openness == "closed"})
    out = []
    for op in operations:
        if op.feature_id not in targets or op.kind not in ("HP", "CP"):
            out.append(op)
            continue
        f = ctx.features.get(op.feature_id)
        try:
            tp = spiral_surface(f, ctx.die, ctx.tools[f.kind], ctx.technology, centre_out=True)
        except ToolpathError as exc:
            log.warning("feature %s: centre-out spiral failed (%s); keeping %s", f.id, exc, op.strategy.name)
            out.append(op.with_note(f"closed cavity: spiral failed, kept {op.strategy.name}"))
            continue
        if tp.retract_count < op.retracts:
            new = _operation(f, tp, ctx, op.notes + (
                f"closed cavity: centre-out spiral, retracts {op.retracts} -> {tp.retract_count}",))
            out.append(new)
        else:
            out.append(op.with_note(f"closed cavity: spiral would not reduce retracts ({tp.retract_count} "
                                    f"vs {op.retracts}); unchanged"))
    return out


def profile_positions(profile: FeedProfile, s: np.ndarray) -> np.ndarray:
    """Tool positions at arc lengths ``s`` along the simulated path."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s0, L, start, end = profile.segment_arrays
    k = np.clip(np.searchsorted(s0, s, side="right") - 1, 0, len(s0) - 1)
    f = np.where(L[k] > 0, np.clip((s - s0[k]) / np.where(L[k] > 0, L[k], 1.0), 0.0, 1.0), 0.0)
    return start[k] + f[:, None] * (end[k] - start[k])


def _xy_dist(points: np.ndarray, poly: Polyline) -> np.ndarray:
    q = poly.points.copy()
    q[:, 2] = 0.0
    p = np.column_stack([points[:, :2], np.zeros(len(points))])
    return distance_to_polyline(p, q)


def _area_points(profile, area, step=0.25):
    n = max(2, int(np.ceil(area.length / step)) + 1)
    return profile_positions(profile, np.linspace(area.s_start, area.s_end, n))


def adapt_feed_loss(operations, ctx: PlanContext) -> list:
    """Hand the feed-loss strips of floors next to followed flanks over to those flanks.

    The floor passes are cut back from each junction with an FF feature and the
    flank's generatrix passes are prolonged over the released strip.  The change
    is kept only if the combined time and feed-loss length both go down.
    """
    ops = {op.feature_id: op for op in operations}
    tech = ctx.technology
    for cp_id in sorted(k for k, op in ops.items() if op.kind == "CP"):
        op = ops[cp_id]
        if op.strategy.name != "parallel_plane" or not op.feed_loss:
            continue
        tool = op.toolpath.tool
        step = stepover_for_scallop(tool, tech.target_scallop)
        # tip positions of a ball sit up to R away (in XY) from the contact point
        band = 2.0 * step + tool.cutting_radius
        junctions = []
        for e in ctx.graph.edges:
            if e.relation.kind != "junction" or cp_id not in (e.source, e.target):
                continue
            other = e.source if e.target == cp_id else e.target
            if ctx.features.get(other).kind == "FF" and e.relation.boundary is not None:
                junctions.append((other, e.relation.boundary))
        if not junctions:
            continue
        reach = {}
        for area in op.feed_loss:
            pts = _area_points(op.profile, area)
            for ff, poly in junctions:
                d = _xy_dist(pts, poly)
                if d.min() <= band:
                    reach[ff] = max(reach.get(ff, 0.0), float(d.max()))
        if not reach:
            ops[cp_id] = op.with_note("feed loss: no loss area next to a followed-flank junction; unchanged")
            continue
        offset = max(reach.values()) + step
        ff_ids = sorted(reach)
        exclude = [(poly, offset) for ff, poly in junctions if ff in reach]
        cp_feature = ctx.features.get(cp_id)
        hm = HeightMap(_meshes(cp_feature, ctx.die))
        try:
            new_cp_tp = parallel_plane_sweep(cp_feature, ctx.die, tool, tech, op.strategy.sweeping,
                                             exclude=exclude)
            new_ff_tps = {ff: along_generatrix(ctx.features.get(ff), ctx.die, ops[ff].toolpath.tool, tech,
                                               extension=(offset, hm)) for ff in ff_ids}
        except ToolpathError as exc:
            ops[cp_id] = op.with_note(f"feed loss: reassignment failed ({exc}); unchanged")
            continue
        new_cp = _operation(cp_feature, new_cp_tp, ctx, op.notes)
        new_ffs = {ff: _operation(ctx.features.get(ff), tp, ctx, ops[ff].notes) for ff, tp in new_ff_tps.items()}
        before_t = op.time_s + sum(ops[ff].time_s for ff in ff_ids)
        after_t = new_cp.time_s + sum(o.time_s for o in new_ffs.values())
        before_l = op.feed_loss_length + sum(ops[ff].feed_loss_length for ff in ff_ids)
        after_l = new_cp.feed_loss_length + sum(o.feed_loss_length for o in new_ffs.values())
        summary = (f"time {before_t:.3f} -> {after_t:.3f} s, feed-loss length {before_l:.3f} -> {after_l:.3f} mm")
        who = ", ".join(ff_ids)
        if after_t < before_t and after_l < before_l:
            ops[cp_id] = new_cp.with_note(f"feed loss: {offset:.3f} mm strip along {who} reassigned; {summary}")
            for ff, o in new_ffs.items():
                ops[ff] = o.with_note(f"feed loss: passes extended {offset:.3f} mm over {cp_id}")
        else:
            ops[cp_id] = op.with_note(f"feed loss: reassignment to {who} reverted; {summary}")
    return [ops[op.feature_id] for op in operations]


# --------------------------------------------------------------------------------------
def sequence_operations(operations, ctx: PlanContext | None = None, features: FeatureSet | None = None,
                        die: DieModel | None = None) -> ProcessPlan:
    """Order operations by tool, kind, descending top height and id; blends follow their neighbours.

    Tools are ranked by the earliest kind they cut (in HP, CP, FC, FF, B order).
    """
    operations = list(operations)
    if ctx is not None:
        features, die = ctx.features, ctx.die
    rank = {}
    for op in operations:
        k = KIND_ORDER.index(op.kind)
        tid = op.strategy.tool_id
        rank[tid] = min(rank.get(tid, k), k)
    ordered = sorted(operations, key=lambda op: (rank[op.strategy.tool_id], op.strategy.tool_id,
                                                 KIND_ORDER.index(op.kind), -round(op.z_max, 9), op.feature_id))
    present = {op.feature_id for op in operations}
    needs = {}
    if features is not None and die is not None:
        for op in ordered:
            if op.kind == "B":
                needs[op.feature_id] = {n for n in blend_neighbors(features.get(op.feature_id), die, features)
                                        if n in present}
    out, done, pending = [], set(), []
    for op in ordered:
        pending.append(op)
        progress = True
        while progress:
            progress = False
            for p in list(pending):
                if needs.get(p.feature_id, set()) <= done:
                    out.append(p)
                    done.add(p.feature_id)
                    pending.remove(p)
                    progress = True
                    break
    assert not pending, "cyclic sequencing constraint"
    return ProcessPlan(tuple(out))


# --------------------------------------------------------------------------------------
def generate_plan(die: DieModel, tools, machine: MachineModel, ncu: NcuModel, resolution: int | None = None,
                  jerk_limited: bool = False, disable=(), feed_loss_threshold: float = 0.9,
                  features: FeatureSet | None = None, graph: TopologyGraph | None = None,
                  eps: float = 0.01) -> ProcessPlan:
    """Machinability check, decomposition, strategies, adaptations and sequencing."""
    for a in disable:
        if a not in ADAPTATIONS:
            raise PlanningError(f"unknown adaptation {a!r}; expected one of {', '.join(ADAPTATIONS)}")
    kw = {} if resolution is None else {"resolution": resolution}
    report = check_machinability(die, **kw)
    if not report.machinable:
        raise PlanningError(report.describe())
    if features is None:
        features = extract_features(die, eps=eps, **kw)
    if graph is None:
        graph = build_topology_graph(die, features, eps=eps, index=features.index)
    _reject_intersections(graph)
    ctx = PlanContext(die, features, graph, select_tools(features, die, tools), machine, ncu, jerk_limited,
                      feed_loss_threshold)
    ops = [assign_strategy(f, ctx) for f in features.features]
    notes = []
    if "cavity" not in disable:
        before = sum(op.retracts for op in ops)
        ops = adapt_closed_cavity(ops, ctx)
        after = sum(op.retracts for op in ops)
        assert after <= before, "closed-cavity adaptation increased retractions"
        notes.append(f"adapt_closed_cavity: retract_total {before} -> {after} (non-increasing)")
    if "feedloss" not in disable:
        before = sum(op.time_s for op in ops)
        ops = adapt_feed_loss(ops, ctx)
        after = sum(op.time_s for op in ops)
        assert after <= before + 1e-9, "feed-loss adaptation increased machining time"
        notes.append(f"adapt_feed_loss: total_time {before:.3f} -> {after:.3f} s (non-increasing)")
    plan = sequence_operations(ops, ctx)
    return replace(plan, notes=tuple(notes))


def _reject_intersections(graph: TopologyGraph):
    bad = [e for e in graph.edges if e.relation.verb == "is_in_intersection_with"]
    if bad:
        pairs = ", ".join(f"{e.source}/{e.target}" for e in bad)
        raise PlanningError(f"features intersect instead of meeting along a boundary: {pairs}")
