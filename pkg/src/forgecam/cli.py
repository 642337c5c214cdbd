"""``forgecam`` command line: decompose, plan and simulate."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .bmfe import extract_features
from .die_model import DEFAULT_RESOLUTION, DieModel, Tool, check_machinability, load_die_model
from .errors import DieModelError, ForgecamError
from .fixtures import default_machine, default_ncu, default_tools
from .gcode import load_gcode
from .perf_viewer import ConfigError, detect_feed_loss, load_machine, load_ncu, plan_feed_profile
from .ppg import ADAPTATIONS, generate_plan
from .toolpath import export_gcode
from .topology import build_topology_graph, export_graph_dot

log = logging.getLogger("forgecam")

# technology overrides accepted from the config file and their valid ranges
_TECH_RANGES = {
    "flat_tol": (0.0, 45.0),
    "steep_band": (0.0, 45.0),
    "ruling_tilt_threshold": (0.0, 90.0),
}


@dataclass
class RunConfig:
    die: Path | None = None
    machine: Path | None = None
    ncu: Path | None = None
    tools: Path | None = None
    output: Path | None = None
    resolution: int = DEFAULT_RESOLUTION
    flat_tol: float | None = None
    steep_band: float | None = None
    ruling_tilt_threshold: float | None = None
    feed_loss_threshold: float = 0.9
    eps: float = 0.01
    jerk_limited: bool = False
    disable: tuple = ()
    gcode: Path | None = None

    def validate(self) -> None:
        if self.resolution < 3:
            raise ConfigError("resolution must be at least 3")
        if not 0.0 < self.feed_loss_threshold < 1.0:
            raise ConfigError("feed-loss threshold must lie in (0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        for name, (lo, hi) in _TECH_RANGES.items():
            v = getattr(self, name)
            if v is not None and not lo <= v <= hi:
                raise ConfigError(f"{name}={v} outside [{lo}, {hi}]")
        bad = set(self.disable) - set(ADAPTATIONS)
        if bad:
            raise ConfigError(f"unknown adaptation(s) {sorted(bad)}")
        for name in ("die", "machine", "ncu", "tools", "gcode"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")


_PATHS = {"die", "machine", "ncu", "tools", "output", "gcode"}


def _read_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"config file: unknown keys {sorted(unknown)}")
    base = Path(path).parent
    out = {}
    for k, v in doc.items():
        if k in _PATHS and v is not None:
            p = Path(v)
            out[k] = p if p.is_absolute() else base / p
        elif k == "disable":
            out[k] = tuple(v)
        else:
            out[k] = v
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values = _read_config_file(args.config) if args.config else {}
    flags = {
        "die": args.die, "machine": args.machine, "ncu": args.ncu, "tools": args.tools,
        "output": args.output, "resolution": args.resolution, "flat_tol": args.flat_tol,
        "steep_band": args.steep_band, "ruling_tilt_threshold": args.ruling_tilt,
        "feed_loss_threshold": args.feed_loss_threshold, "eps": args.eps,
        "gcode": getattr(args, "gcode", None),
    }
    for k, v in flags.items():
        if v is not None:
            values[k] = Path(v) if k in _PATHS else v
    if args.profile is not None:
        values["jerk_limited"] = args.profile == "scurve"
    if args.no_adapt:
        values["disable"] = tuple(sorted(set(args.no_adapt)))
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------------------
def load_tools(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"tools file is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("tools")
    if not isinstance(doc, list):
        raise ConfigError("tools file must hold a list of tools (or {\"tools\": [...]})")
    return tuple(Tool.from_dict(d) for d in doc)


def _die(cfg: RunConfig) -> DieModel:
    if cfg.die is None:
        raise ConfigError("--die is required")
    die = load_die_model(cfg.die)
    overrides = {k: getattr(cfg, k) for k in _TECH_RANGES if getattr(cfg, k) is not None}
    if overrides:
        die = dataclasses.replace(die, technology=dataclasses.replace(die.technology, **overrides))
    return die


def _kinematics(cfg: RunConfig):
    machine = load_machine(cfg.machine) if cfg.machine else default_machine()
    ncu = load_ncu(cfg.ncu) if cfg.ncu else default_ncu()
    return machine, ncu


def _output_dir(cfg: RunConfig, command: str) -> Path:
    out = cfg.output
    if out is None:
        out = Path("runs") / f"{time.strftime('%Y%m%d-%H%M%S')}-{command}-{os.getpid()}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


# --------------------------------------------------------------------------------------
def cmd_decompose(cfg: RunConfig) -> int:
    die = _die(cfg)
    report = check_machinability(die, cfg.resolution)
    if not report.machinable:
        raise DieModelError(report.describe())
    features = extract_features(die, resolution=cfg.resolution, eps=cfg.eps)
    graph = build_topology_graph(die, features, eps=cfg.eps, index=features.index)
    out = _output_dir(cfg, "decompose")
    _write(out / "features.json", features.to_json())
    _write(out / "topology.dot", export_graph_dot(graph))
    print(f"{len(features.features)} features -> {out}")
    return 0


def cmd_plan(cfg: RunConfig) -> int:
    die = _die(cfg)
    machine, ncu = _kinematics(cfg)
    tools = load_tools(cfg.tools) if cfg.tools else default_tools()
    plan = generate_plan(die, tools, machine, ncu, resolution=cfg.resolution,
                         jerk_limited=cfg.jerk_limited, disable=cfg.disable,
                         feed_loss_threshold=cfg.feed_loss_threshold, eps=cfg.eps)
    out = _output_dir(cfg, "plan")
    _write(out / "plan.json", plan.to_json())
    _write(out / "plan.txt", plan.report())
    for k, op in enumerate(plan.operations, 1):
        stem = f"{k:02d}_{op.feature_id}"
        _write(out / "gcode" / f"{stem}.nc", export_gcode(op.toolpath))
        _write(out / "profiles" / f"{stem}.csv", op.profile.to_csv())
    print(f"{len(plan.operations)} operations, {plan.total_time_s:.3f} s -> {out}")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.gcode is None:
        raise ConfigError("a G-code file is required")
    machine, ncu = _kinematics(cfg)
    tp = load_gcode(cfg.gcode)
    profile = plan_feed_profile(tp, machine, ncu, jerk_limited=cfg.jerk_limited)
    areas = detect_feed_loss(profile, threshold=cfg.feed_loss_threshold)
    out = _output_dir(cfg, "simulate")
    _write(out / "profile.csv", profile.to_csv())
    report = {"machining_time_s": round(profile.total_time, 6),
              "feed_loss_threshold": cfg.feed_loss_threshold,
              "feed_loss": [a.to_dict() for a in areas],
              "feed_loss_length_mm": round(sum(a.length for a in areas), 6)}
    _write(out / "feed_loss.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{profile.total_time:.6f} s, {len(areas)} feed-loss areas -> {out}")
    return 0


COMMANDS = {"decompose": cmd_decompose, "plan": cmd_plan, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--die", help="die model JSON")
    common.add_argument("--machine", help="machine model JSON")
    common.add_argument("--ncu", help="NCU model JSON")
    common.add_argument("--tools", help="tool list JSON")
    common.add_argument("--output", help="output directory (default: run-stamped under ./runs)")
    common.add_argument("--resolution", type=int, help="surface samples per direction")
    common.add_argument("--profile", choices=("trapezoid", "scurve"))
    common.add_argument("--no-adapt", action="append", choices=ADAPTATIONS, default=[])
    common.add_argument("--feed-loss-threshold", type=float)
    common.add_argument("--flat-tol", type=float, help="degrees")
    common.add_argument("--steep-band", type=float, help="degrees")
    common.add_argument("--ruling-tilt", type=float, help="degrees")
    common.add_argument("--eps", type=float, help="coincidence tolerance, mm")

    parser = argparse.ArgumentParser(prog="forgecam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="extract features and the topology graph")
    sub.add_parser("plan", parents=[common], help="build the process plan and G-code")
    sim = sub.add_parser("simulate", parents=[common], help="feed profile of a G-code file")
    sim.add_argument("gcode", nargs="?", help="G-code file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("FORGECAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ForgecamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
