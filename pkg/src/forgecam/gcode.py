"""Reader for the G-code subset written by :func:`forgecam.toolpath.export_gcode`.

Accepted: ``G0``/``G1`` with any of ``X Y Z F`` (modal), comments in
parentheses or after ``;``, line numbers ``N..``, the modal codes ``G17 G21
G90 G94``, and ``M``/``S``/``T`` words, which are ignored.  Everything else,
arcs in particular, is rejected with the offending line number.
"""
from __future__ import annotations

import re

import numpy as np

from .die_model import Tool
from .errors import GcodeParseError
from .geometry import Polyline
from .toolpath import Move, Toolpath

_WORD = re.compile(r"([A-Za-z])\s*([-+]?(?:\d+\.?\d*|\.\d+))")
_IGNORED_G = {17, 21, 90, 94}
PLACEHOLDER_TOOL = Tool("imported", "ball_end", 1.0, 1.0, 1.0)


def _strip_comments(line: str) -> str:
    line = line.split(";", 1)[0]
    return re.sub(r"\([^)]*\)", " ", line)


def parse_gcode(text: str, tool: Tool | None = None) -> Toolpath:
    """Parse G-code text into a toolpath of rapid (``G0``) and cut (``G1``) moves.

    The machine starts at the origin.  Consecutive blocks of one motion mode form
    one move.
    """
    pos = np.zeros(3)
    mode = None
    feed = None
    runs = []           # [mode, feed, points]
    for no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comments(raw).strip()
        if not line:
            continue
        if "(" in line or ")" in line:
            raise GcodeParseError("unbalanced parenthesis", no)
        words = _WORD.findall(line)
        if re.sub(r"\s+", "", _WORD.sub("", line)):
            raise GcodeParseError(f"cannot read {raw.strip()!r}", no)
        target = pos.copy()
        moved = False
        for letter, value in words:
            letter = letter.upper()
            v = float(value)
            if letter == "G":
                if v in (0.0, 1.0):
                    mode = int(v)
                elif v in _IGNORED_G:
                    continue
                else:
                    raise GcodeParseError(f"G{value} is outside the supported subset (G0, G1)", no)
            elif letter in "XYZ":
                target["XYZ".index(letter)] = v
                moved = True
            elif letter == "F":
                if v <= 0:
                    raise GcodeParseError("feed must be positive", no)
                feed = v
            elif letter in "NMST":
                continue
            else:
                raise GcodeParseError(f"unsupported word {letter}{value}", no)
        if not moved:
            continue
        if mode is None:
            raise GcodeParseError("motion without a preceding G0 or G1", no)
        if mode == 1 and feed is None:
            raise GcodeParseError("G1 before any feed rate F", no)
        if np.linalg.norm(target - pos) <= 1e-12:
            continue
        key = (mode, None if mode == 0 else feed)
        if runs and runs[-1][0] == key and np.allclose(runs[-1][1][-1], pos):
            runs[-1][1].append(target.copy())
        else:
            runs.append((key, [pos.copy(), target.copy()]))
        pos = target
    moves = []
    for (m, f), pts in runs:
        if m == 0:
            moves.append(Move("link", Polyline(np.asarray(pts))))
        else:
            moves.append(Move("cut", Polyline(np.asarray(pts)), feed=f))
    return Toolpath(tuple(moves), tool or PLACEHOLDER_TOOL, "imported", "one_way", "gcode")


def load_gcode(path, tool: Tool | None = None) -> Toolpath:
    with open(path, encoding="utf-8") as fh:
        return parse_gcode(fh.read(), tool)
