"""
Writing example input files
===========================

Regenerate the JSON inputs under docs/data that the command line consumes.
"""
import json
from pathlib import Path

from forgecam.fixtures import (default_machine, default_ncu, default_tools, fixture_die, pocket_die,
                               single_plane_die)

out = Path(__file__).resolve().parent.parent / "docs" / "data"
out.mkdir(parents=True, exist_ok=True)

for name, die in (("fixture_die", fixture_die()), ("pocket_die", pocket_die()),
                  ("single_plane_die", single_plane_die())):
    (out / f"{name}.json").write_text(die.to_json(), encoding="utf-8")

docs = {"machine": default_machine().to_dict(), "ncu": default_ncu().to_dict(),
        "tools": {"tools": [t.to_dict() for t in default_tools()]}}
for name, doc in docs.items():
    (out / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

print("wrote", ", ".join(sorted(p.name for p in out.iterdir())))
