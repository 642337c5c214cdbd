"""Die model: surfaces, technology parameters and tools, plus sampling and machinability."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DieModelError
from .geometry import ZAXIS, slope_deg
from .surfaces import Blend, Surface, surface_from_dict

DEFAULT_RESOLUTION = 33
UNDERCUT_TOL = 1e-6


@dataclass(frozen=True)
class Technology:
    extraction_direction: tuple = (0.0, 0.0, 1.0)
    slope_angle: float = 3.0
    target_scallop: float = 0.01
    programmed_feed: float = 5000.0
    clearance_z: float = 50.0
    flat_tol: float = 1.0
    steep_band: float = 5.0
    ruling_tilt_threshold: float = 15.0

    def __post_init__(self):
        d = np.asarray(self.extraction_direction, dtype=float)
        if d.shape != (3,):
            raise DieModelError("technology: extraction_direction must be a 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise DieModelError(f"technology: extraction_direction is not unit length (norm {np.linalg.norm(d):.9g})")
        if np.linalg.norm(d - ZAXIS) > 1e-9:
            raise DieModelError("technology: extraction direction must be +Z (3-axis machining, tool axis +Z)")
        if not 0.0 < self.slope_angle < 90.0:
            raise DieModelError("technology: slope_angle must lie in (0, 90) degrees")
        if not self.target_scallop > 0.0:
            raise DieModelError("technology: target_scallop must be > 0")
        if not self.programmed_feed > 0.0:
            raise DieModelError("technology: programmed_feed must be > 0")
        object.__setattr__(self, "extraction_direction", tuple(float(x) for x in d))

    @property
    def steep_lower(self) -> float:
        """Lower slope bound of the steep (flank) band, degrees."""
        return 90.0 - self.slope_angle - self.steep_band

    def to_dict(self) -> dict:
        return {"extraction_direction": list(self.extraction_direction), "slope_angle": self.slope_angle,
                "target_scallop": self.target_scallop, "programmed_feed": self.programmed_feed,
                "clearance_z": self.clearance_z, "flat_tol": self.flat_tol, "steep_band": self.steep_band,
                "ruling_tilt_threshold": self.ruling_tilt_threshold}


@dataclass(frozen=True)
class Tool:
    id: str
    shape: str
    cutting_radius: float
    body_radius: float
    overall_length: float
    engagement: float = 0.5

    def __post_init__(self):
        if self.shape not in ("ball_end", "flat_end"):
            raise DieModelError(f"tool {self.id}: shape must be ball_end or flat_end")
        if not self.cutting_radius > 0:
            raise DieModelError(f"tool {self.id}: cutting_radius must be > 0")
        if self.body_radius < self.cutting_radius:
            raise DieModelError(f"tool {self.id}: body_radius must be >= cutting_radius")
        if not self.overall_length > 0:
            raise DieModelError(f"tool {self.id}: overall_length must be > 0")
        if not 0.0 < self.engagement <= 1.0:
            raise DieModelError(f"tool {self.id}: engagement must be in (0, 1]")

    @property
    def diameter(self) -> float:
        return 2.0 * self.cutting_radius

    @classmethod
    def from_dict(cls, d: dict) -> "Tool":
        try:
            return cls(id=str(d["id"]), shape=d["shape"], cutting_radius=float(d["cutting_radius"]),
                       body_radius=float(d.get("body_radius", d["cutting_radius"])),
                       overall_length=float(d.get("overall_length", 50.0)),
                       engagement=float(d.get("engagement", 0.5)))
        except KeyError as exc:
            raise DieModelError(f"tool entry missing field {exc}") from exc

    def to_dict(self) -> dict:
        return {"id": self.id, "shape": self.shape, "cutting_radius": self.cutting_radius,
                "body_radius": self.body_radius, "overall_length": self.overall_length,
                "engagement": self.engagement}


@dataclass(frozen=True, eq=False)
class DieModel:
    surfaces: tuple
    technology: Technology = field(default_factory=Technology)
    explicit_adjacency: tuple = ()

    def __post_init__(self):
        surfaces = tuple(self.surfaces)
        ids = [s.id for s in surfaces]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise DieModelError(f"duplicate surface ids: {dup}")
        by_id = {s.id: s for s in surfaces}
        resolved = []
        for s in surfaces:
            if isinstance(s, Blend):
                for a in s.adjacent:
                    if a not in by_id:
                        raise DieModelError(f"blend {s.id} references missing surface {a!r}")
                    if isinstance(by_id[a], Blend):
                        raise DieModelError(f"blend {s.id} must be adjacent to non-blend surfaces, got {a!r}")
                if not s.resolved:
                    s = s.resolve(by_id[s.adjacent[0]], by_id[s.adjacent[1]])
            resolved.append(s)
        for a, b in self.explicit_adjacency:
            for x in (a, b):
                if x not in by_id:
                    raise DieModelError(f"adjacency override references missing surface {x!r}")
        object.__setattr__(self, "surfaces", tuple(resolved))
        object.__setattr__(self, "explicit_adjacency", tuple(tuple(p) for p in self.explicit_adjacency))
        object.__setattr__(self, "_by_id", {s.id: s for s in resolved})

    def surface(self, sid: str) -> Surface:
        return self._by_id[sid]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.surfaces]

    def to_dict(self) -> dict:
        d = {"surfaces": [s.to_dict() for s in self.surfaces], "technology": self.technology.to_dict()}
        if self.explicit_adjacency:
            d["adjacency"] = [list(p) for p in self.explicit_adjacency]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"


def parse_die_model(document) -> DieModel:
    """Build a :class:`DieModel` from JSON text or an already-decoded mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise DieModelError(f"die model is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise DieModelError("die model must be a JSON object")
    surfaces = document.get("surfaces")
    if not isinstance(surfaces, list):
        raise DieModelError("die model: 'surfaces' must be a list")
    if not surfaces:
        raise DieModelError("die model: 'surfaces' is empty")
    tech = document.get("technology")
    if not isinstance(tech, dict):
        raise DieModelError("die model: 'technology' object missing")
    known = set(Technology.__dataclass_fields__)
    unknown = set(tech) - known
    if unknown:
        raise DieModelError(f"technology: unknown fields {sorted(unknown)}")
    try:
        technology = Technology(**{k: (tuple(v) if k == "extraction_direction" else float(v))
                                   for k, v in tech.items()})
    except (TypeError, ValueError) as exc:
        raise DieModelError(f"technology: {exc}") from exc
    adjacency = document.get("adjacency", [])
    if not isinstance(adjacency, list) or any(not isinstance(p, list) or len(p) != 2 for p in adjacency):
        raise DieModelError("die model: 'adjacency' must be a list of id pairs")
    return DieModel(tuple(surface_from_dict(s) for s in surfaces), technology,
                    tuple(tuple(str(x) for x in p) for p in adjacency))


def load_die_model(path) -> DieModel:
    with open(path, encoding="utf-8") as fh:
        return parse_die_model(fh.read())


# --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SampleGrid:
    surface_id: str
    u: np.ndarray
    v: np.ndarray
    points: np.ndarray      # (nu, nv, 3)
    normals: np.ndarray     # (nu, nv, 3)
    slopes: np.ndarray      # (nu, nv) degrees
    mask: np.ndarray        # (nu, nv) True where the sample lies on the surface

    def valid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.points[self.mask], self.normals[self.mask], self.slopes[self.mask]


def _mesh_area(surface: Surface) -> float:
    m = surface.tessellate(max_edge=1e9)
    v = m.vertices[m.triangles]
    return float(0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum())


def sample_surface(surface: Surface, resolution: int = DEFAULT_RESOLUTION) -> SampleGrid:
    """Rectangular ``resolution x resolution`` sampling of the parameter domain (endpoints included)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if _mesh_area(surface) <= 1e-12:
        raise DieModelError(f"surface {surface.id}: degenerate (zero area)")
    u0, u1, v0, v1 = surface.domain()
    U = np.linspace(u0, u1, resolution)
    V = np.linspace(v0, v1, resolution)
    UU, VV = np.meshgrid(U, V, indexing="ij")
    P, N = surface.evaluate(UU, VV)
    mask = surface.contains(UU, VV)
    if not mask.any():
        raise DieModelError(f"surface {surface.id}: no samples fall on the surface")
    return SampleGrid(surface.id, U, V, P, N, slope_deg(N), mask)


def _critical_slopes(surface: Surface, resolution: int) -> np.ndarray:
    g = sample_surface(surface, resolution)
    out = [g.slopes[g.mask]]
    ku, kv = surface.knots_u(), surface.knots_v()
    for uu, vv in ((ku, g.v), (g.u, kv)):
        UU, VV = np.meshgrid(uu, vv, indexing="ij")
        m = surface.contains(UU, VV)
        out.append(slope_deg(surface.evaluate(UU, VV)[1])[m])
    if surface.kind in ("extruded", "ruled", "blend", "revolved"):
        # segment midpoints carry the one-sided normals of polyline-based surfaces
        mid = 0.5 * (ku[:-1] + ku[1:])
        UU, VV = np.meshgrid(mid, g.v, indexing="ij")
        out.append(slope_deg(surface.evaluate(UU, VV)[1]).ravel())
    return np.concatenate([np.ravel(o) for o in out])


def slope_range(surface: Surface, resolution: int = DEFAULT_RESOLUTION) -> tuple[float, float]:
    s = _critical_slopes(surface, resolution)
    return float(s.min()), float(s.max())


def slope_stats(surface: Surface, resolution: int = DEFAULT_RESOLUTION) -> dict:
    g = sample_surface(surface, resolution)
    lo, hi = slope_range(surface, resolution)
    return {"min": lo, "max": hi, "mean": float(g.slopes[g.mask].mean())}


@dataclass(frozen=True)
class MachinabilityReport:
    direction: tuple
    undercuts: dict     # surface id -> (n, 3) array of offending sample points

    @property
    def machinable(self) -> bool:
        return not self.undercuts

    def describe(self) -> str:
        if self.machinable:
            return "machinable along +Z"
        parts = []
        for sid, pts in self.undercuts.items():
            p = np.round(pts[0], 4).tolist()
            parts.append(f"surface {sid}: {len(pts)} undercut sample(s), e.g. at {p}")
        return "; ".join(parts)


def check_machinability(die: DieModel, resolution: int = DEFAULT_RESOLUTION) -> MachinabilityReport:
    """Report sample points whose outward normal points below the horizon (not reachable from +Z)."""
    undercuts = {}
    for s in die.surfaces:
        g = sample_surface(s, resolution)
        pts, nrm, _ = g.valid()
        bad = nrm[:, 2] < -UNDERCUT_TOL
        if bad.any():
            undercuts[s.id] = pts[bad]
    return MachinabilityReport(die.technology.extraction_direction, undercuts)
