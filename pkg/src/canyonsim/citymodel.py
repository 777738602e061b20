"""Building footprints extruded to vertical prisms in a local ENU frame.

Building-set files are JSON documents::

    {
      "origin": {"lat_deg": 22.3, "lon_deg": 114.17, "alt_m": 0.0},
      "buildings": [
        {"id": "tower-1", "height_m": 50.0,
         "footprint": [[lat_deg, lon_deg], ...]},
        {"id": "tower-2", "height_m": 30.0,
         "footprint_local_m": [[east, north], ...]}
      ]
    }

A building may give its footprint either geodetically or directly in local
metres. Prism bases sit on the ``up = 0`` plane of the origin's frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from canyonsim.geodesy import GeodeticOrigin, geodetic_to_local

ROOF = -1  # face index used for a roof hit; walls are numbered 0..n-1


class CityModelError(ValueError):
    """Raised for malformed building-set files or invalid footprints."""


def _signed_area(pts: list[tuple[float, float]]) -> float:
    s = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and \
       ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return ((d1 == 0 and _on_segment(q1, q2, p1)) or (d2 == 0 and _on_segment(q1, q2, p2))
            or (d3 == 0 and _on_segment(p1, p2, q1)) or (d4 == 0 and _on_segment(p1, p2, q2)))


def _is_simple(pts: list[tuple[float, float]]) -> bool:
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


def normalize_footprint(building_id: str, vertices) -> np.ndarray:
    """Collapse repeated vertices, drop a closing duplicate, validate and make CCW."""
    pts: list[tuple[float, float]] = []
    for v in vertices:
        if len(v) != 2:
            raise CityModelError(f"building {building_id!r}: vertex {v!r} is not 2D")
        p = (float(v[0]), float(v[1]))
        if not (math.isfinite(p[0]) and math.isfinite(p[1])):
            raise CityModelError(f"building {building_id!r}: non-finite vertex {v!r}")
        if not pts or pts[-1] != p:
            pts.append(p)
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    if len(pts) < 3:
        raise CityModelError(f"building {building_id!r}: footprint needs at least 3 distinct vertices")
    area = _signed_area(pts)
    if area == 0.0:
        raise CityModelError(f"building {building_id!r}: footprint has zero area")
    if not _is_simple(pts):
        raise CityModelError(f"building {building_id!r}: footprint is self-intersecting")
    if area < 0.0:
        pts.reverse()
    return np.array(pts, dtype=float)


@dataclass(frozen=True, eq=False)
class BuildingFootprint:
    """Vertical prism: CCW footprint (n, 2) in local metres from ``up = 0`` to ``height``."""

    id: str
    vertices: np.ndarray
    height: float

    def __post_init__(self) -> None:
        if not (self.height > 0 and math.isfinite(self.height)):
            raise CityModelError(f"building {self.id!r}: height must be positive, got {self.height}")
        verts = normalize_footprint(self.id, self.vertices)
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)

    @property
    def num_walls(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.vertices) + 1

    def bounds(self) -> tuple[float, float, float, float]:
        """(min_east, min_north, max_east, max_north)."""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


@dataclass(frozen=True, eq=False)
class CityModel:
    origin: GeodeticOrigin
    buildings: tuple[BuildingFootprint, ...] = ()
    bbox: tuple[float, float, float, float, float, float] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "buildings", tuple(self.buildings))
        seen = set()
        for b in self.buildings:
            if b.id in seen:
                raise CityModelError(f"duplicate building id {b.id!r}")
            seen.add(b.id)
        if self.buildings:
            allv = np.vstack([b.vertices for b in self.buildings])
            lo, hi = allv.min(axis=0), allv.max(axis=0)
            top = max(b.height for b in self.buildings)
            box = (float(lo[0]), float(lo[1]), 0.0, float(hi[0]), float(hi[1]), float(top))
        else:
            box = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        object.__setattr__(self, "bbox", box)

    def __len__(self) -> int:
        return len(self.buildings)

    def building(self, building_id: str) -> BuildingFootprint:
        for b in self.buildings:
            if b.id == building_id:
                return b
        raise KeyError(building_id)

    def to_dict(self) -> dict:
        """Serialize in the local-frame variant of the building-set format."""
        return {
            "origin": {
                "lat_deg": math.degrees(self.origin.latitude),
                "lon_deg": math.degrees(self.origin.longitude),
                "alt_m": self.origin.altitude,
            },
            "buildings": [
                {"id": b.id, "height_m": b.height, "footprint_local_m": b.vertices.tolist()}
                for b in self.buildings
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def city_model_from_dict(doc: dict) -> CityModel:
    try:
        o = doc["origin"]
        origin = GeodeticOrigin.from_degrees(o["lat_deg"], o["lon_deg"], o.get("alt_m", 0.0))
    except (KeyError, TypeError) as exc:
        raise CityModelError(f"missing or malformed origin: {exc}") from exc
    except ValueError as exc:
        raise CityModelError(str(exc)) from exc

    buildings = []
    for i, entry in enumerate(doc.get("buildings", [])):
        bid = str(entry.get("id", f"#{i}"))
        if "id" not in entry:
            raise CityModelError(f"building {bid!r}: missing id")
        try:
            height = float(entry["height_m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CityModelError(f"building {bid!r}: missing or invalid height_m") from exc
        if "footprint_local_m" in entry:
            verts = entry["footprint_local_m"]
        elif "footprint" in entry:
            verts = []
            for v in entry["footprint"]:
                if len(v) != 2:
                    raise CityModelError(f"building {bid!r}: vertex {v!r} is not [lat, lon]")
                enu = geodetic_to_local(math.radians(v[0]), math.radians(v[1]), origin.altitude, origin)
                verts.append((enu[0], enu[1]))
        else:
            raise CityModelError(f"building {bid!r}: no footprint given")
        buildings.append(BuildingFootprint(bid, verts, height))
    return CityModel(origin, tuple(buildings))


def load_city_model(path) -> CityModel:
    """Read and validate a building-set JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CityModelError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CityModelError(f"{path}: top level must be an object")
    return city_model_from_dict(doc)
