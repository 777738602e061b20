"""Ray casting against extruded building prisms.

Two query paths share one exact ray/prism routine:

* :func:`cast_ray` loops over every building (the reference path);
* :class:`GridIndex` bins footprints into a uniform 2D grid and only tests
  buildings in cells the ray's ground track crosses.

Both reduce candidate hits with the same total order
``(distance, building id, face order)``, so they agree bit for bit.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

from canyonsim.citymodel import ROOF, CityModel
from canyonsim.constants import DEFAULT_MAX_RANGE

# Within one prism a later face must be closer by more than this (relative)
# to win, so a ray through a shared vertical edge lands on the lower index.
_EDGE_TIE = 1e-12


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self) -> None:
        o = tuple(float(c) for c in self.origin)
        d = tuple(float(c) for c in self.direction)
        if len(o) != 3 or len(d) != 3:
            raise ValueError("ray origin and direction must be 3D")
        norm = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"ray direction must be unit length, got norm {norm!r}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    @classmethod
    def from_angles(cls, origin, azimuth: float, elevation: float) -> Ray:
        return cls(origin, direction_from_angles(azimuth, elevation))


@dataclass(frozen=True)
class RayHit:
    distance: float
    building_id: str
    face: int  # wall index, or ROOF

    @property
    def is_roof(self) -> bool:
        return self.face == ROOF


@dataclass(frozen=True)
class RayPairResult:
    """Line-of-sight and mirror-ray ranges; a missing hit reports ``max_range``."""

    r_los: float
    r_ref: float
    los_hit: Optional[RayHit]
    ref_hit: Optional[RayHit]
    max_range: float


def direction_from_angles(azimuth: float, elevation: float) -> tuple[float, float, float]:
    """Unit ENU vector; azimuth clockwise from north, elevation above the horizon."""
    ce = math.cos(elevation)
    d = (math.sin(azimuth) * ce, math.cos(azimuth) * ce, math.sin(elevation))
    n = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    return d[0] / n, d[1] / n, d[2] / n


class _Prism(NamedTuple):
    id: str
    height: float
    xs: tuple[float, ...]
    ys: tuple[float, ...]
    bounds: tuple[float, float, float, float]


_geom_cache: "weakref.WeakKeyDictionary[CityModel, tuple[_Prism, ...]]" = weakref.WeakKeyDictionary()


def _prisms(model: CityModel) -> tuple[_Prism, ...]:
    geoms = _geom_cache.get(model)
    if geoms is None:
        geoms = tuple(
            _Prism(b.id, float(b.height),
                   tuple(float(x) for x in b.vertices[:, 0]),
                   tuple(float(y) for y in b.vertices[:, 1]),
                   b.bounds())
            for b in model.buildings
        )
        _geom_cache[model] = geoms
    return geoms


def _point_in_polygon(px: float, py: float, xs, ys) -> bool:
    inside = False
    n = len(xs)
    j = n - 1
    for i in range(n):
        yi, yj = ys[i], ys[j]
        if (yi > py) != (yj > py):
            x_cross = xs[i] + (py - yi) * (xs[j] - xs[i]) / (yj - yi)
            if px < x_cross:
                inside = not inside
        j = i
    return inside


def _intersect_prism(p: _Prism, ox, oy, oz, dx, dy, dz, max_range):
    """Nearest (distance, face) of the ray with one prism, or None.

    Hits must lie strictly inside ``[0, max_range)`` so a returned range
    equal to ``max_range`` always means "nothing hit".
    """
    best_t = math.inf
    best_face = None
    xs, ys, h = p.xs, p.ys, p.height
    n = len(xs)
    for i in range(n):
        ax, ay = xs[i], ys[i]
        j = i + 1 if i + 1 < n else 0
        ex, ey = xs[j] - ax, ys[j] - ay
        denom = dx * ey - dy * ex
        if denom == 0.0:
            continue  # ray parallel to the wall plane
        wx, wy = ax - ox, ay - oy
        t = (wx * ey - wy * ex) / denom
        if t < 0.0 or t >= max_range:
            continue
        s = (wx * dy - wy * dx) / denom
        if s < 0.0 or s > 1.0:
            continue
        z = oz + t * dz
        if z < 0.0 or z > h:
            continue
        if best_face is None or t < best_t - _EDGE_TIE * (1.0 + best_t):
            best_t, best_face = t, i
    if dz != 0.0:
        t = (h - oz) / dz
        if 0.0 <= t < max_range and (best_face is None or t < best_t - _EDGE_TIE * (1.0 + best_t)):
            if _point_in_polygon(ox + t * dx, oy + t * dy, xs, ys):
                best_t, best_face = t, ROOF
    if best_face is None:
        return None
    return best_t, best_face


def _hit_key(t: float, prism: _Prism, face: int):
    return (t, prism.id, len(prism.xs) if face == ROOF else face)


def _nearest(prisms, candidates, ray: Ray, max_range: float) -> Optional[RayHit]:
    ox, oy, oz = ray.origin
    dx, dy, dz = ray.direction
    best = None
    best_key = None
    for k in candidates:
        p = prisms[k]
        hit = _intersect_prism(p, ox, oy, oz, dx, dy, dz, max_range)
        if hit is None:
            continue
        key = _hit_key(hit[0], p, hit[1])
        if best_key is None or key < best_key:
            best_key, best = key, (hit[0], p.id, hit[1])
    if best is None:
        return None
    return RayHit(*best)


def cast_ray(model: CityModel, ray: Ray, max_range: float = DEFAULT_MAX_RANGE) -> Optional[RayHit]:
    """Brute-force nearest hit over every wall and roof of ``model``."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    prisms = _prisms(model)
    return _nearest(prisms, range(len(prisms)), ray, max_range)


class GridIndex:
    """Uniform 2D grid over building footprints.

    Buildings are vertical prisms, so binning footprints in the ground plane
    loses nothing: any hit point projects into a cell the ray's ground track
    crosses. Cell membership and the track rasterization are both padded so
    rounding at cell borders cannot drop a candidate.
    """

    def __init__(self, model: CityModel, cell_size: Optional[float] = None):
        self.model = model
        self._prisms = _prisms(model)
        n = len(self._prisms)
        if n == 0:
            self.cell = 1.0
            self.nx = self.ny = 0
            self.cells = []
            self.x0 = self.y0 = 0.0
            self.top = 0.0
            return
        x0, y0, _, x1, y1, top = model.bbox
        self.x0, self.y0, self.top = x0, y0, top
        if cell_size is None:
            spans = [max(b[2] - b[0], b[3] - b[1]) for b in (p.bounds for p in self._prisms)]
            typical = sum(spans) / n
            area = max(x1 - x0, 1e-9) * max(y1 - y0, 1e-9)
            cell_size = max(typical, math.sqrt(area / n), 1e-6)
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.cell = float(cell_size)
        self.nx = max(1, math.ceil((x1 - x0) / self.cell))
        self.ny = max(1, math.ceil((y1 - y0) / self.cell))
        self.pad = 1e-6 * self.cell + 1e-9
        self.cells: list[list[int]] = [[] for _ in range(self.nx * self.ny)]
        for k, p in enumerate(self._prisms):
            bx0, by0, bx1, by1 = p.bounds
            c0, c1 = self._col(bx0 - self.pad), self._col(bx1 + self.pad)
            r0, r1 = self._row(by0 - self.pad), self._row(by1 + self.pad)
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    self.cells[r * self.nx + c].append(k)

    def _col(self, x: float) -> int:
        return min(self.nx - 1, max(0, math.floor((x - self.x0) / self.cell)))

    def _row(self, y: float) -> int:
        return min(self.ny - 1, max(0, math.floor((y - self.y0) / self.cell)))

    def candidates(self, ray: Ray, max_range: float) -> list[int]:
        """Indices of buildings whose cells the ray's ground track may touch."""
        if self.nx == 0:
            return []
        ox, oy, oz = ray.origin
        dx, dy, dz = ray.direction
        t_end = max_range
        if dz > 0.0:
            if oz > self.top:
                return []
            t_end = min(t_end, (self.top - oz) / dz)
        elif dz < 0.0 and oz < 0.0:
            return []
        x_a, y_a = ox, oy
        x_b, y_b = ox + t_end * dx, oy + t_end * dy
        pad = self.pad
        x_lo_grid, x_hi_grid = self.x0, self.x0 + self.nx * self.cell
        y_lo_grid, y_hi_grid = self.y0, self.y0 + self.ny * self.cell
        if (max(x_a, x_b) < x_lo_grid - pad or min(x_a, x_b) > x_hi_grid + pad
                or max(y_a, y_b) < y_lo_grid - pad or min(y_a, y_b) > y_hi_grid + pad):
            return []
        r0 = self._row(min(y_a, y_b) - pad)
        r1 = self._row(max(y_a, y_b) + pad)
        ddy = y_b - y_a
        found: set[int] = set()
        for r in range(r0, r1 + 1):
            ylo = self.y0 + r * self.cell - pad
            yhi = self.y0 + (r + 1) * self.cell + pad
            if ddy == 0.0:
                if not (ylo <= y_a <= yhi):
                    continue
                u0, u1 = 0.0, 1.0
            else:
                u0, u1 = (ylo - y_a) / ddy, (yhi - y_a) / ddy
                if u0 > u1:
                    u0, u1 = u1, u0
                u0, u1 = max(u0, 0.0), min(u1, 1.0)
                if u0 > u1:
                    continue
            xa = x_a + u0 * (x_b - x_a)
            xb = x_a + u1 * (x_b - x_a)
            c0 = self._col(min(xa, xb) - pad)
            c1 = self._col(max(xa, xb) + pad)
            base = r * self.nx
            for c in range(c0, c1 + 1):
                found.update(self.cells[base + c])
        return sorted(found)

    def cast_ray(self, ray: Ray, max_range: float = DEFAULT_MAX_RANGE) -> Optional[RayHit]:
        if not max_range > 0:
            raise ValueError("max_range must be positive")
        return _nearest(self._prisms, self.candidates(ray, max_range), ray, max_range)


def build_index(model: CityModel, cell_size: Optional[float] = None) -> GridIndex:
    return GridIndex(model, cell_size)


Caster = Union[CityModel, GridIndex]


def _cast(target: Caster, ray: Ray, max_range: float) -> Optional[RayHit]:
    if isinstance(target, GridIndex):
        return target.cast_ray(ray, max_range)
    return cast_ray(target, ray, max_range)


def cast_satellite_rays(target: Caster, receiver, azimuth: float, elevation: float,
                        max_range: float = DEFAULT_MAX_RANGE) -> RayPairResult:
    """Cast the line-of-sight ray and its mirror (azimuth + pi, same elevation).

    ``target`` is either a :class:`CityModel` (brute force) or a
    :class:`GridIndex`.
    """
    if not 0.0 <= elevation <= math.pi / 2:
        raise ValueError(f"elevation must lie in [0, pi/2], got {elevation}")
    los = _cast(target, Ray.from_angles(receiver, azimuth, elevation), max_range)
    ref = _cast(target, Ray.from_angles(receiver, azimuth + math.pi, elevation), max_range)
    return RayPairResult(
        r_los=max_range if los is None else los.distance,
        r_ref=max_range if ref is None else ref.distance,
        los_hit=los,
        ref_hit=ref,
        max_range=max_range,
    )
