"""WGS-84 geodetic, ECEF and local ENU conversions.

All angles are radians. The local frame is East-North-Up anchored at a
:class:`GeodeticOrigin`; it is the single working frame for geometry,
ray casting and positioning.

ECEF coordinates are ~6.4e6 m, so differencing them in float64 costs about
1e-9 m. The local-frame conversions therefore carry ECEF intermediates in
``np.longdouble`` (80-bit on x86-64) and round to float64 only at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from canyonsim.constants import WGS84_A, WGS84_E2


@dataclass(frozen=True)
class GeodeticOrigin:
    """Anchor of a local ENU frame (latitude/longitude in radians, altitude in metres)."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.latitude) <= math.pi / 2:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not abs(self.longitude) <= math.pi:
            raise ValueError(f"longitude out of range: {self.longitude}")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, alt_m: float = 0.0) -> GeodeticOrigin:
        return cls(math.radians(lat_deg), math.radians(lon_deg), float(alt_m))

    @cached_property
    def ecef(self) -> np.ndarray:
        return geodetic_to_ecef(self.latitude, self.longitude, self.altitude)

    @cached_property
    def rotation(self) -> np.ndarray:
        return enu_rotation(self.latitude, self.longitude)

    @cached_property
    def _ecef_ld(self) -> np.ndarray:
        return _geodetic_to_ecef(self.latitude, self.longitude, self.altitude, np.longdouble)

    @cached_property
    def _rotation_ld(self) -> np.ndarray:
        return _enu_rotation(self.latitude, self.longitude, np.longdouble)


def _geodetic_to_ecef(lat, lon, alt, dtype) -> np.ndarray:
    lat, lon, alt = dtype(lat), dtype(lon), dtype(alt)
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    n = dtype(WGS84_A) / np.sqrt(1 - dtype(WGS84_E2) * sin_lat * sin_lat)
    return np.array([
        (n + alt) * cos_lat * np.cos(lon),
        (n + alt) * cos_lat * np.sin(lon),
        (n * (1 - dtype(WGS84_E2)) + alt) * sin_lat,
    ], dtype=dtype)


def _enu_rotation(lat, lon, dtype) -> np.ndarray:
    lat, lon = dtype(lat), dtype(lon)
    sl, cl = np.sin(lat), np.cos(lat)
    so, co = np.sin(lon), np.cos(lon)
    return np.array([
        [-so, co, 0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ], dtype=dtype)


def _ecef_to_geodetic(xyz, dtype):
    x, y, z = (dtype(c) for c in xyz)
    e2, a = dtype(WGS84_E2), dtype(WGS84_A)
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    if p == 0 and z == 0:
        raise ValueError("geodetic coordinates undefined at the Earth's centre")
    lat = np.arctan2(z, p * (1 - e2))
    tol = 4 * np.finfo(dtype).eps
    for _ in range(30):
        sin_lat = np.sin(lat)
        n = a / np.sqrt(1 - e2 * sin_lat * sin_lat)
        new_lat = np.arctan2(z + e2 * n * sin_lat, p)
        done = abs(new_lat - lat) <= tol
        lat = new_lat
        if done:
            break
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    # well conditioned at the poles, unlike p / cos(lat) - n
    alt = p * cos_lat + z * sin_lat - a * np.sqrt(1 - e2 * sin_lat * sin_lat)
    return float(lat), float(lon), float(alt)


def geodetic_to_ecef(lat: float, lon: float, alt: float) -> np.ndarray:
    return _geodetic_to_ecef(lat, lon, alt, np.float64)


def ecef_to_geodetic(xyz) -> tuple[float, float, float]:
    """Invert :func:`geodetic_to_ecef` by fixed-point iteration on latitude."""
    return _ecef_to_geodetic(xyz, np.longdouble)


def enu_rotation(lat: float, lon: float) -> np.ndarray:
    """Rotation matrix whose rows are the local East, North and Up axes in ECEF."""
    return _enu_rotation(lat, lon, np.float64)


def ecef_to_local(p_ecef, origin: GeodeticOrigin) -> np.ndarray:
    d = np.asarray(p_ecef, dtype=np.longdouble) - origin._ecef_ld
    return (origin._rotation_ld @ d).astype(np.float64)


def local_to_ecef(p_local, origin: GeodeticOrigin) -> np.ndarray:
    return _local_to_ecef_ld(p_local, origin).astype(np.float64)


def _local_to_ecef_ld(p_local, origin: GeodeticOrigin) -> np.ndarray:
    return origin._ecef_ld + origin._rotation_ld.T @ np.asarray(p_local, dtype=np.longdouble)


def geodetic_to_local(lat: float, lon: float, alt: float, origin: GeodeticOrigin) -> np.ndarray:
    """East/North/Up metres of a geodetic point relative to ``origin``."""
    if not abs(lat) <= math.pi / 2:
        raise ValueError(f"latitude out of range: {lat}")
    d = _geodetic_to_ecef(lat, lon, alt, np.longdouble) - origin._ecef_ld
    return (origin._rotation_ld @ d).astype(np.float64)


def local_to_geodetic(p_local, origin: GeodeticOrigin) -> tuple[float, float, float]:
    return _ecef_to_geodetic(_local_to_ecef_ld(p_local, origin), np.longdouble)
