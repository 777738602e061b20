"""Satellite positions from Keplerian elements or fixed azimuth/elevation lists.

Ephemeris files are JSON: ``{"satellites": [{"prn": 1, "a": ..., "e": ...,
"i": ..., "raan": ..., "argp": ..., "m0": ..., "t0": ...}, ...]}`` with
lengths in metres, angles in radians and times in seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from canyonsim.constants import DEFAULT_NOMINAL_RANGE, MU_EARTH, OMEGA_EARTH
from canyonsim.geodesy import (
    GeodeticOrigin,
    ecef_to_local,
    enu_rotation,
    geodetic_to_ecef,
    local_to_ecef,
)
from canyonsim.raycast import direction_from_angles

TWO_PI = 2.0 * math.pi


class KeplerConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KeplerianEphemeris:
    prn: int
    semi_major_axis: float
    eccentricity: float
    inclination: float
    raan: float
    arg_perigee: float
    mean_anomaly: float
    epoch: float = 0.0

    def __post_init__(self) -> None:
        if not self.semi_major_axis > 0:
            raise ValueError(f"PRN {self.prn}: semi-major axis must be positive")
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError(f"PRN {self.prn}: eccentricity must lie in [0, 1)")

    @property
    def mean_motion(self) -> float:
        return math.sqrt(MU_EARTH / self.semi_major_axis ** 3)

    @property
    def period(self) -> float:
        return TWO_PI / self.mean_motion


@dataclass(frozen=True)
class FixedSatellite:
    prn: int
    azimuth: float
    elevation: float
    nominal_range: float = DEFAULT_NOMINAL_RANGE

    def __post_init__(self) -> None:
        if not 0.0 <= self.elevation <= math.pi / 2:
            raise ValueError(f"PRN {self.prn}: elevation must lie in [0, pi/2]")
        if not self.nominal_range > 0:
            raise ValueError(f"PRN {self.prn}: nominal range must be positive")


@dataclass(frozen=True)
class SatelliteState:
    """Satellite position plus its direction as seen from one receiver.

    ``azimuth``/``elevation`` are angles of the receiver-to-satellite vector
    in the local frame the positions are expressed in, i.e. the frame the
    rays are cast in.
    """

    prn: int
    position_ecef: np.ndarray
    position_local: np.ndarray
    azimuth: float
    elevation: float


def solve_kepler(mean_anomaly: float, eccentricity: float, max_iter: int = 50) -> float:
    """Eccentric anomaly E with E - e sin E = M.

    Newton steps inside a bracket ``[M - e, M + e]`` (after reducing M to
    ``[-pi, pi)``); any step that leaves the bracket is replaced by bisection.
    """
    if not 0.0 <= eccentricity < 1.0:
        raise ValueError("eccentricity must lie in [0, 1)")
    e = eccentricity
    k = math.floor((mean_anomaly + math.pi) / TWO_PI)
    m = mean_anomaly - k * TWO_PI
    if e == 0.0:
        return mean_anomaly
    lo, hi = m - e, m + e
    x = m + e * math.sin(m) if e < 0.8 else (math.pi if m > 0 else -math.pi)
    x = min(max(x, lo), hi)
    tiny = 4.0 * 2.220446049250313e-16 * max(1.0, abs(m))
    for _ in range(max_iter):
        f = x - e * math.sin(x) - m
        if abs(f) <= tiny:
            break
        if f > 0.0:
            hi = x
        else:
            lo = x
        step = x - f / (1.0 - e * math.cos(x))
        if not lo <= step <= hi:
            step = 0.5 * (lo + hi)
        # Newton can ping-pong between neighbouring floats near the root
        if abs(step - x) <= tiny:
            x = step
            break
        x = step
    else:
        raise KeplerConvergenceError(f"no convergence for M={mean_anomaly}, e={e}")
    if abs(x - e * math.sin(x) - m) >= 1e-12:
        raise KeplerConvergenceError(f"residual too large for M={mean_anomaly}, e={e}")
    return x + k * TWO_PI


def _rotation_perifocal_to_inertial(raan: float, inc: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])


def kepler_state(eph: KeplerianEphemeris, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-body inertial position and velocity at time ``t``."""
    a, e = eph.semi_major_axis, eph.eccentricity
    n = eph.mean_motion
    big_e = solve_kepler(eph.mean_anomaly + n * (t - eph.epoch), e)
    cos_e, sin_e = math.cos(big_e), math.sin(big_e)
    root = math.sqrt(1.0 - e * e)
    r = a * (1.0 - e * cos_e)
    pos_pf = np.array([a * (cos_e - e), a * root * sin_e, 0.0])
    vel_pf = (math.sqrt(MU_EARTH * a) / r) * np.array([-sin_e, root * cos_e, 0.0])
    rot = _rotation_perifocal_to_inertial(eph.raan, eph.inclination, eph.arg_perigee)
    return rot @ pos_pf, rot @ vel_pf


def propagate_kepler(eph: KeplerianEphemeris, t: float, earth_rotation: bool = True) -> np.ndarray:
    """Satellite position at ``t``.

    The inertial frame coincides with ECEF at the ephemeris epoch; with
    ``earth_rotation`` the Earth's turn since then, ``OMEGA_EARTH * (t - t0)``,
    is removed to give ECEF.
    """
    pos, _ = kepler_state(eph, t)
    if not earth_rotation:
        return pos
    theta = OMEGA_EARTH * (t - eph.epoch)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * pos[0] + s * pos[1], -s * pos[0] + c * pos[1], pos[2]])


def _angles(enu) -> tuple[float, float]:
    e, n, u = (float(c) for c in enu)
    horiz = math.hypot(e, n)
    if horiz <= 1e-12 * math.sqrt(horiz * horiz + u * u):
        return 0.0, math.copysign(math.pi / 2, u)
    az = math.atan2(e, n) % TWO_PI
    return az, math.atan2(u, horiz)


def azimuth_elevation(sat_ecef, lat: float, lon: float, alt: float = 0.0) -> tuple[float, float]:
    """Topocentric azimuth (clockwise from north, [0, 2pi)) and elevation of a satellite."""
    rel = np.asarray(sat_ecef, dtype=float) - geodetic_to_ecef(lat, lon, alt)
    return _angles(enu_rotation(lat, lon) @ rel)


def satellite_state(prn: int, sat_ecef, receiver_local, origin: GeodeticOrigin) -> SatelliteState:
    local = ecef_to_local(sat_ecef, origin)
    az, el = _angles(local - np.asarray(receiver_local, dtype=float))
    return SatelliteState(prn, np.asarray(sat_ecef, dtype=float), local, az, el)


def fixed_constellation(sats, receiver_local, origin: GeodeticOrigin | None = None) -> list[SatelliteState]:
    """Place each satellite at its nominal range along (azimuth, elevation) from the receiver."""
    if origin is None:
        origin = GeodeticOrigin(0.0, 0.0, 0.0)
    rx = np.asarray(receiver_local, dtype=float)
    states = []
    for s in sats:
        local = rx + s.nominal_range * np.array(direction_from_angles(s.azimuth, s.elevation))
        states.append(SatelliteState(s.prn, local_to_ecef(local, origin), local,
                                     s.azimuth % TWO_PI, s.elevation))
    return states


def ephemeris_constellation(ephemerides, t: float, receiver_local, origin: GeodeticOrigin,
                            earth_rotation: bool = True) -> list[SatelliteState]:
    return [
        satellite_state(eph.prn, propagate_kepler(eph, t, earth_rotation), receiver_local, origin)
        for eph in ephemerides
    ]


def load_ephemerides(path) -> list[KeplerianEphemeris]:
    doc = json.loads(Path(path).read_text())
    out = []
    for rec in doc["satellites"]:
        out.append(KeplerianEphemeris(
            prn=int(rec["prn"]),
            semi_major_axis=float(rec["a"]),
            eccentricity=float(rec["e"]),
            inclination=float(rec["i"]),
            raan=float(rec["raan"]),
            arg_perigee=float(rec["argp"]),
            mean_anomaly=float(rec["m0"]),
            epoch=float(rec.get("t0", 0.0)),
        ))
    prns = [e.prn for e in out]
    if len(set(prns)) != len(prns):
        raise ValueError(f"{path}: duplicate PRNs")
    return out
