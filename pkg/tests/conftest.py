import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from canyonsim.citymodel import BuildingFootprint, CityModel
from canyonsim.geodesy import GeodeticOrigin
from canyonsim.satellites import FixedSatellite

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CONFIGS = ROOT / "configs"

# eight-satellite sky used throughout the tests
SKY8_AZIMUTH = (2.93, 3.39, 5.56, 0.23, 4.02, 1.38, 2.23, 0.65)
SKY8_ELEVATION = (0.78, 0.32, 1.02, 0.90, 0.47, 0.26, 1.09, 0.38)

HK_ORIGIN = GeodeticOrigin.from_degrees(22.3016, 114.1795, 0.0)


def box(bid, e0, n0, e1, n1, height):
    return BuildingFootprint(bid, [(e0, n0), (e1, n0), (e1, n1), (e0, n1)], height)


def sky8_satellites(nominal_range=2.0e7):
    return [FixedSatellite(i + 1, a, e, nominal_range)
            for i, (a, e) in enumerate(zip(SKY8_AZIMUTH, SKY8_ELEVATION))]


def unit_from_angles(az, el):
    return np.array([math.sin(az) * math.cos(el), math.cos(az) * math.cos(el), math.sin(el)])


@pytest.fixture
def origin():
    return HK_ORIGIN


@pytest.fixture
def empty_city():
    return CityModel(HK_ORIGIN, ())


@pytest.fixture
def canyon_walls():
    """Receiver at (0, 0, 2) between a wall at east = 10 and one at east = -5."""
    return CityModel(HK_ORIGIN, (
        box("wall-a", 10.0, -100.0, 12.0, 100.0, 30.0),
        box("wall-b", -7.0, -100.0, -5.0, 100.0, 30.0),
    ))


def random_boxes(rng, n, extent=500.0):
    out = []
    for i in range(n):
        e0, n0 = rng.uniform(-extent, extent, 2)
        w, d = rng.uniform(2.0, 40.0, 2)
        out.append(box(f"b{i:03d}", e0, n0, e0 + w, n0 + d, rng.uniform(3.0, 120.0)))
    return CityModel(HK_ORIGIN, tuple(out))


def random_rays(rng, n, extent=550.0):
    from canyonsim.raycast import Ray
    rays = []
    for _ in range(n):
        o = (*rng.uniform(-extent, extent, 2), rng.uniform(0.0, 60.0))
        v = rng.normal(size=3)
        v[2] = abs(v[2]) * rng.choice([1.0, -0.2])
        rays.append(Ray(o, tuple(v / np.linalg.norm(v))))
    return rays


def grazing_rays(b):
    """Rays running along, through the corners of, and just beside each wall of ``b``."""
    from canyonsim.raycast import Ray
    v = b.vertices
    rays = []
    for k in range(len(v)):
        p, q = v[k], v[(k + 1) % len(v)]
        u = (q - p) / np.linalg.norm(q - p)
        normal = np.array([u[1], -u[0]])
        for z in (0.0, b.height * 0.5, b.height, b.height + 1e-9):
            for off in (0.0, 1e-9, -1e-9, 1e-6):
                start = p - 5.0 * u + off * normal
                rays.append(Ray((*start, z), (u[0], u[1], 0.0)))
            # diagonally through the corner vertex
            d = u + normal
            d = d / np.linalg.norm(d)
            start = p - 5.0 * d
            rays.append(Ray((*start, z), (d[0], d[1], 0.0)))
        # straight down the wall plane from above
        mid = 0.5 * (p + q)
        rays.append(Ray((*mid, b.height + 10.0), (0.0, 0.0, -1.0)))
        rays.append(Ray((*p, b.height + 10.0), (0.0, 0.0, -1.0)))
        # climbing along the wall plane
        s = math.sqrt(0.5)
        rays.append(Ray((*(p - 3.0 * u), 0.0), (u[0] * s, u[1] * s, s)))
    return rays


def scenario(model, receiver=(0.0, 0.0, 2.0), noise=False, **kw):
    from canyonsim.channel import OUNoiseConfig, ReceiverConfig
    from canyonsim.harness import ScenarioConfig, Trajectory

    traj = receiver if isinstance(receiver, Trajectory) else Trajectory.static(receiver)
    kw.setdefault("receiver_cfg", ReceiverConfig(noise=OUNoiseConfig(theta=0.1, sigma=0.5),
                                                 noise_enabled=noise))
    kw.setdefault("initial_position", (0.0, 0.0, 0.0))
    return ScenarioConfig(city_model=model, fixed_satellites=tuple(sky8_satellites()),
                          receiver=traj, **kw)


def slab_entry(origin, direction, lo, hi):
    """Distance at which a ray enters an axis-aligned box, or None."""
    t0, t1 = 0.0, math.inf
    for k in range(3):
        if direction[k] == 0.0:
            if not lo[k] <= origin[k] <= hi[k]:
                return None
            continue
        a = (lo[k] - origin[k]) / direction[k]
        b = (hi[k] - origin[k]) / direction[k]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    return t0 if t0 <= t1 else None


def box_oracle_visibility(boxes, rx, az, el, max_range=5000.0):
    """LOS_CLEAR / MULTIPATH / BLOCKED for axis-aligned boxes (e0, n0, e1, n1, h)."""
    def hit(direction):
        ts = [slab_entry(rx, direction, (e0, n0, 0.0), (e1, n1, h)) for e0, n0, e1, n1, h in boxes]
        return any(t is not None and t < max_range for t in ts)

    if not hit(unit_from_angles(az, el)):
        return "LOS_CLEAR"
    return "MULTIPATH" if hit(unit_from_angles(az + math.pi, el)) else "BLOCKED"


def cofactor_inverse(m):
    """4x4 inverse by explicit cofactor expansion."""
    def det(a):
        if len(a) == 1:
            return a[0][0]
        return sum((-1) ** j * a[0][j] * det([row[:j] + row[j + 1:] for row in a[1:]])
                   for j in range(len(a)))

    rows = [list(map(float, r)) for r in m]
    full = det(rows)
    n = len(rows)
    inv = np.empty((n, n))
    for i, j in itertools.product(range(n), range(n)):
        minor = [r[:j] + r[j + 1:] for k, r in enumerate(rows) if k != i]
        inv[j, i] = (-1) ** (i + j) * det(minor) / full
    return inv


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
