"""Scenario configuration, the epoch loop, record output and heat maps.

A scenario is a JSON document; relative paths resolve against the file's
directory. See ``configs/`` for the two shipped examples and the README for
the full field list.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from canyonsim.channel import (
    OUNoiseConfig,
    ReceiverConfig,
    Visibility,
    classify_visibility,
    epoch_measurements,
    multipath_offset,
    ou_initial_state,
)
from canyonsim.citymodel import CityModel, CityModelError, load_city_model
from canyonsim.constants import DEFAULT_NOMINAL_RANGE
from canyonsim.geodesy import local_to_geodetic
from canyonsim.raycast import build_index, cast_satellite_rays
from canyonsim.satellites import (
    FixedSatellite,
    KeplerianEphemeris,
    ephemeris_constellation,
    fixed_constellation,
    load_ephemerides,
)
from canyonsim.solver import SolverConfig, SolverError, compute_dop, solve_measurements


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped local-frame waypoints, linearly interpolated and clamped at the ends."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        if not self.times or len(self.times) != len(self.points):
            raise ConfigError("trajectory needs matching, non-empty times and points")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("trajectory timestamps must be strictly increasing")

    @classmethod
    def static(cls, point) -> Trajectory:
        return cls((0.0,), (tuple(float(c) for c in point),))

    def at(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0] or len(ts) == 1:
            return np.array(self.points[0])
        if t >= ts[-1]:
            return np.array(self.points[-1])
        k = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        a, b = np.array(self.points[k]), np.array(self.points[k + 1])
        return a + w * (b - a)


@dataclass(frozen=True)
class ScenarioConfig:
    city_model: CityModel
    fixed_satellites: Optional[tuple[FixedSatellite, ...]] = None
    ephemerides: Optional[tuple[KeplerianEphemeris, ...]] = None
    earth_rotation: bool = True
    start_time: float = 0.0
    receiver: Trajectory = Trajectory.static((0.0, 0.0, 0.0))
    epochs: int = 1
    dt: float = 1.0
    receiver_cfg: ReceiverConfig = ReceiverConfig()
    solver_cfg: SolverConfig = SolverConfig()
    initial_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial_clock: float = 0.0
    master_seed: int = 0
    output_path: Optional[Path] = None
    output_format: str = "jsonl"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if (self.fixed_satellites is None) == (self.ephemerides is None):
            raise ConfigError("exactly one satellite source (fixed or ephemeris) is required")
        if self.output_format not in ("jsonl", "csv"):
            raise ConfigError(f"unknown output format {self.output_format!r}")
        prns = self.prns
        if len(set(prns)) != len(prns):
            raise ConfigError("satellite PRNs must be unique")

    @property
    def prns(self) -> list[int]:
        src = self.fixed_satellites if self.fixed_satellites is not None else self.ephemerides
        return [s.prn for s in src]

    def noise_config(self) -> OUNoiseConfig:
        return replace(self.receiver_cfg.noise, dt=self.dt, seed=self.master_seed)


def _vec3(value, what: str) -> tuple[float, float, float]:
    try:
        v = tuple(float(c) for c in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a list of 3 numbers") from exc
    if len(v) != 3:
        raise ConfigError(f"{what} must be a list of 3 numbers")
    return v


def scenario_from_dict(doc: dict, base_dir=".") -> ScenarioConfig:
    base = Path(base_dir)
    try:
        city_path = base / doc["city_model"]
        city = load_city_model(city_path)

        sat_doc = doc["satellites"]
        mode = sat_doc.get("mode", "fixed")
        fixed = ephem = None
        start_time = float(sat_doc.get("start_time", 0.0))
        earth_rotation = bool(sat_doc.get("earth_rotation", True))
        if mode == "fixed":
            az, el = sat_doc["azimuth"], sat_doc["elevation"]
            if len(az) != len(el):
                raise ConfigError("azimuth and elevation lists differ in length")
            prns = sat_doc.get("prns", list(range(1, len(az) + 1)))
            if len(prns) != len(az):
                raise ConfigError("prns list length differs from the angle lists")
            rng = float(sat_doc.get("nominal_range", DEFAULT_NOMINAL_RANGE))
            fixed = tuple(FixedSatellite(int(p), float(a), float(e), rng) for p, a, e in zip(prns, az, el))
        elif mode == "ephemeris":
            ephem = tuple(load_ephemerides(base / sat_doc["path"]))
        else:
            raise ConfigError(f"unknown satellite mode {mode!r}")

        rx_doc = doc["receiver"]
        if "waypoints" in rx_doc:
            wps = rx_doc["waypoints"]
            receiver = Trajectory(tuple(float(w[0]) for w in wps),
                                  tuple(_vec3(w[1:], "waypoint") for w in wps))
        else:
            receiver = Trajectory.static(_vec3(rx_doc["position"], "receiver.position"))

        rc = doc.get("receiver_cfg", {})
        nz = rc.get("noise", {})
        noise = OUNoiseConfig(theta=float(nz.get("theta", 0.1)), mu=float(nz.get("mu", 0.0)),
                              sigma=float(nz.get("sigma", 0.5)))
        defaults = ReceiverConfig()
        receiver_cfg = ReceiverConfig(
            elevation_mask=float(rc.get("elevation_mask", defaults.elevation_mask)),
            max_range=float(rc.get("max_range", defaults.max_range)),
            clock_bias=float(rc.get("clock_bias", 0.0)),
            noise=noise,
            noise_enabled=bool(nz.get("enabled", True)),
            pseudorange_sigma=float(rc.get("pseudorange_sigma", 1.0)),
        )
        sv = doc.get("solver", {})
        solver_cfg = SolverConfig(epsilon=float(sv.get("epsilon", 1e-6)),
                                  max_iterations=int(sv.get("max_iterations", 20)))
        ig = doc.get("initial_guess", {})
        out = doc.get("output", {})
        out_path = out.get("path")
        return ScenarioConfig(
            city_model=city,
            fixed_satellites=fixed,
            ephemerides=ephem,
            earth_rotation=earth_rotation,
            start_time=start_time,
            receiver=receiver,
            epochs=int(doc.get("epochs", 1)),
            dt=float(doc.get("dt", 1.0)),
            receiver_cfg=receiver_cfg,
            solver_cfg=solver_cfg,
            initial_position=_vec3(ig.get("position", (0.0, 0.0, 0.0)), "initial_guess.position"),
            initial_clock=float(ig.get("clock_bias", 0.0)),
            master_seed=int(doc.get("master_seed", 0)),
            output_path=None if out_path is None else base / out_path,
            output_format=out.get("format", "jsonl"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, CityModelError, OSError) as exc:
        raise ConfigError(f"invalid scenario: {type(exc).__name__}: {exc}") from exc


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, path.parent)


@dataclass
class EpochRecord:
    timestamp: float
    truth: list[float]
    status: str  # "fix" or "no_fix"
    error: Optional[str]
    fix_local: Optional[list[float]]
    fix_geodetic: Optional[list[float]]  # lat_deg, lon_deg, alt_m
    clock_bias: Optional[float]
    converged: bool
    iterations: int
    dop: Optional[dict]
    prns: list[int]
    visibility: list[str]
    range_offset: list[float]
    noise: list[float]
    sats_blocked: list[int]
    num_vis_sat: int
    num_block_sat: int
    num_below_mask: int
    fix_error: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


CSV_FIELDS = [
    "timestamp", "status", "error", "converged", "iterations",
    "truth_east", "truth_north", "truth_up",
    "fix_east", "fix_north", "fix_up", "lat_deg", "lon_deg", "alt_m", "clock_bias_s",
    "gdop", "pdop", "hdop", "vdop", "tdop", "rating",
    "num_vis_sat", "num_block_sat", "num_below_mask", "sats_blocked",
    "range_offset", "noise", "fix_error",
]


def record_to_csv_row(rec: EpochRecord) -> dict:
    def pairs(values):
        return ";".join(f"{p}:{v!r}" for p, v in zip(rec.prns, values))

    fix = rec.fix_local or [None] * 3
    geo = rec.fix_geodetic or [None] * 3
    dop = rec.dop or {}
    return {
        "timestamp": rec.timestamp, "status": rec.status, "error": rec.error or "",
        "converged": int(rec.converged), "iterations": rec.iterations,
        "truth_east": rec.truth[0], "truth_north": rec.truth[1], "truth_up": rec.truth[2],
        "fix_east": fix[0], "fix_north": fix[1], "fix_up": fix[2],
        "lat_deg": geo[0], "lon_deg": geo[1], "alt_m": geo[2],
        "clock_bias_s": rec.clock_bias,
        "gdop": dop.get("gdop"), "pdop": dop.get("pdop"), "hdop": dop.get("hdop"),
        "vdop": dop.get("vdop"), "tdop": dop.get("tdop"), "rating": dop.get("rating"),
        "num_vis_sat": rec.num_vis_sat, "num_block_sat": rec.num_block_sat,
        "num_below_mask": rec.num_below_mask,
        "sats_blocked": ";".join(str(p) for p in rec.sats_blocked),
        "range_offset": pairs(rec.range_offset), "noise": pairs(rec.noise),
        "fix_error": rec.fix_error,
    }


def write_records(records, stream, fmt: str = "jsonl") -> int:
    n = 0
    if fmt == "jsonl":
        for rec in records:
            stream.write(rec.to_json() + "\n")
            n += 1
    elif fmt == "csv":
        writer = csv.DictWriter(stream, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(record_to_csv_row(rec))
            n += 1
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return n


class _Session:
    """Per-run state: geometry index, satellite source and per-PRN noise channels."""

    def __init__(self, cfg: ScenarioConfig, seed=None):
        self.cfg = cfg
        self.index = build_index(cfg.city_model)
        self.noise_cfg = cfg.noise_config()
        seed = cfg.master_seed if seed is None else seed
        self.noise_states = {prn: ou_initial_state(self.noise_cfg, prn, seed) for prn in cfg.prns}

    def satellites(self, t: float, receiver):
        cfg = self.cfg
        if cfg.fixed_satellites is not None:
            return fixed_constellation(cfg.fixed_satellites, receiver, cfg.city_model.origin)
        return ephemeris_constellation(cfg.ephemerides, t, receiver, cfg.city_model.origin,
                                       cfg.earth_rotation)

    def epoch(self, t: float, truth) -> EpochRecord:
        cfg = self.cfg
        rcfg = replace(cfg.receiver_cfg, noise=self.noise_cfg)
        sats = self.satellites(t, truth)
        meas = epoch_measurements(self.index, sats, truth, rcfg, self.noise_states)

        vis = [m.visibility for m in meas]
        num_vis = sum(v.usable for v in vis)
        blocked = [m.prn for m in meas if m.visibility is Visibility.BLOCKED]
        rec = EpochRecord(
            timestamp=t,
            truth=[float(c) for c in truth],
            status="no_fix",
            error=None,
            fix_local=None,
            fix_geodetic=None,
            clock_bias=None,
            converged=False,
            iterations=0,
            dop=None,
            prns=[m.prn for m in meas],
            visibility=[v.value for v in vis],
            range_offset=[m.multipath_offset for m in meas],
            noise=[m.noise for m in meas],
            sats_blocked=blocked,
            num_vis_sat=num_vis,
            num_block_sat=len(blocked),
            num_below_mask=sum(v is Visibility.BELOW_MASK for v in vis),
            fix_error=None,
        )
        try:
            fix = solve_measurements(meas, cfg.initial_position, cfg.initial_clock, cfg.solver_cfg)
            usable = [m.sat_position for m in meas if m.visibility.usable]
            dop = compute_dop(usable, fix.position, rcfg.pseudorange_sigma)
        except SolverError as exc:
            rec.error = type(exc).__name__
            return rec
        lat, lon, alt = local_to_geodetic(fix.position, cfg.city_model.origin)
        rec.status = "fix"
        rec.fix_local = [float(c) for c in fix.position]
        rec.fix_geodetic = [math.degrees(lat), math.degrees(lon), alt]
        rec.clock_bias = fix.clock_bias
        rec.converged = fix.converged
        rec.iterations = fix.iterations
        rec.dop = {"gdop": dop.gdop, "pdop": dop.pdop, "hdop": dop.hdop, "vdop": dop.vdop,
                   "tdop": dop.tdop, "rating": dop.rating.value}
        rec.fix_error = float(np.linalg.norm(fix.position - np.asarray(truth, dtype=float)))
        return rec


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None) -> Iterator[EpochRecord]:
    """Yield one record per epoch. Solver failures become no-fix records."""
    if seed is not None:
        cfg = replace(cfg, master_seed=int(seed))
    session = _Session(cfg)
    for k in range(cfg.epochs):
        t = cfg.start_time + k * cfg.dt
        yield session.epoch(t, cfg.receiver.at(t))


# --- heat maps -------------------------------------------------------------

HEATMAP_METRICS = ("mean_fix_error", "mean_gdop", "mean_visible", "mean_los_clear", "fix_fraction")
NO_FIX = "nofix"


@dataclass(frozen=True)
class HeatmapSpec:
    bbox: tuple[float, float, float, float]  # east0, north0, east1, north1
    cell_size: float
    altitude: float = 15.0
    epochs_per_cell: int = 1

    def __post_init__(self) -> None:
        e0, n0, e1, n1 = self.bbox
        if not (e1 > e0 and n1 > n0):
            raise ConfigError("heat-map box must have positive extent")
        if not self.cell_size > 0:
            raise ConfigError("cell size must be positive")
        if self.epochs_per_cell < 1:
            raise ConfigError("epochs_per_cell must be at least 1")

    @property
    def shape(self) -> tuple[int, int]:
        e0, n0, e1, n1 = self.bbox
        return math.ceil((n1 - n0) / self.cell_size), math.ceil((e1 - e0) / self.cell_size)

    def cell_center(self, row: int, col: int) -> tuple[float, float, float]:
        e0, n0, _, _ = self.bbox
        return (e0 + (col + 0.5) * self.cell_size, n0 + (row + 0.5) * self.cell_size, self.altitude)


@dataclass
class HeatmapGrid:
    """Per-cell metrics; row 0 is the southern edge. NaN marks a no-fix cell."""

    spec: HeatmapSpec
    values: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def no_fix(self) -> np.ndarray:
        return np.isnan(self.values["mean_fix_error"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "east", "north", *HEATMAP_METRICS])
        rows, cols = self.spec.shape
        for r in range(rows):
            for c in range(cols):
                e, n, _ = self.spec.cell_center(r, c)
                vals = [self.values[m][r, c] for m in HEATMAP_METRICS]
                w.writerow([r, c, repr(e), repr(n), *(NO_FIX if math.isnan(v) else repr(float(v)) for v in vals)])
        return buf.getvalue()

    def to_pgm(self, metric: str = "mean_fix_error") -> bytes:
        """Binary graymap, north up; brighter is larger, no-fix cells are black."""
        data = self.values[metric]
        finite = data[np.isfinite(data)]
        lo = float(finite.min()) if finite.size else 0.0
        hi = float(finite.max()) if finite.size else 1.0
        scale = (hi - lo) or 1.0
        img = np.zeros(data.shape, dtype=np.uint8)
        ok = np.isfinite(data)
        img[ok] = (1 + np.round(254 * (data[ok] - lo) / scale)).astype(np.uint8)
        img = img[::-1]
        rows, cols = img.shape
        return f"P5\n{cols} {rows}\n255\n".encode() + img.tobytes()


def _cell_metrics(cfg: ScenarioConfig, spec: HeatmapSpec, row: int, col: int) -> tuple[float, ...]:
    center = spec.cell_center(row, col)
    cell_cfg = replace(cfg, receiver=Trajectory.static(center), epochs=spec.epochs_per_cell)
    session = _Session(cell_cfg, seed=(cfg.master_seed, row, col))
    errors, gdops, visible, clear = [], [], [], []
    for k in range(spec.epochs_per_cell):
        t = cfg.start_time + k * cfg.dt
        rec = session.epoch(t, np.array(center))
        visible.append(rec.num_vis_sat)
        clear.append(sum(v == Visibility.LOS_CLEAR.value for v in rec.visibility))
        if rec.status == "fix":
            errors.append(rec.fix_error)
            gdops.append(rec.dop["gdop"])
    n = spec.epochs_per_cell
    nan = float("nan")
    return (
        float(np.mean(errors)) if errors else nan,
        float(np.mean(gdops)) if gdops else nan,
        float(np.mean(visible)),
        float(np.mean(clear)),
        len(errors) / n,
    )


_worker_args: Optional[tuple[ScenarioConfig, HeatmapSpec]] = None


def _init_worker(cfg: ScenarioConfig, spec: HeatmapSpec) -> None:
    global _worker_args
    _worker_args = (cfg, spec)


def _worker_cell(rc: tuple[int, int]) -> tuple[float, ...]:
    cfg, spec = _worker_args
    return _cell_metrics(cfg, spec, *rc)


def generate_heatmap(cfg: ScenarioConfig, spec: HeatmapSpec, workers: int = 1) -> HeatmapGrid:
    """Evaluate every cell as its own static scenario.

    Each cell seeds its noise from ``(master_seed, row, col)`` and results are
    placed by cell index, so the grid does not depend on ``workers``.
    """
    rows, cols = spec.shape
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    if workers <= 1:
        results = [_cell_metrics(cfg, spec, r, c) for r, c in cells]
    else:
        chunk = max(1, len(cells) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg, spec)) as pool:
            results = list(pool.map(_worker_cell, cells, chunksize=chunk))
    grid = HeatmapGrid(spec, {m: np.full((rows, cols), np.nan) for m in HEATMAP_METRICS})
    for (r, c), vals in zip(cells, results):
        for m, v in zip(HEATMAP_METRICS, vals):
            grid.values[m][r, c] = v
    return grid


def heatmap_cell(cfg: ScenarioConfig, spec: HeatmapSpec, row: int, col: int) -> dict[str, float]:
    """Metrics of one cell computed in isolation (equal to its full-grid value)."""
    return dict(zip(HEATMAP_METRICS, _cell_metrics(cfg, spec, row, col)))


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))


# --- single-ray debugging ----------------------------------------------------

def raycheck(model: CityModel, position: Sequence[float], azimuth: float, elevation: float,
             max_range: Optional[float] = None) -> dict:
    """Cast one satellite direction and report ranges, class and offset."""
    if not 0.0 <= elevation <= math.pi / 2:
        raise ConfigError(f"elevation must lie in [0, pi/2], got {elevation}")
    max_range = ReceiverConfig().max_range if max_range is None else max_range
    pos = _vec3(position, "position")
    pair = cast_satellite_rays(build_index(model), pos, azimuth, elevation, max_range)
    vis = classify_visibility(pair)
    m = multipath_offset(pair.r_ref, elevation) if vis is Visibility.MULTIPATH else 0.0
    return {
        "r_los": pair.r_los,
        "r_ref": pair.r_ref,
        "los_hit": None if pair.los_hit is None else [pair.los_hit.building_id, pair.los_hit.face],
        "ref_hit": None if pair.ref_hit is None else [pair.ref_hit.building_id, pair.ref_hit.face],
        "visibility": vis.value,
        "multipath_offset": m,
    }
