"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import contextlib
import math
import os
import time

import numpy as np
import pytest

from canyonsim.citymodel import BuildingFootprint, CityModel
from canyonsim.channel import (
    OUNoiseConfig,
    OUNoiseState,
    Visibility,
    classify_visibility,
    multipath_offset,
    ou_initial_state,
    ou_step,
)
from canyonsim.harness import HeatmapSpec, Trajectory, generate_heatmap, run_scenario
from canyonsim.raycast import RayPairResult, build_index, cast_ray
from canyonsim.satellites import KeplerianEphemeris, propagate_kepler, solve_kepler
from canyonsim.solver import (
    DopRating,
    SingularGeometry,
    classify_dop,
    compute_dop,
    geometry_matrix,
    solve_position,
)

from conftest import (
    ACCEPTANCE_LINES,
    HK_ORIGIN,
    SKY8_AZIMUTH,
    SKY8_ELEVATION,
    box,
    box_oracle_visibility,
    cofactor_inverse,
    grazing_rays,
    random_boxes,
    random_rays,
    scenario,
)


@contextlib.contextmanager
def criterion(n, title, budget=None):
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget is not None and elapsed >= budget:
            detail = f" (took {elapsed:.2f}s, budget {budget}s)"
            raise AssertionError(f"criterion {n} exceeded its time budget{detail}")
        status = "PASS"
        detail = f" ({elapsed:.2f}s)"
    finally:
        line = f"[{status}] criterion {n}: {title}{detail}"
        ACCEPTANCE_LINES.append((n, line))
        print(line)


def test_01_multipath_formula():
    with criterion(1, "multipath offset exact points and monotone sweep", 1.0):
        for d in (0.0, 1.0, 10.0, 123.456, 5000.0):
            assert multipath_offset(d, math.pi / 4) == d
            assert multipath_offset(d, 0.0) == 2 * d
        d = 37.5
        thetas = np.linspace(0.0, math.pi / 2, 1000)
        m = np.array([multipath_offset(d, t) for t in thetas])
        assert np.all(np.diff(m) <= 0.0)
        # Lipschitz bound |dm/dtheta| <= 2d keeps neighbouring samples close
        assert np.all(np.abs(np.diff(m)) <= 2 * d * np.diff(thetas) * (1 + 1e-9))
        assert abs(m[-1]) < 1e-12


def test_02_exact_data_localization():
    with criterion(2, "exact-data fix within 1e-6 m, <= 10 iterations, 100 truths", 5.0):
        rng = np.random.default_rng(20)
        sats = np.array([
            np.array([math.sin(a) * math.cos(e), math.cos(a) * math.cos(e), math.sin(e)]) * 2e7
            for a, e in zip(SKY8_AZIMUTH, SKY8_ELEVATION)])
        for _ in range(100):
            truth = rng.uniform(-1000, 1000, 3)
            p = np.linalg.norm(sats - truth, axis=1)
            u = rng.normal(size=3)
            guess = truth + 1000.0 * u / np.linalg.norm(u)
            fix = solve_position(sats, p, guess)
            assert fix.converged and fix.iterations <= 10
            assert np.linalg.norm(fix.position - truth) < 1e-6
            assert abs(fix.clock_bias) * 299_792_458.0 < 1e-6


def test_03_dop_identities():
    with criterion(3, "DOP identities and D vs cofactor inverse over 1000 geometries", 5.0):
        rng = np.random.default_rng(33)
        done = 0
        while done < 1000:
            n = int(rng.integers(4, 12))
            az = rng.uniform(0, 2 * math.pi, n)
            el = rng.uniform(0.05, math.pi / 2, n)
            r = rng.uniform(2.0e7, 2.6e7, n)
            sats = np.column_stack([np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el)]) * r[:, None]
            try:
                d = compute_dop(sats, (0.0, 0.0, 0.0))
            except SingularGeometry:
                continue
            done += 1
            assert d.pdop ** 2 == pytest.approx(d.hdop ** 2 + d.vdop ** 2, rel=1e-9)
            assert d.gdop ** 2 == pytest.approx(d.pdop ** 2 + d.tdop ** 2, rel=1e-9)
            A = geometry_matrix(sats, (0.0, 0.0, 0.0))
            oracle = cofactor_inverse(A.T @ A)
            assert np.max(np.abs(d.D - oracle) / np.abs(oracle)) < 1e-9


def test_04_dop_ratings():
    with criterion(4, "DOP rating table at probe values"):
        expected = {
            0.5: DopRating.IDEAL, 1: DopRating.EXCELLENT, 1.5: DopRating.EXCELLENT,
            2: DopRating.GOOD, 3: DopRating.GOOD, 5: DopRating.MODERATE, 7: DopRating.MODERATE,
            10: DopRating.FAIR, 15: DopRating.FAIR, 20: DopRating.POOR, 25: DopRating.POOR,
        }
        for value, rating in expected.items():
            assert classify_dop(float(value)) is rating


def _same(a, b):
    if a is None or b is None:
        return a is None and b is None
    return a.building_id == b.building_id and a.face == b.face and abs(a.distance - b.distance) <= 1e-9


def test_05_raycast_equivalence():
    with criterion(5, "grid index equals brute force on 200 prisms x 1000 rays plus grazing set", 10.0):
        rng = np.random.default_rng(5)
        model = random_boxes(rng, 200)
        idx = build_index(model)
        for ray in random_rays(rng, 1000):
            assert _same(cast_ray(model, ray, 5000.0), idx.cast_ray(ray, 5000.0))
        pent = BuildingFootprint("pent", [(0, 0), (20, -5), (30, 10), (15, 25), (-5, 15)], 40.0)
        for b in (box("sq", 0.0, 0.0, 20.0, 20.0, 50.0), pent):
            single = CityModel(HK_ORIGIN, (b,))
            single_idx = build_index(single, 4.0)
            for ray in grazing_rays(b):
                assert _same(cast_ray(single, ray, 500.0), single_idx.cast_ray(ray, 500.0))


def test_06_visibility_decision_table():
    with criterion(6, "visibility decision table over all sentinel combinations"):
        limit = 5000.0
        table = {
            (limit, limit): Visibility.LOS_CLEAR,
            (limit, 12.0): Visibility.LOS_CLEAR,
            (30.0, 8.0): Visibility.MULTIPATH,
            (30.0, limit): Visibility.BLOCKED,
        }
        for (r_los, r_ref), vis in table.items():
            assert classify_visibility(RayPairResult(r_los, r_ref, None, None, limit)) is vis


def test_07_ou_noise():
    with criterion(7, "OU decay exact, stationary variance within 5%, seeded reproducibility", 5.0):
        cfg = OUNoiseConfig(theta=1.0, mu=0.0, sigma=0.0, dt=math.log(2))
        assert ou_step(OUNoiseState(1.0, np.random.default_rng(0)), cfg).x == 0.5

        cfg = OUNoiseConfig(theta=0.5, mu=0.0, sigma=1.0, dt=1.0, seed=77)
        s = ou_initial_state(cfg, 1)
        for _ in range(200):
            s = ou_step(s, cfg)
        xs = np.empty(100_000)
        for k in range(len(xs)):
            s = ou_step(s, cfg)
            xs[k] = s.x
        assert abs(np.var(xs) / (cfg.sigma ** 2 / (2 * cfg.theta)) - 1.0) < 0.05

        def seq():
            st = ou_initial_state(cfg, 9)
            out = np.empty(1000)
            for k in range(1000):
                st = ou_step(st, cfg)
                out[k] = st.x
            return out.tobytes()

        assert seq() == seq()


def test_08_kepler():
    with criterion(8, "Kepler residual < 1e-12 on 1e4 inputs, circular radius over a period"):
        rng = np.random.default_rng(8)
        for m, e in zip(rng.uniform(-4 * math.pi, 4 * math.pi, 10_000), rng.uniform(0.0, 0.95, 10_000)):
            x = solve_kepler(m, e)
            assert abs(x - e * math.sin(x) - m) < 1e-12
        eph = KeplerianEphemeris(1, 26_560_000.0, 0.0, 0.96, 1.1, 0.4, 2.0)
        for t in np.linspace(0.0, eph.period, 500):
            r = np.linalg.norm(propagate_kepler(eph, t))
            assert abs(r / eph.semi_major_axis - 1.0) < 1e-6


def test_09_canyon_end_to_end():
    with criterion(9, "canyon: no-fix epochs, reflector bias, blocked PRNs match shadow oracle", 10.0):
        east = (10.0, -300.0, 20.0, 300.0, 100.0)  # tall tower along the street
        west = (-20.0, -300.0, -10.0, 0.0, 12.0)  # low reflector on the southern half
        walk = Trajectory((0.0, 30.0), ((0.0, -150.0, 2.0), (0.0, 150.0, 2.0)))
        canyon = CityModel(HK_ORIGIN, (box("tower", *east), box("low", *west)))
        kw = dict(receiver=walk, epochs=31, dt=1.0, master_seed=7, noise=True)
        recs = list(run_scenario(scenario(canyon, **kw)))
        open_sky = list(run_scenario(scenario(CityModel(HK_ORIGIN, ()), **kw)))

        no_fix = [r for r in recs if r.status == "no_fix"]
        assert no_fix, "expected epochs without a fix"
        for r in recs:
            assert (r.num_vis_sat < 4) == (r.status == "no_fix")

        canyon_err = np.mean([r.fix_error for r in recs if r.status == "fix"])
        open_err = np.mean([r.fix_error for r in open_sky])
        assert canyon_err > open_err

        for r in recs:
            boxes = [east, west]
            vis = [box_oracle_visibility(boxes, r.truth, a, e) for a, e in zip(SKY8_AZIMUTH, SKY8_ELEVATION)]
            assert r.sats_blocked == [p for p, v in zip(r.prns, vis) if v == "BLOCKED"]
            assert r.visibility == vis


def test_10_heatmap_parallel_invariance():
    workers = max(2, os.cpu_count() or 1)
    with criterion(10, f"20x20 heat map byte-identical at 1 and {workers} workers", 30.0):
        canyon = CityModel(HK_ORIGIN, (box("tower", 10.0, -300.0, 20.0, 300.0, 100.0),
                                       box("low", -20.0, -300.0, -10.0, 0.0, 12.0)))
        cfg = scenario(canyon, noise=True, master_seed=10)
        spec = HeatmapSpec((-100.0, -100.0, 100.0, 100.0), 10.0, 15.0)
        assert spec.shape == (20, 20)
        serial = generate_heatmap(cfg, spec, workers=1)
        parallel = generate_heatmap(cfg, spec, workers=workers)
        assert serial.to_csv() == parallel.to_csv()
        for metric in ("mean_fix_error", "mean_visible"):
            assert serial.to_pgm(metric) == parallel.to_pgm(metric)
