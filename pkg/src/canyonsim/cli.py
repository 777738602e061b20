"""Command line entry point: ``canyonsim run | heatmap | raycheck``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from canyonsim.citymodel import CityModelError, load_city_model
from canyonsim.harness import (
    HEATMAP_METRICS,
    ConfigError,
    HeatmapSpec,
    generate_heatmap,
    load_scenario,
    raycheck,
    run_scenario,
    write_records,
)

log = logging.getLogger("canyonsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise ConfigError(f"{what} must be {n} comma-separated numbers")
    return vals


def _cmd_run(args) -> int:
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.out == "-":
        out = None
    else:
        out = Path(args.out) if args.out else cfg.output_path
    fmt = args.format or (
        "csv" if out is not None and out.suffix == ".csv" else cfg.output_format)
    records = run_scenario(cfg)
    if out is None:
        n = write_records(records, sys.stdout, fmt)
    else:
        with open(out, "w", newline="") as fh:
            n = write_records(records, fh, fmt)
        log.info("wrote %d records to %s", n, out)
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    spec = HeatmapSpec(tuple(_floats(args.bbox, 4, "--bbox")), args.cell, args.alt, args.epochs)
    grid = generate_heatmap(cfg, spec, workers=args.workers)
    text = grid.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.pgm:
        Path(args.pgm).write_bytes(grid.to_pgm(args.metric))
    return EXIT_OK


def _cmd_raycheck(args) -> int:
    model = load_city_model(args.model)
    report = raycheck(model, _floats(args.pos, 3, "--pos"), args.az, args.el, args.max_range)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canyonsim", description="GNSS urban-canyon multipath simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and emit one record per epoch")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output file, '-' for stdout (default: the config's output.path)")
    r.add_argument("--seed", type=int)
    r.add_argument("--format", choices=("jsonl", "csv"))
    r.set_defaults(func=_cmd_run)

    h = sub.add_parser("heatmap", help="grid of static receivers over a box")
    h.add_argument("--config", required=True)
    h.add_argument("--bbox", required=True, help="E0,N0,E1,N1 in local metres (use --bbox=... when E0 is negative)")
    h.add_argument("--cell", type=float, required=True)
    h.add_argument("--alt", type=float, default=15.0)
    h.add_argument("--epochs", type=int, default=1, help="epochs per cell")
    h.add_argument("--workers", type=int, default=1)
    h.add_argument("--seed", type=int)
    h.add_argument("--out")
    h.add_argument("--pgm", help="also write a graymap of --metric")
    h.add_argument("--metric", choices=HEATMAP_METRICS, default="mean_fix_error")
    h.set_defaults(func=_cmd_heatmap)

    c = sub.add_parser("raycheck", help="cast one satellite direction")
    c.add_argument("--model", required=True)
    c.add_argument("--pos", required=True, help="E,N,U in local metres")
    c.add_argument("--az", type=float, required=True)
    c.add_argument("--el", type=float, required=True)
    c.add_argument("--max-range", type=float)
    c.set_defaults(func=_cmd_raycheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CityModelError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
