"""Command-line entry point: ``python -m evrate <command>``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 every
campaign case failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .catalog import CatalogError, generate_desk_catalog, parse_catalog, write_catalog
from .estimator import EstimationError, estimate_rates
from .event_sim import EventSimError, read_stream, simulate_case, write_stream
from .fusion import FusionError, fuse
from .harness import (ConfigError, EmptyResultsError, draw_case, case_rng, emit_results, load_config,
                      run_campaign, summary_from_cases)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ALL_FAILED = 0, 2, 3, 4

# flag -> config key
_CONFIG_FLAGS = {
    "catalog": "catalog",
    "cases": "case_count",
    "seed": "seed",
    "workers": "workers",
    "focal_length": "focal_length",
    "width": "width",
    "height": "height",
    "limit_magnitude": "limit_magnitude",
    "event_threshold": "event_threshold",
    "window": "window",
    "internal_rate": "internal_rate",
    "rate_range": "rate_range_deg",
    "noise_rate": "noise_rate",
    "fusion_weighting": "fusion_weighting",
    "dual": "dual_camera",
    "zero_rates": "zero_rates",
    "tile_size": "estimator.tile_size",
    "min_events_per_tile": "estimator.min_events_per_tile",
    "grid_step": "estimator.grid_step",
    "newton_tol": "estimator.newton_tol",
    "newton_max_iter": "estimator.newton_max_iter",
    "refine_kernel": "estimator.refine_kernel",
    "score": "estimator.score",
    "weighted": "estimator.weighted",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="TOML key/value file")
    g.add_argument("--catalog", help="star catalog CSV (default: synthetic desk catalog)")
    g.add_argument("--cases", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--focal-length", type=float)
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--limit-magnitude", type=float)
    g.add_argument("--event-threshold", type=float)
    g.add_argument("--window", type=float, help="seconds")
    g.add_argument("--internal-rate", type=float, help="Hz")
    g.add_argument("--rate-range", type=float, help="max |rate component|, deg/s")
    g.add_argument("--noise-rate", type=float, help="noise events per pixel per second")
    g.add_argument("--fusion-weighting", choices=("equal", "inverse-variance"))
    g.add_argument("--dual", dest="dual", action="store_true", default=None, help="two cameras")
    g.add_argument("--single", dest="dual", action="store_false", help="camera A only")
    g.add_argument("--zero-rates", action="store_true", default=None)
    g.add_argument("--tile-size", type=int, nargs="+", metavar="PX")
    g.add_argument("--min-events-per-tile", type=int)
    g.add_argument("--grid-step", type=float, help="px/s")
    g.add_argument("--newton-tol", type=float)
    g.add_argument("--newton-max-iter", type=int)
    g.add_argument("--refine-kernel", choices=("gaussian", "bilinear", "nearest"))
    g.add_argument("--score", choices=("sum_sq", "variance"))
    g.add_argument("--weighted", action="store_true", default=None)


def _config(args):
    overrides = {}
    for flag, key in _CONFIG_FLAGS.items():
        val = getattr(args, flag, None)
        if flag == "tile_size" and val is not None:
            val = val[0] if len(val) == 1 else tuple(val[:2])
        overrides[key] = val
    return load_config(args.config, overrides)


def _cmd_catalog_gen(args) -> int:
    cat = generate_desk_catalog(args.stars, seed=args.seed, mag_min=args.mag_min, mag_max=args.mag_max)
    write_catalog(cat, args.out)
    print(f"wrote {len(cat)} stars to {args.out}")
    return EXIT_OK


def _cmd_catalog_inspect(args) -> int:
    cat = parse_catalog(args.path, args.limit_magnitude if args.limit_magnitude is not None else math.inf)
    mags = cat.magnitude
    print(f"{args.path}: {len(cat)} stars, magnitude {mags.min():.2f} .. {mags.max():.2f}")
    for edge in (2.0, 4.0, 6.0):
        print(f"  V <= {edge:.0f}: {int(np.sum(mags <= edge))}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    catalog = cfg.load_catalog()
    rng = case_rng(cfg.seed, args.case_id)
    draw = draw_case(cfg, args.case_id, rng)
    camera, render = cfg.camera(), cfg.render()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if args.format == "csv" else ".evs"
    R_a = draw.attitude()
    streams = {"a": simulate_case(catalog, camera, R_a, draw.rates, cfg.window, cfg.internal_rate, render, rng)}
    truth = {
        "case_id": args.case_id, "seed": cfg.seed,
        "alpha_b_deg": math.degrees(draw.alpha_b), "delta_b_deg": math.degrees(draw.delta_b),
        "roll_deg": math.degrees(draw.roll),
        "rates_a_deg_s": np.degrees(draw.rates).tolist(),
        "attitude_a": R_a.tolist(),
    }
    if cfg.dual_camera:
        mounting = cfg.dual_mounting()
        R_b = mounting.attitude_b(R_a)
        rates_b = mounting.a_to_b(draw.rates)
        streams["b"] = simulate_case(catalog, camera, R_b, rates_b, cfg.window, cfg.internal_rate, render, rng)
        truth["rates_b_deg_s"] = np.degrees(rates_b).tolist()
        truth["attitude_b"] = R_b.tolist()
    for name, stream in streams.items():
        path = out / f"stream_{name}{ext}"
        write_stream(stream, path)
        print(f"camera {name.upper()}: {len(stream)} events -> {path}")
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _config(args)
    camera, est_cfg = cfg.camera(), cfg.estimator_config()
    doc = {}
    ests = []
    for name, path in zip("ab", args.streams):
        stream = read_stream(path, camera, window=(0.0, cfg.window))
        try:
            est = estimate_rates(stream, camera, est_cfg)
        except EstimationError as exc:
            doc[f"camera_{name}"] = {"status": exc.status, "error": str(exc)}
            continue
        rec = est.to_record()
        rec["status"] = "ok"
        rec["n_events"] = len(stream)
        doc[f"camera_{name}"] = rec
        ests.append(est)
    if len(args.streams) == 2 and len(ests) == 2:
        try:
            fused = fuse(ests[0], ests[1], cfg.dual_mounting(), cfg.fusion_weighting)
        except FusionError as exc:
            doc["fused"] = {"status": "fusion-error", "error": str(exc)}
        else:
            d = math.degrees(1.0)
            doc["fused"] = {"rates_deg_s": dict(zip("pqr", np.degrees(fused.rates).tolist())),
                            "covariance_deg2_s2": (fused.covariance * d * d).tolist(), "status": "ok"}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ests else EXIT_ALL_FAILED


def _cmd_campaign(args) -> int:
    cfg = _config(args)

    def progress(r):
        if args.verbose:
            print(f"case {r.case_id:4d} {r.status}", file=sys.stderr, flush=True)

    results, summary = run_campaign(cfg, progress=progress)
    paths = emit_results(results, summary, args.out, cfg)
    if summary is None:
        print(f"all {len(results)} cases failed; see {paths['cases']}", file=sys.stderr)
        return EXIT_ALL_FAILED
    _print_summary(summary)
    print(f"results in {args.out}")
    return EXIT_OK


def _print_summary(s) -> None:
    print(f"cases: {s.n_cases}  failed: {s.n_failed}")
    for label, block, names in (("single", s.single, "pqr"), ("fused", s.fused, "pqr"),
                                ("inertial", s.inertial, "xyz")):
        vals = "  ".join(f"{n}={block[n]:.4f}" for n in names)
        print(f"  RMS {label:8s} {vals}  total={block['total']:.4f} deg/s")
    print(f"  eps_rms std={s.eps_rms_std:.4f}  paper-form={s.eps_rms_paper:.6f} deg/s")


def _cmd_report(args) -> int:
    path = Path(args.path)
    cases = path / "cases.csv" if path.is_dir() else path
    summary = summary_from_cases(cases)
    _print_summary(summary)
    echo = None
    existing = cases.parent / "summary.json"
    if existing.exists():
        echo = json.loads(existing.read_text()).get("config_echo")
    if args.out:
        Path(args.out).write_text(json.dumps(summary.to_json(echo), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evrate", description="Event-camera star-field rate estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="generate or inspect star catalogs")
    cat_sub = cat.add_subparsers(dest="catalog_command", required=True)
    gen = cat_sub.add_parser("gen", help="write a synthetic desk catalog")
    gen.add_argument("--out", required=True, type=Path)
    gen.add_argument("--stars", type=int, default=5000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--mag-min", type=float, default=-1.0)
    gen.add_argument("--mag-max", type=float, default=6.5)
    gen.set_defaults(func=_cmd_catalog_gen)
    ins = cat_sub.add_parser("inspect", help="summarise a catalog file")
    ins.add_argument("path", type=Path)
    ins.add_argument("--limit-magnitude", type=float)
    ins.set_defaults(func=_cmd_catalog_inspect)

    sim = sub.add_parser("simulate", help="simulate one case to event stream files")
    _add_config_flags(sim)
    sim.add_argument("--case-id", type=int, default=0)
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--format", choices=("csv", "bin"), default="bin")
    sim.set_defaults(func=_cmd_simulate)

    est = sub.add_parser("estimate", help="estimate rates from one or two stream files")
    est.add_argument("streams", nargs="+", type=Path, help="camera A stream [camera B stream]")
    _add_config_flags(est)
    est.add_argument("--out", type=Path, help="JSON output (default: stdout)")
    est.set_defaults(func=_cmd_estimate)

    camp = sub.add_parser("campaign", help="run a Monte Carlo campaign")
    _add_config_flags(camp)
    camp.add_argument("--out", required=True, type=Path)
    camp.add_argument("-v", "--verbose", action="store_true")
    camp.set_defaults(func=_cmd_campaign)

    rep = sub.add_parser("report", help="recompute the summary from cases.csv")
    rep.add_argument("path", type=Path, help="campaign directory or cases.csv")
    rep.add_argument("--out", type=Path, help="write summary JSON here")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate" and len(args.streams) > 2:
        parser.error("estimate takes one or two stream files")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CatalogError, EventSimError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EmptyResultsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED


if __name__ == "__main__":
    sys.exit(main())
