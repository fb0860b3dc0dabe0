"""Command-line experiment runner.

Subcommands:
  run    execute an experiment described by a JSON config file
  moons  shortcut for the rotating-moons benchmarks
  geo    shortcut for the migration-flow experiment

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigError, DataError, NumericalError
from .experiments import (
    EXPERIMENTS,
    KERNELS,
    METHODS,
    ExperimentConfig,
    run_experiment,
)

_CONFIG_KEY_HELP = """\
config keys (JSON object; CLI --override key=value wins over the file):
  experiment        one of %(experiments)s
  method            one of %(methods)s
  kernel            one of %(kernels)s (reshape methods only)
  lambda            RBF kernel precision, > 0
  alpha             guidance strength, >= 0 (0 disables the prior)
  epsilon           Sinkhorn regularization, > 0
  n_displacements   guidance pairs drawn per trial, >= 0
  rotations         list of moon rotation angles in [0, 180]
  shifts            list of shift magnitudes (shift_harness)
  trials            repetitions per setting, >= 1
  base_seed         trial t uses seed base_seed + t
  output_dir        where results.csv / summary.csv / manifest.json go
  n_per_moon, moons_noise, n_test      moons generator knobs
  attribution       also run the split-attribution protocol (moons_da)
  harness_n, harness_d, shift_kind, harness_noise   harness knobs
  data              geo CSV path (columns id,timestamp,lat,lon)
  guidance_ids      newline-separated IDs whose trajectories guide the metric
  reference_lat, reference_lon         cost-field reference point
  grid_resolution   cost-field grid cells per side, >= 2
  figures           emit SVG figures (true/false)
""" % {"experiments": ", ".join(EXPERIMENTS), "methods": ", ".join(METHODS),
       "kernels": ", ".join(KERNELS)}


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reshape-ot",
        description="Displacement-guided optimal transport experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser(
        "run",
        help="run an experiment from a JSON config",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=_CONFIG_KEY_HELP,
    )
    runp.add_argument("--config", required=True, help="path to a JSON config file")
    runp.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (value parsed as JSON when possible)",
    )

    moons = sub.add_parser("moons", help="rotating-moons transport or domain adaptation")
    moons.add_argument("--rotation", default="10,30,50,70,90",
                       help="comma-separated rotation angles in degrees")
    moons.add_argument("--method", default="classical_exact", choices=METHODS)
    moons.add_argument("--kernel", default="rbf", choices=KERNELS)
    moons.add_argument("--lambda", dest="lam", type=float, default=2.0,
                       help="RBF kernel precision")
    moons.add_argument("--alpha", type=float, default=1e4, help="guidance strength")
    moons.add_argument("--epsilon", type=float, default=0.05, help="Sinkhorn epsilon")
    moons.add_argument("--n-disp", type=int, default=40, help="guidance pairs per trial")
    moons.add_argument("--trials", type=int, default=20)
    moons.add_argument("--seed", type=int, default=0, help="base seed")
    moons.add_argument("--out", required=True, help="output directory")
    moons.add_argument("--da", action="store_true",
                       help="run the domain-adaptation protocol instead of transport error")
    moons.add_argument("--attribution", action="store_true",
                       help="with --da, also score split-attribution cosine similarity")

    geo = sub.add_parser("geo", help="weekly migration flows from a geo CSV")
    geo.add_argument("--data", required=True, help="geo CSV (id,timestamp,lat,lon)")
    geo.add_argument("--guidance-ids", default=None,
                     help="file of newline-separated individual IDs used as guidance")
    geo.add_argument("--lambda", dest="lam", type=float, default=1.0)
    geo.add_argument("--alpha", type=float, default=1e3)
    geo.add_argument("--kernel", default="rbf", choices=KERNELS)
    geo.add_argument("--seed", type=int, default=0)
    geo.add_argument("--reference", default=None, metavar="LAT,LON",
                     help="cost-field reference point (default: data median)")
    geo.add_argument("--grid", type=int, default=60, help="cost-field resolution")
    geo.add_argument("--out", required=True, help="output directory")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        for override in args.override:
            key, value = _parse_override(override)
            raw[key] = value
        return ExperimentConfig.from_dict(raw)

    if args.command == "moons":
        try:
            rotations = [float(r) for r in str(args.rotation).split(",") if r.strip()]
        except ValueError:
            raise ConfigError(f"bad --rotation value {args.rotation!r}") from None
        return ExperimentConfig.from_dict({
            "experiment": "moons_da" if args.da else "moons_transport",
            "method": args.method,
            "kernel": args.kernel,
            "lambda": args.lam,
            "alpha": args.alpha,
            "epsilon": args.epsilon,
            "n_displacements": args.n_disp,
            "rotations": rotations,
            "trials": args.trials,
            "base_seed": args.seed,
            "output_dir": args.out,
            "attribution": args.attribution,
        })

    reference_lat = reference_lon = None
    if args.reference:
        try:
            lat_text, lon_text = args.reference.split(",")
            reference_lat, reference_lon = float(lat_text), float(lon_text)
        except ValueError:
            raise ConfigError(f"bad --reference value {args.reference!r}") from None
    return ExperimentConfig.from_dict({
        "experiment": "geo_flows",
        "method": "reshape",
        "kernel": args.kernel,
        "lambda": args.lam,
        "alpha": args.alpha,
        "base_seed": args.seed,
        "trials": 1,
        "data": args.data,
        "guidance_ids": args.guidance_ids,
        "reference_lat": reference_lat,
        "reference_lon": reference_lon,
        "grid_resolution": args.grid,
        "output_dir": args.out,
    })


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        paths = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    for name in sorted(paths):
        print(paths[name])
    return 0


if __name__ == "__main__":
    sys.exit(main())
