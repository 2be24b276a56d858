"""Command-line interface.

    twinbeam calibrate  --config run.ini
    twinbeam run        --config run.ini --threads 4
    twinbeam fit        --config run.ini
    twinbeam report     --config run.ini
    twinbeam screens-stats --config run.ini --strength 9.5e4 --count 200

Exit codes: 0 success; 2 configuration or usage error; 3 numerical or
physical-domain failure (unresolvable grid, calibration that does not
widen, ill-conditioned fit); 4 file-system trouble; 1 anything
unexpected.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback

from .config import RunConfig, parse_config
from .errors import (CalibrationError, ConfigError, FitError, GridError,
                     NyquistError)
from .pipeline import (run_calibrate, run_fit, run_report,
                       run_screens_stats, run_sweep)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinbeam",
        description="Monte Carlo slit-transmission experiment for classical "
                    "beams and photon pairs crossing thin turbulence.")
    sub = parser.add_subparsers(dest="stage", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, metavar="PATH",
                       help="INI configuration file (omit for the "
                            "reference bench configuration)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="override the output directory")

    p = sub.add_parser("calibrate",
                       help="map chamber strengths to sigma_R^2")
    common(p)

    p = sub.add_parser("run", help="sweep sigma_R^2 over the channels")
    common(p)
    p.add_argument("--channel", action="append", default=None,
                   metavar="NAME", help="restrict to one channel "
                   "(repeatable)")
    p.add_argument("--samples", type=int, default=None,
                   help="override samples per data point")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (results are thread-count "
                        "independent)")

    p = sub.add_parser("fit", help="fit the erf sensitivity model")
    common(p)

    p = sub.add_parser("report", help="combine results into the report "
                                      "bundle")
    common(p)

    p = sub.add_parser("screens-stats",
                       help="validate screen statistics, archive checksums")
    common(p)
    p.add_argument("--strength", type=float, default=None,
                   help="chamber strength to sample (default: strongest "
                        "calibration set point)")
    p.add_argument("--count", type=int, default=100,
                   help="ensemble size (default 100)")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = parse_config("" if args.config is None else args.config)
    updates = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if getattr(args, "samples", None) is not None:
        if args.samples < 2:
            raise ConfigError(f"--samples must be >= 2, got {args.samples}")
        updates["n_samples"] = args.samples
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        updates["threads"] = args.threads
    if getattr(args, "channel", None):
        updates["channels"] = tuple(dict.fromkeys(args.channel))
    cfg = dataclasses.replace(cfg, **updates) if updates else cfg
    if getattr(args, "channel", None):
        # Re-validate names through the same path parse_config uses.
        from .experiment import CHANNELS
        bad = [c for c in cfg.channels if c not in CHANNELS]
        if bad:
            raise ConfigError(f"--channel: unknown channels {bad}; "
                              f"valid: {list(CHANNELS)}")
    return cfg


def _execute(args: argparse.Namespace) -> None:
    cfg = _load_config(args)
    if args.stage == "calibrate":
        record = run_calibrate(cfg)
        for row in record.calibration:
            print(f"strength {row.strength:g}: w_lt = {row.w_lt * 1e6:.2f} um, "
                  f"sigma_R^2 = {row.sigma_R2:.4g}")
        print(f"calibration written to {cfg.out_dir} "
              f"({record.wall_clock_seconds:.1f} s)")
    elif args.stage == "run":
        record = run_sweep(cfg)
        for channel, points in record.curves.items():
            tail = points[-1]
            print(f"{channel}: {len(points)} points, transmission at "
                  f"sigma_R^2 = {tail.sigma_R2:g} is {tail.mean:.4f} "
                  f"+/- {tail.std_error:.4f}")
        print(f"curves written to {cfg.out_dir} "
              f"({record.wall_clock_seconds:.1f} s)")
    elif args.stage == "fit":
        record = run_fit(cfg)
        for channel, fit in record.fits.items():
            print(f"{channel}: alpha = {fit.alpha:.4g} +/- {fit.ci:.2g} "
                  f"(rms residual {fit.residual_rms:.3g})")
        print(f"fits written to {cfg.out_dir}")
    elif args.stage == "report":
        paths = run_report(cfg)
        for path in paths:
            print(f"wrote {path}")
    elif args.stage == "screens-stats":
        stats = run_screens_stats(cfg, strength=args.strength,
                                  count=args.count)
        slope = stats["loglog_slope"]
        slope_text = "n/a" if slope is None else f"{slope:.3f}"
        print(f"{stats['count']} screens at strength {stats['strength']:g} "
              f"(r0 = {stats['r0_m']}): structure-function log-log slope "
              f"{slope_text}")
        print(f"stats written to {cfg.out_dir}/screens_stats.json")
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown stage {args.stage!r}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _execute(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NyquistError, GridError, CalibrationError, FitError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:
        traceback.print_exc()
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
