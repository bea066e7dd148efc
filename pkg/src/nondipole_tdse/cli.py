"""Command-line interface.

    nondipole-tdse run <config> [--out DIR] [--threads N] [--resume CHK] [--plot]
    nondipole-tdse validate <config>
    nondipole-tdse spectrum <checkpoint> <config> [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Spectra caches are written under $NDT_CACHE_DIR when set.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .runner import NumericalFailure, postprocess_spectrum, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nondipole-tdse",
        description="Hydrogen TDSE in intense high-frequency pulses: dipole, "
                    "first-order beyond-dipole, envelope-approximation and "
                    "propagation-gauge interactions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configuration (with sweeps)")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweep jobs")
    p_run.add_argument("--resume", default=None, metavar="CHECKPOINT",
                       help="resume a single run from an NDTS checkpoint")
    p_run.add_argument("--plot", action="store_true",
                       help="render figures next to the tables")

    p_val = sub.add_parser("validate", help="parse and echo a configuration")
    p_val.add_argument("config")

    p_spec = sub.add_parser("spectrum",
                            help="post-process a checkpoint (no propagation)")
    p_spec.add_argument("checkpoint")
    p_spec.add_argument("config")
    p_spec.add_argument("--out", default=None, help="output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = parse_config(_read(args.config))
            sys.stdout.write(cfg.echo())
            return EXIT_OK
        if args.command == "run":
            text = _read(args.config)
            cfg = parse_config(text)        # surface config errors up front
            out_dir = args.out if args.out is not None else cfg.outputs.out_dir
            sweep = run(text, out_dir, threads=max(1, args.threads),
                        resume_path=args.resume,
                        plot=True if args.plot else None)
            failed = [r for r in sweep.results if not r.complete]
            for r in sweep.results:
                if r.complete:
                    print(f"[ok]   {r.name}: P_ion={r.ionization:.6e} "
                          f"norm={r.final_norm:.9f} steps={r.n_steps} "
                          f"({r.wall_time_s:.1f}s)")
                else:
                    print(f"[fail] {r.name}: {r.error}", file=sys.stderr)
            return EXIT_OK if not failed else EXIT_NUMERICAL
        if args.command == "spectrum":
            cfg = parse_config(_read(args.config))
            out_dir = args.out if args.out is not None else cfg.outputs.out_dir
            res = postprocess_spectrum(args.checkpoint, _read(args.config),
                                       out_dir)
            print(f"[ok] spectrum: P_ion={res.ionization:.6e} -> {out_dir}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical / IO failures map to exit code 3
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
