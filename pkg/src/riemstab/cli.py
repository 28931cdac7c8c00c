"""Command line entry point: ``riemstab run|list|version``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import DEFAULTS, KINDS, REQUIRED, ConfigError, bundled_fixtures, load_config
from .errors import RiemstabError

OUT_ENV = "RIEMSTAB_OUT"

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

KIND_HELP = {
    "sweep": "one-step distance of two solutions versus h, per method (sweep.csv)",
    "bifurcation": "roots of the scalar GIE equation for the rotation field on S^2 (bifurcation.csv)",
    "global-error": "global error at t_star versus the monotonicity-based bound (global_error.csv)",
    "lognorm": "logarithmic norm of nabla X over a sampled region (lognorm.csv)",
    "isotropy": "implicit Lie-Euler on the rotation field for several isotropy values c (isotropy.csv)",
    "karcher": "Karcher mean of SPD targets by implicit gradient-flow steps (karcher.csv)",
}


def list_experiments() -> str:
    lines = ["experiment kinds:"]
    for kind in KINDS:
        lines.append(f"  {kind:<13} {KIND_HELP[kind]}")
        lines.append(f"  {'':<13} required: {', '.join(REQUIRED[kind])}")
    lines.append("defaults:")
    for key, value in DEFAULTS.items():
        lines.append(f"  {key} = {value!r}")
    lines.append("bundled fixtures:")
    for name, path in bundled_fixtures().items():
        lines.append(f"  {name:<17} {path}")
    return "\n".join(lines)


def _out_dir(args, cfg, config_path: Path) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV]) / config_path.stem
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("out") / config_path.stem


def resolve_config_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    fixtures = bundled_fixtures()
    if name in fixtures:
        return fixtures[name]
    raise ConfigError(f"no config file or bundled fixture named {name!r}")


def cmd_run(args) -> int:
    from .runner import run_and_write

    try:
        path = resolve_config_path(args.config)
        cfg = load_config(path, args.set or [])
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = _out_dir(args, cfg, path)
    try:
        result = run_and_write(cfg, out)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RiemstabError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if result.failures:
        msg = result.error or f"{result.failures} record(s) did not converge"
        print(f"solver failure: {msg}; partial results in {out}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{cfg.kind}: {len(result.rows)} rows written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riemstab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config (path or bundled fixture name)")
    run.add_argument("config")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config value, e.g. --set h.count=20")
    run.add_argument("--out", help=f"output directory (else ${OUT_ENV}/<name>, config output_dir, out/<name>)")
    sub.add_parser("list", help="list experiment kinds, defaults and bundled fixtures")
    sub.add_parser("version", help="print the version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "list":
        print(list_experiments())
        return EXIT_OK
    if args.command == "version":
        print(f"riemstab {__version__}")
        return EXIT_OK
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
