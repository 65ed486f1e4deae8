"""Command line: ``toda-she run --config <path> [overrides]`` and ``toda-she list-checks``."""
import argparse
import sys

from . import config as config_mod
from .checks import DESCRIPTIONS
from .config import CHECKS, ConfigError
from .report import emit, run

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="toda-she", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the selected checks and write reports")
    r.add_argument("--config", required=True, help="JSON configuration file")
    r.add_argument("--seed", type=int)
    r.add_argument("--nx", type=int)
    r.add_argument("--nt", type=int)
    r.add_argument("--checks", help="comma-separated check names")
    r.add_argument("--replicas", type=int)
    r.add_argument("--out", help="output directory")
    sub.add_parser("list-checks", help="list the available checks")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list-checks":
        for name in CHECKS:
            print(f"{name:24s} {DESCRIPTIONS[name]}")
        return EXIT_OK
    try:
        cfg = config_mod.load(args.config)
        checks = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else None
        cfg = config_mod.with_overrides(cfg, seed=args.seed, nx=args.nx, nt=args.nt,
                                        checks=checks, replicas=args.replicas, out=args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run(cfg)
    try:
        paths = emit(report, cfg.out)
    except OSError as exc:
        print(f"cannot write outputs to {cfg.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    for r in report.results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:24s} residual={r.residual:.3e}  ({r.criterion})")
    print(f"report: {paths['json']}")
    return EXIT_OK if report.all_passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
