"""Command-line entry point: ``gibbsmps VERB --config PATH [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 success, 1 some beta points failed, 2 bad config or usage,
3 missing upstream results.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, DependencyError, JoinError
from .pipeline import emit_plotdata, iter_failures, run_measure, run_oracle, run_prepare, verify

EXIT_OK = 0
EXIT_FAILED_POINTS = 1
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3

VERBS = ("prepare", "measure", "oracle", "plotdata", "verify")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsmps", description="Variational Gibbs-state preparation on MPS.")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", type=Path, help="experiment config file (required except for verify)")
    parser.add_argument("--out", type=Path, help="output directory (overrides [output] path)")
    parser.add_argument("--seed", type=int, help="optimizer and sampling seed (overrides the config)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for optimizer restarts")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError(f"{args.verb} needs --config")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(str(args.out))
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verb == "verify":
            out = args.out or Path("verify-out")
            results = verify(out, seed=0 if args.seed is None else args.seed)
            for r in results:
                print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']} value={r['value']:.3e} tol={r['tolerance']:.1e}")
            return EXIT_OK if all(r["passed"] for r in results) else EXIT_FAILED_POINTS
        cfg = _load(args)
        out = Path(cfg.output.path)
        if args.verb == "plotdata":
            for path in emit_plotdata(out, cfg.lattice.n_sites):
                print(path)
            return EXIT_OK
        if args.verb == "prepare":
            summary = run_prepare(cfg, out, workers=args.threads)
        elif args.verb == "measure":
            summary = run_measure(cfg, out)
        else:
            summary = run_oracle(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DependencyError, JoinError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(f"{args.verb}: {len(summary.completed)} done, {len(summary.skipped)} already present, "
          f"{len(summary.failed)} failed")
    for line in iter_failures(summary):
        print(f"failed {line}", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_FAILED_POINTS


if __name__ == "__main__":
    sys.exit(main())
