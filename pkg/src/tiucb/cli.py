"""Command line entry point: ``tiucb {run,sweep,oracle,validate} CONFIG``.

Exit codes: 0 success, 2 invalid configuration, 1 any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from tiucb.errors import ConfigurationError
from tiucb.harness import config as config_mod
from tiucb.harness import runner

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="YAML or JSON experiment file")
    p.add_argument("--horizon", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--debug", action="store_const", const=True, default=None,
                   help="also write per-replication regret traces")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiucb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("run", "run every configured policy and write regret curves"),
        ("sweep", "rerun TI-UCB over a range of detection window sizes"),
        ("oracle", "print the greedy-optimal allocation"),
        ("validate", "check a configuration without running it"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_overrides(p)
        if name == "sweep":
            p.add_argument("--omegas", help="comma-separated window sizes, e.g. 1,2,4,8")
    return parser


def _load(args) -> config_mod.ExperimentConfig:
    overrides = {
        k: getattr(args, k)
        for k in ("horizon", "replications", "seed", "output_dir", "workers", "debug")
    }
    return config_mod.load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
        runner.validate(cfg)
    except config_mod.ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # unreadable trace, missing file, ...
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        if args.command == "validate":
            print("ok")
        elif args.command == "run":
            result = runner.run(cfg)
            for key in result.policies:
                print(f"{key}\tfinal_regret={result.final_mean(key):.4f}\tstderr={result.final_stderr(key):.4f}")
        elif args.command == "sweep":
            omegas = [int(x) for x in args.omegas.split(",")] if args.omegas else None
            for omega, m, s in runner.sweep_window(cfg, omegas):
                print(f"omega={omega}\tmean_final_regret={m:.4f}\tstderr={s:.4f}")
        elif args.command == "oracle":
            print(json.dumps(runner.oracle(cfg), indent=2))
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
