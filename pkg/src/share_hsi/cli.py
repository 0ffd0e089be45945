"""Command line interface: ``share run|ablate|fixtures|eval``.

Exit codes: 0 success, 2 configuration/input problems, 3 runtime failures
(partial artifacts are kept). The SHARE_OUT environment variable overrides
the default output root.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, DivergenceError, FormatError, ShareError
from .experiment import (
    ABLATE_AXES,
    load_config,
    resolve_out_dir,
    run_ablation,
    run_experiment,
)
from .fixtures import make_fixtures
from .io import load_cube
from .metrics import evaluate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", type=str, default=None,
                        help="output directory (default: config, then $SHARE_OUT)")
    parser.add_argument("--device", type=str, default="cpu",
                        help="compute device (default cpu)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="share",
        description="Zero-shot restoration of single hyperspectral cubes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured restoration run")
    p_run.add_argument("--config", required=True)
    _add_common(p_run)

    p_ablate = sub.add_parser("ablate", help="sweep one config axis")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--axis", required=True, choices=ABLATE_AXES)
    p_ablate.add_argument("--jobs", type=int, default=1,
                          help="run axis values in N worker processes")
    _add_common(p_ablate)

    p_fix = sub.add_parser("fixtures", help="write the deterministic fixture set")
    p_fix.add_argument("--out", type=str, default="fixtures")
    p_fix.add_argument("--seed", type=int, default=2024)

    p_eval = sub.add_parser("eval", help="compare a restored cube to a reference")
    p_eval.add_argument("--restored", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--out", type=str, default=None,
                        help="optional path for the metrics JSON")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    out_dir = resolve_out_dir(config, args.out)
    report = run_experiment(config, out_dir, seed=args.seed, device=args.device)
    metrics = report.get("metrics")
    if metrics:
        print(json.dumps(metrics, sort_keys=True))
    print(f"artifacts: {out_dir}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = load_config(args.config)
    out_dir = resolve_out_dir(config, args.out) / f"ablate_{args.axis}"
    table = run_ablation(config, args.axis, out_dir, seed=args.seed,
                         device=args.device, jobs=args.jobs)
    print(f"summary: {table}")
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    manifest = make_fixtures(args.out, seed=args.seed)
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    for path in (args.restored, args.reference):
        if not Path(path).exists():
            raise ConfigError(f"input not found: {path}")
    metrics = evaluate(load_cube(args.restored).data, load_cube(args.reference).data)
    text = json.dumps(metrics, sort_keys=True, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "ablate": _cmd_ablate,
                "fixtures": _cmd_fixtures, "eval": _cmd_eval}
    try:
        return handlers[args.command](args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc} (partial artifacts kept)", file=sys.stderr)
        return EXIT_RUNTIME
    except ShareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
