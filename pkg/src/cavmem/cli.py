"""``cavmem`` command line: run figure scenarios, validate, sweep.

Exit codes: 0 success, 1 a validation check failed, 2 configuration error,
3 numerical failure. Errors are also written as JSON to stderr and to
``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from . import config as C
from .errors import CavmemError, ConfigError
from .scenarios import FIGURES, run_scenario, run_sweep, write_outputs
from .validation import run_validation

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file, or a manifest.json from an earlier run")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one dotted config key; repeatable")

    parser = argparse.ArgumentParser(prog="cavmem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cavmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("scenario", choices=C.SCENARIOS)
    sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    sub.add_parser("sweep", parents=[common], help="grid sweep of a closed-form quantity")
    return parser


def load_config(args) -> dict:
    layers = []
    if args.config:
        layers.append(C.load_file(args.config))
    layers.append(C.parse_overrides(args.set))
    return C.resolve(*layers, seed=args.seed)


def _report_error(out_dir: Path, code: int, exc: Exception) -> int:
    payload = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.field:
        payload["field"] = exc.field
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return code


def validate(cfg: dict, out_dir: Path) -> int:
    report = run_validation(cfg)
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    write_outputs(out_dir, "validate", cfg, {}, {"all_passed": report["all_passed"]},
                  extra_files={"validation.json": text})
    for check in report["checks"]:
        print(f"[{check['status']:>4}] {check['criterion']:2d} {check['name']}: "
              f"measured={check['measured']!r} ({check['tolerance']})")
    return EXIT_OK if report["all_passed"] else EXIT_VALIDATION


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    (out_dir / "error.json").unlink(missing_ok=True)
    try:
        cfg = load_config(args)
        if args.command == "validate" or (args.command == "run" and args.scenario == "validate"):
            return validate(cfg, out_dir)
        if args.command == "sweep":
            run_sweep(cfg, out_dir)
        else:
            run_scenario(args.scenario, cfg, out_dir)
    except ConfigError as exc:
        return _report_error(out_dir, EXIT_CONFIG, exc)
    except (CavmemError, ArithmeticError, ValueError, FloatingPointError) as exc:
        return _report_error(out_dir, EXIT_NUMERIC, exc)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
