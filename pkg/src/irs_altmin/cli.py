"""Command-line entry point: ``irs-altmin run | trace | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .config import SystemConfig
from .errors import ConfigError, DegenerateStateError, ReportingError

log = logging.getLogger("irs_altmin")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="YAML file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--deterministic", action="store_true",
                   help="omit timestamps and wall-clock times")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irs-altmin",
        description="Alternating MSE minimisation for IRS-aided MIMO-OFDM.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo sweep -> CSV files")
    _add_common(run)
    run.add_argument("--realizations", type=int, default=None)
    run.add_argument("--threads", type=int, default=1)

    trace = sub.add_parser("trace", help="iteration trace of one run")
    _add_common(trace)
    trace.add_argument("--method", default="proposed_pg")
    trace.add_argument("--realization", type=int, default=0)

    val = sub.add_parser("validate", help="run the invariant checks")
    val.add_argument("--config", default=None, help="optional YAML file")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--realizations", type=int, default=5)
    val.add_argument("-v", "--verbose", action="store_true")
    return parser


def _system_config(path) -> SystemConfig:
    """Accept a bare SystemConfig YAML or an experiment file."""
    from .harness import ExperimentSpec
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    if "config" in data or "sweep" in data:
        return ExperimentSpec.from_dict(data).cells()[0]
    preset = data.pop("preset", "full")
    if preset == "desk":
        return SystemConfig.desk(**data)
    return SystemConfig.from_dict(data)


def cmd_run(args) -> int:
    from .harness import ExperimentSpec, monte_carlo
    spec = ExperimentSpec.from_yaml(args.config)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.realizations is not None and args.realizations < 1:
        raise ConfigError("--realizations must be >= 1")
    out = Path(args.out or spec.output)
    rows = monte_carlo(spec, out, threads=args.threads,
                       deterministic=args.deterministic, seed=args.seed,
                       realizations=args.realizations)
    print(f"wrote {len(rows)} rows to {out / 'results.csv'}")
    return EXIT_OK


def cmd_trace(args) -> int:
    from .harness import design_method, draw_realization
    from .optimizer import write_trace_csv
    config = _system_config(args.config)
    if args.seed is not None:
        config = config.replace(rng_seed=args.seed)
    real = draw_realization(config, args.realization)
    design = design_method(args.method, real, config)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", design.trace)
    tr = design.trace
    print(f"{args.method}: {tr.iterations} iterations, "
          f"converged={tr.converged}, final MSE {tr.mse[-1]:.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_checks
    config = _system_config(args.config) if args.config else SystemConfig.desk()
    results = run_checks(config, seed=args.seed, instances=args.realizations)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return EXIT_OK if failed == 0 else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose
                        else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "trace": cmd_trace,
               "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateStateError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, ReportingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
