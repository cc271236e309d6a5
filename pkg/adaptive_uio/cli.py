"""
Command-line front end: run one scenario or a sweep and write the CSV artifacts.
"""

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from .base import ConfigError, UIOError
from .harness import parse_grid, run_scenario, sweep
from .scenario import BUILTIN_SCENARIOS, Scenario, builtin_scenario, load_scenario, with_overrides

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    log_file: str | None = None
    out_dir: Path = Path("runs")
    sweep_workers: int = 4

    @classmethod
    def from_env(cls) -> "Settings":
        workers = os.getenv("ADAPTIVE_UIO_SWEEP_WORKERS", "4")
        try:
            sweep_workers = int(workers)
        except ValueError as e:
            raise ConfigError(f"ADAPTIVE_UIO_SWEEP_WORKERS must be an integer, got {workers!r}") from e
        return cls(
            log_level=os.getenv("ADAPTIVE_UIO_LOG_LEVEL", "INFO").upper(),
            log_file=os.getenv("ADAPTIVE_UIO_LOG_FILE") or None,
            out_dir=Path(os.getenv("ADAPTIVE_UIO_OUT_DIR", "runs")),
            sweep_workers=sweep_workers,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptive-uio",
        description="Unknown-input observer with DREM identification of the exosystem and disturbance.",
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", type=Path, help="scenario TOML file")
    source.add_argument(
        "--scenario",
        default="paper_sec5",
        choices=sorted(BUILTIN_SCENARIOS),
        help="builtin scenario (default: %(default)s)",
    )
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="noise seed (0 <= seed < 2**64)")
    parser.add_argument("--no-noise", action="store_true", help="disable measurement noise")
    parser.add_argument("--duration", type=float, help="simulation horizon in seconds")
    parser.add_argument("--dt", type=float, help="integration step in seconds")
    parser.add_argument("--sweep", metavar="FIELD=a:b:n", help="sweep a scalar scenario field")
    parser.add_argument("--timeout", type=float, help="per-row sweep timeout in seconds")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="overrides ADAPTIVE_UIO_LOG_LEVEL",
    )
    return parser


def configure_logging(level: str, log_file: str | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.config) if args.config else builtin_scenario(args.scenario)
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["noise.seed"] = args.seed
    if args.no_noise:
        overrides["noise.enabled"] = False
    if args.duration is not None:
        overrides["simulation.t_end"] = args.duration
    if args.dt is not None:
        overrides["simulation.dt"] = args.dt
    return with_overrides(scenario, overrides) if overrides else scenario


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.from_env()
        configure_logging(args.log_level or settings.log_level, settings.log_file)
        scenario = scenario_from_args(args)
        out_dir = args.out or Path(scenario.output.dir or settings.out_dir / scenario.name)

        if args.sweep:
            name, values = parse_grid(args.sweep)
            rows = sweep(
                scenario,
                name,
                values,
                out_dir=out_dir,
                workers=settings.sweep_workers,
                timeout=args.timeout,
            )
            failed = sum(1 for row in rows if row["error"])
            sys.stdout.write(f"{len(rows)} sweep rows, {failed} failed, table in {out_dir}\n")
            return 0

        report = run_scenario(scenario, out_dir=out_dir)
        for name, value in report.metrics.items():
            sys.stdout.write(f"{name:>20s}  {value:.6g}\n")
        return 0
    except UIOError as e:
        logger.error("%s: %s", type(e).__name__, e.message)
        return e.exit_code
    except OSError as e:
        error = ConfigError(f"cannot read or write {e.filename or 'a file'}: {e.strerror or e}")
        logger.error("%s: %s", type(e).__name__, error.message)
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
