"""
Command-line entry point: `homog2d <command> --config PATH`.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
from pathlib import Path
from typing import Sequence

from homog2d import __version__
from homog2d.cli.config_file import parse_config
from homog2d.core.config import Settings, get_settings
from homog2d.core.errors import Homog2dError
from homog2d.models.schemas import RunConfig
from homog2d.repositories.corrector_cache import CorrectorCacheRepository
from homog2d.repositories.reports import ReportRepository
from homog2d.services.pipeline import STAGE_PLAN, HomogenizationPipeline, RunOutcome

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homog2d", description="Periodic homogenization experiments for 2D elliptic systems"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=list(STAGE_PLAN), help="Stage to run (with its prerequisites)")
    parser.add_argument("--config", type=Path, required=True, help="TOML run configuration")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (overrides output_dir)")
    parser.add_argument(
        "--cache", type=Path, default=None, help="Corrector cache directory (overrides HOMOG2D_CACHE and cache_dir)"
    )
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for independent solves")
    parser.add_argument("--seed", type=int, default=None, help="Seed for probes and sampled points")
    return parser


def resolve_cache_dir(cli_value: Path | None, settings: Settings, config: RunConfig) -> Path | None:
    """--cache, then HOMOG2D_CACHE, then the config file."""
    return cli_value or settings.cache_dir or config.cache_dir


async def execute(config: RunConfig, settings: Settings, cache_dir: Path | None) -> RunOutcome:
    reports = ReportRepository.create(config.output_dir)
    cache = CorrectorCacheRepository.create(cache_dir) if cache_dir is not None else None
    pipeline = HomogenizationPipeline(config, settings, reports, cache)
    return await pipeline.run()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = parse_config(
            args.config,
            {"command": args.command, "output_dir": args.out, "threads": args.threads, "seed": args.seed},
        )
    except Homog2dError as exc:
        logger.error(f"{exc.message}")
        logger.debug(f"{exc.to_record()}")
        return exc.exit_code

    outcome = asyncio.run(execute(config, settings, resolve_cache_dir(args.cache, settings, config)))
    counts = outcome.counts()
    logger.info(
        f"{len(outcome.artifacts)} artifacts in {config.output_dir}: "
        f"{counts['PASS']} PASS, {counts['FLAG']} FLAG, {counts['FAIL']} FAIL (exit {outcome.exit_code})"
    )
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
