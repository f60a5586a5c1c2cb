from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

import numpy as np

from app.cli.context import CommandContext, load_config
from app.cli.router import Command, Router
from app.core.config import Settings
from app.core.errors import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    MaternLabError,
    ValidationError,
    exit_code_for,
)
from app.db.engine import ensure_schema, make_engine, make_session_factory
from app.db.session import db_session
from app.services import render_service as render
from app.services import repo_service
from app.services import specfun_service as sf
from app.services.parallel_service import ThreadPoolMap

from app.cli.handlers.kernels import router as kernels_router
from app.cli.handlers.gp import router as gp_router
from app.cli.handlers.experiments import router as experiments_router
from app.cli.handlers.history import router as history_router

logger = logging.getLogger(__name__)

ROUTERS: tuple[Router, ...] = (kernels_router, gp_router, experiments_router, history_router)

_STATUS_BY_EXIT = {EXIT_OK: "ok", EXIT_CONFIG: "config_error", EXIT_NUMERICAL: "numerical_error"}


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--output", help="output path, '-' or omitted for stdout")
    common.add_argument("--seed", type=int, default=None, help="master seed (default MATERN_SEED or 0)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default MATERN_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("--dry-run", action="store_true", help="print the resolved config and sizes, compute nothing")
    return common


def build_parser(routers: Sequence[Router] = ROUTERS) -> tuple[argparse.ArgumentParser, dict[str, Command]]:
    parser = argparse.ArgumentParser(prog="matern-lab", description="Matern kernel engine and geostatistics workbench")
    subparsers = parser.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")
    common = _common_options()
    commands: dict[str, Command] = {}
    for router in routers:
        for command in router.commands:
            if command.name in commands:
                raise ValueError(f"command {command.name!r} registered by two routers")
            sub = subparsers.add_parser(command.name, help=command.help, parents=[common])
            if command.configure is not None:
                command.configure(sub)
            commands[command.name] = command
    return parser, commands


def _report_failure(exc: BaseException) -> None:
    sys.stderr.write(f"error: {exc}\n")
    if isinstance(exc, ValidationError):
        for violation in exc.violations:
            sys.stderr.write(f"  - {violation}\n")


class _Ledger:
    """Best-effort run ledger; a broken database never changes an exit code."""

    def __init__(self, settings: Settings, enabled: bool) -> None:
        self._factory = None
        self._run_id: int | None = None
        if not enabled:
            return
        try:
            engine = make_engine(settings.database_url)
            ensure_schema(engine)
            self._factory = make_session_factory(engine)
        except Exception as exc:  # noqa: BLE001
            logger.warning("Run ledger unavailable url=%s err=%s", settings.database_url, exc)

    def start(self, ctx: CommandContext) -> None:
        if self._factory is None:
            return
        try:
            with db_session(self._factory) as db:
                self._run_id = repo_service.start_run(db, ctx.name, ctx.digest, ctx.seed, ctx.threads, ctx.output)
        except Exception as exc:  # noqa: BLE001
            logger.warning("Run ledger start failed err=%s", exc)
            self._factory = None

    def finish(self, ctx: CommandContext, exit_code: int, message: str | None) -> None:
        if self._factory is None or self._run_id is None:
            return
        try:
            with db_session(self._factory) as db:
                repo_service.finish_run(db, self._run_id, _STATUS_BY_EXIT[exit_code], exit_code, message)
                if exit_code == EXIT_OK and ctx.sparsity_reports:
                    repo_service.add_sparsity_rows(db, self._run_id, ctx.sparsity_reports)
            logger.debug("Run ledger run_id=%s status=%s", self._run_id, _STATUS_BY_EXIT[exit_code])
        except Exception as exc:  # noqa: BLE001
            logger.warning("Run ledger finish failed run_id=%s err=%s", self._run_id, exc)


def run(argv: Sequence[str] | None, settings: Settings) -> int:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    command = commands[args.subcommand]

    try:
        sf.set_policy(sf.AccuracyPolicy(settings.specfun_rel_tol, settings.specfun_max_terms))
        config = load_config(args.config) if command.needs_config else {}
    except MaternLabError as exc:
        _report_failure(exc)
        return EXIT_CONFIG

    seed = settings.default_seed if args.seed is None else args.seed
    threads = settings.default_threads if args.threads is None else args.threads
    if seed < 0 or threads < 1:
        _report_failure(ValueError("--seed must be >= 0 and --threads >= 1"))
        return EXIT_CONFIG
    digest = render.config_hash({**config, "subcommand": command.name, "seed": seed})

    ledger = _Ledger(settings, settings.run_ledger_enabled and command.needs_config and not args.dry_run)
    with ThreadPoolMap(threads) as pmap:
        ctx = CommandContext(
            name=command.name,
            settings=settings,
            config=config,
            seed=seed,
            threads=threads,
            pmap=pmap,
            output=args.output,
            dry_run=args.dry_run,
            digest=digest,
            args=args,
        )
        logger.info("Run subcommand=%s config_hash=%s seed=%s threads=%s", command.name, digest, seed, threads)
        ledger.start(ctx)
        try:
            command.handler(ctx)
        except (MaternLabError, np.linalg.LinAlgError) as exc:
            code = exit_code_for(exc)
            logger.debug("Subcommand failed subcommand=%s", command.name, exc_info=True)
            _report_failure(exc)
            ledger.finish(ctx, code, str(exc))
            return code
    ledger.finish(ctx, EXIT_OK, None)
    return EXIT_OK
