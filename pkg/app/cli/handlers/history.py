from __future__ import annotations

import argparse

from app.cli.context import CommandContext
from app.cli.router import Router
from app.core.errors import ConfigError
from app.db.engine import ensure_schema, make_engine, make_session_factory
from app.db.session import db_session
from app.services import repo_service
from app.services.linalg_service import SparsityReport

router = Router()

HISTORY_COLUMNS = (
    "run_id", "subcommand", "config_hash", "seed", "threads", "status",
    "exit_code", "output_path", "started_at", "finished_at",
)


def _configure(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--limit", type=int, default=20, help="number of runs to list")
    parser.add_argument("--run-id", type=int, default=None, help="list the sparsity rows of one run")


@router.command("history", help="recent runs from the run ledger", needs_config=False, configure=_configure)
def cmd_history(ctx: CommandContext) -> None:
    limit = ctx.args.limit
    if limit < 1:
        raise ConfigError("--limit must be positive")
    if ctx.plan(limit=limit):
        return
    engine = make_engine(ctx.settings.database_url)
    ensure_schema(engine)
    with db_session(make_session_factory(engine)) as db:
        if ctx.args.run_id is not None:
            rows = repo_service.sparsity_rows_for(db, ctx.args.run_id)
            ctx.write_csv(
                SparsityReport.COLUMNS,
                [
                    (r.family, r.kappa, r.mu, r.support, r.n, r.pct_zero_cov, r.pct_quasi_prec, r.pct_quasi_chol, r.epsilon)
                    for r in rows
                ],
            )
            return
        runs = repo_service.recent_runs(db, limit)
        ctx.write_csv(
            HISTORY_COLUMNS,
            [
                (
                    r.run_id, r.subcommand, r.config_hash, r.seed, r.threads, r.status,
                    "" if r.exit_code is None else r.exit_code, r.output_path or "",
                    r.started_at.isoformat(timespec="seconds") if r.started_at else "",
                    r.finished_at.isoformat(timespec="seconds") if r.finished_at else "",
                )
                for r in runs
            ],
        )
