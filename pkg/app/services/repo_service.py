from __future__ import annotations

import math
from datetime import datetime
from typing import Sequence

from sqlalchemy import select
from sqlalchemy.orm import Session

from app.db.models import Run, SparsityReportRow
from app.services.linalg_service import SparsityReport


def start_run(db: Session, subcommand: str, config_hash: str, seed: int, threads: int, output_path: str | None) -> int:
    run = Run(
        subcommand=subcommand,
        config_hash=config_hash,
        seed=seed,
        threads=threads,
        status="running",
        output_path=output_path,
    )
    db.add(run)
    db.flush()
    return run.run_id


def finish_run(db: Session, run_id: int, status: str, exit_code: int, message: str | None = None) -> None:
    run = db.get(Run, run_id)
    if run is None:
        return
    run.status = status
    run.exit_code = exit_code
    run.message = message[:4000] if message else None
    run.finished_at = datetime.utcnow()


def add_sparsity_rows(db: Session, run_id: int, reports: Sequence[SparsityReport]) -> int:
    for report in reports:
        db.add(
            SparsityReportRow(
                run_id=run_id,
                family=report.family,
                kappa=report.kappa,
                mu=report.mu,
                # -1 marks rows without a support radius (Matern)
                support=report.C if math.isfinite(report.C) else -1.0,
                n=report.n,
                pct_zero_cov=report.pct_zero_cov,
                pct_quasi_prec=report.pct_quasi_prec,
                pct_quasi_chol=report.pct_quasi_chol,
                epsilon=report.epsilon,
            )
        )
    return len(reports)


def recent_runs(db: Session, limit: int = 20) -> list[Run]:
    return list(db.execute(select(Run).order_by(Run.run_id.desc()).limit(limit)).scalars())


def sparsity_rows_for(db: Session, run_id: int) -> list[SparsityReportRow]:
    return list(
        db.execute(
            select(SparsityReportRow).where(SparsityReportRow.run_id == run_id).order_by(SparsityReportRow.row_id)
        ).scalars()
    )
