from __future__ import annotations

from datetime import datetime

from sqlalchemy import DateTime, Enum, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column, relationship

from app.db.base import Base

RUN_STATUSES = ("running", "ok", "config_error", "numerical_error")


class Run(Base):
    __tablename__ = "runs"

    run_id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    subcommand: Mapped[str] = mapped_column(String(32), nullable=False)
    config_hash: Mapped[str] = mapped_column(String(16), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, default=0)
    threads: Mapped[int] = mapped_column(Integer, default=1)

    status: Mapped[str] = mapped_column(
        Enum(*RUN_STATUSES, name="run_status"),
        default="running",
        nullable=False,
    )
    exit_code: Mapped[int | None] = mapped_column(Integer, nullable=True)
    output_path: Mapped[str | None] = mapped_column(String(512), nullable=True)
    message: Mapped[str | None] = mapped_column(Text, nullable=True)

    started_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)
    finished_at: Mapped[datetime | None] = mapped_column(DateTime, nullable=True)

    sparsity_rows: Mapped[list["SparsityReportRow"]] = relationship(
        back_populates="run", cascade="all, delete-orphan"
    )


class SparsityReportRow(Base):
    __tablename__ = "sparsity_reports"

    row_id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.run_id", ondelete="CASCADE"), index=True)

    family: Mapped[str] = mapped_column(String(32), nullable=False)
    kappa: Mapped[float] = mapped_column(Float, nullable=False)
    mu: Mapped[float] = mapped_column(Float, nullable=False)
    support: Mapped[float] = mapped_column(Float, nullable=False)
    n: Mapped[int] = mapped_column(Integer, nullable=False)
    pct_zero_cov: Mapped[float] = mapped_column(Float, nullable=False)
    pct_quasi_prec: Mapped[float] = mapped_column(Float, nullable=False)
    pct_quasi_chol: Mapped[float] = mapped_column(Float, nullable=False)
    epsilon: Mapped[float] = mapped_column(Float, nullable=False)

    run: Mapped[Run] = relationship(back_populates="sparsity_rows")
