from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Iterator

from sqlalchemy.orm import Session, sessionmaker

logger = logging.getLogger(__name__)


@contextmanager
def db_session(session_factory: sessionmaker) -> Iterator[Session]:
    """One ledger transaction: commit on success, rollback and re-raise otherwise."""
    session: Session = session_factory()
    try:
        yield session
        session.commit()
    except Exception:
        logger.debug("Ledger transaction rolled back", exc_info=True)
        session.rollback()
        raise
    finally:
        session.close()
