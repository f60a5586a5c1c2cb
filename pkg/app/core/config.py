from dataclasses import dataclass
import os

from dotenv import load_dotenv


@dataclass(frozen=True)
class Settings:
    database_url: str = "sqlite:///matern_lab.db"
    log_level: str = "INFO"
    app_env: str = "dev"
    run_ledger_enabled: bool = True
    default_threads: int = 1
    default_seed: int = 0
    specfun_rel_tol: float = 1e-12
    specfun_max_terms: int = 10_000


def _env_bool(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    raw = (os.getenv(name) or "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
        return value if value >= minimum else default
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    raw = (os.getenv(name) or "").strip()
    if not raw:
        return default
    try:
        value = float(raw)
        return value if value > 0 else default
    except ValueError:
        return default


def load_settings() -> Settings:
    load_dotenv()

    database_url = os.getenv("DATABASE_URL", "").strip() or "sqlite:///matern_lab.db"

    return Settings(
        database_url=database_url,
        log_level=os.getenv("LOG_LEVEL", "INFO").strip(),
        app_env=os.getenv("APP_ENV", "dev").strip(),
        run_ledger_enabled=_env_bool("RUN_LEDGER_ENABLED", True),
        default_threads=_env_int("MATERN_THREADS", os.cpu_count() or 1),
        default_seed=_env_int("MATERN_SEED", 0, minimum=0),
        specfun_rel_tol=_env_float("SPECFUN_REL_TOL", 1e-12),
        specfun_max_terms=_env_int("SPECFUN_MAX_TERMS", 10_000),
    )
