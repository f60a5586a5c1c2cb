import sys

from app.cli.dispatcher import run
from app.core.config import load_settings
from app.core.logging import setup_logging


def main() -> None:
    settings = load_settings()
    setup_logging(settings.log_level)
    sys.exit(run(sys.argv[1:], settings))


if __name__ == "__main__":
    main()
