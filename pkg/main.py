from application.cli import main as cli_main
from application.core.logging import get_logger

logger = get_logger(__name__)


def main():
    """Command-line entry point."""
    try:
        cli_main()
    except Exception as e:
        logger.error(f"Unhandled failure: {e}")
        raise


if __name__ == "__main__":
    main()
