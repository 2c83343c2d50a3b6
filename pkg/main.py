import logging
import sys

from dotenv import load_dotenv

from cli_controller import CliController
from config_loader import apply_runtime_settings, load_runtime_settings


def main() -> int:
    load_dotenv()

    settings = load_runtime_settings()
    logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO), format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    apply_runtime_settings(settings)

    return CliController(settings).run(sys.argv[1:])

if __name__ == "__main__":
    sys.exit(main())
