"""CLI entrypoint that logs the package version and its numeric stack.
"""
import numpy
import pandas
import requests
import scipy
import yaml

from . import __version__ as package_version
from .logs import configure_logging, get_logger

logger = get_logger("version_info_cli")


def versions() -> dict:
    return {
        "signal-evo": package_version,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
        "PyYAML": yaml.__version__,
        "requests": requests.__version__,
    }


def main() -> None:
    configure_logging()
    for name, version in versions().items():
        logger.info("%s version: %s", name, version)


if __name__ == "__main__":
    main()
