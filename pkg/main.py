#!/usr/bin/env python3
import logging, sys

from engine import settings
from cli.commands import main

# Basic logging setup; diagnostics go to stderr, data to stdout and files
logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                    format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main_entry():
    """Entry point for console script"""
    settings.warmup()
    try:
        sys.exit(main(sys.argv[1:]))
    except KeyboardInterrupt:
        sys.exit(130)


if __name__ == "__main__":
    main_entry()
