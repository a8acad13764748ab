"""Run the command line interface via ``python -m syngcn``."""

import sys

from syngcn.cli import main

if __name__ == "__main__":
    sys.exit(main())
