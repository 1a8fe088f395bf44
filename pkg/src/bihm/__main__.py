"""Entry point for ``python -m bihm``."""

import sys

from bihm.cli import main

if __name__ == "__main__":
    sys.exit(main())
