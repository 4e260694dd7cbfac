"""Allow ``python -m convqa`` as an alias for the ``convqa`` script."""

import sys

from convqa.cli import main

if __name__ == "__main__":
    sys.exit(main())
