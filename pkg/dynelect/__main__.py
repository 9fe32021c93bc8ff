"""Allow ``python -m dynelect``."""

import sys

from .cli import main

sys.exit(main())
