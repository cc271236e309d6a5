#!/usr/bin/env python3
"""
Adaptive unknown-input observer, command-line entry point.

Equivalent to the installed `adaptive-uio` script.
"""

import sys

from adaptive_uio.cli import main

if __name__ == "__main__":
    sys.exit(main())
