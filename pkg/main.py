"""
DPWFL: command-line entry point
===============================
Simulator and privacy accountant for differentially private wireless
federated learning with over-the-air aggregation.
Run with:   python main.py <privacy-curve|simulate|tradeoff|verify> [--preset fig1a|fig1b] ...
"""

import logging
import os
import sys

# Ensure project root on path
ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, ROOT)

from ui.cli import main


if __name__ == "__main__":
    logging.basicConfig(format="[%(name)s] %(message)s", level=logging.INFO)
    sys.exit(main())
