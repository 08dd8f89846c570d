"""
FOSR CLI

Command-line interface for fosr, providing terminal access to model
fitting, GCV tuning, simulation sweeps and spectrum tables.
"""

__version__ = "0.1.0"
