"""Penetration testing of a microgrid dispatch controller via false SoC data."""

__version__ = "0.1.0"
