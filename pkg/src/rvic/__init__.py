"""Tabular skill discovery: VIC and Relative VIC."""

__version__ = "0.1.0"
