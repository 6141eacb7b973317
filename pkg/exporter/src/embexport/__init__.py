"""Embed labeled image folders with a vision backbone into EMB1/CSV files."""

__version__ = "0.1.0"
