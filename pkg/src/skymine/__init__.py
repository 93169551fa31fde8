"""Indexing and mining engine for multidimensional astronomical catalogs."""

__version__ = "0.1.0"
