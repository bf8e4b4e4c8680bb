"""Spin-boson weak-coupling toolkit."""
__version__ = "0.1.0"
