"""Modeling toolkit for a capacitively shunted three-junction flux circuit."""

__version__ = "0.1.0"
