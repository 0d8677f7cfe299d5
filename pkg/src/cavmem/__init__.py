"""Protecting a cavity-stored photonic qubit with a beam of two-level atoms."""

__version__ = "0.1.0"
