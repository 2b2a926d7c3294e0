"""Workbench for graphs of groups with Z^2 edge groups and F_k x Z vertex groups."""

__version__ = "0.1.0"
