"""Simulation and exact analysis of critical decomposable branching processes
with a type-0 lineage in an i.i.d. random environment."""

__version__ = "0.1.0"
