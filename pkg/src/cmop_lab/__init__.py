"""Self-consistent projector (Born order) simulations of driven-dissipative
two-level lattices, with exact and mean-field references."""

__version__ = "0.1.0"
