"""Variable-density incompressible flow in a gravitational potential."""

__version__ = "0.1.0"
