"""Free-boundary Navier-Stokes-Poisson simulator for spherically symmetric
gaseous stars and plasmas, with initial-data construction, weak entropy
pairs and vanishing-viscosity sweep diagnostics."""

from nsp_free.constants import ModelParams, derive

__all__ = ["ModelParams", "derive"]
__version__ = "0.1.0"
