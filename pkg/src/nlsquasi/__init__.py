"""Quasi-linear dynamics of cubic NLS on the circle: exact normal-form algebra and numerics."""
from .lattice import CONVENTION, FourierState, InitialDataSpec, NormSpec, make_initial_data

__all__ = ["CONVENTION", "FourierState", "InitialDataSpec", "NormSpec", "make_initial_data"]
__version__ = "0.1.0"
