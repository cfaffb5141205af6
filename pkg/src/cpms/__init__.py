"""Numerical laboratory for the complex porous-media Schroedinger equation on an interval."""
from .errors import ConfigurationError, CpmsError, SolverError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "CpmsError", "SolverError", "__version__"]
