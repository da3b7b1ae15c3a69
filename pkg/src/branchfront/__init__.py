"""Numerical laboratory for combustion fronts on branched domains."""
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
