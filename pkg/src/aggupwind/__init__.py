"""Upwind and semi-Lagrangian schemes for the aggregation equation with pointy potentials."""

from .grid import (Atoms, CartesianGrid, Density, DiscreteMeasure, GridError, IndicatorBoxDifference,
                   center_of_mass, discretize, quantile, second_moment)
from .kernels import BACKEND
from .metrics import fit_rate, wasserstein1_1d, wasserstein2_1d
from .potential import (Potential, PotentialError, abs_scaled, custom, energy, exp_pointy, from_name, half_abs,
                        quad_linear, quadratic_radial)
from .upwind import CFLError, SchemeError, initial_state, run, step, velocity, weights

__version__ = "0.1.0"

__all__ = [
    "Atoms", "BACKEND", "CFLError", "CartesianGrid", "Density", "DiscreteMeasure", "GridError",
    "IndicatorBoxDifference", "Potential", "PotentialError", "SchemeError", "abs_scaled", "center_of_mass",
    "custom", "discretize", "energy", "exp_pointy", "fit_rate", "from_name", "half_abs", "initial_state",
    "quad_linear", "quadratic_radial", "quantile", "run", "second_moment", "step", "velocity",
    "wasserstein1_1d", "wasserstein2_1d", "weights",
]
