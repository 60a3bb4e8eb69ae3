"""Spectral-Galerkin simulator and analysis toolkit for synchronization by
noise in the renormalized stochastic Allen-Cahn equation on the 2-torus."""

__version__ = "0.1.0"

from .besov import BesovParams, besov_norm_p, besov_norm_sup
from .noise import NoiseRealization, RenormConstant, hermite, renorm_constant
from .solver import SolverConfig, Trajectory, evolve, evolve_coupled, step
from .torus import Field, TorusGrid, heat_smooth, load_field, lp_norm, \
    order_gap, save_field

__all__ = [
    "__version__",
    "BesovParams", "besov_norm_p", "besov_norm_sup",
    "NoiseRealization", "RenormConstant", "hermite", "renorm_constant",
    "SolverConfig", "Trajectory", "evolve", "evolve_coupled", "step",
    "Field", "TorusGrid", "heat_smooth", "load_field", "lp_norm",
    "order_gap", "save_field",
]
