"""Invariant densities of randomly switched one-dimensional ODE systems.

A system is a finite family of scalar vector fields together with a matrix
of switching rates. The package finds the minimal invariant intervals,
solves the stationary flux ODE system on each, iterates the transfer
operator as an independent route, samples the process event by event as a
third, and classifies the one-sided density behavior at critical points.
"""

from .asymptotics import (AsymptoticForm, ExponentFit, LinearizationData,
                          classify_asymptotics, extrapolate_to_zero,
                          fit_exponent, linearize_at_critical)
from .checks import appendix_identity_check, representation_check
from .config import RunConfig, build_system, config_from_dict, config_to_dict, load_config
from .errors import (ConfigError, DegenerateModelError, DiagnosticError,
                     NumericalError, SeriesRadiusError, SwitchdensError,
                     UnsupportedCaseError, ValidationFailure)
from .fields import AffineField, PolynomialField, TabulatedField, critical_points
from .flux_solver import DensityGrid, GridSpec, solve_flux_ode
from .pf_solver import (density_grid_from_functions, fixed_point_certificate,
                        iterate_to_fixed_point, perron_frobenius_step,
                        uniform_density_grid)
from .simulate import (EnsembleStats, OccupationHistogram, SimConfig, SimResult,
                       estimate_density, occupation_density, simulate)
from .structure import (CriticalPointCase, ExistenceReport, MinimalInvariantSet,
                        classify_critical_point, existence_criterion,
                        minimal_invariant_sets)
from .system import SwitchingRates, SwitchingSystem

__version__ = "0.1.0"

__all__ = [
    "AffineField",
    "AsymptoticForm",
    "ConfigError",
    "CriticalPointCase",
    "DegenerateModelError",
    "DensityGrid",
    "DiagnosticError",
    "EnsembleStats",
    "ExistenceReport",
    "ExponentFit",
    "GridSpec",
    "LinearizationData",
    "MinimalInvariantSet",
    "NumericalError",
    "OccupationHistogram",
    "PolynomialField",
    "RunConfig",
    "SeriesRadiusError",
    "SimConfig",
    "SimResult",
    "SwitchdensError",
    "SwitchingRates",
    "SwitchingSystem",
    "TabulatedField",
    "UnsupportedCaseError",
    "ValidationFailure",
    "appendix_identity_check",
    "build_system",
    "classify_asymptotics",
    "classify_critical_point",
    "config_from_dict",
    "config_to_dict",
    "critical_points",
    "density_grid_from_functions",
    "estimate_density",
    "existence_criterion",
    "extrapolate_to_zero",
    "fit_exponent",
    "fixed_point_certificate",
    "iterate_to_fixed_point",
    "linearize_at_critical",
    "load_config",
    "minimal_invariant_sets",
    "occupation_density",
    "perron_frobenius_step",
    "representation_check",
    "simulate",
    "solve_flux_ode",
    "uniform_density_grid",
]
