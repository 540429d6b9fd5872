"""Path-integrated control contraction metric controllers on Chebyshev grids."""

from .ccm import CcmCertificate, Plant, certified_rate, feedback_along_path, gain, lmi_residual
from .chebdiff import ChebGrid, ChebSeries, chebgrid
from .config import ConfigError, RunConfig, load_config, parse_config
from .geodesic import GeodesicProblem, GeodesicSolution, solve_geodesic, static_control
from .geometry import (
    MetricDegeneracyError,
    MetricField,
    PathState,
    christoffel,
    covariant_derivative,
    energy,
    first_variation,
    geodesic_residual,
    length,
)
from .pathdyn import ControllerConfig, Realization, lemma1_weighting, path_rhs, step
from .plant import DisturbanceModel, benchmark_certificate, benchmark_plant, get_certificate, get_plant
from .sim import ExperimentSpec, TrajectoryLog, energy_slope, omega_radius, run

__version__ = "0.1.0"

__all__ = [
    "CcmCertificate", "Plant", "certified_rate", "feedback_along_path", "gain", "lmi_residual",
    "ChebGrid", "ChebSeries", "chebgrid",
    "ConfigError", "RunConfig", "load_config", "parse_config",
    "GeodesicProblem", "GeodesicSolution", "solve_geodesic", "static_control",
    "MetricDegeneracyError", "MetricField", "PathState", "christoffel", "covariant_derivative",
    "energy", "first_variation", "geodesic_residual", "length",
    "ControllerConfig", "Realization", "lemma1_weighting", "path_rhs", "step",
    "DisturbanceModel", "benchmark_certificate", "benchmark_plant", "get_certificate", "get_plant",
    "ExperimentSpec", "TrajectoryLog", "energy_slope", "omega_radius", "run",
]
