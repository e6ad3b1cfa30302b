"""Inequality certificates and dynamical-systems experiments."""

from .experiments import (
    AttractorCloud,
    EnsembleSpec,
    absorbing_experiment,
    attractor_experiment,
    continuous_dependence_ratio,
    regularity_check,
    semidistance,
)
from .inequalities import InequalityCertificate, check_gronwall, check_interpolation, find_g_delta_constant

__all__ = [
    "InequalityCertificate",
    "find_g_delta_constant",
    "check_interpolation",
    "check_gronwall",
    "EnsembleSpec",
    "AttractorCloud",
    "absorbing_experiment",
    "continuous_dependence_ratio",
    "attractor_experiment",
    "semidistance",
    "regularity_check",
]
