"""Numerical checks of the smoothing and conformal-rescaling route to mass positivity
for rough asymptotically flat metrics in three dimensions."""

from .grid import Grid, MetricField, ScalarField, lp_norm, sample
from .metrics import AnalyticMetric, RoughConformalSpec, flat, rough_conformal, schwarzschild_isotropic
from .pipeline import MassReport, RunConfig, run_sweep, verify

__all__ = [
    "AnalyticMetric",
    "Grid",
    "MassReport",
    "MetricField",
    "RoughConformalSpec",
    "RunConfig",
    "ScalarField",
    "flat",
    "lp_norm",
    "rough_conformal",
    "run_sweep",
    "sample",
    "schwarzschild_isotropic",
    "verify",
]
__version__ = "0.1.0"
