"""Calibration of the sensitivity parameter Gamma of the marginal sensitivity model."""

__version__ = "0.1.0"

from .bounds import (BoundsCurve, ate_bounds, bounds_curve, critical_value, gamma_frac,
                     odds_ratio, pei_theta)
from .calibration import informal_benchmark, nco_lower_bound, rct_ate, rct_lower_bound
from .data import Dataset
from .simgen import make_config, sample_pair

__all__ = [
    "BoundsCurve", "Dataset", "ate_bounds", "bounds_curve", "critical_value", "gamma_frac",
    "informal_benchmark", "make_config", "nco_lower_bound", "odds_ratio", "pei_theta",
    "rct_ate", "rct_lower_bound", "sample_pair",
]
