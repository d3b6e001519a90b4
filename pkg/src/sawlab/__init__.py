"""Weakly self-avoiding and self-avoiding walks on Z^d: exact enumeration,
Monte Carlo, cone geometry of self-intersections, and exponent fits."""

__version__ = "0.1.0"

from .walk import LatticePath, SiltPointProcess, silt, hull_radius, endpoint_distance  # noqa: E402,F401
from .exact import enumerate_ensemble, saw_count, srw_silt_mean, silt_band_check  # noqa: E402,F401
from .mcmc import ChainConfig, sample_weakly_saw, sample_saw_pivot  # noqa: E402,F401
from .exponents import mu_formula, fit_exponent  # noqa: E402,F401
