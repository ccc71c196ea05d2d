"""Bregman superquantiles: plug-in estimation, quadrature oracle, coherence and growth checks."""

from .distributions import AnalyticDistribution, affine, exponential, half_cauchy, pareto, parse_distribution, sample, uniform
from .errors import *  # noqa: F401,F403
from .estimators import (
    EmpiricalSample,
    RiskEstimate,
    bregman_superquantile_hat,
    clt_interval,
    estimate,
    quantile_hat,
    superquantile_hat,
)
from .generators import BregmanGenerator, bregman_mean, divergence, parse_generator
from .oracle import asymptotic_variance, true_bregman_superquantile, true_quantile, true_superquantile

__version__ = "0.1.0"
