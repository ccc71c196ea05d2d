"""Plug-in estimators built from order statistics, and CLT intervals.

For a sample with order statistics ``X_(1) <= ... <= X_(n)`` the Bregman
superquantile estimate is

    (gamma')^{-1}( 1/(n (1-alpha)) * sum_{i = floor(n alpha) + 1}^{n} gamma'(X_(i)) )

and the classical superquantile is the same with ``gamma'`` the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Iterable, List, Optional

import numpy as np

from . import _kernels
from .distributions import AnalyticDistribution, load_csv_values, sample as draw
from .errors import DomainError, EmptyInput, NoInterval, TailTooSmall, VarianceDiverges
from .generators import BregmanGenerator, identity, parse_generator
from .oracle import DEFAULT_SPEC, QuadratureSpec, asymptotic_variance, quantile_asymptotic_variance

__all__ = [
    "EmpiricalSample",
    "RiskEstimate",
    "tail_start",
    "quantile_rank",
    "empirical_quantile",
    "quantile_hat",
    "superquantile_hat",
    "bregman_superquantile_hat",
    "estimate",
    "clt_interval",
    "rank_spacing",
    "monte_carlo_estimates",
]


def _snap(x: float) -> Optional[int]:
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return None


def tail_start(n: int, alpha: float) -> int:
    """``floor(n alpha)``, immune to representation error in ``alpha`` (0.95 * 100 is 95)."""
    x = n * alpha
    snapped = _snap(x)
    return snapped if snapped is not None else math.floor(x)


def quantile_rank(n: int, alpha: float) -> int:
    """``ceil(n alpha)`` with the same snapping as :func:`tail_start`."""
    x = n * alpha
    snapped = _snap(x)
    return snapped if snapped is not None else math.ceil(x)


class EmpiricalSample:
    """An immutable sample with its order statistics cached."""

    __slots__ = ("values", "sorted", "n", "warnings")

    def __init__(self, values: Iterable[float], warnings: Optional[List[str]] = None):
        v = np.array(values, dtype=float).ravel()
        if v.size == 0:
            raise EmptyInput("empty sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample contains non-finite values")
        v.setflags(write=False)
        s = np.sort(v, kind="stable")
        s.setflags(write=False)
        self.values = v
        self.sorted = s
        self.n = int(v.size)
        self.warnings = list(warnings or [])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalSample":
        values, warnings = load_csv_values(path)
        return cls(values, warnings)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"EmpiricalSample(n={self.n})"


@dataclass(frozen=True)
class RiskEstimate:
    measure: str
    alpha: float
    point: float
    n: int
    tail_count: int
    clt_variance: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    ci_level: Optional[float] = None
    variance_mode: Optional[str] = None

    @property
    def half_width(self) -> Optional[float]:
        if self.ci_low is None:
            return None
        return 0.5 * (self.ci_high - self.ci_low)


def _as_sample(s) -> EmpiricalSample:
    return s if isinstance(s, EmpiricalSample) else EmpiricalSample(s)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def empirical_quantile(s, alpha: float) -> float:
    """Left-continuous inverse of the empirical CDF: ``X_(ceil(n alpha))``."""
    s = _as_sample(s)
    _check_alpha(alpha)
    k = min(max(quantile_rank(s.n, alpha), 1), s.n)
    return float(s.sorted[k - 1])


def quantile_hat(s, alpha: float) -> RiskEstimate:
    s = _as_sample(s)
    q = empirical_quantile(s, alpha)
    return RiskEstimate("quantile", alpha, q, s.n, s.n - tail_start(s.n, alpha))


def _tail(s: EmpiricalSample, alpha: float) -> np.ndarray:
    _check_alpha(alpha)
    k0 = tail_start(s.n, alpha) + 1
    if k0 > s.n:
        raise TailTooSmall(f"alpha={alpha} leaves no order statistics above rank floor(n alpha) for n={s.n}")
    return s.sorted[k0 - 1:]


def superquantile_hat(s, alpha: float) -> RiskEstimate:
    """``1/(n (1-alpha)) * sum_{i > floor(n alpha)} X_(i)``."""
    s = _as_sample(s)
    tail = _tail(s, alpha)
    point = float(tail.sum()) / (s.n * (1.0 - alpha))
    return RiskEstimate("superquantile", alpha, point, s.n, len(tail))


def bregman_superquantile_hat(s, g: BregmanGenerator, alpha: float) -> RiskEstimate:
    """Plug-in Bregman superquantile; equals :func:`superquantile_hat` for affine ``gamma'``."""
    s = _as_sample(s)
    tail = _tail(s, alpha)
    ok = g.in_domain(tail)
    if not ok.all():
        first = int(np.flatnonzero(~ok)[0])
        rank = s.n - len(tail) + first + 1
        raise DomainError(
            f"order statistic X_({rank}) = {float(tail[first])!r} is outside the domain {g.domain} of {g.name}",
            argument="sample",
            index=rank,
        )
    inner = float(g.gamma_p(tail).sum()) / (s.n * (1.0 - alpha))
    point = g.invert(inner)
    return RiskEstimate(f"bregman:{g.name}", alpha, float(point), s.n, len(tail))


def estimate(s, measure: str, alpha: float) -> RiskEstimate:
    """Dispatch on a measure name: ``quantile``, ``superquantile`` or ``bregman:<generator>``."""
    if measure == "quantile":
        return quantile_hat(s, alpha)
    if measure == "superquantile":
        return superquantile_hat(s, alpha)
    if measure.startswith("bregman:"):
        return bregman_superquantile_hat(s, parse_generator(measure[8:]), alpha)
    raise ValueError(f"unknown measure {measure!r}")


def _generator_for(measure: str) -> Optional[BregmanGenerator]:
    if measure == "superquantile":
        return identity()
    if measure.startswith("bregman:"):
        return parse_generator(measure[8:])
    return None


def rank_spacing(n: int) -> int:
    """Half-width in ranks of the centred differences used for quantile densities."""
    return max(5, math.ceil(math.sqrt(n)))


def _empirical_variance(est: RiskEstimate, g: Optional[BregmanGenerator], s: EmpiricalSample) -> float:
    n, alpha = s.n, est.alpha
    h = rank_spacing(n)
    if est.measure == "quantile":
        k = min(max(quantile_rank(n, alpha), 1), n)
        lo, hi = max(k - h, 1), min(k + h, n)
        dens = (s.sorted[hi - 1] - s.sorted[lo - 1]) * n / (hi - lo)
        return alpha * (1.0 - alpha) * dens * dens
    k0 = tail_start(n, alpha) + 1
    start = max(k0 - h, 1)
    # lower neighbours outside the generator domain are dropped, not failed on
    while start < k0 and not g.in_domain(s.sorted[start - 1]):
        start += 1
    z = g.gamma_p(s.sorted[start - 1:])
    s2 = _kernels.plugin_sigma2(z, k0, n, alpha, h)
    slope = float(g.gamma_pp(est.point))
    return s2 / (slope * slope * (1.0 - alpha) ** 2)


def clt_interval(
    est: RiskEstimate,
    g: Optional[BregmanGenerator] = None,
    level: float = 0.95,
    distribution: Optional[AnalyticDistribution] = None,
    sample=None,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> RiskEstimate:
    """Attach an asymptotic normal interval ``point +- z sqrt(variance / n)``.

    With ``distribution`` the variance comes from the quadrature oracle
    (theoretical mode); otherwise it is estimated from ``sample`` by rank
    differences of the transformed order statistics (empirical mode).
    """
    if not math.isfinite(est.point):
        raise NoInterval("point estimate is not finite")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    if g is None:
        g = _generator_for(est.measure)
    if distribution is not None:
        mode = "theoretical"
        try:
            if est.measure == "quantile":
                var = quantile_asymptotic_variance(distribution, est.alpha)
            else:
                var = asymptotic_variance(distribution, g, est.alpha, spec)
        except VarianceDiverges as exc:
            raise NoInterval(f"asymptotic variance diverges: {exc}") from exc
    else:
        if sample is None:
            raise ValueError("empirical mode needs the sample")
        mode = "empirical"
        var = _empirical_variance(est, g, _as_sample(sample))
    if not (math.isfinite(var) and var > 0):
        raise NoInterval(f"variance estimate is not positive ({var!r})")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level)) if level > 0 else 0.0
    half = z * math.sqrt(var / est.n)
    return replace(
        est,
        clt_variance=var,
        ci_low=est.point - half,
        ci_high=est.point + half,
        ci_level=level,
        variance_mode=mode,
    )


def monte_carlo_estimates(
    d: AnalyticDistribution,
    g: Optional[BregmanGenerator],
    alpha: float,
    n: int,
    seeds: Iterable[int],
    chunk_elems: int = 4_000_000,
) -> np.ndarray:
    """Bregman superquantile estimates for many seeded samples of size ``n``.

    Rows are batched through the tail-sum kernel; ``g=None`` gives the
    classical superquantile.
    """
    g = g or identity()
    seeds = list(seeds)
    k0 = tail_start(n, alpha) + 1
    if k0 > n:
        raise TailTooSmall(f"alpha={alpha} leaves an empty tail for n={n}")
    rows = max(1, chunk_elems // n)
    out = np.empty(len(seeds))
    for start in range(0, len(seeds), rows):
        block = seeds[start:start + rows]
        x = np.stack([draw(d, n, sd) for sd in block])
        # gamma' is increasing, so the tail of gamma'(X) is gamma' of the tail of X
        z = g.gamma_p(x)
        sums = _kernels.batch_tail_sums(z, k0)
        out[start:start + len(block)] = g.invert(sums / (n * (1.0 - alpha)))
    return out
