"""Closed-form test distributions and seeded inverse-CDF sampling.

Every family exposes its CDF, quantile, density and density derivative in
closed form, plus ``upper_quantile(p) = F^{-1}(1 - p)`` evaluated directly from
the tail probability so that quantities near ``u -> 1`` keep full precision.

Sampling uses NumPy's PCG64 bit generator (tag ``pcg64-v1``): a uniform draw
``u = k / 2**53`` from ``Generator.random`` is rejected if exactly zero and
mapped through ``F^{-1}``.  Output is bit-reproducible for a given seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import DomainError, InversionError, ParseError
from .generators import BregmanGenerator

__all__ = [
    "AnalyticDistribution",
    "PRNG_VERSION",
    "exponential",
    "pareto",
    "uniform",
    "half_cauchy",
    "affine",
    "parse_distribution",
    "sample",
    "uniforms",
    "pushforward_quantile",
    "pushforward_pdf",
    "pushforward_cdf",
    "load_csv_values",
]

PRNG_VERSION = "pcg64-v1"

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class AnalyticDistribution:
    name: str
    support: Tuple[float, float]
    cdf: ArrayFn
    quantile: ArrayFn
    upper_quantile: ArrayFn
    pdf: ArrayFn
    pdf_deriv: Optional[ArrayFn] = None
    params: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        """Canonical string form, parseable by :func:`parse_distribution`."""
        return self.name

    def in_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        return (x >= lo) & (x <= hi)

    def __repr__(self):
        return f"AnalyticDistribution({self.name!r})"


def _f(fn):
    def wrapped(x):
        return fn(np.asarray(x, dtype=float))

    return wrapped


def exponential(rate: float = 1.0, loc: float = 0.0) -> AnalyticDistribution:
    """Exponential law with the given rate, shifted by ``loc``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    lam, loc = float(rate), float(loc)

    def pdf(x):
        return np.where(x >= loc, lam * np.exp(-lam * (x - loc)), 0.0)

    name = "exp"
    if lam != 1.0:
        name += f":{lam:g}"
    if loc != 0.0:
        name += f"@{loc:g}"
    return AnalyticDistribution(
        name=name,
        support=(loc, math.inf),
        cdf=_f(lambda x: np.where(x >= loc, -np.expm1(-lam * (x - loc)), 0.0)),
        quantile=_f(lambda u: loc - np.log1p(-u) / lam),
        upper_quantile=_f(lambda p: loc - np.log(p) / lam),
        pdf=_f(pdf),
        pdf_deriv=_f(lambda x: -lam * pdf(x)),
        params={"rate": lam, "loc": loc},
    )


def pareto(a: float) -> AnalyticDistribution:
    """Pareto law with tail index ``a`` and scale 1: ``F(x) = 1 - x**-a`` on ``[1, inf)``."""
    if a <= 0:
        raise ValueError("tail index must be positive")
    a = float(a)
    return AnalyticDistribution(
        name=f"pareto:{a:g}",
        support=(1.0, math.inf),
        cdf=_f(lambda x: np.where(x >= 1.0, -np.expm1(-a * np.log(np.maximum(x, 1.0))), 0.0)),
        quantile=_f(lambda u: (1.0 - u) ** (-1.0 / a)),
        upper_quantile=_f(lambda p: p ** (-1.0 / a)),
        pdf=_f(lambda x: np.where(x >= 1.0, a * np.maximum(x, 1.0) ** (-a - 1.0), 0.0)),
        pdf_deriv=_f(lambda x: np.where(x >= 1.0, -a * (a + 1.0) * np.maximum(x, 1.0) ** (-a - 2.0), 0.0)),
        params={"a": a},
    )


def uniform(lo: float = 0.0, hi: float = 1.0) -> AnalyticDistribution:
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError("need lo < hi")
    w = hi - lo
    inside = lambda x: (x >= lo) & (x <= hi)  # noqa: E731
    name = "uniform" if (lo, hi) == (0.0, 1.0) else f"uniform:{lo:g}:{hi:g}"
    return AnalyticDistribution(
        name=name,
        support=(lo, hi),
        cdf=_f(lambda x: np.clip((x - lo) / w, 0.0, 1.0)),
        quantile=_f(lambda u: lo + u * w),
        upper_quantile=_f(lambda p: hi - p * w),
        pdf=_f(lambda x: np.where(inside(x), 1.0 / w, 0.0)),
        pdf_deriv=_f(lambda x: np.zeros_like(x)),
        params={"lo": lo, "hi": hi},
    )


def half_cauchy() -> AnalyticDistribution:
    """One-sided Cauchy law, density ``2 / (pi (1 + x^2))`` on ``[0, inf)``.  Infinite mean."""
    c = 2.0 / math.pi
    return AnalyticDistribution(
        name="halfcauchy",
        support=(0.0, math.inf),
        cdf=_f(lambda x: np.where(x >= 0.0, c * np.arctan(np.maximum(x, 0.0)), 0.0)),
        quantile=_f(lambda u: np.tan(0.5 * math.pi * u)),
        upper_quantile=_f(lambda p: 1.0 / np.tan(0.5 * math.pi * p)),
        pdf=_f(lambda x: np.where(x >= 0.0, c / (1.0 + x * x), 0.0)),
        pdf_deriv=_f(lambda x: np.where(x >= 0.0, -2.0 * c * x / (1.0 + x * x) ** 2, 0.0)),
    )


def affine(d: AnalyticDistribution, scale: float = 1.0, shift: float = 0.0) -> AnalyticDistribution:
    """Law of ``scale * X + shift`` for ``X ~ d`` and ``scale > 0``."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    c, b = float(scale), float(shift)
    lo, hi = d.support
    back = lambda y: (y - b) / c  # noqa: E731
    deriv = None
    if d.pdf_deriv is not None:
        deriv = _f(lambda y: d.pdf_deriv(back(y)) / (c * c))
    return AnalyticDistribution(
        name=f"{d.name}*{c:g}+{b:g}",
        support=(c * lo + b, c * hi + b),
        cdf=_f(lambda y: d.cdf(back(y))),
        quantile=_f(lambda u: c * d.quantile(u) + b),
        upper_quantile=_f(lambda p: c * d.upper_quantile(p) + b),
        pdf=_f(lambda y: d.pdf(back(y)) / c),
        pdf_deriv=deriv,
        params={"base": d.name, "scale": c, "shift": b},
    )


def parse_distribution(spec: str) -> AnalyticDistribution:
    """Parse ``exp``, ``exp:<rate>``, ``pareto:<a>``, ``uniform``,
    ``uniform:<lo>:<hi>`` or ``halfcauchy``.  ``exp`` forms accept an ``@<loc>``
    shift suffix."""
    key = spec.strip().lower()
    try:
        if key.startswith("exp"):
            body, _, loc = key.partition("@")
            loc = float(loc) if loc else 0.0
            if body == "exp":
                return exponential(1.0, loc)
            if body.startswith("exp:"):
                return exponential(float(body[4:]), loc)
        if key.startswith("pareto:"):
            return pareto(float(key[7:]))
        if key == "uniform":
            return uniform()
        if key.startswith("uniform:"):
            lo, hi = key[8:].split(":")
            return uniform(float(lo), float(hi))
        if key in ("halfcauchy", "half-cauchy", "cauchy+"):
            return half_cauchy()
    except ValueError as exc:
        raise ValueError(f"bad distribution spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown distribution {spec!r}")


def uniforms(n: int, seed: int) -> np.ndarray:
    """``n`` draws on the open interval (0, 1) from PCG64 seeded with ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    u = rng.random(n)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return u


def sample(d: AnalyticDistribution, n: int, seed: int) -> np.ndarray:
    """Inverse-CDF sample of size ``n``; deterministic in ``seed``."""
    return d.quantile(uniforms(n, seed))


def _check_tail_in_domain(d: AnalyticDistribution, g: BregmanGenerator, x):
    if not np.all(g.in_domain(x)):
        raise DomainError(
            f"support of {d.name} is not inside the domain {g.domain} of {g.name}",
            argument="x",
        )


def pushforward_quantile(d: AnalyticDistribution, g: BregmanGenerator, t):
    """Quantile of ``Z = gamma'(X)``: ``gamma'(F_X^{-1}(t))``."""
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0) | (t >= 1)):
        raise ValueError("t must lie in (0, 1)")
    x = d.quantile(t)
    _check_tail_in_domain(d, g, x)
    z = g.gamma_p(x)
    return float(z) if z.ndim == 0 else z


def _z_to_x(d, g, z):
    z = np.asarray(z, dtype=float)
    try:
        x = np.asarray(g.invert(z), dtype=float)
    except InversionError as exc:
        raise DomainError(str(exc), argument="z") from None
    if np.any(~d.in_support(x) | ~g.in_domain(x)):
        raise DomainError(f"z={z!r} is outside the pushforward support", argument="z")
    return x


def pushforward_pdf(d: AnalyticDistribution, g: BregmanGenerator, z):
    """Density of ``Z = gamma'(X)`` by change of variables."""
    x = _z_to_x(d, g, z)
    out = d.pdf(x) / g.gamma_pp(x)
    return float(out) if out.ndim == 0 else out


def pushforward_cdf(d: AnalyticDistribution, g: BregmanGenerator, z):
    x = _z_to_x(d, g, z)
    out = d.cdf(x)
    return float(out) if out.ndim == 0 else out


def load_csv_values(path) -> Tuple[np.ndarray, List[str]]:
    """Read the first column of a CSV file as floats.

    A non-numeric first row is taken as a header.  Other non-numeric or
    non-finite rows are skipped and reported in the returned warnings.
    """
    values: List[float] = []
    warnings: List[str] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            cell = row[0].strip()
            try:
                v = float(cell)
            except ValueError:
                if lineno == 1:
                    continue
                warnings.append(f"line {lineno}: not a number: {cell!r}")
                continue
            if not math.isfinite(v):
                warnings.append(f"line {lineno}: non-finite value {cell!r}")
                continue
            values.append(v)
    if not values:
        raise ParseError(f"{path}: no numeric rows")
    return np.asarray(values, dtype=float), warnings
