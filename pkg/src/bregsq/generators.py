"""Bregman generators, the divergence they induce and the Bregman mean.

A generator is a strictly convex function ``gamma``.  Its derivative acts as a
change of scale: the Bregman mean of a law is ``(gamma')^{-1}(E[gamma'(X)])``,
and the Bregman superquantile is the same construction applied to the
conditional tail law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, EmptyInput, InvalidWeights, InversionError

__all__ = [
    "BregmanGenerator",
    "euclidean",
    "identity",
    "geometric",
    "harmonic",
    "power",
    "exponential",
    "parse_generator",
    "divergence",
    "bregman_mean",
    "bisection_inverse",
]

Interval = Tuple[float, float]
ArrayFn = Callable[[np.ndarray], np.ndarray]

BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class BregmanGenerator:
    """A strictly convex generator together with its derivatives.

    ``domain`` is an open interval; endpoints are excluded.  ``p_range`` is the
    image of ``gamma_p`` over the domain, used to reject tail averages that
    cannot be mapped back.  ``gamma_ppp`` is optional and only needed for the
    second-order assumption checks.
    """

    name: str
    domain: Interval
    gamma: ArrayFn
    gamma_p: ArrayFn
    gamma_pp: ArrayFn
    gamma_ppp: Optional[ArrayFn] = None
    gamma_p_inv: Optional[ArrayFn] = None
    p_range: Interval = (-math.inf, math.inf)
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"empty domain {self.domain!r}")
        if self.gamma_p_inv is None:
            object.__setattr__(self, "gamma_p_inv", bisection_inverse(self))

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        return (x > lo) & (x < hi)

    def check_domain(self, x, argument: str = "x") -> np.ndarray:
        """Return ``x`` as a float array, raising DomainError if any entry is outside."""
        arr = np.asarray(x, dtype=float)
        ok = self.in_domain(arr)
        if not np.all(ok):
            bad = np.flatnonzero(~np.atleast_1d(ok))
            first = float(np.atleast_1d(arr)[bad[0]])
            raise DomainError(
                f"{argument}={first!r} is outside the domain {self.domain} "
                f"of generator {self.name!r}",
                argument=argument,
                index=int(bad[0]),
            )
        return arr

    def invert(self, z):
        """``(gamma')^{-1}(z)`` with a range guard."""
        z = np.asarray(z, dtype=float)
        lo, hi = self.p_range
        bad = ~((z > lo) & (z < hi))
        if np.any(bad):
            first = float(z[bad].flat[0]) if z.ndim else float(z)
            raise InversionError(
                f"value {first!r} is outside the range {self.p_range} of gamma' "
                f"for generator {self.name!r}"
            )
        out = self.gamma_p_inv(z)
        return float(out) if out.ndim == 0 else out

    @property
    def has_third_derivative(self) -> bool:
        return self.gamma_ppp is not None


def _f(fn):
    def wrapped(x):
        return fn(np.asarray(x, dtype=float))

    return wrapped


def euclidean() -> BregmanGenerator:
    return BregmanGenerator(
        name="euclidean",
        domain=(-math.inf, math.inf),
        gamma=_f(lambda x: x * x),
        gamma_p=_f(lambda x: 2.0 * x),
        gamma_pp=_f(lambda x: np.full_like(x, 2.0)),
        gamma_ppp=_f(lambda x: np.zeros_like(x)),
        gamma_p_inv=_f(lambda z: 0.5 * z),
    )


def identity() -> BregmanGenerator:
    """``gamma(x) = x^2 / 2``: gamma' is the identity, i.e. the classical scale."""
    return BregmanGenerator(
        name="identity",
        domain=(-math.inf, math.inf),
        gamma=_f(lambda x: 0.5 * x * x),
        gamma_p=_f(lambda x: x.copy()),
        gamma_pp=_f(lambda x: np.ones_like(x)),
        gamma_ppp=_f(lambda x: np.zeros_like(x)),
        gamma_p_inv=_f(lambda z: z.copy()),
    )


def geometric() -> BregmanGenerator:
    return BregmanGenerator(
        name="geometric",
        domain=(0.0, math.inf),
        gamma=_f(lambda x: x * np.log(x) - x + 1.0),
        gamma_p=_f(np.log),
        gamma_pp=_f(lambda x: 1.0 / x),
        gamma_ppp=_f(lambda x: -1.0 / (x * x)),
        gamma_p_inv=_f(np.exp),
    )


def harmonic() -> BregmanGenerator:
    return BregmanGenerator(
        name="harmonic",
        domain=(0.0, math.inf),
        gamma=_f(lambda x: -np.log(x) + x - 1.0),
        gamma_p=_f(lambda x: 1.0 - 1.0 / x),
        gamma_pp=_f(lambda x: 1.0 / (x * x)),
        gamma_ppp=_f(lambda x: -2.0 / (x * x * x)),
        gamma_p_inv=_f(lambda z: 1.0 / (1.0 - z)),
        p_range=(-math.inf, 1.0),
    )


def power(beta: float) -> BregmanGenerator:
    """Generator with ``gamma''(x) = x**beta`` on ``(0, inf)``.

    Normalised so that ``gamma(1) = gamma'(1) = 0``.  ``beta = -1`` is the
    geometric generator.
    """
    beta = float(beta)
    if beta == -1.0:
        g = geometric()
        return BregmanGenerator(
            name="power:-1",
            domain=g.domain,
            gamma=g.gamma,
            gamma_p=g.gamma_p,
            gamma_pp=g.gamma_pp,
            gamma_ppp=g.gamma_ppp,
            gamma_p_inv=g.gamma_p_inv,
            p_range=g.p_range,
            params={"beta": beta},
        )
    b1 = beta + 1.0
    if beta == -2.0:
        gamma = _f(lambda x: x - np.log(x) - 1.0)
    else:
        b2 = beta + 2.0
        gamma = _f(lambda x: (x**b2 / b2 - x) / b1 + 1.0 / b2)
    # image of gamma' over (0, inf)
    if b1 > 0:
        p_range = (-1.0 / b1, math.inf)
    else:
        p_range = (-math.inf, -1.0 / b1)
    return BregmanGenerator(
        name=f"power:{beta:g}",
        domain=(0.0, math.inf),
        gamma=gamma,
        gamma_p=_f(lambda x: (x**b1 - 1.0) / b1),
        gamma_pp=_f(lambda x: x**beta),
        gamma_ppp=_f(lambda x: beta * x ** (beta - 1.0)),
        gamma_p_inv=_f(lambda z: (1.0 + b1 * z) ** (1.0 / b1)),
        p_range=p_range,
        params={"beta": beta},
    )


def exponential() -> BregmanGenerator:
    """``gamma(x) = exp(x)``; not homogeneous, not subadditive."""
    return BregmanGenerator(
        name="exp",
        domain=(-math.inf, math.inf),
        gamma=_f(np.exp),
        gamma_p=_f(np.exp),
        gamma_pp=_f(np.exp),
        gamma_ppp=_f(np.exp),
        gamma_p_inv=_f(np.log),
        p_range=(0.0, math.inf),
    )


def parse_generator(spec: str) -> BregmanGenerator:
    """Build a generator from its name.

    Accepted: ``euclidean``, ``identity``, ``geometric``, ``harmonic``,
    ``power:<beta>``, ``exp``.
    """
    key = spec.strip().lower()
    simple = {
        "euclidean": euclidean,
        "identity": identity,
        "geometric": geometric,
        "harmonic": harmonic,
        "exp": exponential,
    }
    if key in simple:
        return simple[key]()
    if key.startswith("power:"):
        try:
            beta = float(key.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad power exponent in {spec!r}") from None
        return power(beta)
    raise ValueError(f"unknown generator {spec!r}")


def bisection_inverse(g: BregmanGenerator) -> ArrayFn:
    """Numerical ``(gamma')^{-1}`` for generators supplied without one.

    Brackets inside the open domain (expanding outward for infinite ends) and
    bisects to a relative tolerance of 1e-12, at most 200 iterations.
    """
    lo_d, hi_d = g.domain
    gp = g.gamma_p

    def _bracket(z: float):
        lo = lo_d if math.isfinite(lo_d) else (min(-1.0, hi_d - 1.0) if math.isfinite(hi_d) else -1.0)
        hi = hi_d if math.isfinite(hi_d) else (max(1.0, lo_d + 1.0) if math.isfinite(lo_d) else 1.0)
        step = 1.0
        for _ in range(BISECTION_MAX_ITER):
            grew = False
            if not math.isfinite(hi_d) and float(gp(hi)) < z:
                hi += step
                grew = True
            if not math.isfinite(lo_d) and float(gp(lo)) > z:
                lo -= step
                grew = True
            if not grew:
                break
            step *= 2.0
        return lo, hi

    def _scalar(z: float) -> float:
        lo, hi = _bracket(z)
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if float(gp(mid)) < z:
                lo = mid
            else:
                hi = mid
            if hi - lo <= BISECTION_TOL * abs(mid):
                break
        return 0.5 * (lo + hi)

    def inverse(z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            return np.asarray(_scalar(float(z)))
        return np.array([_scalar(float(v)) for v in z.ravel()]).reshape(z.shape)

    return inverse


def divergence(g: BregmanGenerator, x, x0):
    """Bregman divergence ``gamma(x) - gamma(x0) - gamma'(x0) (x - x0)``."""
    x = g.check_domain(x, "x")
    x0 = g.check_domain(x0, "x0")
    d = g.gamma(x) - g.gamma(x0) - g.gamma_p(x0) * (x - x0)
    # rounding can push an exact zero slightly negative
    d = np.where(x == x0, 0.0, np.maximum(d, 0.0))
    return float(d) if d.ndim == 0 else d


def bregman_mean(g: BregmanGenerator, weights_and_points: Sequence[Tuple[float, float]]) -> float:
    """``(gamma')^{-1}(sum_i w_i gamma'(x_i))`` for a discrete law."""
    if len(weights_and_points) == 0:
        raise EmptyInput("bregman_mean needs at least one (weight, point) pair")
    w = np.array([float(p[0]) for p in weights_and_points])
    x = np.array([float(p[1]) for p in weights_and_points])
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InvalidWeights(f"weights must be nonnegative and sum to 1, got sum {w.sum()!r}")
    x = g.check_domain(x, "points")
    m = float(np.dot(w, g.gamma_p(x)))
    b = g.invert(m)
    # clip the last-ulp excursions of the inverse map
    return float(min(max(b, x.min()), x.max()))
