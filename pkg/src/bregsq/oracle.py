"""Reference values by adaptive quadrature.

All tail integrals ``(1/(1-a)) int_a^1 h(F^{-1}(u)) du`` are computed after the
substitution ``u = 1 - (1-a) exp(-s)``, which turns them into
``int_0^inf h(F^{-1}(1 - (1-a) e^{-s})) e^{-s} ds``.  The half line is cut into
shells ``[k ln2, (k+1) ln2]`` (the dyadic shells ``1 - u in [(1-a)2^{-k-1},
(1-a)2^{-k}]``), each integrated by adaptive 15-point Gauss-Kronrod.  Shell
contributions must eventually decay geometrically; eight consecutive shells
without decay declare the integral infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .distributions import AnalyticDistribution
from .errors import DomainError, InversionError, OracleFailure, VarianceDiverges
from .generators import BregmanGenerator, identity

__all__ = [
    "QuadratureSpec",
    "DEFAULT_SPEC",
    "integrate_panels",
    "finite_integral",
    "shell_integral",
    "tail_expectation",
    "true_quantile",
    "true_superquantile",
    "true_bregman_superquantile",
    "sigma2_gamma",
    "tail_excess_variance",
    "asymptotic_variance",
    "quantile_asymptotic_variance",
]

LN2 = math.log(2.0)
NONDECAY_RUN = 8
_DECAY = 1.0 - 1e-9
_TINY = 1e-300
_TINY_P = np.finfo(float).tiny


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000
    endpoint_substitution: bool = True

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_SPEC = QuadratureSpec()

# 15-point Kronrod nodes on [-1, 1] with the embedded 7-point Gauss rule.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_WEIGHTS_K = np.concatenate([_WK[:-1], _WK[::-1]])
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
_WEIGHTS_G = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c[:, None] + h[:, None] * _NODES[None, :]
    with np.errstate(all="ignore"):
        fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        k = h * (fx @ _WEIGHTS_K)
        g = h * (fx[:, _GAUSS_IDX] @ _WEIGHTS_G)
    return k, np.abs(k - g)


def integrate_panels(f, edges, abs_tol=1e-10, rel_tol=1e-10, max_subdivisions=2000):
    """Adaptive Gauss-Kronrod on each panel ``[edges[i], edges[i+1]]``.

    ``f`` must accept a 1-D array.  Subintervals are bisected until each panel
    meets ``max(abs_tol, rel_tol * |panel|)``.  Returns per-panel integrals,
    error estimates and a flag telling whether every finite panel converged.
    """
    edges = np.asarray(edges, dtype=float)
    m = len(edges) - 1
    a, b = edges[:-1].copy(), edges[1:].copy()
    owner = np.arange(m)
    width = b - a
    k, e = _gk15(f, a, b)
    budget = max_subdivisions * max(m, 1)
    done_k = np.zeros(m)
    done_e = np.zeros(m)
    converged = True
    while True:
        vals = done_k + np.bincount(owner, k, minlength=m)
        tol = np.maximum(abs_tol, rel_tol * np.abs(vals))
        share = (b - a) / width[owner]
        refine = (e > tol[owner] * share) & np.isfinite(k) & np.isfinite(e)
        if not refine.any():
            break
        if len(a) + refine.sum() > budget:
            converged = False
            break
        np.add.at(done_k, owner[~refine], k[~refine])
        np.add.at(done_e, owner[~refine], e[~refine])
        ra, rb, ro = a[refine], b[refine], owner[refine]
        mid = 0.5 * (ra + rb)
        if np.any((mid <= ra) | (mid >= rb)):
            converged = False
            break
        a = np.concatenate([ra, mid])
        b = np.concatenate([mid, rb])
        owner = np.concatenate([ro, ro])
        k, e = _gk15(f, a, b)
    vals = done_k + np.bincount(owner, k, minlength=m)
    errs = done_e + np.bincount(owner, e, minlength=m)
    return vals, errs, converged


def _scan_shells(vals, abs_tol, rel_tol):
    """Classify a shell sequence: ("converged", sum), ("diverged", sign) or ("open", partial)."""
    total = 0.0
    run = 0
    decays = 0
    prev = None
    for v in vals:
        if not math.isfinite(v):
            sign = 1.0 if (v > 0 or math.isnan(v)) else -1.0
            return "diverged", sign
        total += v
        if prev is not None:
            if abs(prev) <= _TINY and abs(v) <= _TINY:
                return "converged", total
            ratio = abs(v) / abs(prev) if abs(prev) > _TINY else math.inf
            if ratio >= _DECAY:
                run += 1
                decays = 0
                if run >= NONDECAY_RUN:
                    return "diverged", math.copysign(1.0, v)
            else:
                run = 0
                decays += 1
                if decays >= 3:
                    remainder = abs(v) * ratio / (1.0 - ratio)
                    if remainder <= 1e-2 * max(abs_tol, rel_tol * abs(total)):
                        return "converged", total
        prev = v
    return "open", total


def finite_integral(f, a: float, b: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``int_a^b f`` on a finite range, cut into panels no longer than ln 2."""
    if b <= a:
        return 0.0
    n = max(1, int(math.ceil((b - a) / LN2)))
    vals, errs, ok = integrate_panels(
        f, np.linspace(a, b, n + 1), spec.abs_tol * 1e-2, spec.rel_tol * 1e-2, spec.max_subdivisions
    )
    if not ok:
        raise OracleFailure("adaptive quadrature exhausted its subdivision budget", {"error": float(errs.sum())})
    return float(vals.sum())


def shell_integral(f, spec: QuadratureSpec = DEFAULT_SPEC, start: float = 0.0):
    """``int_start^inf f(s) ds`` by shell summation.  Returns a float, possibly +-inf."""
    n_shells = 64
    while True:
        edges = start + LN2 * np.arange(n_shells + 1)
        shells, errs, ok = integrate_panels(
            f, edges, spec.abs_tol * 1e-2, spec.rel_tol * 1e-2, spec.max_subdivisions
        )
        state, value = _scan_shells(shells, spec.abs_tol, spec.rel_tol)
        if state == "diverged":
            return math.inf * value
        if state == "converged":
            if not ok:
                raise OracleFailure(
                    "adaptive quadrature exhausted its subdivision budget",
                    {"shells": n_shells, "value": value, "error": float(errs.sum())},
                )
            return float(value)
        if n_shells >= 1024:
            tail = shells[-16:]
            ratios = np.abs(tail[1:] / tail[:-1])
            r = float(ratios.mean())
            if np.all(ratios < _DECAY) and np.ptp(ratios) < 1e-3 * r:
                # slow but steady geometric decay: close with the geometric remainder
                return float(value + shells[-1] * r / (1.0 - r))
            raise OracleFailure(
                "shell sums neither converged nor diverged",
                {"shells": n_shells, "partial": value, "last_shells": tail.tolist()},
            )
        n_shells *= 4


def _tail_integrand(d: AnalyticDistribution, h, alpha: float):
    eps = 1.0 - alpha

    def f(s):
        w = np.exp(-s)
        return h(d.upper_quantile(eps * w)) * w

    return f


def tail_expectation(d: AnalyticDistribution, h, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``E[h(X) | X >= F^{-1}(alpha)]`` for a continuous law; may be +-inf."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if spec.endpoint_substitution:
        return shell_integral(_tail_integrand(d, h, alpha), spec)
    # plain adaptive quadrature in p = 1 - u, where nodes near the singular end stay representable
    vals, errs, ok = integrate_panels(
        lambda p: h(d.upper_quantile(np.maximum(p, _TINY_P))), [0.0, 1.0 - alpha], spec.abs_tol, spec.rel_tol, spec.max_subdivisions
    )
    if not ok or not np.isfinite(vals[0]):
        raise OracleFailure("direct quadrature did not converge", {"value": float(vals[0]), "error": float(errs[0])})
    return float(vals[0]) / (1.0 - alpha)


def true_quantile(d: AnalyticDistribution, alpha: float) -> float:
    return float(d.quantile(alpha))


def true_superquantile(d: AnalyticDistribution, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Classical superquantile ``(1/(1-alpha)) int_alpha^1 F^{-1}(y) dy``; ``inf`` if divergent."""
    return tail_expectation(d, lambda x: x, alpha, spec)


def _check_pair(d: AnalyticDistribution, g: BregmanGenerator, alpha: float):
    q = d.quantile(alpha)
    lo, hi = g.domain
    if not (q > lo and d.support[1] <= hi):
        raise DomainError(
            f"tail of {d.name} above its {alpha}-quantile is not inside the domain {g.domain} of {g.name}",
            argument="distribution",
        )


def _invert_inner(g: BregmanGenerator, inner: float) -> float:
    if math.isinf(inner):
        return inner
    return g.invert(inner)


def true_bregman_superquantile(
    d: AnalyticDistribution, g: BregmanGenerator, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    """``(gamma')^{-1}(E[gamma'(X) | X >= F^{-1}(alpha)])``; ``inf`` when the tail mean of gamma'(X) diverges."""
    _check_pair(d, g, alpha)
    inner = tail_expectation(d, g.gamma_p, alpha, spec)
    return _invert_inner(g, inner)


def _quantile_density_weight(d, g, alpha):
    """``dZ/ds`` along ``u = 1 - (1-alpha) e^{-s}`` where ``Z = gamma'(F^{-1}(u))``."""
    eps = 1.0 - alpha

    def w(s):
        p = eps * np.exp(-s)
        x = d.upper_quantile(p)
        return g.gamma_pp(x) * p / d.pdf(x)

    return w


def sigma2_gamma(
    d: AnalyticDistribution,
    g: BregmanGenerator,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    swap_axes: bool = False,
) -> float:
    """Double integral ``int int (min(x,y) - xy) / (f_Z(F_Z^{-1}(x)) f_Z(F_Z^{-1}(y))) dx dy`` over ``[alpha, 1]^2``.

    Evaluated as an iterated adaptive integral in the log-tail coordinates,
    where ``1 - x = (1-alpha) e^{-s}`` and ``dx / f_Z(F_Z^{-1}(x)) = w(s) ds``.
    Raises VarianceDiverges when either level fails to converge.
    """
    _check_pair(d, g, alpha)
    eps = 1.0 - alpha
    w = _quantile_density_weight(d, g, alpha)

    def integrand(s, t):
        ps = eps * np.exp(-s)
        pt = eps * np.exp(-t)
        lo = np.minimum(ps, pt)
        hi = np.maximum(ps, pt)
        return lo * (1.0 - hi) * w(s) * w(t)

    def inner(outer_pt):
        if swap_axes:
            fn = lambda x: integrand(outer_pt, x)  # noqa: E731
        else:
            fn = lambda x: integrand(x, outer_pt)  # noqa: E731
        t = float(outer_pt)
        # the kink on the diagonal is a panel edge of both pieces
        return finite_integral(fn, 0.0, t, spec) + shell_integral(fn, spec, start=t)

    def outer(ts):
        return np.array([inner(t) for t in np.atleast_1d(ts)])

    try:
        value = shell_integral(outer, spec)
    except OracleFailure as exc:
        raise VarianceDiverges(f"variance integral failed: {exc}") from exc
    if not math.isfinite(value):
        raise VarianceDiverges(f"variance integral diverges for {d.name} / {g.name} at alpha={alpha}")
    return value


def tail_excess_variance(
    d: AnalyticDistribution, g: BregmanGenerator, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    """``Var((Z - F_Z^{-1}(alpha))_+)`` from two one-dimensional tail moments.

    Equal to :func:`sigma2_gamma` by the covariance identity for indicators;
    kept as an independent route for cross-checking.
    """
    _check_pair(d, g, alpha)
    eps = 1.0 - alpha
    q = float(g.gamma_p(d.quantile(alpha)))
    m1 = tail_expectation(d, lambda x: g.gamma_p(x) - q, alpha, spec)
    m2 = tail_expectation(d, lambda x: (g.gamma_p(x) - q) ** 2, alpha, spec)
    if not (math.isfinite(m1) and math.isfinite(m2)):
        raise VarianceDiverges(f"second tail moment diverges for {d.name} / {g.name}")
    return eps * m2 - (eps * m1) ** 2


def asymptotic_variance(
    d: AnalyticDistribution,
    g: BregmanGenerator = None,
    alpha: float = 0.95,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """Limit variance of ``sqrt(n) (estimate - truth)`` for the Bregman superquantile estimator.

    ``sigma2_gamma / (gamma''(Q)^2 (1-alpha)^2)`` with ``Q`` the true Bregman
    superquantile (delta method through ``(gamma')^{-1}``).  ``g=None`` means
    the classical superquantile.
    """
    g = g or identity()
    s2 = sigma2_gamma(d, g, alpha, spec)
    q = true_bregman_superquantile(d, g, alpha, spec)
    slope = float(g.gamma_pp(q))
    return s2 / (slope * slope * (1.0 - alpha) ** 2)


def quantile_asymptotic_variance(d: AnalyticDistribution, alpha: float) -> float:
    """``alpha (1 - alpha) / f(F^{-1}(alpha))^2``, the limit variance of the empirical quantile."""
    f = float(d.pdf(d.quantile(alpha)))
    if f <= 0:
        raise VarianceDiverges("zero density at the quantile")
    return alpha * (1.0 - alpha) / (f * f)
