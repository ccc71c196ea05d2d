"""Numerical checks of the growth conditions H1-H4.

``l_gamma`` and ``L_gamma`` are the first and second derivatives of
``gamma' o F^{-1}``; the conditions bound their growth as ``t -> 1`` by powers
of ``(1 - t)``.  A condition "``O((1-t)^{-p + eps})`` for some ``eps > 0``" is
judged from a fitted exponent: satisfied below ``p - 0.05``, violated above
``p + 0.05``, inconclusive in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .distributions import AnalyticDistribution
from .errors import CapabilityError, SingularDensity, UnstableFit
from .generators import BregmanGenerator, identity

__all__ = [
    "AssumptionReport",
    "TailFit",
    "l_gamma",
    "big_l_gamma",
    "fit_tail_exponent",
    "tail_fit",
    "check_assumptions",
    "BOUNDS",
    "MARGIN",
]

BOUNDS = {"H1": 2.0, "H2": 2.5, "H3": 2.0, "H4": 2.5}
MARGIN = 0.05
FIT_POINTS = 12
MAX_RESIDUAL = 1e-2


def _x_at(d: AnalyticDistribution, t):
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0) | (t >= 1)):
        raise ValueError("t must lie in (0, 1)")
    # 1 - t is exact for t >= 0.5, so go through the upper quantile there
    return np.where(t >= 0.5, d.upper_quantile(1.0 - t), d.quantile(np.minimum(t, 0.5)))


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def l_gamma(d: AnalyticDistribution, g: Optional[BregmanGenerator], t):
    """Derivative of ``gamma' o F^{-1}``: ``gamma''(F^{-1}(t)) / f(F^{-1}(t))``."""
    g = g or identity()
    x = _x_at(d, t)
    f = d.pdf(x)
    if np.any(f <= 0):
        raise SingularDensity(f"density of {d.name} vanishes at the quantile")
    return _scalar(g.gamma_pp(x) / f)


def big_l_gamma(d: AnalyticDistribution, g: Optional[BregmanGenerator], t):
    """Second derivative of ``gamma' o F^{-1}``: ``(gamma''' f - f' gamma'') / f^3`` at ``F^{-1}(t)``."""
    g = g or identity()
    if g.gamma_ppp is None:
        raise CapabilityError(f"generator {g.name!r} has no third derivative")
    if d.pdf_deriv is None:
        raise CapabilityError(f"distribution {d.name!r} has no density derivative")
    x = _x_at(d, t)
    f = d.pdf(x)
    if np.any(f <= 0):
        raise SingularDensity(f"density of {d.name} vanishes at the quantile")
    return _scalar((g.gamma_ppp(x) * f - d.pdf_deriv(x) * g.gamma_pp(x)) / f**3)


@dataclass(frozen=True)
class TailFit:
    """``log|fn(t)| ~ slope * x + log_power * log(x) + c`` with ``x = -log(1 - t)``."""

    slope: float
    log_power: float
    residual: float
    grid: tuple


def tail_fit(fn: Callable, grid_depth: int = 40) -> TailFit:
    if not FIT_POINTS + 4 <= grid_depth <= 52:
        raise ValueError("grid_depth must lie in [16, 52]")
    k = np.arange(4, grid_depth + 1)
    t = 1.0 - np.ldexp(1.0, -k)
    with np.errstate(all="ignore"):
        vals = np.abs(np.asarray([fn(ti) for ti in t], dtype=float))
    x = k * math.log(2.0)
    sel = slice(-FIT_POINTS, None)
    if np.all(vals[sel] == 0.0):
        # identically zero near 1: bounded, exponent 0
        return TailFit(0.0, 0.0, 0.0, tuple(t.tolist()))
    with np.errstate(divide="ignore"):
        y = np.log(vals[sel])
    if not np.all(np.isfinite(y)):
        raise UnstableFit("function overflows or vanishes on the fitting grid")
    design = np.column_stack([x[sel], np.log(x[sel]), np.ones(FIT_POINTS)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return TailFit(float(coef[0]), float(coef[1]), resid, tuple(t.tolist()))


def fit_tail_exponent(fn: Callable, grid_depth: int = 40) -> float:
    """Growth exponent ``p`` of ``fn(t) ~ (1 - t)^{-p}`` as ``t -> 1``.

    Fitted by least squares on ``t_k = 1 - 2^-k`` over the last 12 grid
    points.  A ``log(-log(1-t))`` column absorbs slowly varying factors such
    as powers of ``ln(1 - t)``.  Raises UnstableFit when the residual shows
    non-polynomial behaviour.
    """
    fit = tail_fit(fn, grid_depth)
    if fit.residual > MAX_RESIDUAL or not math.isfinite(fit.slope):
        raise UnstableFit(
            f"tail growth is not polynomial (rms residual {fit.residual:.3g})",
            slope=fit.slope,
            residual=fit.residual,
        )
    return fit.slope


@dataclass
class AssumptionReport:
    pair: tuple
    fitted_exponent_l: Optional[float]
    fitted_exponent_L: Optional[float]
    h_verdicts: Dict[str, str]
    grid: List[float] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "distribution": self.pair[0],
            "generator": self.pair[1],
            "fitted_exponent_l": self.fitted_exponent_l,
            "fitted_exponent_L": self.fitted_exponent_L,
            "verdicts": dict(self.h_verdicts),
            "notes": list(self.notes),
        }


def _verdict(exponent: Optional[float], bound: float) -> str:
    if exponent is None:
        return "inapplicable"
    if exponent <= bound - MARGIN:
        return "satisfied"
    if exponent >= bound + MARGIN:
        return "violated"
    return "inconclusive"


def _fit_or_note(fn, notes, label, grid_depth):
    try:
        return fit_tail_exponent(fn, grid_depth)
    except (UnstableFit, SingularDensity, CapabilityError) as exc:
        notes.append(f"{label}: {exc}")
        return None


def check_assumptions(
    d: AnalyticDistribution,
    g: Optional[BregmanGenerator] = None,
    which: Optional[Sequence[str]] = None,
    grid_depth: int = 40,
) -> AssumptionReport:
    """Verdicts for H1/H2 (on ``gamma' o F^{-1}``) and H3/H4 (on ``F^{-1}``).

    By default H1 and H2 are checked for a generator and H3 and H4 when ``g``
    is None.  H1/H3 need only ``l``; H2/H4 also need ``L`` and therefore the
    third derivative of the generator and the density derivative.
    """
    if which is None:
        which = ("H3", "H4") if g is None else ("H1", "H2")
    which = [w.upper() for w in which]
    unknown = set(which) - set(BOUNDS)
    if unknown:
        raise ValueError(f"unknown assumptions {sorted(unknown)}")
    notes: List[str] = []
    verdicts: Dict[str, str] = {}
    exp_l = exp_L = None
    for scale, first, second in ((g, "H1", "H2"), (None, "H3", "H4")):
        wanted = [h for h in (first, second) if h in which]
        if not wanted:
            continue
        el = _fit_or_note(lambda t: l_gamma(d, scale, t), notes, f"{first} l", grid_depth)
        eL = None
        if second in wanted:
            eL = _fit_or_note(lambda t: big_l_gamma(d, scale, t), notes, f"{second} L", grid_depth)
        if first in wanted:
            verdicts[first] = _verdict(el, BOUNDS[first])
        if second in wanted:
            verdicts[second] = _verdict(eL, BOUNDS[second])
        if scale is g:
            exp_l, exp_L = el, eL
        elif exp_l is None:
            exp_l, exp_L = el, eL
    k = np.arange(4, grid_depth + 1)
    grid = (1.0 - np.ldexp(1.0, -k)).tolist()
    gname = g.name if g is not None else "identity"
    return AssumptionReport((d.name, gname), exp_l, exp_L, verdicts, grid, notes)
