"""Hot loops, compiled with numba when available.

Set ``BREGSQ_DISABLE_NUMBA=1`` to force the pure-numpy path.  The compiled
and numpy variants of each kernel agree to rounding; batched tail sums stay
on numpy regardless (see :func:`batch_tail_sums`).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("BREGSQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn


NUMBA_ENABLED = HAVE_NUMBA


TOP_FRACTION = 0.25


def _tail_grid(z, k0, n, alpha, h):
    """Rank-difference quantile density, cell weights and cell midpoints for ranks ``k0..n``.

    The half-width at rank ``k`` is ``min(h, floor((n - k) / 4))`` so that a
    window never mixes ranks whose distance to the maximum differs by more than
    a constant factor; at the last ranks it degenerates to the raw spacing
    ``X_(k) - X_(k-1)``.
    """
    r0 = n - len(z) + 1
    k = np.arange(k0, n + 1)
    hk = np.minimum(h, np.floor(TOP_FRACTION * (n - k)).astype(np.int64))
    lo = np.where(hk > 0, np.maximum(k - hk, r0), np.maximum(k - 1, r0))
    hi = np.where(hk > 0, k + hk, k)
    dens = (z[hi - r0] - z[lo - r0]) * n / np.maximum(hi - lo, 1)
    w = np.full(len(k), 1.0 / n)
    w[0] = k0 / n - alpha
    u = (k - 0.5) / n
    u[0] = 0.5 * (alpha + k0 / n)
    return dens, w, u


def plugin_sigma2_numpy(z, k0, n, alpha, h):
    """Discretised ``int int (min(x,y) - xy) q(x) q(y) dx dy`` over ``[alpha, 1]^2``.

    ``z`` holds the transformed order statistics for 1-based ranks
    ``n - len(z) + 1 .. n``; ``q`` is estimated by centred rank differences
    (see :func:`_tail_grid`).  For ``x < y`` the kernel factors as
    ``x (1 - y)``, so the double sum reduces to a prefix sum.
    """
    z = np.asarray(z, dtype=float)
    dens, w, u = _tail_grid(z, k0, n, alpha, h)
    a = w * dens
    prefix = np.concatenate(([0.0], np.cumsum(a * u)[:-1]))
    return float(np.sum(a * (2.0 * (1.0 - u) * prefix + u * (1.0 - u) * a)))


@njit(cache=True)
def _plugin_sigma2_jit(z, k0, n, alpha, h):
    r0 = n - z.shape[0] + 1
    total = 0.0
    prefix = 0.0
    for k in range(k0, n + 1):
        hk = min(h, int(np.floor(TOP_FRACTION * (n - k))))
        if hk > 0:
            lo = max(k - hk, r0)
            hi = k + hk
        else:
            lo = max(k - 1, r0)
            hi = k
        dens = (z[hi - r0] - z[lo - r0]) * n / max(hi - lo, 1)
        if k == k0:
            w = k0 / n - alpha
            u = 0.5 * (alpha + k0 / n)
        else:
            w = 1.0 / n
            u = (k - 0.5) / n
        a = w * dens
        total += a * (2.0 * (1.0 - u) * prefix + u * (1.0 - u) * a)
        prefix += a * u
    return total


def plugin_sigma2_numba(z, k0, n, alpha, h):
    return float(_plugin_sigma2_jit(np.ascontiguousarray(z, dtype=np.float64), int(k0), int(n), float(alpha), int(h)))


def plugin_sigma2(z, k0, n, alpha, h):
    if NUMBA_ENABLED:
        return plugin_sigma2_numba(z, k0, n, alpha, h)
    return plugin_sigma2_numpy(z, k0, n, alpha, h)


def _batch_tail_sums_numpy(x, k0):
    """Row sums of the order statistics ``k0..n`` (1-based) of each row of ``x``."""
    part = np.partition(x, k0 - 1, axis=1)[:, k0 - 1:]
    return part.sum(axis=1)


@njit(cache=True)
def _batch_tail_sums_jit(x, k0):
    reps, n = x.shape
    out = np.empty(reps)
    for r in range(reps):
        row = np.partition(x[r], k0 - 1)
        s = 0.0
        for i in range(k0 - 1, n):
            s += row[i]
        out[r] = s
    return out


def batch_tail_sums(x, k0):
    """Sum of order statistics ``k0..n`` (1-based) for every row of a 2-D array.

    Always the numpy path: numpy's introselect beats the compiled row loop by
    about 4x (see ``benchmarks/bench_kernels.py``), so the numba variant is kept
    only for comparison.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _batch_tail_sums_numpy(x, int(k0))
