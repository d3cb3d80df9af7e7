"""Vectorized interval arithmetic for reachable-set over-approximation.

Intervals are (lo, hi) pairs of equal-shape float arrays with lo <= hi
(degenerate lo == hi allowed).  All operations return sound enclosures of
the exact image; dependent occurrences of the same variable are treated
independently, which only widens the result.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def iadd(a, b):
    return a[0] + b[0], a[1] + b[1]


def isub(a, b):
    return a[0] - b[1], a[1] - b[0]


def ineg(a):
    return -a[1], -a[0]


def iscale(a, c: float):
    """Multiply by a scalar constant."""
    if c >= 0:
        return c * a[0], c * a[1]
    return c * a[1], c * a[0]


def ishift(a, c):
    return a[0] + c, a[1] + c


def imul(a, b):
    p1, p2 = a[0] * b[0], a[0] * b[1]
    p3, p4 = a[1] * b[0], a[1] * b[1]
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def _contains_angle(lo, hi, phi: float):
    """True where some angle congruent to phi mod 2*pi lies in [lo, hi]."""
    return np.floor((hi - phi) / TWO_PI) >= np.ceil((lo - phi) / TWO_PI)


def isin(a):
    lo, hi = a
    slo, shi = np.sin(lo), np.sin(hi)
    out_lo = np.minimum(slo, shi)
    out_hi = np.maximum(slo, shi)
    out_hi = np.where(_contains_angle(lo, hi, 0.5 * np.pi), 1.0, out_hi)
    out_lo = np.where(_contains_angle(lo, hi, -0.5 * np.pi), -1.0, out_lo)
    return out_lo, out_hi


def icos(a):
    lo, hi = a
    clo, chi = np.cos(lo), np.cos(hi)
    out_lo = np.minimum(clo, chi)
    out_hi = np.maximum(clo, chi)
    out_hi = np.where(_contains_angle(lo, hi, 0.0), 1.0, out_hi)
    out_lo = np.where(_contains_angle(lo, hi, np.pi), -1.0, out_lo)
    return out_lo, out_hi


def isignsq(a):
    """Image under v -> sign(v) * v**2 (odd and increasing)."""
    lo, hi = a
    return np.sign(lo) * lo * lo, np.sign(hi) * hi * hi


def imatvec(mat: np.ndarray, a):
    """Interval image of x -> mat @ x for a box of x values.

    ``a`` is a (lo, hi) pair of (..., n) arrays; result has rows of mat.
    """
    lo, hi = a
    pos = np.maximum(mat, 0.0)
    neg = np.minimum(mat, 0.0)
    out_lo = lo @ pos.T + hi @ neg.T
    out_hi = hi @ pos.T + lo @ neg.T
    return out_lo, out_hi
