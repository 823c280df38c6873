"""Banded dynamic time warping with an optional anchor constraint.

The DP kernel is numba-jitted when numba is importable; the plain-Python
version computes bit-identical results (same op order, no fastmath), it is
just slower.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_series
from .errors import InfeasibleAnchorError, InfeasibleBandError

__all__ = ["AlignmentPath", "dtw_align"]


@dataclass(frozen=True)
class AlignmentPath:
    """A monotone alignment between two series.

    steps is a (P, 2) int array of index pairs from (0, 0) to
    (L1-1, L2-1); cost is the sum of |a[i] - b[j]| over the steps.
    """

    steps: np.ndarray
    cost: float

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in self.steps]


def _dtw_kernel(a, b, radius, offset):
    # Band: |i - j + offset| <= radius. Ties on backtrack prefer the
    # diagonal, then (i-1, j), then (i, j-1).
    n = a.shape[0]
    m = b.shape[0]
    inf = np.inf
    acc = np.full((n, m), inf)
    for i in range(n):
        jlo = i + offset - radius
        if jlo < 0:
            jlo = 0
        jhi = i + offset + radius
        if jhi > m - 1:
            jhi = m - 1
        for j in range(jlo, jhi + 1):
            c = abs(a[i] - b[j])
            if i == 0 and j == 0:
                acc[i, j] = c
            else:
                best = inf
                if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                    best = acc[i - 1, j - 1]
                if i > 0 and acc[i - 1, j] < best:
                    best = acc[i - 1, j]
                if j > 0 and acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                if best < inf:
                    acc[i, j] = c + best
    rev = np.empty((n + m - 1, 2), dtype=np.int64)
    i = n - 1
    j = m - 1
    count = 0
    while True:
        rev[count, 0] = i
        rev[count, 1] = j
        count += 1
        if i == 0 and j == 0:
            break
        best = inf
        bi = i
        bj = j
        if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
            best = acc[i - 1, j - 1]
            bi = i - 1
            bj = j - 1
        if i > 0 and acc[i - 1, j] < best:
            best = acc[i - 1, j]
            bi = i - 1
            bj = j
        if j > 0 and acc[i, j - 1] < best:
            best = acc[i, j - 1]
            bi = i
            bj = j - 1
        i = bi
        j = bj
    path = np.empty((count, 2), dtype=np.int64)
    for k in range(count):
        path[k, 0] = rev[count - 1 - k, 0]
        path[k, 1] = rev[count - 1 - k, 1]
    return acc[n - 1, m - 1], path


try:  # pragma: no cover - exercised implicitly everywhere
    from numba import njit

    _dtw_kernel = njit(cache=True)(_dtw_kernel)
except ImportError:  # pragma: no cover
    pass


def dtw_align(a, b, anchor=None, band_frac: float = 1.0) -> AlignmentPath:
    """Minimum-cost monotone alignment under |.| point cost.

    The path is restricted to a Sakoe-Chiba band of half-width
    ceil(band_frac * max(L1, L2)). If ``anchor=(p, q)`` is given the path is
    forced through that cell by solving the prefix problem on a[:p+1],
    b[:q+1] and the suffix problem on a[p:], b[q:], then concatenating.
    """
    a = as_series(a)
    b = as_series(b)
    if not 0.0 < band_frac <= 1.0:
        raise ValueError("band_frac must be in (0, 1]")
    n, m = a.size, b.size
    radius = int(math.ceil(band_frac * max(n, m)))
    if abs((n - 1) - (m - 1)) > radius:
        raise InfeasibleBandError(
            f"band half-width {radius} excludes the end cell of a {n}x{m} grid"
        )
    if anchor is None:
        cost, steps = _dtw_kernel(a, b, radius, 0)
        return AlignmentPath(steps=steps, cost=float(cost))

    p, q = int(anchor[0]), int(anchor[1])
    if not (0 <= p < n and 0 <= q < m):
        raise InfeasibleAnchorError(f"anchor ({p}, {q}) outside the {n}x{m} grid")
    if abs(p - q) > radius:
        raise InfeasibleAnchorError(
            f"anchor ({p}, {q}) outside the band of half-width {radius}"
        )
    pre_cost, pre_steps = _dtw_kernel(a[: p + 1], b[: q + 1], radius, 0)
    suf_cost, suf_steps = _dtw_kernel(a[p:], b[q:], radius, p - q)
    suf_steps = suf_steps + np.array([p, q], dtype=np.int64)
    steps = np.concatenate([pre_steps, suf_steps[1:]], axis=0)
    # The anchor cell is in both sub-solutions; count it once.
    cost = float(pre_cost + suf_cost - abs(a[p] - b[q]))
    return AlignmentPath(steps=steps, cost=cost)
