"""Series validation, seeded random streams, interpolation and spline utilities.

Everything here is a pure function of its inputs; all vectors are float64
numpy arrays that are finite-checked on the way in.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidKnotsError, NonFiniteValueError

__all__ = [
    "RngStream",
    "NaturalCubicSpline",
    "WarpCurve",
    "as_series",
    "linear_interp",
    "natural_cubic_spline",
    "gaussian_draw",
]


def as_series(values) -> np.ndarray:
    """Validate and return a 1-D float64 series (length >= 1, all finite)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise DegenerateInputError(f"series must be 1-D, got shape {x.shape}")
    if x.size < 1:
        raise DegenerateInputError("series must have at least one element")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValueError("series contains NaN or infinity")
    return x


def _label_to_int(label) -> int:
    """Map a stream label to a stable non-negative integer.

    Strings are hashed with blake2 so that labels are stable across runs,
    processes and platforms (the builtin hash() is salted per process).
    """
    if isinstance(label, (int, np.integer)):
        return int(label)
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"stream labels must be int or str, got {type(label)!r}")


@dataclass(frozen=True)
class RngStream:
    """A splittable, counter-based random stream.

    Identical (master_seed, path) pairs always yield the identical sequence;
    distinct paths yield statistically independent sequences. Children are
    derived with :meth:`child`, so per-sample draws do not depend on the
    order in which samples are processed.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def child(self, *labels) -> "RngStream":
        extra = tuple(_label_to_int(lab) for lab in labels)
        return RngStream(self.master_seed, self.path + extra)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class WarpCurve:
    """A smooth monotone re-timing of a length-L series.

    knot_positions are evenly spaced over [0, L-1] (endpoints included),
    knot_magnitudes are the positive speeds at the knots, and
    resampled_timestamps is the non-decreasing sequence of source times,
    anchored at 0 and L-1, at which the series is re-read.
    """

    knot_positions: np.ndarray
    knot_magnitudes: np.ndarray
    resampled_timestamps: np.ndarray

    def __post_init__(self):
        ts = self.resampled_timestamps
        if ts[0] != 0.0:
            raise ValueError("warp timestamps must start at 0")
        if ts[-1] != float(ts.size - 1):
            raise ValueError("warp timestamps must end at L-1")
        if np.any(np.diff(ts) < 0):
            raise ValueError("warp timestamps must be non-decreasing")
        if np.any(self.knot_magnitudes <= 0):
            raise ValueError("knot magnitudes must be positive")


def linear_interp(x, target_len: int) -> np.ndarray:
    """Resample a series to ``target_len`` points by linear interpolation.

    Sampling positions are evenly spaced over [0, len(x) - 1], so the first
    and last elements are always preserved exactly.
    """
    x = as_series(x)
    if x.size < 2:
        raise DegenerateInputError("linear_interp needs at least 2 points")
    if target_len < 2:
        raise DegenerateInputError("target_len must be at least 2")
    positions = np.linspace(0.0, x.size - 1, int(target_len))
    out = np.interp(positions, np.arange(x.size), x)
    out[0] = x[0]
    out[-1] = x[-1]
    return out


class NaturalCubicSpline:
    """Natural cubic interpolant through (knots_x, knots_y).

    Second derivatives at the interior knots come from the standard
    tridiagonal system (Thomas algorithm); the boundary second derivatives
    are zero. With two knots this degenerates to the straight line.
    Evaluation clamps to the knot range.
    """

    def __init__(self, knots_x, knots_y):
        x = np.asarray(knots_x, dtype=np.float64)
        y = np.asarray(knots_y, dtype=np.float64)
        if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
            raise InvalidKnotsError("knots_x and knots_y must be 1-D of equal length")
        if x.size < 2:
            raise InvalidKnotsError("need at least 2 knots")
        if not np.all(np.diff(x) > 0):
            raise InvalidKnotsError("knots_x must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteValueError("knots contain NaN or infinity")
        self.x = x
        self.y = y
        self.m = self._second_derivatives(x, y)

    @staticmethod
    def _second_derivatives(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = x.size
        m = np.zeros(n)
        if n == 2:
            return m
        h = np.diff(x)
        # Tridiagonal system for interior second derivatives, natural ends.
        sub = h[:-1].copy()
        diag = 2.0 * (h[:-1] + h[1:])
        sup = h[1:].copy()
        rhs = 6.0 * (np.diff(y[1:]) / h[1:] - np.diff(y[:-1]) / h[:-1])
        k = n - 2
        for i in range(1, k):
            w = sub[i] / diag[i - 1]
            diag[i] -= w * sup[i - 1]
            rhs[i] -= w * rhs[i - 1]
        sol = np.zeros(k)
        sol[k - 1] = rhs[k - 1] / diag[k - 1]
        for i in range(k - 2, -1, -1):
            sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i]
        m[1:-1] = sol
        return m

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        t_arr = np.clip(t_arr, self.x[0], self.x[-1])
        idx = np.searchsorted(self.x, t_arr, side="right") - 1
        idx = np.clip(idx, 0, self.x.size - 2)
        x0 = self.x[idx]
        x1 = self.x[idx + 1]
        h = x1 - x0
        a = (x1 - t_arr) / h
        b = (t_arr - x0) / h
        out = (
            a * self.y[idx]
            + b * self.y[idx + 1]
            + ((a**3 - a) * self.m[idx] + (b**3 - b) * self.m[idx + 1]) * h**2 / 6.0
        )
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return float(out[0])
        return out


def natural_cubic_spline(knots_x, knots_y) -> NaturalCubicSpline:
    """Natural cubic spline through the given knots, as an evaluable curve."""
    return NaturalCubicSpline(knots_x, knots_y)


def gaussian_draw(rng: RngStream, mu: float, sigma: float, n: int) -> np.ndarray:
    """n i.i.d. draws from Normal(mu, sigma^2); sigma == 0 gives n copies of mu."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return np.full(int(n), float(mu))
    return rng.generator().normal(mu, sigma, int(n))
