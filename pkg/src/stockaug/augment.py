"""Label-preserving series transforms and whole-dataset augmentation.

Eight methods (magnify, reverse, jitter, pool, quantize, convolve,
time_warp, spawner) plus two-method composition. Every method maps a
length-L series to a length-L series and never touches labels.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .core import RngStream, WarpCurve, as_series, linear_interp, natural_cubic_spline
from .dtw import dtw_align
from .errors import (
    AlignmentError,
    DegenerateInputError,
    InsufficientPeersError,
    InvalidKernelError,
)
from .pipeline import WindowSet

__all__ = [
    "AugmentSpec",
    "reverse",
    "jitter",
    "pool",
    "quantize",
    "convolve",
    "magnify",
    "time_warp",
    "make_warp_curve",
    "spawner",
    "apply",
    "augment_dataset",
    "DEFAULT_PARAMS",
    "spec_from_name",
]

# Speeds the warp spline may reach between knots; keeps timestamps monotone
# even under extreme magnitude draws.
_SPEED_FLOOR = 1e-3


def reverse(x) -> np.ndarray:
    x = as_series(x)
    return x[::-1].copy()


def jitter(x, sigma: float, rng: RngStream) -> np.ndarray:
    """Add i.i.d. Gaussian noise with mean 0; sigma=0 returns x exactly."""
    x = as_series(x)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return x.copy()
    return x + rng.generator().normal(0.0, sigma, x.size)


def pool(x, window: int) -> np.ndarray:
    """Average consecutive blocks of `window` elements in place.

    The final block may be shorter and is averaged over its actual extent;
    the output length equals the input length.
    """
    x = as_series(x)
    window = int(window)
    if window < 1:
        raise ValueError("window must be positive")
    out = np.empty_like(x)
    for start in range(0, x.size, window):
        block = x[start : start + window]
        out[start : start + window] = block.mean()
    return out


def quantize(x, n: int) -> np.ndarray:
    """Round each value to the nearest of n evenly spaced levels.

    Levels span [min(x), max(x)] inclusive; ties go to the lower level.
    A constant series is returned unchanged.
    """
    x = as_series(x)
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 levels")
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return x.copy()
    levels = np.linspace(lo, hi, n)
    step = (hi - lo) / (n - 1)
    idx = np.ceil((x - lo) / step - 0.5).astype(np.int64)
    np.clip(idx, 0, n - 1, out=idx)
    return levels[idx]


def convolve(x, kernel_size: int) -> np.ndarray:
    """Smooth with a Hann window normalized to sum 1.

    Boundaries repeat the first/last element so constants stay constant;
    the output has the input's length.
    """
    x = as_series(x)
    k = int(kernel_size)
    if k < 1 or k % 2 == 0:
        raise InvalidKernelError("kernel size must be odd and positive")
    if k > x.size:
        raise InvalidKernelError(f"kernel size {k} exceeds series length {x.size}")
    if k == 1:
        return x.copy()
    w = np.hanning(k)
    w /= w.sum()
    pad = k // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    return np.convolve(padded, w, mode="valid")


def magnify(x, frac_lo: float, frac_hi: float, rng: RngStream, interp: str = "linear") -> np.ndarray:
    """Keep a random final fraction of the series and stretch it back to
    full length.

    The kept window always ends at the last element, so the final value is
    preserved for every draw. The kept length is ceil(f * L), at least 2.
    """
    x = as_series(x)
    L = x.size
    if L < 3:
        raise DegenerateInputError("magnify needs at least 3 points")
    if not (0.0 < frac_lo <= frac_hi <= 1.0):
        raise ValueError("need 0 < frac_lo <= frac_hi <= 1")
    f = float(rng.generator().uniform(frac_lo, frac_hi))
    keep = max(2, int(np.ceil(f * L)))
    tail = x[L - keep :]
    if interp == "linear":
        return linear_interp(tail, L)
    if interp == "nearest":
        positions = np.linspace(0.0, keep - 1, L)
        return tail[np.rint(positions).astype(np.int64)]
    raise ValueError(f"unknown interpolation kind {interp!r}")


def make_warp_curve(length: int, knots: int, sigma: float, rng: RngStream) -> WarpCurve:
    """Random smooth warp: speeds ~ Normal(1, sigma^2) at evenly spaced
    knots (clamped below at 0.05), a natural cubic spline between them, and
    cumulative-sum timestamps rescaled to end exactly at length-1."""
    if length < 2:
        raise DegenerateInputError("warp needs at least 2 points")
    if knots < 2:
        raise ValueError("need at least 2 knots")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    positions = np.linspace(0.0, length - 1, int(knots))
    magnitudes = np.maximum(rng.generator().normal(1.0, sigma, int(knots)), 0.05)
    speed = natural_cubic_spline(positions, magnitudes)(np.arange(length, dtype=np.float64))
    np.maximum(speed, _SPEED_FLOOR, out=speed)
    raw = np.cumsum(speed)
    ts = (raw - raw[0]) * ((length - 1) / (raw[-1] - raw[0]))
    ts[0] = 0.0
    ts[-1] = float(length - 1)
    return WarpCurve(knot_positions=positions, knot_magnitudes=magnitudes, resampled_timestamps=ts)


def time_warp(x, knots: int, sigma: float, rng: RngStream) -> np.ndarray:
    """Distort the time axis along a random smooth warp curve.

    Endpoints are fixed; sigma=0 gives the identity warp.
    """
    x = as_series(x)
    curve = make_warp_curve(x.size, knots, sigma, rng)
    return np.interp(curve.resampled_timestamps, np.arange(x.size, dtype=np.float64), x)


def spawner(
    x1,
    x2,
    noise_sigma: float,
    band_frac: float,
    rng: RngStream,
    sigma_mode: str = "absolute",
) -> np.ndarray:
    """Average two same-class patterns along a suboptimally anchored DTW
    alignment, resample to the original length, and add Gaussian noise.

    The anchor index is drawn uniformly from {1, ..., L-2} and forces the
    path through (t, t). With sigma_mode="scaled" the noise level is
    noise_sigma times the standard deviation of the averaged pattern.
    """
    x1 = as_series(x1)
    x2 = as_series(x2)
    if x1.size != x2.size:
        raise AlignmentError("spawner inputs must share one length")
    L = x1.size
    if L < 3:
        raise DegenerateInputError("spawner needs at least 3 points")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if sigma_mode not in ("absolute", "scaled"):
        raise ValueError(f"unknown sigma_mode {sigma_mode!r}")
    gen = rng.generator()
    t_star = int(gen.integers(1, L - 1))
    path = dtw_align(x1, x2, anchor=(t_star, t_star), band_frac=band_frac)
    averaged = (x1[path.steps[:, 0]] + x2[path.steps[:, 1]]) / 2.0
    out = linear_interp(averaged, L)
    if noise_sigma > 0.0:
        scale = noise_sigma if sigma_mode == "absolute" else noise_sigma * averaged.std()
        if scale > 0.0:
            out = out + gen.normal(0.0, scale, L)
    return out


DEFAULT_PARAMS: dict[str, dict] = {
    "none": {},
    "reverse": {},
    "jitter": {"sigma": 0.01},
    "pool": {"window": 3},
    "quantize": {"levels": 25},
    "convolve": {"kernel": 7},
    "time_warp": {"knots": 4, "sigma": 0.2},
    "magnify": {"frac_lo": 0.4, "frac_hi": 0.8, "interp": "linear"},
    "spawner": {"sigma": 0.5, "band": 0.1, "sigma_mode": "absolute"},
}

_STOCHASTIC = {"jitter", "magnify", "time_warp", "spawner"}


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation: a method name, its parameters and an RNG stream.

    method "compose" applies parts[0] then parts[1], each with its own
    child stream of ``rng``; method "none" is the identity.
    """

    method: str
    params: Mapping = field(default_factory=dict)
    rng: Optional[RngStream] = None
    parts: tuple = ()

    def __post_init__(self):
        if self.method == "compose":
            if len(self.parts) != 2:
                raise ValueError("compose needs exactly two parts")
            return
        if self.method not in DEFAULT_PARAMS:
            raise ValueError(f"unknown augmentation method {self.method!r}")
        merged = {**DEFAULT_PARAMS[self.method], **dict(self.params)}
        unknown = set(merged) - set(DEFAULT_PARAMS[self.method])
        if unknown:
            raise ValueError(f"unknown parameters for {self.method}: {sorted(unknown)}")
        _validate_params(self.method, merged)
        object.__setattr__(self, "params", merged)

    @property
    def name(self) -> str:
        if self.method == "compose":
            return "+".join(p.name for p in self.parts)
        return self.method

    def with_rng(self, rng: RngStream) -> "AugmentSpec":
        return dataclasses.replace(self, rng=rng)

    def methods(self) -> tuple[str, ...]:
        if self.method == "compose":
            return tuple(m for p in self.parts for m in p.methods())
        return (self.method,)


def _validate_params(method: str, p: Mapping) -> None:
    if method == "jitter" and p["sigma"] < 0:
        raise ValueError("jitter sigma must be non-negative")
    if method == "pool" and int(p["window"]) < 1:
        raise ValueError("pool window must be positive")
    if method == "quantize" and int(p["levels"]) < 2:
        raise ValueError("quantize needs at least 2 levels")
    if method == "convolve" and (int(p["kernel"]) < 1 or int(p["kernel"]) % 2 == 0):
        raise InvalidKernelError("convolve kernel must be odd and positive")
    if method == "time_warp" and (int(p["knots"]) < 2 or p["sigma"] < 0):
        raise ValueError("time_warp needs knots >= 2 and sigma >= 0")
    if method == "magnify" and not (0.0 < p["frac_lo"] <= p["frac_hi"] <= 1.0):
        raise ValueError("magnify keep-fraction range must lie in (0, 1]")
    if method == "spawner" and (p["sigma"] < 0 or not 0.0 < p["band"] <= 1.0):
        raise ValueError("spawner needs sigma >= 0 and band in (0, 1]")


def spec_from_name(name: str, overrides: Optional[Mapping[str, Mapping]] = None) -> AugmentSpec:
    """Build a spec from a name like "magnify" or "magnify+time_warp".

    ``overrides`` maps method name to a params dict replacing the defaults.
    """
    overrides = overrides or {}
    parts = name.split("+")
    if len(parts) > 2:
        raise ValueError("at most two methods can be composed")
    specs = [AugmentSpec(p.strip(), dict(overrides.get(p.strip(), {}))) for p in parts]
    if len(specs) == 1:
        return specs[0]
    return AugmentSpec("compose", parts=tuple(specs))


def apply(
    spec: AugmentSpec,
    x,
    peer_sampler: Optional[Callable[[], np.ndarray]] = None,
) -> np.ndarray:
    """Dispatch one series through the spec's method."""
    x = as_series(x)
    m = spec.method
    if m == "none":
        return x.copy()
    if m == "compose":
        rng = spec.rng if spec.rng is not None else RngStream(0)
        first = apply(spec.parts[0].with_rng(rng.child(0)), x, peer_sampler)
        return apply(spec.parts[1].with_rng(rng.child(1)), first, peer_sampler)
    if m == "reverse":
        return reverse(x)
    if m == "pool":
        return pool(x, spec.params["window"])
    if m == "quantize":
        return quantize(x, spec.params["levels"])
    if m == "convolve":
        return convolve(x, spec.params["kernel"])
    if spec.rng is None:
        raise ValueError(f"method {m!r} needs an RNG stream")
    if m == "jitter":
        return jitter(x, spec.params["sigma"], spec.rng)
    if m == "magnify":
        return magnify(x, spec.params["frac_lo"], spec.params["frac_hi"], spec.rng, spec.params["interp"])
    if m == "time_warp":
        return time_warp(x, spec.params["knots"], spec.params["sigma"], spec.rng)
    if m == "spawner":
        if peer_sampler is None:
            raise InsufficientPeersError("spawner needs a same-class peer sampler")
        return spawner(x, peer_sampler(), spec.params["sigma"], spec.params["band"], spec.rng, spec.params["sigma_mode"])
    raise AssertionError(f"unhandled method {m!r}")


def augment_dataset(windows: WindowSet, spec: AugmentSpec, factor: int = 1) -> WindowSet:
    """Original samples plus ``factor`` transformed copies of each.

    Augmented copies keep their source's label and metadata. Per-sample
    randomness derives from spec.rng via (sample index, replica index), so
    the result does not depend on processing order. Spawner peers are drawn
    uniformly from same-label samples other than the source.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be at least 1")
    if spec.rng is None:
        raise ValueError("augment_dataset needs a spec with an RNG stream")
    n = len(windows)
    uses_spawner = "spawner" in spec.methods()
    by_label: dict[int, np.ndarray] = {}
    if uses_spawner:
        for lab in np.unique(windows.labels):
            idx = np.where(windows.labels == lab)[0]
            if idx.size < 2:
                raise InsufficientPeersError(
                    f"label {int(lab)} has {idx.size} sample(s); spawner needs at least 2"
                )
            by_label[int(lab)] = idx

    out_rows = np.empty((n * factor, windows.values.shape[1]))
    row = 0
    for i in range(n):
        x = windows.values[i]
        for r in range(factor):
            stream = spec.rng.child(i, r)
            peer_sampler = None
            if uses_spawner:
                pool_idx = by_label[int(windows.labels[i])]
                pool_idx = pool_idx[pool_idx != i]
                peer_gen = stream.child(0).generator()

                def peer_sampler(_pool=pool_idx, _gen=peer_gen):
                    return windows.values[_pool[int(_gen.integers(0, _pool.size))]]

            out_rows[row] = apply(spec.with_rng(stream.child(1)), x, peer_sampler)
            row += 1

    rep = np.repeat(np.arange(n), factor)
    return WindowSet(
        values=np.concatenate([windows.values, out_rows], axis=0),
        labels=np.concatenate([windows.labels, windows.labels[rep]]),
        stocks=np.concatenate([windows.stocks, windows.stocks[rep]]),
        end_days=np.concatenate([windows.end_days, windows.end_days[rep]]),
    )
