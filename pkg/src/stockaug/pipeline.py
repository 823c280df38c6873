"""Walk-forward data preparation for daily return panels.

Turns a cross-section of daily returns into overlapping study splits of
standardized, labeled fixed-length windows, with strict no-look-ahead
discipline: every standardizer, label and window uses only information up
to its defining day.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .core import RngStream
from .errors import (
    DegenerateInputError,
    DegenerateStandardizerError,
    InsufficientHistoryError,
    InsufficientUniverseError,
    InvalidPriceError,
    MissingDataError,
    UndefinedMedianError,
)

__all__ = [
    "ReturnPanel",
    "SplitPlan",
    "Split",
    "Standardizer",
    "WindowSet",
    "SplitWindows",
    "SkipRecord",
    "compute_returns",
    "make_splits",
    "fit_standardizer",
    "fit_split_standardizer",
    "label_panel",
    "segment_windows",
    "train_val_split",
    "top_k_by_market_cap",
    "synth_panel",
    "read_price_csv",
    "read_returns_csv",
    "write_returns_csv",
    "write_skip_report",
]


@dataclass
class ReturnPanel:
    """Daily simple returns for a set of stocks.

    returns is a (T, S) float64 matrix in decimal units; NaN marks days
    outside a stock's active range. Inside the active range (first to last
    finite day) no value may be missing. market_caps, when present, must be
    positive wherever finite.
    """

    dates: np.ndarray
    stocks: tuple
    returns: np.ndarray
    market_caps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.dates = np.asarray(self.dates)
        self.returns = np.asarray(self.returns, dtype=np.float64)
        self.stocks = tuple(str(s) for s in self.stocks)
        T, S = self.returns.shape
        if self.dates.shape != (T,):
            raise ValueError("dates must align with the return matrix rows")
        if len(self.stocks) != S:
            raise ValueError("stocks must align with the return matrix columns")
        if T >= 2 and not np.all(self.dates[1:] > self.dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        finite = np.isfinite(self.returns)
        missing = ~np.isnan(self.returns) & ~finite
        if missing.any():
            raise ValueError("returns contain infinities")
        valid = ~np.isnan(self.returns)
        counts = valid.sum(axis=0)
        if np.any(counts == 0):
            bad = [self.stocks[j] for j in np.where(counts == 0)[0]]
            raise MissingDataError(f"stocks with no data: {bad[:5]}")
        first = valid.argmax(axis=0)
        last = T - 1 - valid[::-1].argmax(axis=0)
        gaps = (last - first + 1) != counts
        if gaps.any():
            bad = [self.stocks[j] for j in np.where(gaps)[0]]
            raise MissingDataError(f"gaps inside active range for: {bad[:5]}")
        self._first_active = first
        self._last_active = last
        if self.market_caps is not None:
            self.market_caps = np.asarray(self.market_caps, dtype=np.float64)
            if self.market_caps.shape != self.returns.shape:
                raise ValueError("market_caps must match the return matrix shape")
            caps_ok = np.isnan(self.market_caps) | (self.market_caps > 0)
            if not caps_ok.all():
                raise ValueError("market caps must be positive where present")

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    @property
    def n_stocks(self) -> int:
        return self.returns.shape[1]

    def active_range(self, stock_idx: int) -> tuple[int, int]:
        """First and last day index (inclusive) with data for one stock."""
        return int(self._first_active[stock_idx]), int(self._last_active[stock_idx])


@dataclass(frozen=True)
class SplitPlan:
    """Geometry of one walk-forward study period."""

    split_length: int = 1000
    stride: int = 250
    train_length: int = 750
    test_length: int = 250
    window_length: int = 240

    def __post_init__(self):
        for name in ("split_length", "stride", "train_length", "test_length", "window_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.train_length + self.test_length != self.split_length:
            raise ValueError("train_length + test_length must equal split_length")
        if self.window_length >= self.train_length:
            raise ValueError("window_length must be shorter than train_length")


@dataclass(frozen=True)
class Split:
    """Absolute day ranges of one split; all ranges are half-open."""

    index: int
    start: int
    train_end: int
    end: int

    @property
    def train_range(self) -> tuple[int, int]:
        return self.start, self.train_end

    @property
    def test_range(self) -> tuple[int, int]:
        return self.train_end, self.end


def make_splits(total_days: int, plan: SplitPlan) -> list[Split]:
    """Overlapping splits advanced by `stride` days each."""
    if total_days < plan.split_length:
        raise InsufficientHistoryError(
            f"need at least {plan.split_length} days, have {total_days}"
        )
    count = (total_days - plan.split_length) // plan.stride + 1
    return [
        Split(
            index=k,
            start=k * plan.stride,
            train_end=k * plan.stride + plan.train_length,
            end=k * plan.stride + plan.split_length,
        )
        for k in range(count)
    ]


@dataclass(frozen=True)
class Standardizer:
    """Scalar mean/std fitted on a split's training returns only."""

    mu_train: float
    sigma_train: float

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mu_train) / self.sigma_train


def fit_standardizer(train_returns) -> Standardizer:
    """Pooled mean and population standard deviation of training values."""
    vals = np.asarray(train_returns, dtype=np.float64).ravel()
    vals = vals[np.isfinite(vals)]
    if vals.size < 2:
        raise DegenerateInputError("need at least 2 training values")
    sigma = float(vals.std())
    if sigma == 0.0:
        raise DegenerateStandardizerError("training returns are constant")
    return Standardizer(mu_train=float(vals.mean()), sigma_train=sigma)


def fit_split_standardizer(panel: ReturnPanel, split: Split) -> Standardizer:
    lo, hi = split.train_range
    return fit_standardizer(panel.returns[lo:hi, :])


def label_panel(panel: ReturnPanel) -> np.ndarray:
    """Binary labels per (day, stock): 1 if the stock's next-day return is
    strictly above the next day's cross-sectional median.

    Entry [t, s] labels the window ending on day t. The last day and cells
    without a next-day return are NaN. Any day with fewer than two active
    stocks makes the median undefined and raises.
    """
    r = panel.returns
    T, S = r.shape
    active = np.isfinite(r)
    counts = active.sum(axis=1)
    if np.any(counts < 2):
        day = int(np.where(counts < 2)[0][0])
        raise UndefinedMedianError(
            f"day {day} has {int(counts[day])} active stock(s); median needs 2"
        )
    med = np.nanmedian(r, axis=1)
    labels = np.full((T, S), np.nan)
    labels[:-1, :] = np.where(np.isnan(r[1:, :]), np.nan, (r[1:, :] > med[1:, None]).astype(np.float64))
    return labels


@dataclass
class WindowSet:
    """A flat collection of standardized windows with labels and metadata."""

    values: np.ndarray  # (N, W) float64
    labels: np.ndarray  # (N,) int8
    stocks: np.ndarray  # (N,) int32, column index into the owning panel
    end_days: np.ndarray  # (N,) int64, absolute day index of the window end

    def __len__(self) -> int:
        return self.values.shape[0]

    def take(self, idx: np.ndarray) -> "WindowSet":
        return WindowSet(
            values=self.values[idx],
            labels=self.labels[idx],
            stocks=self.stocks[idx],
            end_days=self.end_days[idx],
        )


@dataclass(frozen=True)
class SkipRecord:
    split_index: int
    stock: str
    active_days: int
    reason: str


@dataclass
class SplitWindows:
    train: Optional[WindowSet]
    test: Optional[WindowSet]
    skipped: list = field(default_factory=list)


_GATHER_CHUNK = 65536


def _gather(z: np.ndarray, stocks: np.ndarray, ends: np.ndarray, w: int) -> np.ndarray:
    out = np.empty((stocks.size, w))
    offsets = np.arange(-(w - 1), 1)
    for lo in range(0, stocks.size, _GATHER_CHUNK):
        hi = min(lo + _GATHER_CHUNK, stocks.size)
        rows = ends[lo:hi, None] + offsets[None, :]
        out[lo:hi] = z[rows, stocks[lo:hi, None]]
    return out


def segment_windows(
    panel: ReturnPanel,
    split: Split,
    standardizer: Standardizer,
    plan: SplitPlan,
    parts: tuple = ("train", "test"),
) -> SplitWindows:
    """All labeled windows of one split, standardized with the split's
    training statistics.

    Training windows end on days [start + W - 1, train_end - 2] so that the
    label day stays inside the training range; test windows end on
    [train_end - 1, end - 2], reaching back into training days for history.
    A stock contributes a window only if its active range covers the full
    window plus the label day; stocks contributing nothing are recorded in
    the skip report.
    """
    w = plan.window_length
    labels = label_panel(panel)
    z = standardizer.transform(panel.returns)

    ranges = {
        "train": (split.start + w - 1, split.train_end - 2),
        "test": (split.train_end - 1, split.end - 2),
    }
    result: dict[str, Optional[WindowSet]] = {"train": None, "test": None}
    produced = np.zeros(panel.n_stocks, dtype=bool)
    for part in parts:
        e_lo, e_hi = ranges[part]
        stocks_acc = []
        ends_acc = []
        for s in range(panel.n_stocks):
            first, last = panel.active_range(s)
            lo = max(e_lo, first + w - 1)
            hi = min(e_hi, last - 1)
            if hi < lo:
                continue
            ends = np.arange(lo, hi + 1, dtype=np.int64)
            stocks_acc.append(np.full(ends.size, s, dtype=np.int32))
            ends_acc.append(ends)
            produced[s] = True
        if stocks_acc:
            stocks = np.concatenate(stocks_acc)
            ends = np.concatenate(ends_acc)
        else:
            stocks = np.empty(0, dtype=np.int32)
            ends = np.empty(0, dtype=np.int64)
        values = _gather(z, stocks, ends, w)
        labs = labels[ends, stocks]
        if np.isnan(values).any() or np.isnan(labs).any():
            raise MissingDataError("window values or labels contain missing data")
        result[part] = WindowSet(
            values=values,
            labels=labs.astype(np.int8),
            stocks=stocks,
            end_days=ends,
        )

    skipped = []
    for s in range(panel.n_stocks):
        if produced[s]:
            continue
        first, last = panel.active_range(s)
        active = max(0, min(last, split.end - 1) - max(first, split.start) + 1)
        skipped.append(
            SkipRecord(
                split_index=split.index,
                stock=panel.stocks[s],
                active_days=active,
                reason=f"fewer than {w + 1} usable days",
            )
        )
    return SplitWindows(train=result["train"], test=result["test"], skipped=skipped)


def train_val_split(windows: WindowSet, ratio: float, rng: RngStream) -> tuple[WindowSet, WindowSet]:
    """Uniform shuffle, then split at floor(ratio * N)."""
    n = len(windows)
    if n < 5:
        raise DegenerateInputError("need at least 5 windows to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    perm = rng.generator().permutation(n)
    cut = int(np.floor(ratio * n))
    cut = min(max(cut, 1), n - 1)
    return windows.take(perm[:cut]), windows.take(perm[cut:])


def top_k_by_market_cap(panel: ReturnPanel, k: int, on_day: int) -> ReturnPanel:
    """Restrict the panel to the k largest stocks by market cap on one day.

    Ties break by stock identifier; the surviving columns keep their
    original order.
    """
    if panel.market_caps is None:
        raise MissingDataError("panel has no market caps")
    caps = panel.market_caps[on_day, :]
    have = np.where(np.isfinite(caps))[0]
    if have.size < k:
        raise InsufficientUniverseError(
            f"only {have.size} stocks have market caps on day {on_day}, need {k}"
        )
    order = sorted(have, key=lambda j: (-caps[j], panel.stocks[j]))
    chosen = np.array(sorted(order[:k]), dtype=np.int64)
    return ReturnPanel(
        dates=panel.dates,
        stocks=tuple(panel.stocks[j] for j in chosen),
        returns=panel.returns[:, chosen],
        market_caps=panel.market_caps[:, chosen],
    )


def compute_returns(
    prices: np.ndarray,
    dates: np.ndarray,
    stocks,
    market_caps: Optional[np.ndarray] = None,
) -> ReturnPanel:
    """Simple returns p_t / p_{t-1} - 1; the panel drops the first day."""
    prices = np.asarray(prices, dtype=np.float64)
    if prices.ndim != 2 or prices.shape[0] < 2:
        raise DegenerateInputError("need a (T, S) price matrix with T >= 2")
    finite = np.isfinite(prices)
    if np.any(prices[finite] <= 0):
        raise InvalidPriceError("prices must be positive")
    per_stock = finite.sum(axis=0)
    if np.any(per_stock < 2):
        bad = [str(stocks[j]) for j in np.where(per_stock < 2)[0]]
        raise DegenerateInputError(f"stocks with fewer than 2 prices: {bad[:5]}")
    rets = prices[1:, :] / prices[:-1, :] - 1.0
    caps = None if market_caps is None else np.asarray(market_caps, dtype=np.float64)[1:, :]
    return ReturnPanel(
        dates=np.asarray(dates)[1:],
        stocks=tuple(stocks),
        returns=rets,
        market_caps=caps,
    )


_MOMENTUM_LOOKBACK = 5


def synth_panel(
    n_stocks: int,
    n_days: int,
    signal_strength: float,
    rng: RngStream,
    noise_sigma: float = 0.01,
) -> ReturnPanel:
    """Synthetic return panel with a learnable short-horizon momentum signal.

    r[t, s] = signal_strength * sign(mean of the stock's past 5 returns)
    plus i.i.d. Gaussian noise. Market caps start log-normal and drift with
    cumulative returns. signal_strength = 0 gives pure noise.
    """
    if n_stocks < 2:
        raise ValueError("need at least 2 stocks")
    if n_days < 1:
        raise ValueError("need at least 1 day")
    gen = rng.generator()
    noise = gen.normal(0.0, noise_sigma, (n_days, n_stocks))
    base_caps = gen.lognormal(mean=np.log(1e9), sigma=1.0, size=n_stocks)
    r = np.empty((n_days, n_stocks))
    for t in range(n_days):
        if t < _MOMENTUM_LOOKBACK:
            momentum = np.zeros(n_stocks)
        else:
            momentum = np.sign(r[t - _MOMENTUM_LOOKBACK : t].mean(axis=0))
        r[t] = signal_strength * momentum + noise[t]
    caps = base_caps[None, :] * np.cumprod(1.0 + r, axis=0)
    dates = np.busday_offset("1990-01-02", np.arange(n_days), roll="forward")
    stocks = tuple(f"S{j:04d}" for j in range(n_stocks))
    return ReturnPanel(dates=dates, stocks=stocks, returns=r, market_caps=caps)


def _read_market_csv(path, value_col: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    required = {"date", "ticker", value_col}
    missing = required - set(df.columns)
    if missing:
        raise MissingDataError(f"CSV {path} lacks required columns: {sorted(missing)}")
    df["date"] = pd.to_datetime(df["date"], format="ISO8601")
    return df


def read_returns_csv(path) -> ReturnPanel:
    """Load `date,ticker,return[,market_cap]` rows into a panel."""
    df = _read_market_csv(path, "return")
    values = df.pivot_table(index="date", columns="ticker", values="return", aggfunc="first").sort_index()
    caps = None
    if "market_cap" in df.columns:
        caps_frame = df.pivot_table(index="date", columns="ticker", values="market_cap", aggfunc="first")
        caps = caps_frame.reindex(index=values.index, columns=values.columns).to_numpy(dtype=np.float64)
    return ReturnPanel(
        dates=values.index.to_numpy().astype("datetime64[D]"),
        stocks=tuple(str(c) for c in values.columns),
        returns=values.to_numpy(dtype=np.float64),
        market_caps=caps,
    )


def read_price_csv(path) -> ReturnPanel:
    """Load `date,ticker,close[,market_cap]` rows and convert to returns."""
    df = _read_market_csv(path, "close")
    pivot = df.pivot_table(index="date", columns="ticker", values="close", aggfunc="first").sort_index()
    caps = None
    if "market_cap" in df.columns:
        caps_frame = df.pivot_table(index="date", columns="ticker", values="market_cap", aggfunc="first")
        caps = caps_frame.reindex(index=pivot.index, columns=pivot.columns).to_numpy(dtype=np.float64)
    return compute_returns(
        prices=pivot.to_numpy(dtype=np.float64),
        dates=pivot.index.to_numpy().astype("datetime64[D]"),
        stocks=tuple(str(c) for c in pivot.columns),
        market_caps=caps,
    )


def write_returns_csv(panel: ReturnPanel, path) -> None:
    """One row per active (date, ticker) pair, sorted by date then ticker."""
    T, S = panel.returns.shape
    days, cols = np.where(np.isfinite(panel.returns))
    frame = pd.DataFrame(
        {
            "date": np.asarray(panel.dates)[days],
            "ticker": [panel.stocks[j] for j in cols],
            "return": panel.returns[days, cols],
        }
    )
    if panel.market_caps is not None:
        frame["market_cap"] = panel.market_caps[days, cols]
    frame = frame.sort_values(["date", "ticker"], kind="stable")
    frame.to_csv(path, index=False)


def write_skip_report(records, path) -> None:
    frame = pd.DataFrame(
        [
            {
                "split": r.split_index,
                "stock": r.stock,
                "active_days": r.active_days,
                "reason": r.reason,
            }
            for r in records
        ],
        columns=["split", "stock", "active_days", "reason"],
    )
    frame.to_csv(path, index=False)
