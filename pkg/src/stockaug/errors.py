"""Exception types shared across the toolkit."""


class StockAugError(Exception):
    """Base class for all toolkit errors."""


class DegenerateInputError(StockAugError, ValueError):
    """Input too short or otherwise degenerate for the requested operation."""


class NonFiniteValueError(StockAugError, ValueError):
    """A series contained NaN or infinity."""


class InvalidKnotsError(StockAugError, ValueError):
    """Spline knot abscissae are not strictly increasing (or too few)."""


class InvalidKernelError(StockAugError, ValueError):
    """Convolution kernel is even-sized, non-positive or longer than the series."""


class InfeasibleAnchorError(StockAugError, ValueError):
    """DTW anchor lies outside the allowed alignment band or grid."""


class InfeasibleBandError(StockAugError, ValueError):
    """Alignment band excludes the end cell, no monotone path exists."""


class InsufficientPeersError(StockAugError, ValueError):
    """A class has fewer than two samples, no averaging partner available."""


class InvalidPriceError(StockAugError, ValueError):
    """Price input contained a non-positive value."""


class InsufficientHistoryError(StockAugError, ValueError):
    """Panel shorter than one full walk-forward split."""


class DegenerateStandardizerError(StockAugError, ValueError):
    """Training-range returns are constant, standard deviation is zero."""


class UndefinedMedianError(StockAugError, ValueError):
    """Cross-sectional median needs at least two active stocks."""


class MissingDataError(StockAugError, ValueError):
    """Required data (market caps, returns for held stocks, ...) is absent."""


class InsufficientUniverseError(StockAugError, ValueError):
    """Fewer predicted stocks than the portfolio selection rule needs."""


class TrainingDivergedError(StockAugError, RuntimeError):
    """Training loss became non-finite. Carries the epoch log so far."""

    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


class AlignmentError(StockAugError, ValueError):
    """Two series that must share dates/length do not."""


class DegenerateBenchmarkError(StockAugError, ValueError):
    """Tracking error is zero, the information ratio is undefined."""


class UndefinedDownsideError(StockAugError, ValueError):
    """No negative excess returns, downside risk is undefined."""


class ConfigError(StockAugError, ValueError):
    """Configuration file failed validation."""
