"""Numeric primitives shared by the health-indicator extractors."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, CoverageError, DegenerateInputError, UndefinedEntropyError

DEFAULT_SMOOTH_WINDOW = 5
DEFAULT_IC_BIN = 0.010  # volts
DEFAULT_DV_BIN_FRACTION = 0.01  # of nominal capacity


class Reference(str, enum.Enum):
    TIME_S = "time_s"
    VOLTAGE_V = "voltage_v"
    CURRENT_A = "current_a"
    TEMPERATURE_C = "temperature_c"
    SOC_PCT = "soc_pct"


@dataclass(frozen=True)
class IntervalSpec:
    reference: Reference
    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "reference", Reference(self.reference))
        if not self.lower < self.upper:
            raise ArgumentError(f"interval lower {self.lower} must be below upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_list(self) -> list:
        return [self.reference.value, self.lower, self.upper]


class CurveKind(str, enum.Enum):
    IC = "ic"
    DV = "dv"
    DT = "dt"


@dataclass(frozen=True, eq=False)
class DifferentialCurve:
    abscissa: np.ndarray
    ordinate: np.ndarray
    kind: CurveKind
    bin_width: float
    raw_ordinate: np.ndarray

    def __post_init__(self):
        if len(self.abscissa) < 2 or len(self.abscissa) != len(self.ordinate):
            raise ArgumentError("a differential curve needs >= 2 points of equal length")


@dataclass(frozen=True)
class SampleEntropyParams:
    m: int = 1
    r: float = 0.15
    normalize: bool = False  # r in units of the signal's population SD

    def __post_init__(self):
        if not (int(self.m) == self.m and self.m >= 1):
            raise ArgumentError("m must be a positive integer")
        if not self.r > 0:
            raise ArgumentError("r must be positive")


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1)


def trapezoid(y, x) -> float:
    y = _as_array(y)
    x = _as_array(x)
    if len(y) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def smooth(signal, window: int = DEFAULT_SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average; windows are truncated at the ends.

    >>> smooth([1, 2, 3, 4, 5], 3).tolist()
    [1.5, 2.0, 3.0, 4.0, 4.5]
    """
    x = _as_array(signal)
    n = len(x)
    if window < 1 or window % 2 == 0 or window > n:
        raise ArgumentError(f"window must be odd and in 1..{n}, got {window}")
    if window == 1:
        return x.copy()
    h = window // 2
    c = np.concatenate(([0.0], np.cumsum(x)))
    k = np.arange(n)
    lo = np.maximum(k - h, 0)
    hi = np.minimum(k + h, n - 1)
    out = (c[hi + 1] - c[lo]) / (hi - lo + 1)
    # exact for constants, where the cumulative sum would round
    if np.all(x == x[0]):
        out[:] = x[0]
    return out


def _interp_at(x0, x1, y0, y1, target):
    if x1 == x0:
        return y0
    return y0 + (y1 - y0) * (target - x0) / (x1 - x0)


def clip_to_interval(x, y, spec: IntervalSpec | tuple[float, float]):
    """Longest contiguous run of ``x`` inside [lower, upper], with the boundary
    crossings linearly interpolated onto both sequences.

    Returns two empty arrays when the interval is not touched at all.
    """
    x = _as_array(x)
    y = _as_array(y)
    if len(x) != len(y):
        raise ArgumentError("x and y differ in length")
    lower, upper = (spec.lower, spec.upper) if isinstance(spec, IntervalSpec) else spec
    empty = (np.empty(0), np.empty(0))
    n = len(x)
    if n == 0:
        return empty
    inside = (x >= lower) & (x <= upper)
    if not inside.any():
        # interval may sit strictly between two neighbouring samples
        for k in range(n - 1):
            a, b = x[k], x[k + 1]
            if min(a, b) < lower and max(a, b) > upper:
                first, second = (lower, upper) if a < b else (upper, lower)
                return (
                    np.array([first, second]),
                    np.array([_interp_at(a, b, y[k], y[k + 1], first), _interp_at(a, b, y[k], y[k + 1], second)]),
                )
        return empty
    # longest run, first on ties
    best_start, best_len, k = 0, 0, 0
    while k < n:
        if inside[k]:
            j = k
            while j + 1 < n and inside[j + 1]:
                j += 1
            if j - k + 1 > best_len:
                best_start, best_len = k, j - k + 1
            k = j + 1
        else:
            k += 1
    s, e = best_start, best_start + best_len - 1
    xs = list(x[s : e + 1])
    ys = list(y[s : e + 1])
    if s > 0:
        xp = x[s - 1]
        bound = lower if xp < lower else upper
        if xs[0] != bound:
            xs.insert(0, bound)
            ys.insert(0, _interp_at(xp, x[s], y[s - 1], y[s], bound))
    if e < n - 1:
        xn = x[e + 1]
        bound = lower if xn < lower else upper
        if xs[-1] != bound:
            xs.append(bound)
            ys.append(_interp_at(x[e], xn, y[e], y[e + 1], bound))
    return np.array(xs), np.array(ys)


def covers(clipped_x, lower: float, upper: float, rtol: float = 1e-9) -> bool:
    """True if a clipped abscissa reaches both interval bounds."""
    if len(clipped_x) < 2:
        return False
    tol = rtol * max(1.0, abs(lower), abs(upper))
    return abs(min(clipped_x) - lower) <= tol and abs(max(clipped_x) - upper) <= tol


def line_slope(x, y) -> float:
    """Ordinary least-squares slope of ``y`` on ``x``."""
    x = _as_array(x)
    y = _as_array(y)
    if len(x) < 2 or len(x) != len(y):
        raise ArgumentError("line_slope needs two equal-length sequences of length >= 2")
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateInputError("x has zero variance")
    return float(np.dot(dx, y - y.mean()) / sxx)


def integrate_area(t, x) -> float:
    """Trapezoidal integral of ``x`` over time ``t`` (x-units * seconds)."""
    t = _as_array(t)
    if len(t) < 2:
        raise ArgumentError("integration needs at least two samples")
    return trapezoid(x, t)


def integrate_energy(t, x) -> float:
    """Trapezoidal integral of ``x**2`` over time ``t``."""
    t = _as_array(t)
    if len(t) < 2:
        raise ArgumentError("integration needs at least two samples")
    return trapezoid(_as_array(x) ** 2, t)


def monotonize(primary, secondary):
    """Sort by ``primary`` and average ``secondary`` over duplicate primaries."""
    p = _as_array(primary)
    s = _as_array(secondary)
    order = np.argsort(p, kind="stable")
    p, s = p[order], s[order]
    uniq, inverse, counts = np.unique(p, return_inverse=True, return_counts=True)
    if len(uniq) == len(p):
        return p, s
    sums = np.zeros(len(uniq))
    np.add.at(sums, inverse, s)
    return uniq, sums / counts


def differential_curve(kind, primary, secondary, bin_width: float, smooth_window: int = DEFAULT_SMOOTH_WINDOW):
    """Binned derivative d(secondary)/d(primary).

    For IC pass voltage and cumulative charge, for DV charge (or SOC) and
    voltage, for DT voltage and temperature. The primary span is divided into
    ``round(span / bin_width)`` equal bins, so the effective width stored on
    the curve can differ slightly from the nominal one; the telescoping sum
    ``sum(raw_ordinate) * curve.bin_width`` equals the secondary increment.
    """
    kind = CurveKind(kind)
    if not bin_width > 0:
        raise ArgumentError("bin width must be positive")
    p, s = monotonize(primary, secondary)
    if len(p) < 2:
        raise ArgumentError("need at least two distinct primary values")
    span = p[-1] - p[0]
    if span < 2 * bin_width:
        raise ArgumentError(f"primary span {span:g} is shorter than two bins of {bin_width:g}")
    n_bins = max(2, int(round(span / bin_width)))
    edges = np.linspace(p[0], p[-1], n_bins + 1)
    width = span / n_bins
    s_edges = np.interp(edges, p, s)
    raw = np.diff(s_edges) / width
    centers = 0.5 * (edges[1:] + edges[:-1])
    w = min(smooth_window, n_bins if n_bins % 2 else n_bins - 1)
    ordinate = smooth(raw, max(w, 1))
    return DifferentialCurve(centers, ordinate, kind, float(width), raw)


@dataclass(frozen=True)
class PeakFeatures:
    value: float
    location: float
    area: float
    slope: float


def peak_features(curve: DifferentialCurve, interval: IntervalSpec | tuple[float, float] | None = None,
                  mode: str = "peak") -> PeakFeatures:
    """Extreme value, its location, area and rising-flank slope within ``interval``.

    ``mode`` is ``"peak"`` (maximum) or ``"valley"`` (minimum). Ties resolve
    to the lowest abscissa. The slope is the least-squares slope from the
    interval's lower bound up to the extreme; it is 0 when the extreme sits
    on the lower bound.
    """
    if mode not in ("peak", "valley"):
        raise ArgumentError(f"mode must be 'peak' or 'valley', got {mode!r}")
    x, y = monotonize(curve.abscissa, curve.ordinate)
    if interval is None:
        lower, upper = float(x[0]), float(x[-1])
    else:
        lower, upper = (interval.lower, interval.upper) if isinstance(interval, IntervalSpec) else interval
    xs, ys = clip_to_interval(x, y, (lower, upper))
    if len(xs) == 0:
        raise CoverageError(f"interval [{lower:g}, {upper:g}] does not overlap the curve")
    k = int(np.argmax(ys) if mode == "peak" else np.argmin(ys))
    area = trapezoid(ys, xs)
    flank_x, flank_y = xs[: k + 1], ys[: k + 1]
    slope = line_slope(flank_x, flank_y) if len(flank_x) >= 2 else 0.0
    return PeakFeatures(float(ys[k]), float(xs[k]), float(area), float(slope))


# --------------------------------------------------------------------------
# statistics


def _check_stats_input(signal) -> np.ndarray:
    x = _as_array(signal)
    if len(x) < 2:
        raise ArgumentError("statistics need at least two samples")
    return x


def standard_deviation(signal) -> float:
    x = _check_stats_input(signal)
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def _standardized_moment(signal, order: int) -> float:
    x = _check_stats_input(signal)
    mu = x.mean()
    sd = float(np.sqrt(np.mean((x - mu) ** 2)))
    if sd == 0.0:
        raise DegenerateInputError("zero standard deviation")
    return float(np.mean((x - mu) ** order) / sd**order)


def skewness(signal) -> float:
    return _standardized_moment(signal, 3)


def kurtosis(signal) -> float:
    """Population kurtosis (no excess subtraction)."""
    return _standardized_moment(signal, 4)


def moments(signal) -> tuple[float, float, float, float]:
    """Mean, population SD, skewness and kurtosis."""
    x = _check_stats_input(signal)
    return float(x.mean()), standard_deviation(x), skewness(x), kurtosis(x)


def match_counts(signal, m: int, r: float) -> tuple[int, int]:
    """Pair counts (order m, order m+1) over templates i < j <= n - m."""
    x = _as_array(signal)
    n = len(x)
    if n < m + 2:
        raise ArgumentError(f"sample entropy needs n >= m + 2 samples, got {n}")
    n_t = n - m
    emb = np.lib.stride_tricks.sliding_window_view(x, m + 1)[:n_t]
    a = b = 0
    for i in range(n_t - 1):
        d = np.abs(emb[i + 1 :] - emb[i])
        dm = d[:, :m].max(axis=1)
        close_m = dm <= r
        a += int(close_m.sum())
        b += int((close_m & (d[:, m] <= r)).sum())
    return a, b


def sample_entropy(signal, params: SampleEntropyParams = SampleEntropyParams()) -> float:
    """Sample entropy -ln(B/A) with the max norm and inclusive tolerance."""
    x = _as_array(signal)
    r = params.r
    if params.normalize:
        sd = standard_deviation(x)
        if sd == 0.0:
            raise DegenerateInputError("cannot normalize a constant signal")
        r = r * sd
    a, b = match_counts(x, params.m, r)
    if a == 0 or b == 0:
        raise UndefinedEntropyError(f"sample entropy undefined (A={a}, B={b})")
    # the shared denominator cancels; + 0.0 turns -0.0 into 0.0
    return -math.log(b / a) + 0.0
