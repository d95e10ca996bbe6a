"""Nonparametric intraday jump detection on tick-level log returns.

Each return is standardized by a local bipower volatility estimate

    sigma_hat^2(i) = (1 / (K - 2)) * sum_{j=i-K+2}^{i-1} |r_j| |r_{j-1}|

(indices 1-based) and the statistic M(i) = r_i / sigma_hat(i) is compared,
under the no-jump null, to the Gumbel limit of the maximum of |M| over the
sample:

    (|M(i)| - C_n) / S_n  ->  eta,   P(eta <= x) = exp(-e^{-x}),

with C_n = (2 ln n)^{1/2} / c - (ln pi + ln ln n) / (2 c (2 ln n)^{1/2}),
S_n = 1 / (c (2 ln n)^{1/2}) and c = sqrt(2/pi).  An observation is flagged
at confidence alpha when the standardized statistic exceeds the Gumbel
quantile -ln(-ln alpha); the jump's sign is the return's sign.

Zero drift throughout.  n counts tested observations.  Volatility windows
never cross session days unless configured otherwise, and zero returns are
dropped by default (they carry no jump information and break the bipower
estimate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import TickSeries, log_returns
from .errors import DataError, SpecificationError

__all__ = [
    "C_CONSTANT",
    "LMConfig",
    "LMStatistics",
    "JumpDetectionResult",
    "cs_constants",
    "gumbel_threshold",
    "auto_window",
    "local_volatility",
    "lm_statistics",
    "detect_jumps",
]

C_CONSTANT = math.sqrt(2.0 / math.pi)

DEFAULT_ALPHA_LEVELS = (0.95, 0.975, 0.99, 0.995)


def cs_constants(n: int) -> tuple[float, float]:
    """Centering C_n and scale S_n of the maximum-statistic Gumbel limit."""
    n = int(n)
    if n < 3:
        raise SpecificationError(f"cs_constants needs n >= 3, got {n}")
    root = math.sqrt(2.0 * math.log(n))
    c_n = root / C_CONSTANT - (math.log(math.pi) + math.log(math.log(n))) / (
        2.0 * C_CONSTANT * root)
    s_n = 1.0 / (C_CONSTANT * root)
    return c_n, s_n


def gumbel_threshold(alpha: float) -> float:
    """alpha-quantile of the Gumbel limit law, -ln(-ln alpha)."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise SpecificationError(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(-math.log(alpha))


def auto_window(n_per_day: int, bar_exponent: float = -0.6) -> int:
    """Window size K = ceil(n^(-exponent)), clamped to [3, n/2]."""
    n_per_day = int(n_per_day)
    if not -1.0 < bar_exponent <= -0.5:
        raise SpecificationError(
            f"bar_exponent must lie in (-1, -0.5], got {bar_exponent}")
    if n_per_day < 6:
        raise SpecificationError(
            f"auto_window needs n_per_day >= 6 for a valid clamp range, got {n_per_day}")
    k = math.ceil(n_per_day ** (-bar_exponent))
    return int(min(max(k, 3), n_per_day // 2))


def local_volatility(log_return_values, i: int, K: int) -> float:
    """Bipower volatility sigma_hat at 1-based return index i; needs i >= K."""
    r = np.abs(np.asarray(log_return_values, dtype=np.float64))
    if K < 3:
        raise SpecificationError(f"K must be >= 3, got {K}")
    i = int(i)
    if i < K or i > r.shape[0]:
        raise SpecificationError(
            f"index i={i} needs K={K} <= i <= {r.shape[0]} returns of history")
    i0 = i - 1
    window = r[i0 - K + 2 : i0] * r[i0 - K + 1 : i0 - 1]
    return math.sqrt(float(window.sum()) / (K - 2))


@dataclass(frozen=True)
class LMConfig:
    """Test configuration; K=None derives the window from the tick density."""

    K: int | None = None
    alpha_levels: tuple[float, ...] = DEFAULT_ALPHA_LEVELS
    window_exponent: float = -0.6
    drop_zero_returns: bool = True
    span_days: bool = False

    def __post_init__(self) -> None:
        if self.K is not None and int(self.K) < 3:
            raise SpecificationError(f"K must be >= 3, got {self.K}")
        if not -1.0 < self.window_exponent <= -0.5:
            raise SpecificationError(
                f"window_exponent must lie in (-1, -0.5], got {self.window_exponent}")
        if not self.alpha_levels:
            raise SpecificationError("alpha_levels cannot be empty")
        for alpha in self.alpha_levels:
            if not 0.0 < alpha < 1.0:
                raise SpecificationError(f"alpha level {alpha} outside (0, 1)")
        object.__setattr__(self, "alpha_levels",
                           tuple(sorted(float(a) for a in self.alpha_levels)))


@dataclass(frozen=True)
class LMStatistics:
    """Standardized statistics over the tested observations."""

    m: np.ndarray             # M(i) = r_i / sigma_hat(i)
    sigma_hat: np.ndarray
    tested_index: np.ndarray  # indices into the input return array
    n: int                    # tested observation count (drives C_n, S_n)
    c_n: float
    s_n: float
    c_constant: float
    K: int
    dropped_zero: int
    untestable: int


def lm_statistics(log_return_values, K: int, *, day_id=None,
                  drop_zero_returns: bool = True,
                  span_days: bool = False) -> LMStatistics:
    """Compute M(i) for every index with a full same-day volatility window.

    ``day_id`` groups returns into days; windows and tested indices stay
    within a day unless ``span_days``.  Zero returns are removed up front
    when ``drop_zero_returns`` (counted), otherwise indices whose window has
    zero bipower volatility are reported untestable.
    """
    r = np.asarray(log_return_values, dtype=np.float64)
    if r.ndim != 1:
        raise SpecificationError("returns must be one-dimensional")
    if not np.all(np.isfinite(r)):
        raise DataError("returns must be finite")
    K = int(K)
    if K < 3:
        raise SpecificationError(f"K must be >= 3, got {K}")
    if day_id is None:
        day = np.zeros(r.shape[0], dtype=np.int64)
    else:
        day = np.asarray(day_id, dtype=np.int64)
        if day.shape != r.shape:
            raise SpecificationError("day_id must align with the returns")
    index = np.arange(r.shape[0])
    dropped = 0
    if drop_zero_returns:
        keep = r != 0.0
        dropped = int((~keep).sum())
        r, day, index = r[keep], day[keep], index[keep]
    if r.shape[0] < K + 2:
        raise DataError(
            f"need at least K+2 = {K + 2} usable returns, have {r.shape[0]}")
    if span_days:
        day = np.zeros(r.shape[0], dtype=np.int64)
    absr = np.abs(r)
    bipower = absr.copy()
    bipower[1:] = absr[1:] * absr[:-1]
    bipower[0] = 0.0
    bipower[np.concatenate([[False], day[1:] != day[:-1]])] = 0.0  # never cross days
    csum = np.concatenate([[0.0], np.cumsum(bipower)])

    day_start = np.empty(r.shape[0], dtype=np.int64)
    start = 0
    for i in range(r.shape[0]):
        if i > 0 and day[i] != day[i - 1]:
            start = i
        day_start[i] = start
    pos = np.arange(r.shape[0]) - day_start + 1  # 1-based position within day
    testable = pos >= K
    i0 = np.nonzero(testable)[0]
    # sum over m = i0-K+2 .. i0-1 of |r_m||r_{m-1}| = csum[i0] - csum[i0-K+2]
    var = (csum[i0] - csum[i0 - K + 2]) / (K - 2)
    sigma = np.sqrt(var)
    good = sigma > 0.0
    untestable = int((~good).sum())
    i0 = i0[good]
    sigma = sigma[good]
    n = int(i0.shape[0])
    if n < 3:
        raise DataError(f"only {n} testable observations; need at least 3")
    c_n, s_n = cs_constants(n)
    return LMStatistics(
        m=r[i0] / sigma, sigma_hat=sigma, tested_index=index[i0], n=n,
        c_n=c_n, s_n=s_n, c_constant=C_CONSTANT, K=K,
        dropped_zero=dropped, untestable=untestable)


@dataclass(frozen=True)
class JumpDetectionResult:
    """Flags per confidence level over the tested observations.

    Arrays are aligned with ``lm.m``; ``flags[alpha]`` is a boolean mask,
    and the masks nest downward in alpha since the threshold is increasing.
    """

    lm: LMStatistics
    alpha_levels: tuple[float, ...]
    thresholds: dict[float, float]
    flags: dict[float, np.ndarray]
    jump_fraction: dict[float, float]
    signs: np.ndarray          # sign of the tested return
    returns: np.ndarray        # tested return values
    tick_index: np.ndarray     # right-endpoint tick of each tested return
    business_times: np.ndarray

    def flagged_tick_index(self, alpha: float) -> np.ndarray:
        return self.tick_index[self.flags[alpha]]


def detect_jumps(ticks: TickSeries, config: LMConfig | None = None) -> JumpDetectionResult:
    """Run the jump test on a tick series.

    Returns are formed per :func:`carma_hawkes.data.log_returns`; session-gap
    returns are excluded outright.  K defaults to
    auto_window(mean returns per day, window_exponent).
    """
    cfg = config or LMConfig()
    rets = log_returns(ticks)
    inside = ~rets.day_boundary
    values = rets.values[inside]
    days = rets.day_index[inside]
    tick_idx = rets.tick_index[inside]
    if values.shape[0] == 0:
        raise DataError("no within-day returns to test")
    if cfg.K is not None:
        K = int(cfg.K)
    else:
        n_days = int(np.unique(days).shape[0])
        n_per_day = math.ceil(values.shape[0] / n_days)
        K = auto_window(n_per_day, cfg.window_exponent)
    if values.shape[0] < K + 2:
        raise DataError(
            f"series has {values.shape[0]} within-day returns; need K+2 = {K + 2}")
    lm = lm_statistics(values, K, day_id=days,
                       drop_zero_returns=cfg.drop_zero_returns,
                       span_days=cfg.span_days)
    standardized = (np.abs(lm.m) - lm.c_n) / lm.s_n
    thresholds = {}
    flags = {}
    fraction = {}
    for alpha in cfg.alpha_levels:
        beta = gumbel_threshold(alpha)
        mask = standardized > beta
        thresholds[alpha] = beta
        flags[alpha] = mask
        fraction[alpha] = float(mask.sum()) / lm.n
    tested_ticks = tick_idx[lm.tested_index]
    return JumpDetectionResult(
        lm=lm, alpha_levels=cfg.alpha_levels, thresholds=thresholds,
        flags=flags, jump_fraction=fraction,
        signs=np.sign(values[lm.tested_index]).astype(np.int8),
        returns=values[lm.tested_index],
        tick_index=tested_ticks,
        business_times=ticks.business_times[tested_ticks])
