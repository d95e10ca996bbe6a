"""Tick-data ingestion, business time, returns, spreads, and synthetic fixtures.

Canonical tick CSV (bit-exact round trip):

    timestamp,price,side,instrument
    2023-05-15T08:00:00.000000Z,101.25,bid,XS000000

Timestamps are ISO-8601 UTC with microseconds.  Cleaning sorts rows by
timestamp, drops consecutive exact duplicates, micro-shifts remaining
same-timestamp ties by 1 microsecond in file order (every price movement is
kept), and discards ticks outside the instrument's trading session.

Business time concatenates the trading sessions of the days present in the
data: within a session it advances with the wall clock; overnight, weekend,
and closure gaps contribute nothing.  All event-time modeling downstream
runs on this clock.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from ._rng import rng_stream
from .errors import DataError, DataWarning, SpecificationError
from .model import EventSeries, MarkedEventSeries, UnivariateSpec

__all__ = [
    "SessionCalendar",
    "CALENDARS",
    "TickSeries",
    "IngestStats",
    "ReturnSeries",
    "SpreadStats",
    "SynthConfig",
    "parse_ticks",
    "ingest_ticks",
    "write_ticks",
    "log_returns",
    "spread_stats",
    "synth_ticks",
    "ticks_from_events",
    "write_events",
    "read_events",
]

_US = 1_000_000
_DAY_US = 86_400 * _US
_HEADER = ["timestamp", "price", "side", "instrument"]
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_SYNTH_BASE_DAY = 19_492  # 2023-05-15, a Monday, days since the epoch


@dataclass(frozen=True)
class SessionCalendar:
    """Fixed daily trading session at a fixed UTC offset (no DST handling)."""

    name: str
    utc_offset_s: int
    open_s: int   # session open, seconds after local midnight
    close_s: int  # session close, inclusive

    def __post_init__(self) -> None:
        if not (0 <= self.open_s < self.close_s <= 86_400):
            raise SpecificationError(
                f"session must satisfy 0 <= open < close <= 86400, "
                f"got ({self.open_s}, {self.close_s})")

    @property
    def session_length_s(self) -> int:
        return self.close_s - self.open_s


CALENDARS = {
    # EUR bonds: 08:00-17:30 CET (UTC+1); SGD callables: 09:00-12:00 SGT (UTC+8)
    "eur": SessionCalendar("eur", 3_600, 8 * 3_600, 17 * 3_600 + 1_800),
    "sgd": SessionCalendar("sgd", 8 * 3_600, 9 * 3_600, 12 * 3_600),
}


def _resolve_calendar(calendar) -> SessionCalendar:
    if isinstance(calendar, SessionCalendar):
        return calendar
    if isinstance(calendar, str):
        try:
            return CALENDARS[calendar]
        except KeyError:
            raise DataError(
                f"unknown calendar {calendar!r}; known: {sorted(CALENDARS)}") from None
    raise DataError(f"calendar must be a name or SessionCalendar, got {type(calendar).__name__}")


@dataclass(frozen=True)
class TickSeries:
    """Cleaned tick stream for one instrument/side on one session calendar."""

    instrument_id: str
    side: str
    timestamps: np.ndarray      # int64 epoch microseconds, strictly increasing
    prices: np.ndarray
    business_times: np.ndarray  # seconds of cumulative session time
    day_index: np.ndarray
    calendar: SessionCalendar

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        prices = np.asarray(self.prices, dtype=np.float64)
        bt = np.asarray(self.business_times, dtype=np.float64)
        day = np.asarray(self.day_index, dtype=np.int64)
        n = ts.shape[0]
        if not (prices.shape[0] == bt.shape[0] == day.shape[0] == n):
            raise DataError("tick arrays must be aligned")
        if n == 0:
            raise DataError("a tick series cannot be empty")
        if self.side not in ("bid", "ask"):
            raise DataError(f"side must be 'bid' or 'ask', got {self.side!r}")
        if np.any(np.diff(ts) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0.0):
            raise DataError("prices must be finite and positive")
        if np.any(np.diff(bt) <= 0.0) or bt[0] < 0.0:
            raise DataError("business times must be non-negative and strictly increasing")
        for name, arr in (("timestamps", ts), ("prices", prices),
                          ("business_times", bt), ("day_index", day)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def n_days(self) -> int:
        return int(np.unique(self.day_index).shape[0])


@dataclass(frozen=True)
class IngestStats:
    rows_read: int
    duplicates_dropped: int
    ties_shifted: int
    out_of_session_dropped: int
    days: int


# ---------------------------------------------------------------------------
# Parsing


def _parse_timestamp(text: str, line_no: int) -> int:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise DataError(f"line {line_no}: bad timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - _EPOCH) // timedelta(microseconds=1)


def _format_timestamp(us: int) -> str:
    dt = _EPOCH + timedelta(microseconds=int(us))
    return f"{dt:%Y-%m-%dT%H:%M:%S}.{dt.microsecond:06d}Z"


def _business_times(ts: np.ndarray, calendar: SessionCalendar) -> tuple[np.ndarray, np.ndarray]:
    """Map strictly increasing in-session timestamps to business seconds."""
    local = ts + calendar.utc_offset_s * _US
    day_us = local // _DAY_US
    sec_us = local - day_us * _DAY_US
    days_present, ordinal = np.unique(day_us, return_inverse=True)
    length = float(calendar.session_length_s)
    bt = ordinal * length + (sec_us - calendar.open_s * _US) / _US
    # equal-at-boundary ticks (one at close, next at open) collapse; keep order
    for i in range(1, bt.shape[0]):
        if bt[i] <= bt[i - 1]:
            bt[i] = bt[i - 1] + 1e-6
    return bt, ordinal.astype(np.int64)


def _in_session(ts: np.ndarray, calendar: SessionCalendar) -> np.ndarray:
    local = ts + calendar.utc_offset_s * _US
    sec_us = local % _DAY_US
    return (sec_us >= calendar.open_s * _US) & (sec_us <= calendar.close_s * _US)


def ingest_ticks(source, *, instrument: str | None = None, side: str | None = None,
                 calendar="eur") -> tuple[TickSeries, IngestStats]:
    """Parse and clean the canonical tick CSV, returning the series and counters.

    ``source`` is a path or an open text stream.  ``instrument``/``side``
    select rows when the file mixes several; a file that still contains more
    than one after filtering is an error.
    """
    cal = _resolve_calendar(calendar)
    if hasattr(source, "read"):
        rows_iter = csv.reader(source)
        name = getattr(source, "name", "<stream>")
    else:
        name = str(source)
        try:
            handle = open(source, "r", newline="")
        except OSError as exc:
            raise DataError(f"cannot open {source}: {exc}") from None
        rows_iter = csv.reader(handle)
    try:
        header = next(rows_iter, None)
        if header is None:
            raise DataError(f"{name}: empty file")
        if [h.strip() for h in header] != _HEADER:
            raise DataError(
                f"{name}: header must be {','.join(_HEADER)!r}, got {','.join(header)!r}")
        ts_list: list[int] = []
        price_list: list[float] = []
        rows_read = 0
        seen_instruments: set[str] = set()
        seen_sides: set[str] = set()
        for line_no, row in enumerate(rows_iter, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{name}: line {line_no}: expected 4 fields, got {len(row)}")
            rows_read += 1
            row_side = row[2].strip()
            row_instrument = row[3].strip()
            if row_side not in ("bid", "ask"):
                raise DataError(f"{name}: line {line_no}: side must be bid or ask, got {row_side!r}")
            if not row_instrument:
                raise DataError(f"{name}: line {line_no}: empty instrument")
            ts = _parse_timestamp(row[0], line_no)
            try:
                price = float(row[1])
            except ValueError:
                raise DataError(f"{name}: line {line_no}: bad price {row[1]!r}") from None
            if not math.isfinite(price) or price <= 0.0:
                raise DataError(f"{name}: line {line_no}: price must be positive, got {row[1]}")
            if instrument is not None and row_instrument != instrument:
                continue
            if side is not None and row_side != side:
                continue
            seen_instruments.add(row_instrument)
            seen_sides.add(row_side)
            ts_list.append(ts)
            price_list.append(price)
    finally:
        if not hasattr(source, "read"):
            handle.close()
    if rows_read == 0:
        raise DataError(f"{name}: no data rows")
    if not ts_list:
        raise DataError(
            f"{name}: no rows match instrument={instrument!r} side={side!r}")
    if len(seen_instruments) > 1:
        raise DataError(
            f"{name}: multiple instruments {sorted(seen_instruments)}; pass instrument=")
    if len(seen_sides) > 1:
        raise DataError(f"{name}: both sides present; pass side=")

    ts = np.asarray(ts_list, dtype=np.int64)
    prices = np.asarray(price_list, dtype=np.float64)
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    prices = prices[order]

    # consecutive exact duplicates (same timestamp and price) collapse to one
    keep = np.ones(ts.shape[0], dtype=bool)
    keep[1:] = (np.diff(ts) != 0) | (np.diff(prices) != 0.0)
    duplicates = int((~keep).sum())
    ts = ts[keep]
    prices = prices[keep]

    ties = 0
    for i in range(1, ts.shape[0]):
        if ts[i] <= ts[i - 1]:
            ts[i] = ts[i - 1] + 1
            ties += 1
    if ties:
        warnings.warn(
            f"{name}: shifted {ties} same-timestamp ticks by 1 microsecond",
            DataWarning, stacklevel=2)

    mask = _in_session(ts, cal)
    dropped = int((~mask).sum())
    ts = ts[mask]
    prices = prices[mask]
    if ts.shape[0] == 0:
        raise DataError(f"{name}: no ticks inside the {cal.name} trading session")
    bt, day = _business_times(ts, cal)
    series = TickSeries(
        instrument_id=next(iter(seen_instruments)), side=next(iter(seen_sides)),
        timestamps=ts, prices=prices, business_times=bt, day_index=day, calendar=cal)
    stats = IngestStats(
        rows_read=rows_read, duplicates_dropped=duplicates, ties_shifted=ties,
        out_of_session_dropped=dropped, days=series.n_days)
    return series, stats


def parse_ticks(source, *, instrument: str | None = None, side: str | None = None,
                calendar="eur") -> TickSeries:
    """Parse the canonical tick CSV; see :func:`ingest_ticks` for counters."""
    series, _ = ingest_ticks(source, instrument=instrument, side=side, calendar=calendar)
    return series


def write_ticks(ticks: TickSeries, target) -> None:
    """Write the canonical CSV; re-parsing reproduces the series exactly."""
    if hasattr(target, "write"):
        _write_tick_rows(ticks, target)
    else:
        with open(target, "w", newline="") as handle:
            _write_tick_rows(ticks, handle)


def _write_tick_rows(ticks: TickSeries, handle) -> None:
    handle.write(",".join(_HEADER) + "\n")
    for us, price in zip(ticks.timestamps, ticks.prices):
        handle.write(f"{_format_timestamp(us)},{float(price)!r},"
                     f"{ticks.side},{ticks.instrument_id}\n")


# ---------------------------------------------------------------------------
# Returns


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns aligned to ticks[1:], with day-boundary flags."""

    values: np.ndarray
    day_boundary: np.ndarray   # True where the return crosses a session gap
    tick_index: np.ndarray     # index of the right-endpoint tick
    day_index: np.ndarray      # day of the right-endpoint tick

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def log_returns(ticks: TickSeries) -> ReturnSeries:
    """r_i = ln(P_i / P_{i-1}) for consecutive ticks."""
    if ticks.n < 2:
        raise DataError("need at least two ticks to form returns")
    values = np.diff(np.log(ticks.prices))
    day = ticks.day_index
    return ReturnSeries(
        values=values,
        day_boundary=day[1:] != day[:-1],
        tick_index=np.arange(1, ticks.n),
        day_index=day[1:].copy())


# ---------------------------------------------------------------------------
# Spread statistics


@dataclass(frozen=True)
class SpreadStats:
    """The nine descriptive statistics of an aligned bid-ask spread series.

    Skewness and excess kurtosis are None on zero-variance samples and
    rendered as "undefined" in tabular output.
    """

    mean: float
    median: float
    mode: float
    std: float
    excess_kurtosis: float | None
    skewness: float | None
    iqr: float
    min: float
    max: float
    n: int

    COLUMNS = ("mean", "median", "mode", "std", "excess_kurtosis",
               "skewness", "iqr", "min", "max")

    def to_row(self) -> list[str]:
        out = []
        for col in self.COLUMNS:
            value = getattr(self, col)
            out.append("undefined" if value is None else repr(float(value)))
        return out


def _locf(sample_ts: np.ndarray, sample_values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(sample_ts, grid, side="right") - 1
    return sample_values[idx]


def spread_stats(bid: TickSeries, ask: TickSeries, *, tick_size: float = 0.001) -> SpreadStats:
    """Bid-ask spread statistics on the union grid of quote updates.

    Quotes align by last observation carried forward over the overlap of the
    two series; the mode is the argmax of the tick-size-rounded histogram,
    ties resolved toward the smaller value.
    """
    if not (tick_size > 0.0 and math.isfinite(tick_size)):
        raise DataError("tick_size must be positive")
    lo = max(bid.timestamps[0], ask.timestamps[0])
    hi = min(bid.timestamps[-1], ask.timestamps[-1])
    if lo > hi:
        raise DataError("bid and ask series do not overlap in time")
    grid = np.union1d(bid.timestamps, ask.timestamps)
    grid = grid[(grid >= lo) & (grid <= hi)]
    spread = (_locf(ask.timestamps, ask.prices, grid)
              - _locf(bid.timestamps, bid.prices, grid))
    n = spread.shape[0]
    mean = float(spread.mean())
    centered = spread - mean
    m2 = float(np.mean(centered ** 2))
    if n > 1:
        std = float(np.sqrt(np.sum(centered ** 2) / (n - 1)))
    else:
        std = 0.0
    if m2 > 0.0:
        skew = float(np.mean(centered ** 3) / m2 ** 1.5)
        kurt = float(np.mean(centered ** 4) / m2 ** 2 - 3.0)
    else:
        skew = None
        kurt = None
    rounded = np.round(spread / tick_size) * tick_size
    values, counts = np.unique(rounded, return_counts=True)
    mode = float(values[np.argmax(counts)])  # first max is the smallest value
    q25, q75 = np.percentile(spread, [25.0, 75.0])
    return SpreadStats(
        mean=mean, median=float(np.median(spread)), mode=mode, std=std,
        excess_kurtosis=kurt, skewness=skew, iqr=float(q75 - q25),
        min=float(spread.min()), max=float(spread.max()), n=n)


# ---------------------------------------------------------------------------
# Synthetic fixtures


@dataclass(frozen=True)
class SynthConfig:
    """Zero-drift geometric diffusion ticked at Poisson arrivals, plus jumps.

    Jumps come either from explicit ``jump_times``/``jump_sizes`` (business
    seconds, log-price units) or from a univariate spec simulated over the
    business horizon with ``jump_size`` magnitude and random signs.
    """

    arrival_rate: float = 0.1          # ticks per business second
    volatility: float = 1e-4           # log-price sigma per sqrt(business second)
    s0: float = 100.0
    n_days: int = 1
    calendar: str | SessionCalendar = "eur"
    instrument: str = "SYNTH"
    side: str = "bid"
    jump_times: tuple[float, ...] = ()
    jump_sizes: tuple[float, ...] = ()
    jump_spec: UnivariateSpec | None = None
    jump_size: float = 0.01

    def __post_init__(self) -> None:
        if not (self.arrival_rate > 0.0 and math.isfinite(self.arrival_rate)):
            raise DataError("arrival_rate must be positive")
        if self.volatility < 0.0 or not math.isfinite(self.volatility):
            raise DataError("volatility must be non-negative")
        if self.s0 <= 0.0:
            raise DataError("s0 must be positive")
        if self.n_days < 1:
            raise DataError("n_days must be >= 1")
        if len(self.jump_times) != len(self.jump_sizes):
            raise DataError("jump_times and jump_sizes must be aligned")
        if self.jump_spec is not None and self.jump_times:
            raise DataError("give either explicit jump times or a jump_spec, not both")


def _business_to_timestamp(bt: np.ndarray, calendar: SessionCalendar) -> np.ndarray:
    length = float(calendar.session_length_s)
    day = (bt / length).astype(np.int64)
    sec = bt - day * length
    local_us = ((_SYNTH_BASE_DAY + day) * 86_400 + calendar.open_s) * _US \
        + np.round(sec * _US).astype(np.int64)
    ts = local_us - calendar.utc_offset_s * _US
    for i in range(1, ts.shape[0]):
        if ts[i] <= ts[i - 1]:
            ts[i] = ts[i - 1] + 1
    return ts


def synth_ticks(config: SynthConfig, seed: int) -> TickSeries:
    """Deterministic synthetic tick path; see :class:`SynthConfig`."""
    cal = _resolve_calendar(config.calendar)
    horizon = float(config.n_days * cal.session_length_s)
    rng_arrival = rng_stream(seed, 0)
    rng_diffusion = rng_stream(seed, 1)
    batch = max(1024, int(2 * config.arrival_rate * horizon) + 64)
    draws = rng_arrival.standard_exponential(batch) / config.arrival_rate
    total = np.cumsum(draws)
    while total[-1] < horizon:
        draws = rng_arrival.standard_exponential(batch) / config.arrival_rate
        total = np.concatenate([total, total[-1] + np.cumsum(draws)])
    arrivals = total[total < horizon]
    bt = np.concatenate([[0.0], arrivals])

    increments = rng_diffusion.standard_normal(bt.shape[0] - 1)
    log_price = np.empty(bt.shape[0])
    log_price[0] = math.log(config.s0)
    log_price[1:] = log_price[0] + np.cumsum(
        config.volatility * np.sqrt(np.diff(bt)) * increments)

    if config.jump_spec is not None:
        from .simulate import simulate_univariate

        jump_events = simulate_univariate(config.jump_spec, horizon, seed + 1)
        jt = jump_events.times
        signs = np.where(rng_stream(seed, 2).random(jt.shape[0]) < 0.5, 1.0, -1.0)
        js = config.jump_size * signs
    else:
        jt = np.asarray(config.jump_times, dtype=np.float64)
        js = np.asarray(config.jump_sizes, dtype=np.float64)
        if jt.size and (jt.min() < 0.0 or jt.max() >= horizon):
            raise DataError("jump times must lie within [0, business horizon)")
        order = np.argsort(jt, kind="stable")
        jt, js = jt[order], js[order]
    if jt.size:
        log_price = log_price + np.cumsum(
            np.concatenate([[0.0], js]))[np.searchsorted(jt, bt, side="right")]

    ts = _business_to_timestamp(bt, cal)
    business, day = _business_times(ts, cal)
    return TickSeries(
        instrument_id=config.instrument, side=config.side, timestamps=ts,
        prices=np.exp(log_price), business_times=business, day_index=day,
        calendar=cal)


def ticks_from_events(events: MarkedEventSeries | EventSeries, *,
                      base_price: float = 100.0, tick_size: float = 0.001,
                      calendar="eur", instrument: str = "SYNTH",
                      side: str = "bid") -> TickSeries:
    """Tick path whose price moves one tick per event (marks give direction).

    Prepends an anchor tick at the session open; unmarked events all move the
    price upward.  The inverse of the bCH event extraction, for closed-loop
    fixtures.
    """
    cal = _resolve_calendar(calendar)
    if base_price <= 0.0 or tick_size <= 0.0:
        raise DataError("base_price and tick_size must be positive")
    if isinstance(events, MarkedEventSeries):
        steps = events.marks.astype(np.float64)
    elif isinstance(events, EventSeries):
        steps = np.ones(events.n)
    else:
        raise DataError("events must be an EventSeries or MarkedEventSeries")
    bt = np.concatenate([[0.0], events.times])
    prices = base_price + tick_size * np.concatenate([[0.0], np.cumsum(steps)])
    if np.any(prices <= 0.0):
        raise DataError("price path hits zero; raise base_price or shrink tick_size")
    ts = _business_to_timestamp(bt, cal)
    business, day = _business_times(ts, cal)
    return TickSeries(
        instrument_id=instrument, side=side, timestamps=ts, prices=prices,
        business_times=business, day_index=day, calendar=cal)


# ---------------------------------------------------------------------------
# Event CSV

_EVENTS_HEADER = ["business_time", "mark"]


def write_events(events: EventSeries | MarkedEventSeries, target) -> None:
    """Write events as `business_time,mark` (mark 0 for unmarked series)."""
    if isinstance(events, MarkedEventSeries):
        marks = events.marks
    elif isinstance(events, EventSeries):
        marks = np.zeros(events.n, dtype=np.int8)
    else:
        raise DataError("events must be an EventSeries or MarkedEventSeries")

    def emit(handle):
        handle.write(",".join(_EVENTS_HEADER) + "\n")
        for t, mark in zip(events.times, marks):
            handle.write(f"{float(t)!r},{int(mark)}\n")

    if hasattr(target, "write"):
        emit(target)
    else:
        with open(target, "w", newline="") as handle:
            emit(handle)


def read_events(source, *, horizon: float | None = None):
    """Read an event CSV back; all-zero marks give an unmarked series.

    The horizon defaults to the last event time (the file does not carry
    one); marked and unmarked rows cannot mix.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, newline="") as handle:
            lines = handle.read().splitlines()
    if not lines or lines[0].split(",") != _EVENTS_HEADER:
        raise DataError("expected header 'business_time,mark'")
    times = []
    marks = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"line {line_no}: expected 2 fields, got {len(parts)}")
        try:
            times.append(float(parts[0]))
            marks.append(int(parts[1]))
        except ValueError as exc:
            raise DataError(f"line {line_no}: {exc}") from None
        if marks[-1] not in (-1, 0, 1):
            raise DataError(f"line {line_no}: mark must be -1, 0, or 1")
    if not times:
        raise DataError("event file has no rows")
    times_arr = np.asarray(times, dtype=np.float64)
    marks_arr = np.asarray(marks, dtype=np.int8)
    h = float(horizon) if horizon is not None else float(times_arr[-1])
    if np.all(marks_arr == 0):
        return EventSeries(times=times_arr, horizon=h)
    if np.any(marks_arr == 0):
        raise DataError("marked and unmarked rows cannot mix in one event file")
    return MarkedEventSeries(times=times_arr, horizon=h, marks=marks_arr)
