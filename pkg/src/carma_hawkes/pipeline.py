"""Sequential three-framework estimation and selection on tick data.

The routine climbs an escalation ladder of point-process readings of the
same tick stream:

* bCH — every nonzero within-session price movement, signed, fit by a
  bivariate model;
* uCHLM — only the movements the jump test flags at a confidence level,
  unsigned, fit by a univariate model;
* bCHLM — the flagged movements with their signs, fit by a bivariate model.

Each framework walks a fixed lattice of model orders from the simplest up,
advancing by likelihood-ratio test on nested pairs and by AIC otherwise,
then validates the surviving model through time-rescaled residuals: a KS
test of the inter-arrival increments against Exp(1), per component for
bivariate fits.  A framework whose every attempt fails validation hands the
data to the next one; running out of frameworks is a reported verdict, not
an error.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import TickSeries, log_returns
from .errors import CarmaHawkesError, DataError, DataWarning, SpecificationError
from .estimate import FitResult, fit_bivariate, fit_univariate, is_nested, lr_test
from .jumps import LMConfig, detect_jumps, gumbel_threshold
from .likelihood import ResidualReport, residual_times
from .model import (
    BivariateOrder,
    EventSeries,
    MarkedEventSeries,
    UnivariateOrder,
    spec_to_dict,
)

__all__ = [
    "FrameworkKind",
    "KsOutcome",
    "CandidateLattice",
    "SelectionStep",
    "SelectionResult",
    "PipelineConfig",
    "StageEntry",
    "StageReport",
    "PipelineReport",
    "ks_test_exp1",
    "default_univariate_lattice",
    "default_bivariate_lattice",
    "run_selection",
    "build_point_process",
    "run_pipeline",
]


class FrameworkKind(str, enum.Enum):
    """The three frameworks, in escalation order."""

    BCH = "bCH"
    UCHLM = "uCHLM"
    BCHLM = "bCHLM"

    @property
    def rank(self) -> int:
        return ("bCH", "uCHLM", "bCHLM").index(self.value)


# ---------------------------------------------------------------------------
# KS test against the unit exponential


@dataclass(frozen=True)
class KsOutcome:
    statistic: float
    p_value: float
    n: int


def _kolmogorov_survival(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution, accurate to ~1e-8."""
    if lam < 1e-10:
        return 1.0
    if lam < 1.18:
        # theta-function form converges fast for small lam
        t = math.exp(-math.pi ** 2 / (8.0 * lam ** 2))
        cdf = math.sqrt(2.0 * math.pi) / lam * (t + t ** 9 + t ** 25 + t ** 49)
        return min(1.0, max(0.0, 1.0 - cdf))
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_test_exp1(u) -> KsOutcome:
    """Kolmogorov-Smirnov test of a sample against the unit exponential.

    The p-value uses the asymptotic Kolmogorov law at the finite-sample
    argument lam = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * D.
    """
    arr = np.sort(np.asarray(u, dtype=np.float64))
    if arr.size == 0:
        raise SpecificationError("ks_test_exp1 needs a non-empty sample")
    if not np.all(np.isfinite(arr)) or arr[0] < 0.0:
        raise SpecificationError("samples must be finite and non-negative")
    n = arr.shape[0]
    cdf = -np.expm1(-arr)
    steps = np.arange(1, n + 1) / n
    d_plus = float(np.max(steps - cdf))
    d_minus = float(np.max(cdf - (steps - 1.0 / n)))
    d = max(d_plus, d_minus)
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    return KsOutcome(statistic=d, p_value=_kolmogorov_survival(lam), n=n)


# ---------------------------------------------------------------------------
# Candidate lattices


@dataclass(frozen=True)
class CandidateLattice:
    """Ordered orders to explore, simplest first."""

    orders: tuple

    def __post_init__(self) -> None:
        if not self.orders:
            raise SpecificationError("a candidate lattice cannot be empty")
        kinds = {type(o) for o in self.orders}
        if not (kinds <= {UnivariateOrder} or kinds <= {BivariateOrder}):
            raise SpecificationError("lattice orders must share one family")
        object.__setattr__(self, "orders", tuple(self.orders))

    @property
    def bivariate(self) -> bool:
        return isinstance(self.orders[0], BivariateOrder)


def default_univariate_lattice(p_max: int = 3) -> CandidateLattice:
    """(1,0) -> (2,0) -> (2,1) -> (3,0) -> (3,1) -> (3,2), capped at p_max."""
    if not 1 <= p_max <= 3:
        raise SpecificationError(f"p_max must be in [1, 3], got {p_max}")
    orders = [UnivariateOrder(p, q) for p in range(1, p_max + 1) for q in range(p)]
    return CandidateLattice(tuple(orders))


def default_bivariate_lattice(p_max: int = 3) -> CandidateLattice:
    """Symmetric bivariate ladder following the worked univariate steps."""
    if not 1 <= p_max <= 3:
        raise SpecificationError(f"p_max must be in [1, 3], got {p_max}")
    ladder = [
        ((1, 1), (0, 0, 0, 0)),
        ((2, 1), (1, 0, 1, 0)),
        ((2, 2), (1, 1, 1, 1)),
        ((3, 2), (2, 1, 2, 1)),
        ((3, 3), (2, 2, 2, 2)),
    ]
    orders = [BivariateOrder(p, q) for p, q in ladder if max(p) <= p_max]
    return CandidateLattice(tuple(orders))


# ---------------------------------------------------------------------------
# Selection walk


@dataclass(frozen=True)
class SelectionStep:
    candidate: object
    alternative: object
    mechanism: str                 # "lr", "aic", or "error"
    advanced: bool
    statistic: float | None = None
    df: int | None = None
    p_value: float | None = None
    aic_candidate: float | None = None
    aic_alternative: float | None = None
    detail: str | None = None


@dataclass(frozen=True)
class SelectionResult:
    order: object
    fit: FitResult
    steps: tuple[SelectionStep, ...]


def _fit_order(events, order, *, seed, fit_options, init=None):
    kwargs = dict(fit_options)
    if init is not None:
        kwargs["init"] = init
    if isinstance(order, UnivariateOrder):
        return fit_univariate(events, order, seed=seed, **kwargs)
    return fit_bivariate(events, order, seed=seed, **kwargs)


def _embed_spec(fit: FitResult, big_order):
    """Restate a fitted spec in a larger nested order (extra MA terms zero)."""
    spec = fit.spec
    if isinstance(big_order, UnivariateOrder):
        b = np.zeros(big_order.q + 1)
        b[: spec.order.q + 1] = spec.b[: spec.order.q + 1]
        return type(spec)(order=big_order, mu=spec.mu, a=spec.a, b=b)
    parts = {}
    for tag, q_small, q_big in zip(
            ("b11", "b12", "b21", "b22"), spec.order.q, big_order.q):
        b = np.zeros(q_big + 1)
        b[: q_small + 1] = getattr(spec, tag)[: q_small + 1]
        parts[tag] = b
    return type(spec)(order=big_order, mu=spec.mu, a1=spec.a1, a2=spec.a2, **parts)


def run_selection(events, lattice: CandidateLattice, *, lr_alpha: float = 0.05,
                  seed: int | None = None, n_starts: int = 5,
                  max_evals: int = 20_000, tol: float = 1e-8,
                  kernel_screen: bool = True, window: str = "events") -> SelectionResult:
    """Walk the lattice and return the surviving model.

    Consecutive orders compare by likelihood ratio when nested (advance on
    rejection at ``lr_alpha``) and by AIC otherwise (advance when the
    alternative scores lower); the walk stops at the first comparison the
    candidate survives.
    """
    if not isinstance(lattice, CandidateLattice):
        raise SpecificationError("lattice must be a CandidateLattice")
    if not 0.0 < lr_alpha < 1.0:
        raise SpecificationError(f"lr_alpha must lie in (0, 1), got {lr_alpha}")
    fit_options = dict(n_starts=n_starts, max_evals=max_evals, tol=tol,
                       kernel_screen=kernel_screen, window=window)
    current = _fit_order(events, lattice.orders[0], seed=seed, fit_options=fit_options)
    steps: list[SelectionStep] = []
    for alt_order in lattice.orders[1:]:
        nested = is_nested(current.spec.order, alt_order)
        init = _embed_spec(current, alt_order) if nested else None
        try:
            alternative = _fit_order(events, alt_order, seed=seed,
                                     fit_options=fit_options, init=init)
        except CarmaHawkesError as exc:
            steps.append(SelectionStep(
                candidate=current.spec.order, alternative=alt_order,
                mechanism="error", advanced=False, detail=str(exc)))
            break
        if nested:
            outcome = lr_test(current, alternative)
            advanced = outcome.p_value < lr_alpha
            steps.append(SelectionStep(
                candidate=current.spec.order, alternative=alt_order,
                mechanism="lr", advanced=advanced, statistic=outcome.statistic,
                df=outcome.df, p_value=outcome.p_value))
        else:
            advanced = alternative.aic < current.aic
            steps.append(SelectionStep(
                candidate=current.spec.order, alternative=alt_order,
                mechanism="aic", advanced=advanced,
                aic_candidate=current.aic, aic_alternative=alternative.aic))
        if not advanced:
            break
        current = alternative
    return SelectionResult(order=current.spec.order, fit=current, steps=tuple(steps))


# ---------------------------------------------------------------------------
# Point-process construction


def _capped(times: np.ndarray, marks, horizon: float, cap: int, label: str):
    if times.shape[0] <= cap:
        return times, marks, horizon
    warnings.warn(
        f"{label}: {times.shape[0]} events exceed the cap {cap}; "
        f"analyzing the most recent {cap}", DataWarning, stacklevel=3)
    cut = times.shape[0] - cap
    origin = times[cut - 1]  # window restarts at the last dropped event
    new_times = times[cut:] - origin
    new_marks = marks[cut:] if marks is not None else None
    return new_times, new_marks, horizon - origin


def build_point_process(ticks: TickSeries, framework: FrameworkKind,
                        alpha: float | None = None,
                        lm_config: LMConfig | None = None,
                        event_cap: int = 50_000):
    """Extract the event series a framework models, in business time.

    bCH uses every nonzero within-session price movement with its sign;
    uCHLM keeps only LM-flagged movements at ``alpha`` (signs discarded);
    bCHLM keeps the flagged movements with signs.  Series larger than
    ``event_cap`` are truncated to their most recent events with a warning.
    """
    framework = FrameworkKind(framework)
    horizon = float(ticks.business_times[-1])
    if framework is FrameworkKind.BCH:
        rets = log_returns(ticks)
        mask = (rets.values != 0.0) & ~rets.day_boundary
        if not mask.any():
            raise DataError("no price movements to build the bCH point process")
        idx = rets.tick_index[mask]
        times = ticks.business_times[idx]
        marks = np.sign(rets.values[mask]).astype(np.int8)
        times, marks, horizon = _capped(times, marks, horizon, event_cap, "bCH")
        return MarkedEventSeries(times=times, horizon=horizon, marks=marks)
    if alpha is None:
        raise SpecificationError(f"{framework.value} needs a confidence level alpha")
    detection = detect_jumps(ticks, lm_config or LMConfig())
    standardized = (np.abs(detection.lm.m) - detection.lm.c_n) / detection.lm.s_n
    mask = standardized > gumbel_threshold(alpha)
    if not mask.any():
        raise DataError(
            f"no events for framework {framework.value} at alpha={alpha}")
    times = detection.business_times[mask]
    if framework is FrameworkKind.UCHLM:
        times, _, horizon = _capped(times, None, horizon, event_cap, "uCHLM")
        return EventSeries(times=times, horizon=horizon)
    marks = detection.signs[mask]
    times, marks, horizon = _capped(times, marks, horizon, event_cap, "bCHLM")
    return MarkedEventSeries(times=times, horizon=horizon, marks=marks)


# ---------------------------------------------------------------------------
# Pipeline


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the full routine; defaults follow the declared conventions."""

    lm_config: LMConfig = field(default_factory=LMConfig)
    lr_alpha: float = 0.05
    ks_alpha: float = 0.05
    p_max: int = 3
    n_starts: int = 5
    max_evals: int = 20_000
    tol: float = 1e-8
    event_cap: int = 50_000
    window: str = "events"
    threads: int | None = None

    def __post_init__(self) -> None:
        for name in ("lr_alpha", "ks_alpha"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise SpecificationError(f"{name} must lie in (0, 1), got {value}")
        if self.event_cap < 1:
            raise SpecificationError(f"event_cap must be >= 1, got {self.event_cap}")
        if self.window not in ("events", "horizon"):
            raise SpecificationError(
                f"window must be 'events' or 'horizon', got {self.window!r}")
        if self.threads is not None and self.threads < 1:
            raise SpecificationError("threads must be >= 1")


@dataclass(frozen=True)
class StageEntry:
    """One framework attempt (one alpha where applicable)."""

    framework: FrameworkKind
    alpha: float | None
    order: object | None
    fit: FitResult | None
    residual: object | None      # ResidualReport or a per-component pair
    steps: tuple[SelectionStep, ...]
    passed: bool
    jump_fraction: float | None
    n_events: int | None
    error: str | None


@dataclass(frozen=True)
class StageReport:
    framework: FrameworkKind
    entries: tuple[StageEntry, ...]
    passed: bool


@dataclass(frozen=True)
class PipelineReport:
    stages: tuple[StageReport, ...]
    verdict: dict

    CSV_HEADER = ("framework", "alpha", "order", "ks_statistic_1", "ks_p_value_1",
                  "ks_statistic_2", "ks_p_value_2", "jump_fraction", "passed")

    def to_dict(self) -> dict:
        return {
            "stages": [_stage_to_dict(s) for s in self.stages],
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv_rows(self) -> list[tuple[str, ...]]:
        rows = []
        for stage in self.stages:
            for entry in stage.entries:
                res1, res2 = _residual_pair(entry.residual)
                rows.append((
                    stage.framework.value,
                    "" if entry.alpha is None else repr(entry.alpha),
                    _order_label(entry.order),
                    _fmt(res1 and res1.ks_statistic),
                    _fmt(res1 and res1.p_value),
                    _fmt(res2 and res2.ks_statistic),
                    _fmt(res2 and res2.p_value),
                    _fmt(entry.jump_fraction),
                    "pass" if entry.passed else "fail",
                ))
        return rows


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def _order_label(order) -> str:
    if order is None:
        return ""
    if isinstance(order, UnivariateOrder):
        return f"({order.p},{order.q})"
    p1, p2 = order.p
    return f"({p1},{p2}|{','.join(str(q) for q in order.q)})"


def _residual_pair(residual):
    if residual is None:
        return None, None
    if isinstance(residual, ResidualReport):
        return residual, None
    return residual[0], residual[1]


def _residual_to_dict(report: ResidualReport | None):
    if report is None:
        return None
    return {"ks_statistic": float(report.ks_statistic),
            "p_value": float(report.p_value), "n": int(report.n)}


def _step_to_dict(step: SelectionStep) -> dict:
    return {
        "candidate": _order_label(step.candidate),
        "alternative": _order_label(step.alternative),
        "mechanism": step.mechanism,
        "advanced": step.advanced,
        "statistic": None if step.statistic is None else float(step.statistic),
        "df": step.df,
        "p_value": None if step.p_value is None else float(step.p_value),
        "aic_candidate": None if step.aic_candidate is None else float(step.aic_candidate),
        "aic_alternative": None if step.aic_alternative is None else float(step.aic_alternative),
        "detail": step.detail,
    }


def _entry_to_dict(entry: StageEntry) -> dict:
    res1, res2 = _residual_pair(entry.residual)
    fit = entry.fit
    return {
        "alpha": entry.alpha,
        "order": _order_label(entry.order),
        "passed": entry.passed,
        "error": entry.error,
        "n_events": entry.n_events,
        "jump_fraction": entry.jump_fraction,
        "loglik": None if fit is None else float(fit.loglik),
        "aic": None if fit is None else float(fit.aic),
        "converged": None if fit is None else bool(fit.converged),
        "spec": None if fit is None else spec_to_dict(fit.spec),
        "residual_1": _residual_to_dict(res1),
        "residual_2": _residual_to_dict(res2),
        "selection": [_step_to_dict(s) for s in entry.steps],
    }


def _stage_to_dict(stage: StageReport) -> dict:
    return {
        "framework": stage.framework.value,
        "passed": stage.passed,
        "entries": [_entry_to_dict(e) for e in stage.entries],
    }


def _passes(residual, ks_alpha: float) -> bool:
    res1, res2 = _residual_pair(residual)
    for res in (res1, res2):
        if res is None:
            continue
        if not (math.isfinite(res.p_value) and res.p_value >= ks_alpha):
            return False
    return res1 is not None


def _attempt(ticks, framework, alpha, lattice, config: PipelineConfig,
             seed, jump_fraction) -> StageEntry:
    try:
        events = build_point_process(
            ticks, framework, alpha=alpha, lm_config=config.lm_config,
            event_cap=config.event_cap)
        selection = run_selection(
            events, lattice, lr_alpha=config.lr_alpha, seed=seed,
            n_starts=config.n_starts, max_evals=config.max_evals,
            tol=config.tol, window=config.window)
        residual = residual_times(selection.fit.spec, events)
        return StageEntry(
            framework=framework, alpha=alpha, order=selection.order,
            fit=selection.fit, residual=residual, steps=selection.steps,
            passed=_passes(residual, config.ks_alpha),
            jump_fraction=jump_fraction, n_events=events.n, error=None)
    except CarmaHawkesError as exc:
        return StageEntry(
            framework=framework, alpha=alpha, order=None, fit=None,
            residual=None, steps=(), passed=False,
            jump_fraction=jump_fraction, n_events=None, error=str(exc))


def run_pipeline(ticks: TickSeries, config: PipelineConfig | None = None,
                 seed: int | None = None) -> PipelineReport:
    """Run the full escalation routine and report every attempt.

    Frameworks are tried strictly in order bCH, uCHLM, bCHLM; a framework
    runs only after every attempt of the previous one failed residual
    validation.  Alpha levels within a framework evaluate concurrently.
    The report is deterministic for fixed (ticks, config, seed).
    """
    cfg = config or PipelineConfig()
    stages: list[StageReport] = []
    verdict: dict = {"status": "exhausted", "framework": None}

    biv_lattice = default_bivariate_lattice(cfg.p_max)
    uni_lattice = default_univariate_lattice(cfg.p_max)

    entry = _attempt(ticks, FrameworkKind.BCH, None, biv_lattice, cfg,
                     seed, jump_fraction=None)
    stages.append(StageReport(FrameworkKind.BCH, (entry,), entry.passed))

    if not entry.passed:
        try:
            detection = detect_jumps(ticks, cfg.lm_config)
            fractions = dict(detection.jump_fraction)
        except CarmaHawkesError:
            fractions = {}
        alphas = cfg.lm_config.alpha_levels
        for rank, framework in enumerate((FrameworkKind.UCHLM, FrameworkKind.BCHLM)):
            def attempt_one(item):
                i, alpha = item
                alpha_seed = None if seed is None else seed + 1 + rank * len(alphas) + i
                return _attempt(ticks, framework, alpha, uni_lattice
                                if framework is FrameworkKind.UCHLM else biv_lattice,
                                cfg, alpha_seed, fractions.get(alpha))
            workers = cfg.threads or len(alphas)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                entries = tuple(pool.map(attempt_one, enumerate(alphas)))
            passed = any(e.passed for e in entries)
            stages.append(StageReport(framework, entries, passed))
            if passed:
                break

    for stage in stages:
        if stage.passed:
            winners = [e for e in stage.entries if e.passed]
            verdict = {
                "status": "passed",
                "framework": stage.framework.value,
                "selected": [
                    {"alpha": e.alpha, "order": _order_label(e.order)}
                    for e in winners
                ],
            }
            break
    return PipelineReport(stages=tuple(stages), verdict=verdict)
