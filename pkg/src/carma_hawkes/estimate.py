"""Maximum-likelihood fitting and model comparison.

Fitting runs Nelder-Mead on an unconstrained reparameterization:

* baselines enter as log(mu);
* the autoregressive polynomial is factored into linear and quadratic
  Hurwitz factors with positive coefficients, z + c0 for p = 1,
  z^2 + c0 z + c1 for p = 2 and (z + c0)(z^2 + c1 z + c2) for p = 3, and
  the optimizer works with log(c).  Every Hurwitz polynomial of these
  degrees factors this way, so the parameterization covers exactly the
  stable region and stability never has to be penalized;
* moving-average coefficients enter untransformed.

Soft constraints (distinct eigenvalues, non-negative kernel, subcritical
branching, positive intensity at every event) are enforced by returning
+inf from the objective.  Multistart initial points follow a deterministic
schedule derived from the empirical event rate; an optional seed adds
reproducible jitter on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.special

from . import _kernels
from ._rng import rng_stream
from .errors import EstimationError, SpecificationError
from .model import (
    EIG_DISTINCT_RTOL,
    KERNEL_GRID_FOLDS,
    KERNEL_GRID_POINTS,
    KERNEL_TOL,
    BivariateOrder,
    BivariateSpec,
    EventSeries,
    MarkedEventSeries,
    UnivariateOrder,
    UnivariateSpec,
    companion,
    validate,
)
from .likelihood import loglik_bivariate, loglik_univariate

__all__ = [
    "FitResult",
    "LrOutcome",
    "fit_univariate",
    "fit_bivariate",
    "aic",
    "is_nested",
    "lr_test",
    "chi_square_survival",
    "numerical_hessian_se",
    "param_names",
]

_MAX_P = 3


# ---------------------------------------------------------------------------
# Parameter transforms


def _factors_to_a(c: np.ndarray) -> np.ndarray:
    """Coefficients (a_1, ..., a_p) from positive Hurwitz-factor coefficients."""
    p = c.shape[0]
    if p == 1:
        return c.copy()
    if p == 2:
        return c.copy()
    if p == 3:
        c0, c1, c2 = c
        return np.array([c0 + c1, c2 + c0 * c1, c0 * c2])
    raise SpecificationError(f"autoregressive order must be <= {_MAX_P}, got {p}")


def _a_to_factors(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_factors_to_a`; requires a stable polynomial."""
    p = a.shape[0]
    if p > _MAX_P:
        raise SpecificationError(f"autoregressive order must be <= {_MAX_P}, got {p}")
    if p in (1, 2):
        c = a.copy()
    else:
        roots = np.roots(np.concatenate([[1.0], a]))
        real = np.abs(roots.imag) <= 1e-8 * (1.0 + np.abs(roots))
        if real.all():
            order = np.argsort(roots.real)
            r0 = roots[order[2]].real   # slowest root becomes the linear factor
            r1, r2 = roots[order[0]].real, roots[order[1]].real
            c = np.array([-r0, -(r1 + r2), r1 * r2])
        elif real.sum() == 1:
            r0 = roots[real][0].real
            z = roots[~real][0]
            c = np.array([-r0, -2.0 * z.real, abs(z) ** 2])
        else:
            raise EstimationError("autoregressive polynomial has an unpaired complex root")
    if np.any(c <= 0.0) or not np.all(np.isfinite(c)):
        raise EstimationError(
            "autoregressive polynomial is not stable; cannot express it "
            "in Hurwitz factors")
    return c


def _pack_univariate(spec: UnivariateSpec) -> np.ndarray:
    theta = np.log(_a_to_factors(spec.a))
    return np.concatenate([[math.log(spec.mu)], theta, spec.b[: spec.order.q + 1]])


def _pack_bivariate(spec: BivariateSpec) -> np.ndarray:
    q1, q12, q21, q2 = spec.order.q
    return np.concatenate([
        np.log(spec.mu),
        np.log(_a_to_factors(spec.a1)),
        np.log(_a_to_factors(spec.a2)),
        spec.b11[: q1 + 1], spec.b12[: q12 + 1],
        spec.b21[: q21 + 1], spec.b22[: q2 + 1],
    ])


def param_names(order) -> tuple[str, ...]:
    """Names of the unconstrained parameter vector, in pack order."""
    if isinstance(order, UnivariateOrder):
        return (("log_mu",)
                + tuple(f"log_c{i}" for i in range(order.p))
                + tuple(f"b{i}" for i in range(order.q + 1)))
    if isinstance(order, BivariateOrder):
        p1, p2 = order.p
        q1, q12, q21, q2 = order.q
        names = ["log_mu_1", "log_mu_2"]
        names += [f"log_c{i}_1" for i in range(p1)]
        names += [f"log_c{i}_2" for i in range(p2)]
        for tag, qv in (("b11", q1), ("b12", q12), ("b21", q21), ("b22", q2)):
            names += [f"{tag}_{i}" for i in range(qv + 1)]
        return tuple(names)
    raise SpecificationError(f"unsupported order type {type(order).__name__}")


# ---------------------------------------------------------------------------
# Fast objective pieces


def _eigen_arrays(a: np.ndarray):
    """(eig, V, w, ok) with w = V^{-1} e; ok False on a clustered spectrum."""
    A = companion(a)
    eig, v = np.linalg.eig(A)
    p = eig.shape[0]
    e = np.zeros(p, dtype=np.complex128)
    e[-1] = 1.0
    radius = np.max(np.abs(eig))
    if p == 1:
        return eig, v, e / v[0, 0], True
    gaps = np.abs(eig[:, None] - eig[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() <= EIG_DISTINCT_RTOL * radius:
        return eig, v, e, False
    try:
        w = np.linalg.solve(v, e)
    except np.linalg.LinAlgError:
        return eig, v, e, False
    return eig, v, w, True


def _screen_min(eig: np.ndarray, coef: np.ndarray) -> float:
    span = KERNEL_GRID_FOLDS / np.min(np.abs(eig.real))
    grid = np.geomspace(span * 1e-6, span, KERNEL_GRID_POINTS)
    vals = (np.exp(grid[:, None] * eig[None, :]) @ coef).real
    return min(float(vals.min()), float(coef.sum().real))  # includes h(0)


def _uni_objective(events: EventSeries, order: UnivariateOrder,
                   window: str, kernel_screen: bool):
    times = events.times
    n = events.n
    p, q = order.p, order.q
    t_end = float(times[-1]) if window == "events" else events.horizon

    def objective(raw: np.ndarray) -> float:
        if not np.all(np.isfinite(raw)):
            return math.inf
        mu = math.exp(raw[0])
        c = np.exp(raw[1 : 1 + p])
        if not (math.isfinite(mu) and np.all(np.isfinite(c))):
            return math.inf
        a = _factors_to_a(c)
        b = np.zeros(p)
        b[: q + 1] = raw[1 + p :]
        try:
            eig, v, w, ok = _eigen_arrays(a)
        except np.linalg.LinAlgError:
            return math.inf
        if not ok:
            return math.inf
        bv = b.astype(np.complex128) @ v
        coef = bv * w
        if kernel_screen and _screen_min(eig, coef) < -KERNEL_TOL:
            return math.inf
        eta = -float((coef / eig).sum().real)
        if not eta < 1.0:
            return math.inf
        sum_log, y, pos = _kernels.uni_loglik_core(times, eig, bv, w, mu)
        if not pos:
            return math.inf
        if t_end > times[-1]:
            y = y * np.exp(eig * (t_end - times[-1]))
        middle = float((bv * (n * w - y) / eig).sum().real)
        ll = -mu * t_end + middle + sum_log
        return -ll if math.isfinite(ll) else math.inf

    return objective


def _biv_objective(events: MarkedEventSeries, order: BivariateOrder,
                   window: str, kernel_screen: bool):
    times = events.times
    marks = events.marks
    n1, n2 = events.counts
    p1, p2 = order.p
    q1, q12, q21, q2 = order.q
    t_end = float(times[-1]) if window == "events" else events.horizon
    o = 2 + p1 + p2
    slices = {}
    for tag, qv in (("b11", q1), ("b12", q12), ("b21", q21), ("b22", q2)):
        slices[tag] = slice(o, o + qv + 1)
        o += qv + 1

    def objective(raw: np.ndarray) -> float:
        if not np.all(np.isfinite(raw)):
            return math.inf
        mu1 = math.exp(raw[0])
        mu2 = math.exp(raw[1])
        c1 = np.exp(raw[2 : 2 + p1])
        c2 = np.exp(raw[2 + p1 : 2 + p1 + p2])
        if not all(map(math.isfinite, (mu1, mu2))) or not (
                np.all(np.isfinite(c1)) and np.all(np.isfinite(c2))):
            return math.inf
        a1 = _factors_to_a(c1)
        a2 = _factors_to_a(c2)
        b11 = np.zeros(p1)
        b11[: q1 + 1] = raw[slices["b11"]]
        b12 = np.zeros(p2)
        b12[: q12 + 1] = raw[slices["b12"]]
        b21 = np.zeros(p1)
        b21[: q21 + 1] = raw[slices["b21"]]
        b22 = np.zeros(p2)
        b22[: q2 + 1] = raw[slices["b22"]]
        try:
            eig1, v1, w1, ok1 = _eigen_arrays(a1)
            eig2, v2, w2, ok2 = _eigen_arrays(a2)
        except np.linalg.LinAlgError:
            return math.inf
        if not (ok1 and ok2):
            return math.inf
        bv11 = b11.astype(np.complex128) @ v1
        bv21 = b21.astype(np.complex128) @ v1
        bv12 = b12.astype(np.complex128) @ v2
        bv22 = b22.astype(np.complex128) @ v2
        if kernel_screen:
            for eig, bv, w in ((eig1, bv11, w1), (eig2, bv12, w2),
                               (eig1, bv21, w1), (eig2, bv22, w2)):
                if _screen_min(eig, bv * w) < -KERNEL_TOL:
                    return math.inf
        g1 = w1 / eig1
        g2 = w2 / eig2
        q_mat = np.array([
            [-float((bv11 * g1).sum().real), -float((bv12 * g2).sum().real)],
            [-float((bv21 * g1).sum().real), -float((bv22 * g2).sum().real)],
        ])
        if not np.max(np.abs(np.linalg.eigvals(q_mat))) < 1.0:
            return math.inf
        sum_log, y1, y2, pos = _kernels.biv_loglik_core(
            times, marks, eig1, eig2, bv11, bv12, bv21, bv22, w1, w2, mu1, mu2)
        if not pos:
            return math.inf
        if t_end > times[-1]:
            gap = t_end - times[-1]
            y1 = y1 * np.exp(eig1 * gap)
            y2 = y2 * np.exp(eig2 * gap)
        sv1 = bv11 + bv21
        sv2 = bv12 + bv22
        middle = float((sv1 * (n1 * w1 - y1) / eig1).sum().real
                       + (sv2 * (n2 * w2 - y2) / eig2).sum().real)
        ll = -(mu1 + mu2) * t_end + middle + sum_log
        return -ll if math.isfinite(ll) else math.inf

    return objective


# ---------------------------------------------------------------------------
# Start schedule


def _decay_factors(rate: float, p: int) -> np.ndarray:
    # distinct real roots -rate * (1, 1.35, 1.7): linear factor takes the slowest
    roots = -rate * (1.0 + 0.35 * np.arange(p))
    if p == 1:
        return np.array([rate])
    if p == 2:
        return np.array([-(roots[0] + roots[1]), roots[0] * roots[1]])
    return np.array([-roots[0], -(roots[1] + roots[2]), roots[1] * roots[2]])


def _ma_scale(a: np.ndarray) -> float:
    """b_0 producing unit branching when b = (b_0, 0, ..., 0)."""
    p = a.shape[0]
    e = np.zeros(p)
    e[-1] = 1.0
    x = np.linalg.solve(companion(a), e)
    return 1.0 / (-x[0])


def _uni_start_schedule(events: EventSeries, order: UnivariateOrder,
                        window: str, n_starts: int) -> list[np.ndarray]:
    t_end = float(events.times[-1]) if window == "events" else events.horizon
    rate = events.n / t_end
    out = []
    for g in np.geomspace(0.5, 4.0, n_starts):
        c = _decay_factors(rate * g, order.p)
        a = _factors_to_a(c)
        b0 = 0.3 * _ma_scale(a)
        raw = np.concatenate([
            [math.log(0.5 * rate)], np.log(c),
            [b0], np.zeros(order.q),
        ])
        out.append(raw)
    return out


def _biv_start_schedule(events: MarkedEventSeries, order: BivariateOrder,
                        window: str, n_starts: int) -> list[np.ndarray]:
    t_end = float(events.times[-1]) if window == "events" else events.horizon
    n1, n2 = events.counts
    r1 = max(n1, 1) / t_end
    r2 = max(n2, 1) / t_end
    p1, p2 = order.p
    q1, q12, q21, q2 = order.q
    out = []
    for g in np.geomspace(0.5, 4.0, n_starts):
        c1 = _decay_factors(r1 * g, p1)
        c2 = _decay_factors(r2 * g, p2)
        s1 = _ma_scale(_factors_to_a(c1))
        s2 = _ma_scale(_factors_to_a(c2))
        raw = np.concatenate([
            [math.log(max(n1, 0.5) * 0.5 / t_end), math.log(max(n2, 0.5) * 0.5 / t_end)],
            np.log(c1), np.log(c2),
            [0.25 * s1], np.zeros(q1),
            [0.10 * s2], np.zeros(q12),
            [0.10 * s1], np.zeros(q21),
            [0.25 * s2], np.zeros(q2),
        ])
        out.append(raw)
    return out


# ---------------------------------------------------------------------------
# Driver


@dataclass(frozen=True)
class FitResult:
    """Fitted spec with its log-likelihood and optimizer diagnostics."""

    spec: UnivariateSpec | BivariateSpec
    loglik: float
    n_params: int
    aic: float
    converged: bool
    diagnostics: dict


def aic(loglik: float, n_params: int) -> float:
    """Akaike information criterion 2 k - 2 loglik (smaller is better)."""
    return 2.0 * n_params - 2.0 * loglik


def _run_starts(objective, starts, max_evals, tol, seed, skip_jitter_first, n_log):
    # Log-scale coordinates take absolute jitter (a ~10% multiplicative
    # nudge); the trailing moving-average block is linear and data-scaled,
    # so its jitter is proportional to the start's own magnitude there.
    if seed is not None:
        rng = rng_stream(seed, 0)
        jittered = []
        for k, raw in enumerate(starts):
            noise = 0.1 * rng.standard_normal(raw.shape[0])
            if k == 0 and skip_jitter_first:
                noise = np.zeros_like(noise)
            ma_scale = np.max(np.abs(raw[n_log:]), initial=0.0)
            noise[n_log:] *= ma_scale
            jittered.append(raw + noise)
        starts = [(j, raw) for j, raw in zip(jittered, starts)]
    else:
        starts = [(raw, raw) for raw in starts]
    budget = max(50, max_evals // max(len(starts), 1))
    records = []
    best = None
    for k, (raw, fallback) in enumerate(starts):
        f0 = objective(raw)
        if not math.isfinite(f0) and fallback is not raw:
            raw = fallback
            f0 = objective(raw)
        if not math.isfinite(f0):
            records.append({"start": k, "loglik": -math.inf, "nfev": 1,
                            "success": False, "feasible_init": False})
            continue
        res = scipy.optimize.minimize(
            objective, raw, method="Nelder-Mead",
            options={
                "maxfev": budget,
                "maxiter": budget,
                "fatol": tol * (1.0 + abs(f0)),
                "xatol": 1e-6,
                "adaptive": True,
            })
        records.append({"start": k, "loglik": -float(res.fun), "nfev": int(res.nfev),
                        "success": bool(res.success), "feasible_init": True})
        if best is None or res.fun < best[1]:
            best = (res.x, float(res.fun), bool(res.success), k)
    if best is None:
        raise EstimationError(
            "no feasible starting point; all multistart initializations "
            "violated the model constraints")
    return best, records


def fit_univariate(events: EventSeries, order: UnivariateOrder, *,
                   init: UnivariateSpec | None = None, n_starts: int = 5,
                   max_evals: int = 20_000, tol: float = 1e-8,
                   seed: int | None = None, kernel_screen: bool = True,
                   window: str = "events") -> FitResult:
    """Maximum-likelihood fit of a univariate model.

    ``init`` replaces the first entry of the deterministic multistart
    schedule (and is never jittered).  ``kernel_screen=False`` drops the
    non-negative-kernel constraint, which puts one-parameter moving-average
    extensions in the interior of the feasible region; the final validation
    report in the diagnostics still records the kernel check.
    """
    if not isinstance(order, UnivariateOrder):
        raise SpecificationError("order must be a UnivariateOrder")
    if not isinstance(events, EventSeries) or isinstance(events, MarkedEventSeries):
        raise SpecificationError("fit_univariate expects an EventSeries")
    if events.n < 1:
        raise EstimationError("cannot fit an empty event series")
    if n_starts < 1:
        raise SpecificationError("n_starts must be >= 1")
    objective = _uni_objective(events, order, window, kernel_screen)
    starts = _uni_start_schedule(events, order, window, n_starts)
    if init is not None:
        if not isinstance(init, UnivariateSpec) or init.order != order:
            raise SpecificationError("init must be a UnivariateSpec of the fitted order")
        starts = [_pack_univariate(init)] + starts[: max(n_starts - 1, 0)]
    (raw, fun, success, best_k), records = _run_starts(
        objective, starts, max_evals, tol, seed,
        skip_jitter_first=init is not None, n_log=1 + order.p)
    p, q = order.p, order.q
    mu = math.exp(raw[0])
    a = _factors_to_a(np.exp(raw[1 : 1 + p]))
    b = np.asarray(raw[1 + p :])
    spec = UnivariateSpec(order=order, mu=mu, a=a, b=b)
    loglik = loglik_univariate(spec, events, window=window)
    report = validate(spec)
    return FitResult(
        spec=spec, loglik=loglik, n_params=order.n_params,
        aic=aic(loglik, order.n_params),
        converged=success and math.isfinite(loglik),
        diagnostics={
            "starts": records, "best_start": best_k, "window": window,
            "kernel_screen": kernel_screen, "validation": report,
            "n_events": events.n,
        })


def fit_bivariate(events: MarkedEventSeries, order: BivariateOrder, *,
                  init: BivariateSpec | None = None, n_starts: int = 5,
                  max_evals: int = 20_000, tol: float = 1e-8,
                  seed: int | None = None, kernel_screen: bool = True,
                  window: str = "events") -> FitResult:
    """Maximum-likelihood fit of a bivariate model; see :func:`fit_univariate`."""
    if not isinstance(order, BivariateOrder):
        raise SpecificationError("order must be a BivariateOrder")
    if not isinstance(events, MarkedEventSeries):
        raise SpecificationError("fit_bivariate expects a MarkedEventSeries")
    if events.n < 1:
        raise EstimationError("cannot fit an empty event series")
    if n_starts < 1:
        raise SpecificationError("n_starts must be >= 1")
    objective = _biv_objective(events, order, window, kernel_screen)
    starts = _biv_start_schedule(events, order, window, n_starts)
    if init is not None:
        if not isinstance(init, BivariateSpec) or init.order != order:
            raise SpecificationError("init must be a BivariateSpec of the fitted order")
        starts = [_pack_bivariate(init)] + starts[: max(n_starts - 1, 0)]
    (raw, fun, success, best_k), records = _run_starts(
        objective, starts, max_evals, tol, seed,
        skip_jitter_first=init is not None, n_log=2 + sum(order.p))
    p1, p2 = order.p
    q1, q12, q21, q2 = order.q
    mu = np.exp(raw[:2])
    a1 = _factors_to_a(np.exp(raw[2 : 2 + p1]))
    a2 = _factors_to_a(np.exp(raw[2 + p1 : 2 + p1 + p2]))
    o = 2 + p1 + p2
    parts = []
    for qv in (q1, q12, q21, q2):
        parts.append(np.asarray(raw[o : o + qv + 1]))
        o += qv + 1
    spec = BivariateSpec(order=order, mu=mu, a1=a1, a2=a2,
                         b11=parts[0], b12=parts[1], b21=parts[2], b22=parts[3])
    loglik = loglik_bivariate(spec, events, window=window)
    report = validate(spec)
    return FitResult(
        spec=spec, loglik=loglik, n_params=order.n_params,
        aic=aic(loglik, order.n_params),
        converged=success and math.isfinite(loglik),
        diagnostics={
            "starts": records, "best_start": best_k, "window": window,
            "kernel_screen": kernel_screen, "validation": report,
            "n_events": events.n, "counts": events.counts,
        })


# ---------------------------------------------------------------------------
# Model comparison


def is_nested(small, big) -> bool:
    """True when ``small`` is a submodel of ``big`` via zeroed MA coefficients.

    Requires identical autoregressive orders; raising p changes the kernel
    family (the short-memory kernels are only reached in the limit), so those
    pairs compare by information criterion instead.
    """
    if isinstance(small, UnivariateOrder) and isinstance(big, UnivariateOrder):
        return small.p == big.p and small.q <= big.q
    if isinstance(small, BivariateOrder) and isinstance(big, BivariateOrder):
        return small.p == big.p and all(qs <= qb for qs, qb in zip(small.q, big.q))
    if isinstance(small, (UnivariateOrder, BivariateOrder)) and isinstance(
            big, (UnivariateOrder, BivariateOrder)):
        return False
    raise SpecificationError("is_nested expects model orders")


def chi_square_survival(x: float, df: int) -> float:
    """P(chi2_df > x)."""
    if df < 1:
        raise SpecificationError(f"df must be >= 1, got {df}")
    x = float(x)
    if x <= 0.0:
        return 1.0
    return float(scipy.special.gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class LrOutcome:
    statistic: float
    df: int
    p_value: float


def lr_test(fit_small: FitResult, fit_big: FitResult) -> LrOutcome:
    """Likelihood-ratio test of a nested pair of fits.

    The statistic is clamped at zero; a sub-model can only score higher
    through optimizer noise.
    """
    if not is_nested(fit_small.spec.order, fit_big.spec.order):
        raise EstimationError("lr_test needs fits with nested orders")
    df = fit_big.n_params - fit_small.n_params
    if df < 1:
        raise EstimationError("lr_test needs the larger model to add parameters")
    stat = max(0.0, 2.0 * (fit_big.loglik - fit_small.loglik))
    return LrOutcome(statistic=stat, df=df, p_value=chi_square_survival(stat, df))


# ---------------------------------------------------------------------------
# Standard errors


def numerical_hessian_se(events, spec, *, window: str = "events",
                         step: float = 1e-4) -> np.ndarray:
    """Asymptotic standard errors on the unconstrained parameter scale.

    Central-difference Hessian of the negative log-likelihood at the packed
    parameter vector; entries whose curvature is not usable come back NaN.
    Pair with :func:`param_names` for labeling.
    """
    if isinstance(spec, UnivariateSpec):
        x0 = _pack_univariate(spec)
        objective = _uni_objective(events, spec.order, window, kernel_screen=False)
    elif isinstance(spec, BivariateSpec):
        x0 = _pack_bivariate(spec)
        objective = _biv_objective(events, spec.order, window, kernel_screen=False)
    else:
        raise SpecificationError(f"unsupported spec type {type(spec).__name__}")
    d = x0.shape[0]
    h = step * (1.0 + np.abs(x0))
    f0 = objective(x0)
    if not math.isfinite(f0):
        raise EstimationError("spec is infeasible; cannot differentiate the likelihood")

    def at(delta):
        return objective(x0 + delta)

    hess = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        hess[i, i] = (at(ei) - 2.0 * f0 + at(-ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                at(ei + ej) - at(ei - ej) - at(-ei + ej) + at(-ei - ej)
            ) / (4.0 * h[i] * h[j])
    se = np.full(d, np.nan)
    if np.all(np.isfinite(hess)):
        try:
            cov = np.linalg.inv(hess)
            diag = np.diag(cov)
            good = diag > 0.0
            se[good] = np.sqrt(diag[good])
        except np.linalg.LinAlgError:
            pass
    return se
