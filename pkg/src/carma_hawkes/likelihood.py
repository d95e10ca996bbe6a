"""Exact likelihood, compensator, and residual diagnostics.

The log-likelihood of event times T_1 < ... < T_n on an observation window
(0, T] factors through the running sum s(k) = sum_{i <= k} exp(A (T_k - T_i)) e,
which obeys the one-step recursion s(k) = e + exp(A dt_k) s(k-1):

    loglik = -mu T - b' A^{-1} s(n) + n b' A^{-1} e + sum_i log lambda(T_i-)

with s(n) propagated to T when the window extends past the last event.  The
bivariate form is identical with the block-diagonal drift, the per-component
jump columns weighted by the event marks, and the coupling matrix B summed
over output components.

Intensities enter with their left limits, so the first event always
contributes log(mu).  A non-positive intensity at any event makes the
parameter point infeasible and the functions return -inf rather than raise.

Fast paths run in the eigenbasis of the companion blocks (see ``_kernels``);
when the spectrum is too clustered for reliable diagonalization the code
falls back to matrix-exponential propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SpecificationError
from .model import (
    FAST_PATH_SEP_RTOL,
    BivariateSpec,
    EventSeries,
    MarkedEventSeries,
    UnivariateSpec,
    _eigen_basis,
    companion,
    matrix_exponential,
)

__all__ = [
    "RecursionState",
    "ResidualReport",
    "initial_state",
    "update_recursion",
    "loglik_univariate",
    "loglik_bivariate",
    "compensator",
    "residual_times",
]

_WINDOWS = ("events", "horizon")


def _check_window(window: str) -> None:
    if window not in _WINDOWS:
        raise SpecificationError(f"window must be one of {_WINDOWS}, got {window!r}")


# ---------------------------------------------------------------------------
# Reference recursion API


@dataclass(frozen=True)
class RecursionState:
    """Running sum s(k), last event time, and per-component event counts."""

    s: np.ndarray
    t_last: float
    count: tuple[int, ...]


def initial_state(spec) -> RecursionState:
    """State before any event: s = 0 at t = 0."""
    if isinstance(spec, UnivariateSpec):
        return RecursionState(np.zeros(spec.order.p), 0.0, (0,))
    if isinstance(spec, BivariateSpec):
        return RecursionState(np.zeros(sum(spec.order.p)), 0.0, (0, 0))
    raise SpecificationError(f"cannot build recursion state for {type(spec).__name__}")


def update_recursion(spec, state: RecursionState, t: float, mark: int | None = None) -> RecursionState:
    """Advance s over one event: s := jump_column + exp(A dt) s.

    Reference implementation via matrix exponentials; the likelihood's fast
    path reproduces it in the eigenbasis.
    """
    t = float(t)
    if not t > state.t_last:
        raise SpecificationError(
            f"event time {t} must exceed previous time {state.t_last}")
    dt = t - state.t_last
    if isinstance(spec, UnivariateSpec):
        if mark is not None:
            raise SpecificationError("univariate recursion takes no mark")
        e = np.zeros(spec.order.p)
        e[-1] = 1.0
        s = matrix_exponential(companion(spec.a) * dt) @ state.s + e
        return RecursionState(s, t, (state.count[0] + 1,))
    if isinstance(spec, BivariateSpec):
        if mark not in (1, -1):
            raise SpecificationError("bivariate recursion needs mark +1 or -1")
        col = spec.jump_matrix()[:, 0 if mark > 0 else 1]
        s = matrix_exponential(spec.block_matrix() * dt) @ state.s + col
        n1, n2 = state.count
        count = (n1 + 1, n2) if mark > 0 else (n1, n2 + 1)
        return RecursionState(s, t, count)
    raise SpecificationError(f"cannot update recursion for {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Log-likelihood


def _window_end(events: EventSeries, window: str) -> float:
    return float(events.times[-1]) if window == "events" else events.horizon


def loglik_univariate(spec: UnivariateSpec, events: EventSeries, window: str = "events") -> float:
    """Exact log-likelihood of a univariate spec on an event series.

    window="events" ends the observation at the last event; "horizon" extends
    it to events.horizon.  An empty series is scored over the full horizon.
    Returns -inf when the intensity is not strictly positive at some event.
    """
    if not isinstance(spec, UnivariateSpec):
        raise SpecificationError("loglik_univariate expects a UnivariateSpec")
    if not isinstance(events, EventSeries) or isinstance(events, MarkedEventSeries):
        raise SpecificationError("loglik_univariate expects an EventSeries")
    _check_window(window)
    if events.n == 0:
        return -spec.mu * events.horizon
    basis = _eigen_basis(spec.a)
    if np.any(basis.eig == 0.0):
        raise SpecificationError("autoregressive polynomial has a zero root; likelihood undefined")
    if basis.sep_ratio < FAST_PATH_SEP_RTOL:
        return _loglik_expm_uni(spec, events, window)
    bv = spec.b.astype(np.complex128) @ basis.v
    sum_log, y, ok = _kernels.uni_loglik_core(events.times, basis.eig, bv, basis.w, spec.mu)
    if not ok:
        return -math.inf
    t_end = _window_end(events, window)
    if t_end > events.times[-1]:
        y = y * np.exp(basis.eig * (t_end - events.times[-1]))
    n = events.n
    middle = float((bv * (n * basis.w - y) / basis.eig).sum().real)
    return -spec.mu * t_end + middle + sum_log


def _loglik_expm_uni(spec: UnivariateSpec, events: EventSeries, window: str) -> float:
    A = companion(spec.a)
    p = spec.order.p
    e = np.zeros(p)
    e[-1] = 1.0
    s = np.zeros(p)
    t_prev = 0.0
    sum_log = 0.0
    for tk in events.times:
        s = matrix_exponential(A * (tk - t_prev)) @ s
        lam = spec.mu + spec.b @ s
        if not lam > 0.0:
            return -math.inf
        sum_log += math.log(lam)
        s = s + e
        t_prev = tk
    t_end = _window_end(events, window)
    if t_end > t_prev:
        s = matrix_exponential(A * (t_end - t_prev)) @ s
    n = events.n
    return (-spec.mu * t_end
            + spec.b @ np.linalg.solve(A, n * e - s)
            + sum_log)


def _biv_arrays(spec: BivariateSpec):
    basis1 = _eigen_basis(spec.a1)
    basis2 = _eigen_basis(spec.a2)
    if np.any(basis1.eig == 0.0) or np.any(basis2.eig == 0.0):
        raise SpecificationError("autoregressive polynomial has a zero root; likelihood undefined")
    bv11 = spec.b11.astype(np.complex128) @ basis1.v
    bv21 = spec.b21.astype(np.complex128) @ basis1.v
    bv12 = spec.b12.astype(np.complex128) @ basis2.v
    bv22 = spec.b22.astype(np.complex128) @ basis2.v
    return basis1, basis2, bv11, bv12, bv21, bv22


def loglik_bivariate(spec: BivariateSpec, events: MarkedEventSeries, window: str = "events") -> float:
    """Exact log-likelihood of a bivariate spec on a marked event series."""
    if not isinstance(spec, BivariateSpec):
        raise SpecificationError("loglik_bivariate expects a BivariateSpec")
    if not isinstance(events, MarkedEventSeries):
        raise SpecificationError("loglik_bivariate expects a MarkedEventSeries")
    _check_window(window)
    mu_total = float(spec.mu.sum())
    if events.n == 0:
        return -mu_total * events.horizon
    basis1, basis2, bv11, bv12, bv21, bv22 = _biv_arrays(spec)
    if min(basis1.sep_ratio, basis2.sep_ratio) < FAST_PATH_SEP_RTOL:
        return _loglik_expm_biv(spec, events, window)
    sum_log, y1, y2, ok = _kernels.biv_loglik_core(
        events.times, events.marks, basis1.eig, basis2.eig,
        bv11, bv12, bv21, bv22, basis1.w, basis2.w,
        float(spec.mu[0]), float(spec.mu[1]))
    if not ok:
        return -math.inf
    t_end = _window_end(events, window)
    if t_end > events.times[-1]:
        gap = t_end - events.times[-1]
        y1 = y1 * np.exp(basis1.eig * gap)
        y2 = y2 * np.exp(basis2.eig * gap)
    n1, n2 = events.counts
    sv1 = bv11 + bv21
    sv2 = bv12 + bv22
    middle = float((sv1 * (n1 * basis1.w - y1) / basis1.eig).sum().real
                   + (sv2 * (n2 * basis2.w - y2) / basis2.eig).sum().real)
    return -mu_total * t_end + middle + sum_log


def _loglik_expm_biv(spec: BivariateSpec, events: MarkedEventSeries, window: str) -> float:
    abar = spec.block_matrix()
    ebar = spec.jump_matrix()
    bmat = spec.coupling_matrix()
    s = np.zeros(abar.shape[0])
    t_prev = 0.0
    sum_log = 0.0
    for tk, mk in zip(events.times, events.marks):
        s = matrix_exponential(abar * (tk - t_prev)) @ s
        row = bmat[0] if mk > 0 else bmat[1]
        lam = float(spec.mu[0] if mk > 0 else spec.mu[1]) + row @ s
        if not lam > 0.0:
            return -math.inf
        s = s + (ebar[:, 0] if mk > 0 else ebar[:, 1])
        sum_log += math.log(lam)
        t_prev = tk
    t_end = _window_end(events, window)
    if t_end > t_prev:
        s = matrix_exponential(abar * (t_end - t_prev)) @ s
    n1, n2 = events.counts
    counts = np.array([n1, n2], dtype=np.float64)
    ones = np.ones(2)
    middle = ones @ bmat @ np.linalg.solve(abar, ebar @ counts - s)
    return -float(spec.mu.sum()) * t_end + middle + sum_log


# ---------------------------------------------------------------------------
# Compensator and residuals


def _phi_matrix(dt: np.ndarray, eig: np.ndarray) -> np.ndarray:
    # integral of exp(eig * s) over (0, dt), elementwise over (dt, eig) pairs
    z = dt[:, None] * eig[None, :]
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    direct = np.expm1(safe) / eig[None, :]
    series = dt[:, None] * (1.0 + 0.5 * z)
    return np.where(small, series, direct)


def compensator(spec, events, t=None):
    """Integrated intensity Lambda(t) = mu t + integral of b' X.

    With t=None evaluates at the event times (shape (n,) univariate,
    (n, 2) bivariate); otherwise at the given scalar or array of times in
    [0, horizon].
    """
    if isinstance(spec, UnivariateSpec):
        if not isinstance(events, EventSeries) or isinstance(events, MarkedEventSeries):
            raise SpecificationError("univariate compensator expects an EventSeries")
        basis = _eigen_basis(spec.a)
        if np.any(basis.eig == 0.0):
            raise SpecificationError("autoregressive polynomial has a zero root")
        if basis.sep_ratio < FAST_PATH_SEP_RTOL:
            return _compensator_expm_uni(spec, events, t)
        bv = spec.b.astype(np.complex128) @ basis.v
        acc, states = _kernels.uni_compensator_states(events.times, basis.eig, bv, basis.w)
        if t is None:
            vals = spec.mu * events.times + acc[1:]
            return vals
        t_arr, scalar = _coerce_times(t, events.horizon)
        idx = np.searchsorted(events.times, t_arr, side="right")
        t0 = np.concatenate([[0.0], events.times])
        dt = t_arr - t0[idx]
        partial = ((states[idx] * _phi_matrix(dt, basis.eig)) @ bv).real
        vals = spec.mu * t_arr + acc[idx] + partial
        return float(vals[0]) if scalar else vals
    if isinstance(spec, BivariateSpec):
        if not isinstance(events, MarkedEventSeries):
            raise SpecificationError("bivariate compensator expects a MarkedEventSeries")
        basis1, basis2, bv11, bv12, bv21, bv22 = _biv_arrays(spec)
        if min(basis1.sep_ratio, basis2.sep_ratio) < FAST_PATH_SEP_RTOL:
            return _compensator_expm_biv(spec, events, t)
        acc1, acc2, s1, s2 = _kernels.biv_compensator_states(
            events.times, events.marks, basis1.eig, basis2.eig,
            bv11, bv12, bv21, bv22, basis1.w, basis2.w)
        if t is None:
            out = np.empty((events.n, 2))
            out[:, 0] = spec.mu[0] * events.times + acc1[1:]
            out[:, 1] = spec.mu[1] * events.times + acc2[1:]
            return out
        t_arr, scalar = _coerce_times(t, events.horizon)
        idx = np.searchsorted(events.times, t_arr, side="right")
        t0 = np.concatenate([[0.0], events.times])
        dt = t_arr - t0[idx]
        ph1 = s1[idx] * _phi_matrix(dt, basis1.eig)
        ph2 = s2[idx] * _phi_matrix(dt, basis2.eig)
        out = np.empty((t_arr.shape[0], 2))
        out[:, 0] = spec.mu[0] * t_arr + acc1[idx] + (ph1 @ bv11).real + (ph2 @ bv12).real
        out[:, 1] = spec.mu[1] * t_arr + acc2[idx] + (ph1 @ bv21).real + (ph2 @ bv22).real
        return out[0] if scalar else out
    raise SpecificationError(f"cannot evaluate compensator for {type(spec).__name__}")


def _coerce_times(t, horizon: float) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise SpecificationError("compensator times must be finite and one-dimensional")
    if arr.size and (arr.min() < 0.0 or arr.max() > horizon):
        raise SpecificationError("compensator times must lie in [0, horizon]")
    return arr, np.ndim(t) == 0


def _compensator_expm_uni(spec: UnivariateSpec, events: EventSeries, t):
    A = companion(spec.a)
    p = spec.order.p
    e = np.zeros(p)
    e[-1] = 1.0
    times = events.times
    states = [np.zeros(p)]
    acc = [0.0]
    t_prev = 0.0
    for tk in times:
        dt = tk - t_prev
        seg = np.linalg.solve(A, (matrix_exponential(A * dt) - np.eye(p)) @ states[-1])
        acc.append(acc[-1] + spec.b @ seg)
        states.append(matrix_exponential(A * dt) @ states[-1] + e)
        t_prev = tk
    acc_arr = np.asarray(acc)
    if t is None:
        return spec.mu * times + acc_arr[1:]
    t_arr, scalar = _coerce_times(t, events.horizon)
    idx = np.searchsorted(times, t_arr, side="right")
    t0 = np.concatenate([[0.0], times])
    out = np.empty(t_arr.shape[0])
    for i, (ti, k) in enumerate(zip(t_arr, idx)):
        dt = ti - t0[k]
        seg = np.linalg.solve(A, (matrix_exponential(A * dt) - np.eye(p)) @ states[k])
        out[i] = spec.mu * ti + acc_arr[k] + spec.b @ seg
    return float(out[0]) if scalar else out


def _compensator_expm_biv(spec: BivariateSpec, events: MarkedEventSeries, t):
    abar = spec.block_matrix()
    ebar = spec.jump_matrix()
    bmat = spec.coupling_matrix()
    d = abar.shape[0]
    times = events.times
    states = [np.zeros(d)]
    acc = [np.zeros(2)]
    t_prev = 0.0
    for tk, mk in zip(times, events.marks):
        dt = tk - t_prev
        seg = np.linalg.solve(abar, (matrix_exponential(abar * dt) - np.eye(d)) @ states[-1])
        acc.append(acc[-1] + bmat @ seg)
        x = matrix_exponential(abar * dt) @ states[-1]
        x += ebar[:, 0] if mk > 0 else ebar[:, 1]
        states.append(x)
        t_prev = tk
    acc_arr = np.asarray(acc)
    if t is None:
        return spec.mu[None, :] * times[:, None] + acc_arr[1:]
    t_arr, scalar = _coerce_times(t, events.horizon)
    idx = np.searchsorted(times, t_arr, side="right")
    t0 = np.concatenate([[0.0], times])
    out = np.empty((t_arr.shape[0], 2))
    for i, (ti, k) in enumerate(zip(t_arr, idx)):
        dt = ti - t0[k]
        seg = np.linalg.solve(abar, (matrix_exponential(abar * dt) - np.eye(d)) @ states[k])
        out[i] = spec.mu * ti + acc_arr[k] + bmat @ seg
    return out[0] if scalar else out


@dataclass(frozen=True)
class ResidualReport:
    """Time-rescaled residuals and their fit to the unit exponential law."""

    tau: np.ndarray
    u: np.ndarray
    ks_statistic: float
    p_value: float
    n: int


def _residual_report(tau: np.ndarray) -> ResidualReport:
    from .pipeline import ks_test_exp1  # deferred: pipeline imports this module

    u = np.diff(tau, prepend=0.0)
    if u.size == 0:
        return ResidualReport(tau, u, math.nan, math.nan, 0)
    ks = ks_test_exp1(u)
    return ResidualReport(tau, u, ks.statistic, ks.p_value, u.shape[0])


def residual_times(spec, events):
    """Time-rescaled event times and a KS test against Exp(1) increments.

    Under the true spec the increments of Lambda(T_i) are i.i.d. unit
    exponentials.  Univariate input gives one report; bivariate input gives a
    report per component, each in its own rescaled clock.
    """
    if isinstance(spec, UnivariateSpec):
        tau = compensator(spec, events)
        return _residual_report(tau)
    if isinstance(spec, BivariateSpec):
        lam_int = compensator(spec, events)
        pos = events.marks > 0
        return (_residual_report(lam_int[pos, 0]),
                _residual_report(lam_int[~pos, 1]))
    raise SpecificationError(f"cannot compute residuals for {type(spec).__name__}")
