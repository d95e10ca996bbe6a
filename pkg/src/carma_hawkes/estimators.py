"""Estimator-style wrappers around the functional core.

These classes follow the scikit-learn protocol (``get_params`` /
``set_params`` / ``fit`` returning ``self``, fitted attributes with a
trailing underscore) so the models compose with that ecosystem's tooling.
All real work happens in :mod:`~carma_hawkes.estimate`,
:mod:`~carma_hawkes.jumps` and :mod:`~carma_hawkes.pipeline`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import TickSeries
from .errors import SpecificationError
from .estimate import fit_bivariate, fit_univariate
from .jumps import DEFAULT_ALPHA_LEVELS, LMConfig, detect_jumps
from .likelihood import loglik_bivariate, loglik_univariate
from .model import BivariateOrder, EventSeries, MarkedEventSeries, UnivariateOrder
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "UnivariateCarmaHawkes",
    "BivariateCarmaHawkes",
    "LeeMyklandJumps",
    "SequentialFrameworkPipeline",
]


def _as_event_series(X, horizon):
    if isinstance(X, EventSeries):
        return X
    times = np.asarray(X, dtype=np.float64).ravel()
    h = float(horizon) if horizon is not None else float(times[-1])
    return EventSeries(times=times, horizon=h)


def _as_marked_series(X, y, horizon):
    if isinstance(X, MarkedEventSeries):
        return X
    times = np.asarray(X, dtype=np.float64).ravel()
    if y is None:
        raise SpecificationError("bivariate fitting needs marks in y")
    marks = np.asarray(y).ravel()
    h = float(horizon) if horizon is not None else float(times[-1])
    return MarkedEventSeries(times=times, horizon=h, marks=marks)


class UnivariateCarmaHawkes(BaseEstimator):
    """Maximum-likelihood univariate model of given order.

    ``fit`` accepts either an :class:`EventSeries` or a 1-d array of event
    times (``horizon`` defaults to the last event).
    """

    def __init__(self, p=1, q=0, n_starts=5, max_evals=20_000, tol=1e-8,
                 seed=None, window="events", kernel_screen=True):
        self.p = p
        self.q = q
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.tol = tol
        self.seed = seed
        self.window = window
        self.kernel_screen = kernel_screen

    def fit(self, X, y=None, horizon=None):
        events = _as_event_series(X, horizon)
        result = fit_univariate(
            events, UnivariateOrder(self.p, self.q), n_starts=self.n_starts,
            max_evals=self.max_evals, tol=self.tol, seed=self.seed,
            kernel_screen=self.kernel_screen, window=self.window)
        self.result_ = result
        self.spec_ = result.spec
        self.loglik_ = result.loglik
        self.aic_ = result.aic
        self.n_events_ = events.n
        return self

    def score(self, X, y=None, horizon=None):
        check_is_fitted(self, "spec_")
        events = _as_event_series(X, horizon)
        return loglik_univariate(self.spec_, events, window=self.window)


class BivariateCarmaHawkes(BaseEstimator):
    """Maximum-likelihood bivariate model of given order.

    ``fit`` accepts a :class:`MarkedEventSeries`, or event times in ``X``
    with marks (+1/-1) in ``y``.
    """

    def __init__(self, p=(1, 1), q=(0, 0, 0, 0), n_starts=5, max_evals=20_000,
                 tol=1e-8, seed=None, window="events", kernel_screen=True):
        self.p = p
        self.q = q
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.tol = tol
        self.seed = seed
        self.window = window
        self.kernel_screen = kernel_screen

    def fit(self, X, y=None, horizon=None):
        events = _as_marked_series(X, y, horizon)
        result = fit_bivariate(
            events, BivariateOrder(tuple(self.p), tuple(self.q)),
            n_starts=self.n_starts, max_evals=self.max_evals, tol=self.tol,
            seed=self.seed, kernel_screen=self.kernel_screen, window=self.window)
        self.result_ = result
        self.spec_ = result.spec
        self.loglik_ = result.loglik
        self.aic_ = result.aic
        self.n_events_ = events.n
        return self

    def score(self, X, y=None, horizon=None):
        check_is_fitted(self, "spec_")
        events = _as_marked_series(X, y, horizon)
        return loglik_bivariate(self.spec_, events, window=self.window)


class LeeMyklandJumps(BaseEstimator):
    """Jump detector over a tick series at one confidence level."""

    def __init__(self, alpha=0.99, K=None, window_exponent=-0.6,
                 drop_zero_returns=True):
        self.alpha = alpha
        self.K = K
        self.window_exponent = window_exponent
        self.drop_zero_returns = drop_zero_returns

    def _config(self) -> LMConfig:
        return LMConfig(K=self.K, alpha_levels=(self.alpha,),
                        window_exponent=self.window_exponent,
                        drop_zero_returns=self.drop_zero_returns)

    def fit(self, X: TickSeries, y=None):
        result = detect_jumps(X, self._config())
        self.result_ = result
        self.flags_ = result.flags[self.alpha]
        self.jump_fraction_ = result.jump_fraction[self.alpha]
        return self

    def fit_predict(self, X: TickSeries, y=None):
        """Signs of the flagged tested returns: +1, -1, or 0 (not flagged)."""
        self.fit(X, y)
        labels = np.where(self.flags_, self.result_.signs, 0).astype(np.int8)
        return labels


class SequentialFrameworkPipeline(BaseEstimator):
    """Full escalation routine bCH -> uCHLM -> bCHLM on a tick series."""

    def __init__(self, alpha_levels=DEFAULT_ALPHA_LEVELS, lr_alpha=0.05,
                 ks_alpha=0.05, p_max=3, n_starts=5, max_evals=20_000,
                 event_cap=50_000, K=None, window_exponent=-0.6,
                 threads=None, seed=None):
        self.alpha_levels = alpha_levels
        self.lr_alpha = lr_alpha
        self.ks_alpha = ks_alpha
        self.p_max = p_max
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.event_cap = event_cap
        self.K = K
        self.window_exponent = window_exponent
        self.threads = threads
        self.seed = seed

    def fit(self, X: TickSeries, y=None):
        config = PipelineConfig(
            lm_config=LMConfig(K=self.K, alpha_levels=tuple(self.alpha_levels),
                               window_exponent=self.window_exponent),
            lr_alpha=self.lr_alpha, ks_alpha=self.ks_alpha, p_max=self.p_max,
            n_starts=self.n_starts, max_evals=self.max_evals,
            event_cap=self.event_cap, threads=self.threads)
        self.report_ = run_pipeline(X, config, seed=self.seed)
        self.verdict_ = self.report_.verdict
        return self
