import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from carma_hawkes import (
    BivariateOrder,
    BivariateSpec,
    EventSeries,
    MarkedEventSeries,
    SpecificationError,
    UnivariateOrder,
    UnivariateSpec,
    compensator,
    initial_state,
    intensity_path,
    loglik_bivariate,
    loglik_univariate,
    residual_times,
    update_recursion,
)


# ---------------------------------------------------------------------------
# Degenerate closed forms


def test_poisson_reduction_univariate(events_uni_10):
    """With all moving-average weight zero the process is plain Poisson."""
    mu = 0.7
    spec = UnivariateSpec(order=UnivariateOrder(1, 0), mu=mu, a=[2.0], b=[0.0])
    t_n = events_uni_10.times[-1]
    n = events_uni_10.n
    assert loglik_univariate(spec, events_uni_10) == pytest.approx(
        -mu * t_n + n * math.log(mu), abs=1e-12)
    assert loglik_univariate(spec, events_uni_10, window="horizon") == pytest.approx(
        -mu * events_uni_10.horizon + n * math.log(mu), abs=1e-12)


def test_poisson_reduction_bivariate(events_biv_11):
    """Zero coupling blocks reduce to two independent Poisson streams."""
    spec = BivariateSpec(order=BivariateOrder((1, 1), (0, 0, 0, 0)),
                         mu=[0.3, 0.45], a1=[1.5], a2=[2.0],
                         b11=[0.0], b12=[0.0], b21=[0.0], b22=[0.0])
    ev = MarkedEventSeries(times=events_biv_11.times[:100],
                           horizon=events_biv_11.horizon,
                           marks=events_biv_11.marks[:100])
    t_n = ev.times[-1]
    n_plus, n_minus = ev.counts
    expected = (-0.3 * t_n + n_plus * math.log(0.3)
                - 0.45 * t_n + n_minus * math.log(0.45))
    assert loglik_bivariate(spec, ev) == pytest.approx(expected, abs=1e-12)


def test_single_event_bivariate_hand_value(spec_biv_11):
    """One event: only the baselines and the first-mark factor remain."""
    ev = MarkedEventSeries(times=[2.0], horizon=5.0, marks=[1])
    expected = -(0.3 + 0.4) * 2.0 + math.log(0.3)
    assert loglik_bivariate(spec_biv_11, ev) == pytest.approx(expected, abs=1e-12)


def test_empty_series():
    spec = UnivariateSpec(order=UnivariateOrder(1, 0), mu=0.5, a=[2.0], b=[1.0])
    ev = EventSeries(times=[], horizon=7.0)
    assert loglik_univariate(spec, ev) == pytest.approx(-0.5 * 7.0, abs=1e-14)


def test_nonpositive_intensity_is_minus_inf():
    spec = UnivariateSpec(order=UnivariateOrder(1, 0), mu=0.1, a=[0.5], b=[-5.0])
    ev = EventSeries(times=[1.0, 1.01], horizon=2.0)
    assert loglik_univariate(spec, ev) == -math.inf


# ---------------------------------------------------------------------------
# Exponential-kernel recursion oracle


def _exp_hawkes_loglik(mu, a, b0, times, t_end):
    """Classic one-pass recursion for the exponential kernel b0*exp(-a t)."""
    acc = 0.0
    r = 0.0
    last = None
    for t in times:
        if last is not None:
            r = math.exp(-a * (t - last)) * (r + 1.0)
        acc += math.log(mu + b0 * r)
        last = t
    tail = sum(1.0 - math.exp(-a * (t_end - t)) for t in times)
    return acc - mu * t_end - (b0 / a) * tail


def test_first_order_matches_recursion(spec_uni_10, events_uni_10):
    oracle = _exp_hawkes_loglik(0.5, 2.0, 1.0, events_uni_10.times,
                                float(events_uni_10.times[-1]))
    assert loglik_univariate(spec_uni_10, events_uni_10) == pytest.approx(
        oracle, abs=1e-8)


def test_decoupled_bivariate_is_sum_of_univariate(events_biv_11):
    """b12 = b21 = 0 splits the likelihood into the two component models."""
    spec = BivariateSpec(order=BivariateOrder((1, 1), (0, 0, 0, 0)),
                         mu=[0.3, 0.4], a1=[1.5], a2=[2.0],
                         b11=[0.5], b12=[0.0], b21=[0.0], b22=[0.8])
    t_end = float(events_biv_11.times[-1])
    plus = events_biv_11.component_times(1)
    minus = events_biv_11.component_times(-1)
    oracle = (_exp_hawkes_loglik(0.3, 1.5, 0.5, plus, t_end)
              + _exp_hawkes_loglik(0.4, 2.0, 0.8, minus, t_end))
    assert loglik_bivariate(spec, events_biv_11) == pytest.approx(oracle, abs=1e-8)


# ---------------------------------------------------------------------------
# Reference recursion API


def test_update_recursion_reproduces_intensities(spec_uni_21, events_uni_21):
    """The reference state recursion yields the same pre-event intensities."""
    times = events_uni_21.times[:200]
    lam_path = intensity_path(spec_uni_21, events_uni_21, times)
    state = initial_state(spec_uni_21)
    comp = np.zeros((2, 2))
    comp[0, 1] = 1.0
    comp[1] = -np.asarray(spec_uni_21.a)[::-1]
    e = np.array([0.0, 1.0])
    b = np.asarray(spec_uni_21.b)
    for k, t in enumerate(times):
        dt = t - state.t_last
        lam = spec_uni_21.mu + b @ (scipy.linalg.expm(comp * dt) @ state.s)
        assert lam == pytest.approx(lam_path[k], rel=1e-9, abs=1e-12)
        state = update_recursion(spec_uni_21, state, t)
    assert state.count == (200,)


def test_update_recursion_bivariate_counts(spec_biv_11, events_biv_11):
    state = initial_state(spec_biv_11)
    for t, mark in zip(events_biv_11.times[:50], events_biv_11.marks[:50]):
        state = update_recursion(spec_biv_11, state, t, mark=int(mark))
    n_plus = int(np.sum(events_biv_11.marks[:50] == 1))
    assert state.count == (n_plus, 50 - n_plus)


def test_update_recursion_requires_increasing_times(spec_uni_10):
    state = initial_state(spec_uni_10)
    state = update_recursion(spec_uni_10, state, 1.0)
    with pytest.raises(SpecificationError):
        update_recursion(spec_uni_10, state, 0.5)


# ---------------------------------------------------------------------------
# Quadrature oracle


def _quadrature_loglik(spec, events, t_end):
    """Numeric compensator plus log-intensities, all from the kernel alone."""
    from carma_hawkes import kernel

    times = events.times

    def lam(t):
        dt = t - times[times < t]
        return spec.mu + (kernel(spec, dt).sum() if dt.size else 0.0)

    acc = 0.0
    knots = np.concatenate([[0.0], times[times <= t_end], [t_end]])
    for left, right in zip(knots[:-1], knots[1:]):
        if right > left:
            val, _ = scipy.integrate.quad(lam, left, right, limit=200)
            acc += val
    return sum(math.log(lam(t)) for t in times) - acc


def test_loglik_matches_quadrature(spec_uni_21):
    ev_small = EventSeries(times=np.sort(np.random.default_rng(5).uniform(
        0.2, 39.0, size=60)), horizon=40.0)
    oracle = _quadrature_loglik(spec_uni_21, ev_small, float(ev_small.times[-1]))
    assert loglik_univariate(spec_uni_21, ev_small) == pytest.approx(oracle, abs=1e-6)


# ---------------------------------------------------------------------------
# Compensator and residuals


def test_compensator_at_event_times_consistency(spec_uni_21, events_uni_21):
    """loglik = sum of log pre-event intensities minus the compensator."""
    lam = intensity_path(spec_uni_21, events_uni_21, events_uni_21.times)
    big_lambda = compensator(spec_uni_21, events_uni_21)
    ll = np.sum(np.log(lam)) - big_lambda[-1]
    assert loglik_univariate(spec_uni_21, events_uni_21) == pytest.approx(
        ll, rel=1e-10, abs=1e-8)


def test_compensator_window_identity(spec_uni_21, events_uni_21):
    """The horizon window subtracts exactly the extra compensator mass."""
    extra = (compensator(spec_uni_21, events_uni_21, t=events_uni_21.horizon)
             - compensator(spec_uni_21, events_uni_21, t=float(events_uni_21.times[-1])))
    diff = (loglik_univariate(spec_uni_21, events_uni_21)
            - loglik_univariate(spec_uni_21, events_uni_21, window="horizon"))
    assert diff == pytest.approx(extra, rel=1e-10, abs=1e-10)


def test_compensator_monotone_and_zero_at_origin(spec_uni_21, events_uni_21):
    grid = np.linspace(0.0, events_uni_21.horizon, 200)
    values = compensator(spec_uni_21, events_uni_21, t=grid)
    assert values[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(values) > 0.0)


def test_compensator_against_quadrature(spec_uni_21):
    import carma_hawkes

    ev = EventSeries(times=[1.0, 2.5, 4.0, 4.2, 7.0], horizon=9.0)

    def lam(t):
        dt = t - ev.times[ev.times < t]
        return spec_uni_21.mu + (carma_hawkes.kernel(spec_uni_21, dt).sum()
                                 if dt.size else 0.0)

    for t_query in (3.0, 6.0, 9.0):
        pieces = [0.0] + [t for t in ev.times if t < t_query] + [t_query]
        total = sum(scipy.integrate.quad(lam, a, b, limit=200)[0]
                    for a, b in zip(pieces[:-1], pieces[1:]))
        assert compensator(spec_uni_21, ev, t=t_query) == pytest.approx(
            total, abs=1e-8)


def test_compensator_bivariate_columns(spec_biv_11, events_biv_11):
    values = compensator(spec_biv_11, events_biv_11, t=events_biv_11.horizon)
    assert values.shape == (2,)
    # each column integrates that component's intensity
    grid_total = values.sum()
    n = events_biv_11.n
    assert grid_total == pytest.approx(n, rel=0.2)


def test_residuals_are_exponential_under_truth(spec_uni_10, events_uni_10):
    report = residual_times(spec_uni_10, events_uni_10)
    assert report.n == events_uni_10.n
    assert np.all(report.u > 0.0)
    assert report.u.mean() == pytest.approx(1.0, rel=0.2)
    assert report.p_value > 0.05


def test_residuals_reject_wrong_model(spec_uni_10, events_uni_10):
    wrong = UnivariateSpec(order=UnivariateOrder(1, 0), mu=2.5, a=[0.3], b=[0.01])
    report = residual_times(wrong, events_uni_10)
    assert report.p_value < 1e-4


def test_residuals_bivariate_per_component(spec_biv_11, events_biv_11):
    plus, minus = residual_times(spec_biv_11, events_biv_11)
    n_plus, n_minus = events_biv_11.counts
    assert plus.n == n_plus
    assert minus.n == n_minus
    assert plus.p_value > 0.05
    assert minus.p_value > 0.05


# ---------------------------------------------------------------------------
# Structure checks


def test_mark_swap_symmetry(spec_biv_11, events_biv_11):
    """Relabeling components and transposing the spec leaves loglik fixed."""
    swapped_spec = BivariateSpec(
        order=BivariateOrder((1, 1), (0, 0, 0, 0)),
        mu=[0.4, 0.3], a1=[2.0], a2=[1.5],
        b11=[0.8], b12=[0.2], b21=[0.3], b22=[0.5])
    swapped_events = MarkedEventSeries(
        times=events_biv_11.times, horizon=events_biv_11.horizon,
        marks=-events_biv_11.marks)
    assert loglik_bivariate(swapped_spec, swapped_events) == pytest.approx(
        loglik_bivariate(spec_biv_11, events_biv_11), rel=1e-12)


def test_window_argument_validated(spec_uni_10, events_uni_10):
    with pytest.raises(SpecificationError):
        loglik_univariate(spec_uni_10, events_uni_10, window="full")


def test_higher_order_loglik_finite(spec_uni_32):
    from carma_hawkes import simulate_univariate

    ev = simulate_univariate(spec_uni_32, horizon=150.0, seed=2)
    value = loglik_univariate(spec_uni_32, ev)
    assert math.isfinite(value)
    report = residual_times(spec_uni_32, ev)
    assert report.p_value > 0.01
