import io
import json
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from carma_hawkes import (
    BivariateOrder,
    CandidateLattice,
    DataError,
    DataWarning,
    FrameworkKind,
    PipelineConfig,
    SpecificationError,
    UnivariateOrder,
    build_point_process,
    default_bivariate_lattice,
    default_univariate_lattice,
    ks_test_exp1,
    parse_ticks,
    run_pipeline,
    run_selection,
    simulate_bivariate,
    synth_ticks,
    ticks_from_events,
)
from carma_hawkes.data import SynthConfig
from carma_hawkes.pipeline import _kolmogorov_survival


# ---------------------------------------------------------------------------
# KS test against Exp(1)


def test_ks_single_point():
    # F(ln 2) = 1/2, so both one-sided gaps equal 1/2
    out = ks_test_exp1([math.log(2.0)])
    assert out.statistic == pytest.approx(0.5, abs=1e-15)
    assert out.n == 1


def test_ks_all_zeros():
    out = ks_test_exp1(np.zeros(4))
    assert out.statistic == pytest.approx(1.0, abs=1e-15)
    assert out.p_value < 1e-3


def test_ks_invalid_inputs():
    with pytest.raises(SpecificationError):
        ks_test_exp1([])
    with pytest.raises(SpecificationError):
        ks_test_exp1([0.5, -0.1])
    with pytest.raises(SpecificationError):
        ks_test_exp1([0.5, math.nan])


def test_ks_permutation_invariant():
    rng = np.random.default_rng(5)
    u = rng.exponential(size=50)
    base = ks_test_exp1(u)
    shuffled = ks_test_exp1(rng.permutation(u))
    assert shuffled.statistic == base.statistic
    assert shuffled.p_value == base.p_value


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = rng.exponential(size=200)
        ours = ks_test_exp1(u).statistic
        ref = scipy.stats.kstest(u, "expon").statistic
        assert ours == pytest.approx(ref, abs=1e-12)


def test_kolmogorov_survival_against_scipy():
    # covers both evaluation branches of the asymptotic law
    for lam in np.linspace(0.3, 3.0, 28):
        assert _kolmogorov_survival(float(lam)) == pytest.approx(
            scipy.special.kolmogorov(lam), abs=1e-10)
    assert _kolmogorov_survival(0.0) == 1.0


def test_ks_calibration_under_null():
    rng = np.random.default_rng(77)
    reject = sum(
        ks_test_exp1(rng.exponential(size=100)).p_value < 0.05
        for _ in range(200))
    assert 0.02 <= reject / 200 <= 0.08


# ---------------------------------------------------------------------------
# Candidate lattices


def test_default_univariate_lattice():
    lattice = default_univariate_lattice()
    assert not lattice.bivariate
    assert lattice.orders == tuple(
        UnivariateOrder(p, q) for p in (1, 2, 3) for q in range(p))
    assert default_univariate_lattice(p_max=1).orders == (UnivariateOrder(1, 0),)
    with pytest.raises(SpecificationError):
        default_univariate_lattice(p_max=0)
    with pytest.raises(SpecificationError):
        default_univariate_lattice(p_max=4)


def test_default_bivariate_lattice():
    lattice = default_bivariate_lattice()
    assert lattice.bivariate
    assert len(lattice.orders) == 5
    assert lattice.orders[0] == BivariateOrder(p=(1, 1), q=(0, 0, 0, 0))
    assert lattice.orders[-1] == BivariateOrder(p=(3, 3), q=(2, 2, 2, 2))
    assert len(default_bivariate_lattice(p_max=2).orders) == 3


def test_lattice_validation():
    with pytest.raises(SpecificationError):
        CandidateLattice(())
    with pytest.raises(SpecificationError):
        CandidateLattice((UnivariateOrder(1, 0),
                          BivariateOrder(p=(1, 1), q=(0, 0, 0, 0))))


def test_framework_kind():
    assert FrameworkKind("bCH") is FrameworkKind.BCH
    assert FrameworkKind.BCH.rank < FrameworkKind.UCHLM.rank < FrameworkKind.BCHLM.rank


# ---------------------------------------------------------------------------
# Sequential order selection


def test_selection_single_order(events_uni_10):
    lattice = CandidateLattice((UnivariateOrder(1, 0),))
    result = run_selection(events_uni_10, lattice, seed=1, n_starts=1,
                           max_evals=4000)
    assert result.order == UnivariateOrder(1, 0)
    assert result.steps == ()
    assert math.isfinite(result.fit.loglik)


def test_selection_aic_step(events_uni_10):
    lattice = CandidateLattice((UnivariateOrder(1, 0), UnivariateOrder(2, 0)))
    result = run_selection(events_uni_10, lattice, seed=2, n_starts=1,
                           max_evals=4000)
    (step,) = result.steps
    assert step.mechanism == "aic"
    assert step.candidate == UnivariateOrder(1, 0)
    assert step.alternative == UnivariateOrder(2, 0)
    assert step.aic_candidate is not None and step.aic_alternative is not None
    assert step.advanced == (step.aic_alternative < step.aic_candidate)
    expected = UnivariateOrder(2, 0) if step.advanced else UnivariateOrder(1, 0)
    assert result.order == expected


def test_selection_lr_step(events_uni_21):
    lattice = CandidateLattice((UnivariateOrder(2, 0), UnivariateOrder(2, 1)))
    result = run_selection(events_uni_21, lattice, seed=3, n_starts=2,
                           max_evals=6000)
    (step,) = result.steps
    assert step.mechanism == "lr"
    assert step.df == 1
    assert step.statistic >= 0.0
    assert 0.0 <= step.p_value <= 1.0
    assert step.advanced == (step.p_value < 0.05)


def test_selection_walk_replays(events_uni_10):
    lattice = default_univariate_lattice()
    result = run_selection(events_uni_10, lattice, seed=4, n_starts=1,
                           max_evals=3000, tol=1e-7)
    current = lattice.orders[0]
    for i, step in enumerate(result.steps):
        assert step.candidate == current
        assert step.alternative == lattice.orders[i + 1]
        if step.advanced:
            current = step.alternative
    assert result.order == current
    if len(result.steps) < len(lattice.orders) - 1:
        assert not result.steps[-1].advanced


def test_selection_validation(events_uni_10):
    with pytest.raises(SpecificationError):
        run_selection(events_uni_10, lattice=[(1, 0)])
    lattice = CandidateLattice((UnivariateOrder(1, 0),))
    with pytest.raises(SpecificationError):
        run_selection(events_uni_10, lattice, lr_alpha=1.5)


# ---------------------------------------------------------------------------
# Point-process construction


def _hand_ticks():
    # 13 ticks in one session: 12 moves with 7 up, 5 down, no zero returns
    prices = [100.0, 100.1, 100.2, 100.1, 100.3, 100.2, 100.4,
              100.5, 100.4, 100.6, 100.5, 100.7, 100.6]
    rows = "\n".join(
        f"2023-05-15T07:{m:02d}:00.000000Z,{p},bid,XS1"
        for m, p in zip(range(0, 26, 2), prices))
    return parse_ticks(io.StringIO(
        "timestamp,price,side,instrument\n" + rows + "\n"))


def test_bch_events_from_hand_ticks():
    ticks = _hand_ticks()
    ev = build_point_process(ticks, "bCH")
    assert ev.n == 12
    assert int(np.sum(ev.marks == 1)) == 7
    assert int(np.sum(ev.marks == -1)) == 5
    np.testing.assert_allclose(ev.times, ticks.business_times[1:], atol=1e-9)
    expected_signs = np.sign(np.diff(ticks.prices)).astype(np.int8)
    np.testing.assert_array_equal(ev.marks, expected_signs)
    assert ev.horizon == ticks.business_times[-1]


def test_bch_drops_zero_and_day_boundary_moves():
    rows = io.StringIO(
        "timestamp,price,side,instrument\n"
        "2023-05-15T07:00:00.000000Z,100.0,bid,XS1\n"
        "2023-05-15T07:01:00.000000Z,100.1,bid,XS1\n"
        "2023-05-15T07:02:00.000000Z,100.1,bid,XS1\n"   # zero return
        "2023-05-16T07:00:00.000000Z,100.4,bid,XS1\n"   # overnight move
        "2023-05-16T07:01:00.000000Z,100.5,bid,XS1\n")
    ev = build_point_process(parse_ticks(rows), "bCH")
    assert ev.n == 2
    np.testing.assert_array_equal(ev.marks, [1, 1])


def test_bch_requires_movement():
    ticks = synth_ticks(SynthConfig(arrival_rate=0.02, volatility=0.0), seed=2)
    with pytest.raises(DataError):
        build_point_process(ticks, "bCH")


@pytest.fixture(scope="module")
def jumpy_ticks():
    config = SynthConfig(arrival_rate=0.2, volatility=2e-5,
                         jump_times=(12000.0,), jump_sizes=(0.01,))
    return synth_ticks(config, seed=41)


def test_jump_frameworks_share_times(jumpy_ticks):
    uni = build_point_process(jumpy_ticks, "uCHLM", alpha=0.95)
    biv = build_point_process(jumpy_ticks, "bCHLM", alpha=0.95)
    np.testing.assert_array_equal(uni.times, biv.times)
    assert not hasattr(uni, "marks")
    assert set(np.unique(biv.marks)) <= {-1, 1}
    assert uni.horizon == biv.horizon


def test_jump_frameworks_need_alpha(jumpy_ticks):
    with pytest.raises(SpecificationError):
        build_point_process(jumpy_ticks, "uCHLM")
    with pytest.raises(SpecificationError):
        build_point_process(jumpy_ticks, "bCHLM")


def test_no_flagged_jumps_is_an_error():
    # a regular grid keeps standardized returns Gaussian, so a diffusion-only
    # day should carry no flags at the strictest level
    rng = np.random.default_rng(3)
    logp = np.log(100.0) + np.cumsum(
        np.concatenate([[0.0], rng.normal(0.0, 1e-4, 599)]))
    rows = ["timestamp,price,side,instrument"]
    for i, lp in enumerate(logp):
        s = i * 5
        rows.append(
            f"2023-05-15T{7 + s // 3600:02d}:{(s % 3600) // 60:02d}:"
            f"{s % 60:02d}.000000Z,{float(np.exp(lp))!r},bid,XS1")
    quiet = parse_ticks(io.StringIO("\n".join(rows) + "\n"))
    with pytest.raises(DataError):
        build_point_process(quiet, "uCHLM", alpha=0.995)


def test_event_cap_keeps_tail():
    ticks = _hand_ticks()
    full = build_point_process(ticks, "bCH")
    with pytest.warns(DataWarning):
        capped = build_point_process(ticks, "bCH", event_cap=5)
    assert capped.n == 5
    origin = full.times[-6]  # window restarts at the last dropped event
    np.testing.assert_allclose(capped.times, full.times[-5:] - origin, atol=1e-12)
    np.testing.assert_array_equal(capped.marks, full.marks[-5:])
    assert capped.horizon == pytest.approx(full.horizon - origin)
    assert capped.times[0] > 0.0


# ---------------------------------------------------------------------------
# Full pipeline


@pytest.fixture(scope="module")
def hawkes_ticks(spec_biv_11):
    ev = simulate_bivariate(spec_biv_11, horizon=300.0, seed=11)
    return ticks_from_events(ev)


def _fast_config(**kwargs):
    defaults = dict(p_max=1, n_starts=1, max_evals=4000, tol=1e-7)
    defaults.update(kwargs)
    return PipelineConfig(**defaults)


def test_pipeline_stops_at_bch(hawkes_ticks):
    report = run_pipeline(hawkes_ticks, _fast_config(), seed=0)
    assert len(report.stages) == 1
    stage = report.stages[0]
    assert stage.framework is FrameworkKind.BCH
    assert stage.passed
    (entry,) = stage.entries
    assert entry.alpha is None
    assert entry.order == BivariateOrder(p=(1, 1), q=(0, 0, 0, 0))
    assert entry.n_events == 478
    assert report.verdict["status"] == "passed"
    assert report.verdict["framework"] == "bCH"
    assert report.verdict["selected"] == [{"alpha": None, "order": "(1,1|0,0,0,0)"}]


def test_pipeline_report_serialization(hawkes_ticks):
    report = run_pipeline(hawkes_ticks, _fast_config(), seed=0)
    again = run_pipeline(hawkes_ticks, _fast_config(), seed=0)
    assert report.to_json() == again.to_json()
    payload = json.loads(report.to_json())
    assert set(payload) == {"stages", "verdict"}
    rows = report.to_csv_rows()
    assert len(rows) == sum(len(s.entries) for s in report.stages)
    assert len(report.CSV_HEADER) == len(rows[0])
    assert rows[0][0] == "bCH"


def test_pipeline_exhausts_on_flat_data():
    flat = synth_ticks(
        SynthConfig(arrival_rate=0.05, volatility=0.0), seed=3)
    report = run_pipeline(flat, _fast_config(), seed=1)
    assert report.verdict == {"status": "exhausted", "framework": None}
    assert [s.framework for s in report.stages] == [
        FrameworkKind.BCH, FrameworkKind.UCHLM, FrameworkKind.BCHLM]
    assert all(not s.passed for s in report.stages)
    for stage in report.stages[1:]:
        assert len(stage.entries) == 4
        assert all(e.error is not None for e in stage.entries)


def test_pipeline_thread_count_does_not_change_report():
    flat = synth_ticks(
        SynthConfig(arrival_rate=0.05, volatility=0.0), seed=3)
    serial = run_pipeline(flat, _fast_config(threads=1), seed=1)
    parallel = run_pipeline(flat, _fast_config(threads=4), seed=1)
    assert serial.to_json() == parallel.to_json()


def test_pipeline_config_validation():
    with pytest.raises(SpecificationError):
        PipelineConfig(lr_alpha=0.0)
    with pytest.raises(SpecificationError):
        PipelineConfig(ks_alpha=1.0)
    with pytest.raises(SpecificationError):
        PipelineConfig(event_cap=0)
    with pytest.raises(SpecificationError):
        PipelineConfig(window="middle")
