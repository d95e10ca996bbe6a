"""Exact simulation by thinning.

The conditional intensity after the last event decays as
mu + Re(sum_j c_j exp(eig_j s)) with Re(eig_j) < 0, so
M = mu + sum_j |c_j| dominates it for every s >= 0.  The simulator proposes
from a Poisson process at rate M, accepts with probability lambda/M, and
refreshes the envelope after every accepted or rejected proposal and at
least once per ``refresh_cap`` time units (skipping a long proposal and
re-drawing is exact by memorylessness).

Randomness comes from two counter-based streams per seed: stream 0 supplies
the exponential gaps, stream 1 the acceptance (and, bivariate, mark)
uniforms.  Draws are consumed strictly in stream order regardless of batch
size, so a given seed yields one reproducible path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import rng_stream
from .errors import SimulationError, SpecificationError
from .model import (
    BivariateSpec,
    EventSeries,
    MarkedEventSeries,
    UnivariateSpec,
    _eigen_basis,
    validate,
)

__all__ = ["SimulationConfig", "simulate_univariate", "simulate_bivariate"]


@dataclass(frozen=True)
class SimulationConfig:
    """Budget and batching knobs; defaults suit intraday-scale runs."""

    max_events: int = 10_000_000
    refresh_cap: float = 1.0
    batch_size: int = 65_536

    def __post_init__(self) -> None:
        if self.max_events < 1:
            raise SpecificationError("max_events must be >= 1")
        if not (math.isfinite(self.refresh_cap) and self.refresh_cap > 0.0):
            raise SpecificationError("refresh_cap must be finite and positive")
        if self.batch_size < 16:
            raise SpecificationError("batch_size must be >= 16")


def _check_horizon(horizon) -> float:
    horizon = float(horizon)
    if not (math.isfinite(horizon) and horizon > 0.0):
        raise SpecificationError(f"horizon must be finite and positive, got {horizon}")
    return horizon


def _checked_spec(spec) -> None:
    report = validate(spec)
    if not report.valid:
        raise SpecificationError(f"cannot simulate from an invalid spec; {report.summary()}")


def _grow(out: np.ndarray, n_out: int, max_events: int) -> np.ndarray:
    if out.shape[0] >= max_events:
        raise SimulationError(
            f"simulation produced more than max_events = {max_events} events; "
            "raise the budget or shorten the horizon")
    new = np.empty(min(max_events, 2 * out.shape[0]), dtype=out.dtype)
    new[:n_out] = out[:n_out]
    return new


def simulate_univariate(spec: UnivariateSpec, horizon, seed: int,
                        config: SimulationConfig | None = None) -> EventSeries:
    """Simulate one path of a univariate process on (0, horizon].

    The spec must pass :func:`carma_hawkes.model.validate`; the envelope
    argument needs a stable spectrum and a non-negative kernel.
    """
    if not isinstance(spec, UnivariateSpec):
        raise SpecificationError("simulate_univariate expects a UnivariateSpec")
    horizon = _check_horizon(horizon)
    _checked_spec(spec)
    cfg = config or SimulationConfig()
    basis = _eigen_basis(spec.a)
    bv = spec.b.astype(np.complex128) @ basis.v
    rng_e = rng_stream(seed, 0)
    rng_u = rng_stream(seed, 1)
    e_buf = rng_e.standard_exponential(cfg.batch_size)
    u_buf = rng_u.random(cfg.batch_size)
    out = np.empty(min(cfg.max_events, 4096))
    t = 0.0
    y = np.zeros(spec.order.p, dtype=np.complex128)
    n_out = 0
    while True:
        t, y, n_out, i_e, i_u, status = _kernels.uni_thin_core(
            t, y, spec.mu, basis.eig, bv, basis.w, horizon, cfg.refresh_cap,
            e_buf, u_buf, out, n_out)
        e_buf = e_buf[i_e:]
        u_buf = u_buf[i_u:]
        if status == _kernels.THIN_DONE:
            break
        if status == _kernels.THIN_NEED_DRAWS:
            if e_buf.shape[0] < 1:
                e_buf = np.concatenate([e_buf, rng_e.standard_exponential(cfg.batch_size)])
            if u_buf.shape[0] < 2:
                u_buf = np.concatenate([u_buf, rng_u.random(cfg.batch_size)])
            continue
        if status == _kernels.THIN_OUT_FULL:
            out = _grow(out, n_out, cfg.max_events)
            continue
        raise SimulationError(
            "intensity exceeded its thinning envelope; the eigendecomposition "
            "is unreliable for this spec")
    return EventSeries(times=out[:n_out].copy(), horizon=horizon)


def simulate_bivariate(spec: BivariateSpec, horizon, seed: int,
                       config: SimulationConfig | None = None) -> MarkedEventSeries:
    """Simulate one path of a bivariate process on (0, horizon].

    Thins the superposed intensity and assigns each accepted event to
    component 1 with probability lambda_1 / (lambda_1 + lambda_2), recorded
    as mark +1 (component 2 is -1).
    """
    if not isinstance(spec, BivariateSpec):
        raise SpecificationError("simulate_bivariate expects a BivariateSpec")
    horizon = _check_horizon(horizon)
    _checked_spec(spec)
    cfg = config or SimulationConfig()
    basis1 = _eigen_basis(spec.a1)
    basis2 = _eigen_basis(spec.a2)
    bv11 = spec.b11.astype(np.complex128) @ basis1.v
    bv21 = spec.b21.astype(np.complex128) @ basis1.v
    bv12 = spec.b12.astype(np.complex128) @ basis2.v
    bv22 = spec.b22.astype(np.complex128) @ basis2.v
    rng_e = rng_stream(seed, 0)
    rng_u = rng_stream(seed, 1)
    e_buf = rng_e.standard_exponential(cfg.batch_size)
    u_buf = rng_u.random(cfg.batch_size)
    out = np.empty(min(cfg.max_events, 4096))
    marks = np.empty(out.shape[0], dtype=np.int8)
    t = 0.0
    y1 = np.zeros(spec.order.p[0], dtype=np.complex128)
    y2 = np.zeros(spec.order.p[1], dtype=np.complex128)
    n_out = 0
    while True:
        t, y1, y2, n_out, i_e, i_u, status = _kernels.biv_thin_core(
            t, y1, y2, float(spec.mu[0]), float(spec.mu[1]),
            basis1.eig, basis2.eig, bv11 + bv21, bv12 + bv22,
            bv11, bv12, bv21, bv22, basis1.w, basis2.w,
            horizon, cfg.refresh_cap, e_buf, u_buf, out, marks, n_out)
        e_buf = e_buf[i_e:]
        u_buf = u_buf[i_u:]
        if status == _kernels.THIN_DONE:
            break
        if status == _kernels.THIN_NEED_DRAWS:
            if e_buf.shape[0] < 1:
                e_buf = np.concatenate([e_buf, rng_e.standard_exponential(cfg.batch_size)])
            if u_buf.shape[0] < 2:
                u_buf = np.concatenate([u_buf, rng_u.random(cfg.batch_size)])
            continue
        if status == _kernels.THIN_OUT_FULL:
            out = _grow(out, n_out, cfg.max_events)
            new_marks = np.empty(out.shape[0], dtype=np.int8)
            new_marks[:n_out] = marks[:n_out]
            marks = new_marks
            continue
        raise SimulationError(
            "intensity exceeded its thinning envelope; the eigendecomposition "
            "is unreliable for this spec")
    return MarkedEventSeries(times=out[:n_out].copy(), horizon=horizon,
                             marks=marks[:n_out].copy())
