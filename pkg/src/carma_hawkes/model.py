"""Specifications for state-space self-exciting point processes.

The univariate process has conditional intensity

    lambda_t = mu + b' X_t,        dX_t = A X_{t-} dt + e dN_t,   X_0 = 0,

where A is the p x p companion matrix of the autoregressive coefficients
(a_1, ..., a_p), e = (0, ..., 0, 1)' and b = (b_0, ..., b_{p-1})' holds the
moving-average coefficients, zero beyond index q.  Solving the state equation
gives X_t = sum_{T_k <= t} exp(A (t - T_k)) e, so the excitation kernel is
h(t) = b' exp(A t) e and the stationarity condition is that the kernel
integral -b' A^{-1} e stays below one.

The bivariate variant runs one state block per component and couples them
through the 2 x (p1 + p2) coefficient matrix
B = [[b11', b12'], [b21', b22']]:

    lambda_{t,1} = mu_1 + b11' X_{t,1} + b12' X_{t,2}
    lambda_{t,2} = mu_2 + b21' X_{t,1} + b22' X_{t,2}

with block-diagonal drift diag(A_1, A_2) and one jump column per component.

Specs are frozen value objects.  Construction enforces shapes, baseline
positivity and the zero padding of the moving-average vectors; the numerical
invariants (spectrum, kernel non-negativity, branching ratio) are checked by
:func:`validate`, which returns a per-invariant report instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import SpecificationError

__all__ = [
    "UnivariateOrder",
    "BivariateOrder",
    "UnivariateSpec",
    "BivariateSpec",
    "EventSeries",
    "MarkedEventSeries",
    "ValidationCheck",
    "ValidationReport",
    "companion",
    "matrix_exponential",
    "kernel",
    "kernel_matrix",
    "branching_ratio",
    "branching_matrix",
    "validate",
    "validate_params",
    "validate_bivariate_params",
    "intensity_path",
    "spec_to_dict",
    "spec_from_dict",
]

# Numerical tolerances shared across validation and fitting.
EIG_DISTINCT_RTOL = 1e-8      # min pairwise eigenvalue gap, relative to spectral radius
EIG_STABLE_TOL = 1e-10        # max Re(eig) must be below -EIG_STABLE_TOL
KERNEL_TOL = 1e-12            # kernel may not dip below -KERNEL_TOL on the screen grid
KERNEL_GRID_POINTS = 512
KERNEL_GRID_FOLDS = 10.0      # screen horizon: this many e-foldings of the slowest mode

# Eigen separation (relative to the spectral radius) below which the fast
# diagonalized recursions are considered ill-conditioned and callers fall
# back to matrix-exponential propagation.
FAST_PATH_SEP_RTOL = 1e-6


def _as_float_vector(x, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise SpecificationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise SpecificationError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise SpecificationError(f"{name} must be finite")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Orders


@dataclass(frozen=True)
class UnivariateOrder:
    """Autoregressive order p >= 1 and moving-average order 0 <= q < p."""

    p: int
    q: int

    def __post_init__(self) -> None:
        p, q = self.p, self.q
        if not (isinstance(p, (int, np.integer)) and isinstance(q, (int, np.integer))):
            raise SpecificationError("order components must be integers")
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "q", int(q))
        if self.p < 1:
            raise SpecificationError(f"p must be >= 1, got {self.p}")
        if not (0 <= self.q < self.p):
            raise SpecificationError(f"q must satisfy 0 <= q < p, got q={self.q}, p={self.p}")

    @property
    def n_params(self) -> int:
        """Free parameters: mu, p autoregressive and q+1 moving-average coefficients."""
        return 1 + self.p + self.q + 1

    @property
    def bivariate(self) -> bool:
        return False


@dataclass(frozen=True)
class BivariateOrder:
    """Orders (p1, p2) and (q1, q12, q21, q2) of a two-component model.

    q1 and q21 index coefficients on the first state block (bounded by p1);
    q12 and q2 index coefficients on the second block (bounded by p2).
    """

    p: tuple[int, int]
    q: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        try:
            p = tuple(int(v) for v in self.p)
            q = tuple(int(v) for v in self.q)
        except TypeError as exc:
            raise SpecificationError("orders must be sequences of integers") from exc
        if len(p) != 2 or len(q) != 4:
            raise SpecificationError("bivariate order needs p = (p1, p2) and q = (q1, q12, q21, q2)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        p1, p2 = p
        q1, q12, q21, q2 = q
        if p1 < 1 or p2 < 1:
            raise SpecificationError(f"p components must be >= 1, got {p}")
        for name, qv, bound in (("q1", q1, p1), ("q12", q12, p2), ("q21", q21, p1), ("q2", q2, p2)):
            if not (0 <= qv < bound):
                raise SpecificationError(f"{name} must satisfy 0 <= {name} < {bound}, got {qv}")

    @property
    def n_params(self) -> int:
        q1, q12, q21, q2 = self.q
        return 2 + self.p[0] + self.p[1] + (q1 + 1) + (q12 + 1) + (q21 + 1) + (q2 + 1)

    @property
    def bivariate(self) -> bool:
        return True


# ---------------------------------------------------------------------------
# Event series


@dataclass(frozen=True)
class EventSeries:
    """Strictly increasing event times on (0, horizon]."""

    times: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        times = _as_float_vector(self.times, "times")
        horizon = float(self.horizon)
        if not math.isfinite(horizon) or horizon <= 0.0:
            raise SpecificationError(f"horizon must be finite and positive, got {horizon}")
        if times.size:
            if times[0] <= 0.0:
                raise SpecificationError("event times must be strictly positive")
            if np.any(np.diff(times) <= 0.0):
                raise SpecificationError("event times must be strictly increasing")
            if times[-1] > horizon:
                raise SpecificationError(
                    f"last event time {times[-1]} exceeds horizon {horizon}"
                )
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "horizon", horizon)

    @property
    def n(self) -> int:
        return int(self.times.shape[0])


@dataclass(frozen=True)
class MarkedEventSeries(EventSeries):
    """Event times with marks in {+1, -1}."""

    marks: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.marks is None:
            raise SpecificationError("marks are required")
        marks = np.asarray(self.marks)
        if marks.ndim != 1 or marks.shape[0] != self.times.shape[0]:
            raise SpecificationError("marks must be one-dimensional and aligned with times")
        marks = marks.astype(np.int8, copy=True)
        if marks.size and not np.all(np.abs(marks) == 1):
            raise SpecificationError("marks must be +1 or -1")
        object.__setattr__(self, "marks", _freeze(marks))

    @property
    def counts(self) -> tuple[int, int]:
        """(number of +1 events, number of -1 events)."""
        pos = int(np.count_nonzero(self.marks > 0))
        return pos, self.n - pos

    def component_times(self, mark: int) -> np.ndarray:
        if mark not in (1, -1):
            raise SpecificationError("mark must be +1 or -1")
        return self.times[self.marks == mark]


# ---------------------------------------------------------------------------
# Specs


def _pad_ma(b, q: int, p: int, name: str) -> np.ndarray:
    """Accept b of length q+1 (free coefficients) or length p with a zero tail."""
    arr = np.asarray(b, dtype=np.float64)
    if arr.ndim != 1:
        raise SpecificationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise SpecificationError(f"{name} must be finite")
    if arr.shape[0] == q + 1:
        out = np.zeros(p)
        out[: q + 1] = arr
        return out
    if arr.shape[0] == p:
        if np.any(arr[q + 1 :] != 0.0):
            raise SpecificationError(
                f"{name} must be zero beyond index q={q} (zero padding)"
            )
        return arr.copy()
    raise SpecificationError(
        f"{name} must have length q+1={q + 1} or p={p}, got {arr.shape[0]}"
    )


@dataclass(frozen=True)
class UnivariateSpec:
    """Parameters (mu, a, b) of a univariate model of the given order."""

    order: UnivariateOrder
    mu: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.order, UnivariateOrder):
            raise SpecificationError("order must be a UnivariateOrder")
        mu = float(self.mu)
        if not math.isfinite(mu) or mu <= 0.0:
            raise SpecificationError(f"mu must be finite and > 0, got {mu}")
        a = _as_float_vector(self.a, "a", self.order.p)
        b = _pad_ma(self.b, self.order.q, self.order.p, "b")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "b", _freeze(b))


@dataclass(frozen=True)
class BivariateSpec:
    """Parameters of a two-component model.

    b11 and b21 act on the first state block (length p1), b12 and b22 on the
    second (length p2); each is zero beyond its own q index.
    """

    order: BivariateOrder
    mu: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.order, BivariateOrder):
            raise SpecificationError("order must be a BivariateOrder")
        p1, p2 = self.order.p
        q1, q12, q21, q2 = self.order.q
        mu = _as_float_vector(self.mu, "mu", 2)
        if np.any(mu <= 0.0):
            raise SpecificationError(f"both baselines must be > 0, got {mu}")
        a1 = _as_float_vector(self.a1, "a1", p1)
        a2 = _as_float_vector(self.a2, "a2", p2)
        b11 = _pad_ma(self.b11, q1, p1, "b11")
        b12 = _pad_ma(self.b12, q12, p2, "b12")
        b21 = _pad_ma(self.b21, q21, p1, "b21")
        b22 = _pad_ma(self.b22, q2, p2, "b22")
        for name, arr in (("mu", mu), ("a1", a1), ("a2", a2), ("b11", b11),
                          ("b12", b12), ("b21", b21), ("b22", b22)):
            object.__setattr__(self, name, _freeze(arr))

    def coupling_matrix(self) -> np.ndarray:
        """The 2 x (p1 + p2) matrix B = [[b11', b12'], [b21', b22']]."""
        return np.vstack([
            np.concatenate([self.b11, self.b12]),
            np.concatenate([self.b21, self.b22]),
        ])

    def block_matrix(self) -> np.ndarray:
        """Block-diagonal drift diag(A1, A2)."""
        return scipy.linalg.block_diag(companion(self.a1), companion(self.a2))

    def jump_matrix(self) -> np.ndarray:
        """(p1 + p2) x 2 matrix with one unit jump column per component."""
        p1, p2 = self.order.p
        e = np.zeros((p1 + p2, 2))
        e[p1 - 1, 0] = 1.0
        e[p1 + p2 - 1, 1] = 1.0
        return e


# ---------------------------------------------------------------------------
# Linear-algebra primitives


def companion(a) -> np.ndarray:
    """Companion matrix: ones on the superdiagonal, last row (-a_p, ..., -a_1)."""
    a = _as_float_vector(a, "a")
    p = a.shape[0]
    out = np.zeros((p, p))
    if p > 1:
        out[np.arange(p - 1), np.arange(1, p)] = 1.0
    out[-1, :] = -a[::-1]
    return out


def matrix_exponential(m) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring (Pade order 13)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SpecificationError(f"matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise SpecificationError("matrix entries must be finite")
    out = scipy.linalg.expm(m)
    if not np.all(np.isfinite(out)):
        raise SpecificationError("matrix exponential overflowed")
    return out


@dataclass(frozen=True)
class _EigenBasis:
    eig: np.ndarray       # (p,) complex eigenvalues
    v: np.ndarray         # (p, p) eigenvector matrix
    w: np.ndarray         # (p,) V^{-1} e
    max_re: float
    sep_ratio: float      # min pairwise gap / spectral radius (inf for p = 1)


def _eigen_basis(a: np.ndarray) -> _EigenBasis:
    A = companion(a)
    eig, v = np.linalg.eig(A)
    p = eig.shape[0]
    e = np.zeros(p, dtype=np.complex128)
    e[-1] = 1.0
    radius = float(np.max(np.abs(eig))) if p else 0.0
    if p == 1:
        sep_ratio = math.inf
        w = e / v[0, 0]
    else:
        gaps = np.abs(eig[:, None] - eig[None, :])
        np.fill_diagonal(gaps, np.inf)
        min_gap = float(gaps.min())
        sep_ratio = min_gap / radius if radius > 0.0 else 0.0
        try:
            w = np.linalg.solve(v, e)
        except np.linalg.LinAlgError:
            w = np.full(p, np.nan, dtype=np.complex128)
            sep_ratio = 0.0
    return _EigenBasis(eig=eig, v=v, w=w, max_re=float(eig.real.max()), sep_ratio=sep_ratio)


def _kernel_modes(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, _EigenBasis]:
    """(eig, coef) with h(t) = Re(sum_j coef_j exp(eig_j t))."""
    basis = _eigen_basis(a)
    bv = b.astype(np.complex128) @ basis.v
    return basis.eig, bv * basis.w, basis


def _kernel_expm(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    A = companion(a)
    out = np.empty(t.shape[0])
    for i, ti in enumerate(t):
        out[i] = b @ matrix_exponential(A * ti)[:, -1]
    return out


def kernel(spec: UnivariateSpec, t):
    """Excitation kernel h(t) = b' exp(A t) e, vectorized over t."""
    if not isinstance(spec, UnivariateSpec):
        raise SpecificationError("kernel expects a UnivariateSpec; see kernel_matrix for bivariate")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr < 0.0):
        raise SpecificationError("kernel times must be finite and non-negative")
    eig, coef, basis = _kernel_modes(spec.a, spec.b)
    if basis.sep_ratio >= FAST_PATH_SEP_RTOL:
        vals = (np.exp(t_arr[:, None] * eig[None, :]) @ coef).real
    else:
        vals = _kernel_expm(spec.a, spec.b, t_arr)
    return vals if np.ndim(t) else float(vals[0])


def kernel_matrix(spec: BivariateSpec, t):
    """All four kernels h_kl(t) = b_kl' exp(A_l t) e_l, shape (..., 2, 2)."""
    if not isinstance(spec, BivariateSpec):
        raise SpecificationError("kernel_matrix expects a BivariateSpec")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr < 0.0):
        raise SpecificationError("kernel times must be finite and non-negative")
    out = np.empty((t_arr.shape[0], 2, 2))
    pairs = {
        (0, 0): (spec.a1, spec.b11),
        (0, 1): (spec.a2, spec.b12),
        (1, 0): (spec.a1, spec.b21),
        (1, 1): (spec.a2, spec.b22),
    }
    for (k, l), (a, b) in pairs.items():
        eig, coef, basis = _kernel_modes(a, b)
        if basis.sep_ratio >= FAST_PATH_SEP_RTOL:
            out[:, k, l] = (np.exp(t_arr[:, None] * eig[None, :]) @ coef).real
        else:
            out[:, k, l] = _kernel_expm(a, b, t_arr)
    return out if np.ndim(t) else out[0]


def branching_ratio(spec: UnivariateSpec) -> float:
    """Kernel integral -b' A^{-1} e (mean offspring per event)."""
    if not isinstance(spec, UnivariateSpec):
        raise SpecificationError("branching_ratio expects a UnivariateSpec")
    return _branching_value(spec.a, spec.b)


def _branching_value(a: np.ndarray, b: np.ndarray) -> float:
    A = companion(a)
    e = np.zeros(a.shape[0])
    e[-1] = 1.0
    try:
        x = np.linalg.solve(A, e)
    except np.linalg.LinAlgError as exc:
        raise SpecificationError("companion matrix is singular; kernel integral undefined") from exc
    return float(-b @ x)


def branching_matrix(spec: BivariateSpec) -> np.ndarray:
    """2 x 2 matrix of kernel integrals; spectral radius < 1 means stationary."""
    if not isinstance(spec, BivariateSpec):
        raise SpecificationError("branching_matrix expects a BivariateSpec")
    return np.array([
        [_branching_value(spec.a1, spec.b11), _branching_value(spec.a2, spec.b12)],
        [_branching_value(spec.a1, spec.b21), _branching_value(spec.a2, spec.b22)],
    ])


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ValidationCheck, ...]
    valid: bool

    @property
    def failures(self) -> tuple[ValidationCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def summary(self) -> str:
        if self.valid:
            return "valid"
        return "invalid: " + "; ".join(f"{c.name} ({c.detail})" for c in self.failures)


def _screen_grid(eig: np.ndarray) -> np.ndarray:
    """Geometric screen grid over ten e-foldings of the slowest mode, plus t = 0."""
    min_abs_re = float(np.min(np.abs(eig.real)))
    span = KERNEL_GRID_FOLDS / min_abs_re
    grid = np.geomspace(span * 1e-6, span, KERNEL_GRID_POINTS)
    return np.concatenate([[0.0], grid])


def _kernel_min(a: np.ndarray, b: np.ndarray, basis: _EigenBasis) -> float:
    grid = _screen_grid(basis.eig)
    if basis.sep_ratio >= FAST_PATH_SEP_RTOL:
        bv = b.astype(np.complex128) @ basis.v
        coef = bv * basis.w
        vals = (np.exp(grid[:, None] * basis.eig[None, :]) @ coef).real
    else:
        vals = _kernel_expm(a, b, grid)
    return float(vals.min())


def _spectrum_checks(a: np.ndarray, label: str = "") -> tuple[list[ValidationCheck], _EigenBasis]:
    basis = _eigen_basis(a)
    tag = f"{label}: " if label else ""
    stable = basis.max_re < -EIG_STABLE_TOL
    checks = [ValidationCheck(
        "spectrum_stable", stable, f"{tag}max Re(eig) = {basis.max_re:.6g}")]
    distinct = basis.sep_ratio > EIG_DISTINCT_RTOL
    checks.append(ValidationCheck(
        "spectrum_distinct", distinct,
        f"{tag}min gap / radius = {basis.sep_ratio:.3g}"))
    return checks, basis


def validate_params(order: UnivariateOrder, mu: float, a, b) -> ValidationReport:
    """Check the numerical invariants of a univariate parameter set.

    Unlike spec construction this never raises for bad values; every
    invariant lands in the report, which is what the optimizer and the CLI
    consume.
    """
    if not isinstance(order, UnivariateOrder):
        raise SpecificationError("order must be a UnivariateOrder")
    a = _as_float_vector(a, "a", order.p)
    b_arr = np.asarray(b, dtype=np.float64)
    checks: list[ValidationCheck] = []
    mu = float(mu)
    checks.append(ValidationCheck(
        "baseline_positivity", math.isfinite(mu) and mu > 0.0, f"mu = {mu:.6g}"))
    try:
        b_arr = _pad_ma(b_arr, order.q, order.p, "b")
        checks.append(ValidationCheck("ma_padding", True, "zero beyond q"))
    except SpecificationError as exc:
        checks.append(ValidationCheck("ma_padding", False, str(exc)))
        return ValidationReport(tuple(checks), False)
    spec_checks, basis = _spectrum_checks(a)
    checks.extend(spec_checks)
    stable = spec_checks[0].passed
    if stable:
        kmin = _kernel_min(a, b_arr, basis)
        checks.append(ValidationCheck(
            "kernel_nonnegative", kmin >= -KERNEL_TOL, f"min h = {kmin:.6g}"))
        eta = _branching_value(a, b_arr)
        checks.append(ValidationCheck(
            "branching_ratio", eta < 1.0, f"kernel integral = {eta:.6g}"))
    else:
        checks.append(ValidationCheck(
            "kernel_nonnegative", False, "not evaluated: unstable spectrum"))
        checks.append(ValidationCheck(
            "branching_ratio", False, "not evaluated: unstable spectrum"))
    return ValidationReport(tuple(checks), all(c.passed for c in checks))


def validate_bivariate_params(order: BivariateOrder, mu, a1, a2, b11, b12, b21, b22) -> ValidationReport:
    """Bivariate analogue of :func:`validate_params`."""
    if not isinstance(order, BivariateOrder):
        raise SpecificationError("order must be a BivariateOrder")
    p1, p2 = order.p
    q1, q12, q21, q2 = order.q
    mu = _as_float_vector(mu, "mu", 2)
    a1 = _as_float_vector(a1, "a1", p1)
    a2 = _as_float_vector(a2, "a2", p2)
    checks: list[ValidationCheck] = []
    checks.append(ValidationCheck(
        "baseline_positivity", bool(np.all(mu > 0.0)), f"mu = ({mu[0]:.6g}, {mu[1]:.6g})"))
    mas = []
    pad_ok = True
    detail = "zero beyond q"
    for name, arr, qv, pv in (("b11", b11, q1, p1), ("b12", b12, q12, p2),
                              ("b21", b21, q21, p1), ("b22", b22, q2, p2)):
        try:
            mas.append(_pad_ma(np.asarray(arr, dtype=np.float64), qv, pv, name))
        except SpecificationError as exc:
            pad_ok = False
            detail = str(exc)
            break
    checks.append(ValidationCheck("ma_padding", pad_ok, detail))
    if not pad_ok:
        return ValidationReport(tuple(checks), False)
    b11, b12, b21, b22 = mas
    checks1, basis1 = _spectrum_checks(a1, "block 1")
    checks2, basis2 = _spectrum_checks(a2, "block 2")
    # merge per-name, both blocks must pass
    for c1, c2 in zip(checks1, checks2):
        checks.append(ValidationCheck(
            c1.name, c1.passed and c2.passed, f"{c1.detail}; {c2.detail}"))
    stable = checks1[0].passed and checks2[0].passed
    if stable:
        min_eig = min(float(np.min(np.abs(basis1.eig))), float(np.min(np.abs(basis2.eig))))
        checks.append(ValidationCheck(
            "block_matrix_invertible", min_eig > 0.0, f"min |eig| = {min_eig:.6g}"))
        kmins = {
            "h11": _kernel_min(a1, b11, basis1),
            "h12": _kernel_min(a2, b12, basis2),
            "h21": _kernel_min(a1, b21, basis1),
            "h22": _kernel_min(a2, b22, basis2),
        }
        worst = min(kmins.values())
        checks.append(ValidationCheck(
            "kernel_nonnegative", worst >= -KERNEL_TOL,
            ", ".join(f"min {k} = {v:.3g}" for k, v in kmins.items())))
        q_mat = np.array([
            [_branching_value(a1, b11), _branching_value(a2, b12)],
            [_branching_value(a1, b21), _branching_value(a2, b22)],
        ])
        rho = float(np.max(np.abs(np.linalg.eigvals(q_mat))))
        checks.append(ValidationCheck(
            "branching_ratio", rho < 1.0, f"spectral radius = {rho:.6g}"))
    else:
        for name in ("block_matrix_invertible", "kernel_nonnegative", "branching_ratio"):
            checks.append(ValidationCheck(name, False, "not evaluated: unstable spectrum"))
    return ValidationReport(tuple(checks), all(c.passed for c in checks))


def validate(spec) -> ValidationReport:
    """Per-invariant validity report for a constructed spec."""
    if isinstance(spec, UnivariateSpec):
        return validate_params(spec.order, spec.mu, spec.a, spec.b)
    if isinstance(spec, BivariateSpec):
        return validate_bivariate_params(
            spec.order, spec.mu, spec.a1, spec.a2,
            spec.b11, spec.b12, spec.b21, spec.b22)
    raise SpecificationError(f"cannot validate object of type {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Intensity paths


def _check_grid(grid, horizon: float) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if arr.ndim != 1:
        raise SpecificationError("grid must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise SpecificationError("grid times must be finite")
    if arr.size and (arr.min() < 0.0 or arr.max() > horizon):
        raise SpecificationError("grid times must lie in [0, horizon]")
    return arr


def intensity_path(spec, events, grid):
    """Conditional intensity on a grid, using left limits at event times.

    For a grid time equal to an event time the returned value excludes that
    event's jump, matching the intensity the likelihood evaluates.  Returns
    shape (m,) for univariate specs and (m, 2) for bivariate ones.
    """
    if isinstance(spec, UnivariateSpec):
        if not isinstance(events, EventSeries) or isinstance(events, MarkedEventSeries):
            raise SpecificationError("univariate intensity_path expects an EventSeries")
        grid_arr = _check_grid(grid, events.horizon)
        basis = _eigen_basis(spec.a)
        if basis.sep_ratio < FAST_PATH_SEP_RTOL:
            vals = _intensity_expm_uni(spec, events, grid_arr)
        else:
            bv = spec.b.astype(np.complex128) @ basis.v
            states = _kernels.event_states(events.times, basis.eig, basis.w)
            idx = np.searchsorted(events.times, grid_arr, side="left")
            t0 = np.concatenate([[0.0], events.times])
            dt = grid_arr - t0[idx]
            vals = spec.mu + ((states[idx] * np.exp(dt[:, None] * basis.eig[None, :])) @ bv).real
        return vals if np.ndim(grid) else float(vals[0])
    if isinstance(spec, BivariateSpec):
        if not isinstance(events, MarkedEventSeries):
            raise SpecificationError("bivariate intensity_path expects a MarkedEventSeries")
        grid_arr = _check_grid(grid, events.horizon)
        basis1 = _eigen_basis(spec.a1)
        basis2 = _eigen_basis(spec.a2)
        if min(basis1.sep_ratio, basis2.sep_ratio) < FAST_PATH_SEP_RTOL:
            vals = _intensity_expm_biv(spec, events, grid_arr)
        else:
            s1, s2 = _kernels.event_states_biv(
                events.times, events.marks, basis1.eig, basis1.w, basis2.eig, basis2.w)
            idx = np.searchsorted(events.times, grid_arr, side="left")
            t0 = np.concatenate([[0.0], events.times])
            dt = grid_arr - t0[idx]
            e1 = s1[idx] * np.exp(dt[:, None] * basis1.eig[None, :])
            e2 = s2[idx] * np.exp(dt[:, None] * basis2.eig[None, :])
            b = [arr.astype(np.complex128) for arr in (spec.b11, spec.b12, spec.b21, spec.b22)]
            bv11, bv21 = b[0] @ basis1.v, b[2] @ basis1.v
            bv12, bv22 = b[1] @ basis2.v, b[3] @ basis2.v
            vals = np.empty((grid_arr.shape[0], 2))
            vals[:, 0] = spec.mu[0] + (e1 @ bv11).real + (e2 @ bv12).real
            vals[:, 1] = spec.mu[1] + (e1 @ bv21).real + (e2 @ bv22).real
        return vals if np.ndim(grid) else vals[0]
    raise SpecificationError(f"cannot evaluate intensity for type {type(spec).__name__}")


def _intensity_expm_uni(spec: UnivariateSpec, events: EventSeries, grid: np.ndarray) -> np.ndarray:
    # Reference path: exact piecewise propagation with matrix exponentials.
    A = companion(spec.a)
    e = np.zeros(spec.order.p)
    e[-1] = 1.0
    times = events.times
    states = [np.zeros(spec.order.p)]
    t_prev = 0.0
    for tk in times:
        x = matrix_exponential(A * (tk - t_prev)) @ states[-1] + e
        states.append(x)
        t_prev = tk
    t0 = np.concatenate([[0.0], times])
    idx = np.searchsorted(times, grid, side="left")
    out = np.empty(grid.shape[0])
    for i, (t, k) in enumerate(zip(grid, idx)):
        out[i] = spec.mu + spec.b @ (matrix_exponential(A * (t - t0[k])) @ states[k])
    return out


def _intensity_expm_biv(spec: BivariateSpec, events: MarkedEventSeries, grid: np.ndarray) -> np.ndarray:
    abar = spec.block_matrix()
    ebar = spec.jump_matrix()
    bmat = spec.coupling_matrix()
    times = events.times
    states = [np.zeros(abar.shape[0])]
    t_prev = 0.0
    for tk, mk in zip(times, events.marks):
        x = matrix_exponential(abar * (tk - t_prev)) @ states[-1]
        x += ebar[:, 0] if mk > 0 else ebar[:, 1]
        states.append(x)
        t_prev = tk
    t0 = np.concatenate([[0.0], times])
    idx = np.searchsorted(times, grid, side="left")
    out = np.empty((grid.shape[0], 2))
    for i, (t, k) in enumerate(zip(grid, idx)):
        out[i] = spec.mu + bmat @ (matrix_exponential(abar * (t - t0[k])) @ states[k])
    return out


# ---------------------------------------------------------------------------
# Serialization


def spec_to_dict(spec) -> dict:
    """JSON-friendly representation of a spec (round-trips via spec_from_dict)."""
    if isinstance(spec, UnivariateSpec):
        return {
            "kind": "univariate",
            "p": spec.order.p,
            "q": spec.order.q,
            "mu": spec.mu,
            "a": spec.a.tolist(),
            "b": spec.b[: spec.order.q + 1].tolist(),
        }
    if isinstance(spec, BivariateSpec):
        q1, q12, q21, q2 = spec.order.q
        return {
            "kind": "bivariate",
            "p": list(spec.order.p),
            "q": list(spec.order.q),
            "mu": spec.mu.tolist(),
            "a1": spec.a1.tolist(),
            "a2": spec.a2.tolist(),
            "b11": spec.b11[: q1 + 1].tolist(),
            "b12": spec.b12[: q12 + 1].tolist(),
            "b21": spec.b21[: q21 + 1].tolist(),
            "b22": spec.b22[: q2 + 1].tolist(),
        }
    raise SpecificationError(f"cannot serialize object of type {type(spec).__name__}")


def spec_from_dict(data: dict):
    """Inverse of :func:`spec_to_dict`."""
    try:
        kind = data["kind"]
    except (TypeError, KeyError) as exc:
        raise SpecificationError("spec dictionary needs a 'kind' field") from exc
    try:
        if kind == "univariate":
            order = UnivariateOrder(data["p"], data["q"])
            return UnivariateSpec(order=order, mu=data["mu"], a=data["a"], b=data["b"])
        if kind == "bivariate":
            order = BivariateOrder(tuple(data["p"]), tuple(data["q"]))
            return BivariateSpec(
                order=order, mu=data["mu"], a1=data["a1"], a2=data["a2"],
                b11=data["b11"], b12=data["b12"], b21=data["b21"], b22=data["b22"])
    except KeyError as exc:
        raise SpecificationError(f"spec dictionary is missing field {exc}") from exc
    raise SpecificationError(f"unknown spec kind {kind!r}")
