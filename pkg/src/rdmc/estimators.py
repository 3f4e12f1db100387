"""Local linear curve estimators for the two potential-outcome regressions.

Between the cutoffs, one group's treated units and the other group's
untreated units coexist, so each potential-outcome regression g_j(x) can be
estimated there.  Three flavors are provided:

* ``naive``  - kernel-weighted least squares on every unit whose observed
  outcome is the target one, ignoring group composition;
* ``ipw``    - the same, restricted to one group and reweighted by that
  group's inverse selection probability;
* ``dr``     - an augmented estimator that combines inverse weighting with an
  outcome regression.  Missing-outcome units enter through their regression
  prediction, observed ones through an inverse-weighted residual correction.

With a unit working variance, the augmented estimating equation collapses to
weighted least squares on pseudo-outcomes

    ytilde_i = (r_i / p_i) y_i - (r_i / p_i - 1) delta_i,

where ``r_i`` flags whether the target outcome is observed and ``p_i`` is the
fitted probability of the unit's own group.  The local normal-equations
matrix is then the plain kernel one; only the response changes.  The test
suite checks this reformulation against a literal term-by-term transcription
of the original estimating equations.

Estimation ranges are one-sided: g_0 uses units with ``x < c1`` and g_1 units
with ``x > c0``, both strict.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, TargetOutcome, Thresholds, UnitRecord
from .errors import (
    AlignmentError,
    ConditioningError,
    ConfigurationError,
    DomainError,
    InsufficientSupportError,
)
from .kernels import kernel_value
from .nuisance import OutcomeFit, PropensityFit, predict_outcome, predict_propensity

COND_LIMIT = 1e12

DEFAULT_GRID_SIZE = 201

_CODE_SUPPORT = "insufficient-support"
_CODE_CONDITIONING = "conditioning"


@dataclass(frozen=True)
class EstimatorMethod:
    """Which estimator to run.  ``ipw_group`` only applies to ``ipw``.

    When ``kind == "ipw"`` and ``ipw_group`` is None, the group defaults to
    the one whose units carry the target outcome between the cutoffs:
    group 1 for g_0, group 0 for g_1.
    """

    kind: str
    ipw_group: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("naive", "ipw", "dr"):
            raise DomainError(f"unknown estimator kind {self.kind!r}")
        if self.ipw_group is not None:
            if self.kind != "ipw":
                raise DomainError("ipw_group is only meaningful for the ipw estimator")
            if self.ipw_group not in (0, 1):
                raise DomainError(f"ipw_group must be 0 or 1, got {self.ipw_group!r}")

    def resolved_group(self, target: TargetOutcome) -> int:
        if self.ipw_group is not None:
            return self.ipw_group
        return 1 if target.j == 0 else 0


NAIVE = EstimatorMethod("naive")
IPW = EstimatorMethod("ipw")
DR = EstimatorMethod("dr")


@dataclass(frozen=True)
class PointDiagnostic:
    """Why a grid point has no estimate."""

    x: float
    code: str
    message: str


@dataclass(frozen=True)
class Curve:
    """A fitted curve on a grid.  Failed points hold NaN and a diagnostic."""

    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    target: TargetOutcome
    method: EstimatorMethod
    bandwidth: float
    kernel: str
    diagnostics: tuple[PointDiagnostic, ...] = ()
    variance: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        if not (self.grid.shape == self.values.shape == self.slopes.shape):
            raise AlignmentError("grid, values and slopes must share a shape")

    def with_variance(self, variance: np.ndarray) -> "Curve":
        variance = np.asarray(variance, dtype=float)
        if variance.shape != self.grid.shape:
            raise AlignmentError("variance must align with the curve grid")
        return replace(self, variance=variance)


def default_grid(thresholds: Thresholds, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equispaced evaluation grid spanning [c0, c1] inclusive."""
    if size < 2:
        raise DomainError("grid needs at least two points")
    return np.linspace(thresholds.c0, thresholds.c1, size)


def range_mask(dataset: Dataset, target: TargetOutcome) -> np.ndarray:
    """Units usable for the target curve: x < c1 for g_0, x > c0 for g_1."""
    if target.j == 0:
        return dataset.x < dataset.thresholds.c1
    return dataset.x > dataset.thresholds.c0


def pseudo_outcome(
    unit: UnitRecord,
    target: TargetOutcome,
    pfit: PropensityFit,
    ofit: OutcomeFit,
    thresholds: Thresholds,
) -> float:
    """Augmented response for one unit.

    ``r = 1(z == j)`` flags whether the unit's observed outcome is the target
    potential outcome, and ``p`` is the fitted probability of the unit's own
    group, so ``r / p`` is the usual inverse weight.  Units with the outcome
    missing (r = 0) reduce to their regression prediction.
    """
    limit_ok = unit.x < thresholds.c1 if target.j == 0 else unit.x > thresholds.c0
    if not limit_ok:
        raise DomainError(
            f"unit at x={unit.x} lies outside the estimation range for g_{target.j}"
        )
    pi = predict_propensity(pfit, unit.x, unit.w)
    p = pi if unit.d == 1 else 1.0 - pi
    r = 1.0 if unit.z == target.j else 0.0
    delta = predict_outcome(ofit, unit.x, unit.w)
    rp = r / p
    return rp * unit.y - (rp - 1.0) * delta


def _pseudo_vector(dataset, target, pfit, ofit, idx):
    """Vectorized pseudo-outcomes for the units selected by ``idx``."""
    x, w = dataset.x[idx], dataset.w[idx]
    pi = predict_propensity(pfit, x, w)
    p = np.where(dataset.d[idx] == 1, pi, 1.0 - pi)
    r = (dataset.z[idx] == target.j).astype(float)
    delta = predict_outcome(ofit, x, w)
    rp = r / p
    return rp * dataset.y[idx] - (rp - 1.0) * delta


@dataclass(frozen=True)
class FitSample:
    """The sample a method solves over: locations, responses, unit weights."""

    x: np.ndarray
    resp: np.ndarray
    unit_w: np.ndarray
    orig_idx: np.ndarray


def build_fit_sample(
    dataset: Dataset,
    target: TargetOutcome,
    method: EstimatorMethod,
    pfit: PropensityFit | None = None,
    ofit: OutcomeFit | None = None,
) -> FitSample:
    """Assemble the estimating sample for a (target, method) pair."""
    in_range = range_mask(dataset, target)
    if method.kind == "naive":
        idx = np.flatnonzero(in_range & (dataset.z == target.j))
        return FitSample(dataset.x[idx], dataset.y[idx], np.ones(idx.size), idx)
    if method.kind == "ipw":
        if pfit is None:
            raise ConfigurationError("the ipw estimator needs a propensity fit")
        g = method.resolved_group(target)
        idx = np.flatnonzero(in_range & (dataset.z == target.j) & (dataset.d == g))
        pi = predict_propensity(pfit, dataset.x[idx], dataset.w[idx])
        p = pi if g == 1 else 1.0 - pi
        return FitSample(dataset.x[idx], dataset.y[idx], 1.0 / p, idx)
    if pfit is None or ofit is None:
        raise ConfigurationError("the dr estimator needs both nuisance fits")
    if ofit.target.j != target.j:
        raise ConfigurationError(
            f"outcome fit targets g_{ofit.target.j} but the curve targets g_{target.j}"
        )
    idx = np.flatnonzero(in_range)
    resp = _pseudo_vector(dataset, target, pfit, ofit, idx)
    return FitSample(dataset.x[idx], resp, np.ones(idx.size), idx)


def _solve_at_points(x_fit, resp, unit_w, points, h, kernel, chunk=256):
    """Weighted local linear solve at many points.

    Returns (values, slopes, ok, codes); failed points get NaN and a short
    code.  The per-point normal equations use the centered moments

        s_a = sum_l w_l (x_l - x0)^a,   t_a = sum_l w_l (x_l - x0)^a resp_l

    and Cramer's rule on the 2x2 system.  Feasibility asks for at least two
    distinct supported locations, a positive determinant, and a condition
    number below 1e12.
    """
    points = np.asarray(points, dtype=float)
    m = points.size
    values = np.full(m, np.nan)
    slopes = np.full(m, np.nan)
    ok = np.zeros(m, dtype=bool)
    codes: list[str | None] = [None] * m
    if x_fit.size == 0:
        for k in range(m):
            codes[k] = _CODE_SUPPORT
        return values, slopes, ok, codes
    for lo in range(0, m, chunk):
        pts = points[lo : lo + chunk]
        dx = x_fit[None, :] - pts[:, None]
        u = dx / h
        w = unit_w[None, :] * (kernel_value(kernel, u) / h)
        support = w > 0.0
        nsup = support.sum(axis=1)
        xmax = np.max(np.where(support, x_fit[None, :], -np.inf), axis=1)
        xmin = np.min(np.where(support, x_fit[None, :], np.inf), axis=1)
        spread = np.where(nsup > 0, xmax - xmin, 0.0)
        s0 = w.sum(axis=1)
        s1 = (w * dx).sum(axis=1)
        s2 = (w * dx * dx).sum(axis=1)
        t0 = (w * resp[None, :]).sum(axis=1)
        t1 = (w * dx * resp[None, :]).sum(axis=1)
        det = s0 * s2 - s1 * s1
        tr = s0 + s2
        disc = np.sqrt(np.maximum((s0 - s2) * (s0 - s2) + 4.0 * s1 * s1, 0.0))
        lmax = 0.5 * (tr + disc)
        has_support = (nsup >= 2) & (spread > 0.0)
        well_posed = has_support & (det > 0.0) & (lmax * lmax <= COND_LIMIT * det)
        with np.errstate(divide="ignore", invalid="ignore"):
            a0 = (s2 * t0 - s1 * t1) / det
            a1 = (s0 * t1 - s1 * t0) / det
        sl = slice(lo, lo + pts.size)
        values[sl] = np.where(well_posed, a0, np.nan)
        slopes[sl] = np.where(well_posed, a1, np.nan)
        ok[sl] = well_posed
        for k in np.flatnonzero(~well_posed):
            codes[lo + k] = _CODE_SUPPORT if not has_support[k] else _CODE_CONDITIONING
    return values, slopes, ok, codes


def local_linear_solve(samples, x0: float, h: float, kernel: str = "epanechnikov"):
    """Kernel-weighted linear fit of (x, y) pairs at a single point.

    Returns ``(value, slope)``, the local intercept and slope at ``x0``.

    Raises
    ------
    InsufficientSupportError
        When fewer than two distinct sample locations carry positive weight.
    ConditioningError
        When the local normal equations are numerically singular.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("samples must be (x, y) pairs")
    if not (h > 0.0) or not np.isfinite(h):
        raise DomainError(f"bandwidth must be positive and finite, got {h!r}")
    x, y = arr[:, 0], arr[:, 1]
    values, slopes, ok, codes = _solve_at_points(x, y, np.ones(x.size), np.array([x0]), h, kernel)
    if not ok[0]:
        if codes[0] == _CODE_SUPPORT:
            raise InsufficientSupportError(
                f"fewer than two distinct supported points at x0={x0} with h={h}"
            )
        raise ConditioningError(f"local normal equations are singular at x0={x0} with h={h}")
    return float(values[0]), float(slopes[0])


def _check_grid(dataset: Dataset, target: TargetOutcome, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
        raise DomainError("grid must be a non-empty 1-d array of finite points")
    th = dataset.thresholds
    if target.j == 0:
        lo, hi = float(np.min(dataset.x)), th.c1
    else:
        lo, hi = th.c0, float(np.max(dataset.x))
    if np.min(grid) < lo or np.max(grid) > hi:
        raise DomainError(
            f"grid for g_{target.j} must stay within [{lo}, {hi}];"
            f" got [{np.min(grid)}, {np.max(grid)}]"
        )
    return grid


def estimate_curve(
    dataset: Dataset,
    target: TargetOutcome,
    method: EstimatorMethod,
    h: float,
    grid: np.ndarray | None = None,
    pfit: PropensityFit | None = None,
    ofit: OutcomeFit | None = None,
    kernel: str = "epanechnikov",
) -> Curve:
    """Estimate g_j on a grid.

    A point where the local system cannot be solved is reported through
    ``curve.diagnostics`` and left NaN; the rest of the curve is unaffected.
    Grid points must stay within [min x, c1] for g_0 and [c0, max x] for g_1.
    """
    if not (h > 0.0) or not np.isfinite(h):
        raise DomainError(f"bandwidth must be positive and finite, got {h!r}")
    if grid is None:
        grid = default_grid(dataset.thresholds)
    grid = _check_grid(dataset, target, grid)
    fs = build_fit_sample(dataset, target, method, pfit, ofit)
    values, slopes, ok, codes = _solve_at_points(fs.x, fs.resp, fs.unit_w, grid, h, kernel)
    diags = tuple(
        PointDiagnostic(float(grid[k]), codes[k], f"{codes[k]} at x={grid[k]:.6g} (h={h:.6g})")
        for k in np.flatnonzero(~ok)
    )
    return Curve(
        grid=grid,
        values=values,
        slopes=slopes,
        target=target,
        method=method,
        bandwidth=float(h),
        kernel=kernel,
        diagnostics=diags,
    )


def loo_estimate(
    dataset: Dataset,
    target: TargetOutcome,
    method: EstimatorMethod,
    h: float,
    i: int,
    pfit: PropensityFit | None = None,
    ofit: OutcomeFit | None = None,
    kernel: str = "epanechnikov",
) -> tuple[float, float]:
    """Curve estimate at unit i's location with unit i withheld from the sum.

    The unit must be in range with its observed outcome equal to the target
    one (that is what the cross-validation score evaluates).  When the unit
    does not belong to the method's estimating sample (an ipw fit of the
    other group), withholding it is a no-op and this equals the plain
    estimate at x_i.  Nuisance fits are taken as given, not refit.
    """
    if not (0 <= i < dataset.n):
        raise DomainError(f"unit index {i} out of bounds for n={dataset.n}")
    if dataset.z[i] != target.j or not range_mask(dataset, target)[i]:
        raise DomainError(
            f"unit {i} is not an evaluation unit for g_{target.j}"
            " (needs z == j and x inside the estimation range)"
        )
    fs = build_fit_sample(dataset, target, method, pfit, ofit)
    keep = fs.orig_idx != i
    x0 = float(dataset.x[i])
    values, slopes, ok, codes = _solve_at_points(
        fs.x[keep], fs.resp[keep], fs.unit_w[keep], np.array([x0]), h, kernel
    )
    if not ok[0]:
        if codes[0] == _CODE_SUPPORT:
            raise InsufficientSupportError(
                f"leave-one-out fit at unit {i} (x={x0}) has insufficient support at h={h}"
            )
        raise ConditioningError(f"leave-one-out normal equations singular at unit {i} (x={x0})")
    return float(values[0]), float(slopes[0])
