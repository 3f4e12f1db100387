"""Treatment-effect curves, plug-in variance, and confidence bands.

The effect curve is the pointwise difference of the two potential-outcome
curves on a shared grid strictly between the cutoffs.  Its variance adds the
two curve variances; the curves are estimated from overlapping samples, so
this ignores their covariance and is documented as an approximation.

The plug-in variance of the augmented estimator at an interior point x is

    Var(ghat(x)) = (r_K / fhat(x)) * m2hat(x) / (n h),

where r_K is the squared-integral constant of the kernel, fhat the density
of the running variable, n the number of in-range units for the target, and
m2hat(x) a kernel-weighted (Nadaraya-Watson, same kernel and bandwidth)
average of squared influence contributions

    psi_i = (r_i/p_i) (y_i - ghat(x_i)) - (r_i/p_i - 1) (delta_i - ghat(x_i)),

which reduces to ``delta_i - ghat(x_i)`` for units whose target outcome is
missing.  The working variance cancels out of the sandwich and never
appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data import Dataset, TargetOutcome, Thresholds
from .errors import (
    AlignmentError,
    DegenerateSampleError,
    DensityFloorError,
    DomainError,
)
from .estimators import DR, Curve, _solve_at_points, build_fit_sample, range_mask
from .kernels import kernel_constants, kernel_value
from .nuisance import OutcomeFit, PropensityFit, predict_outcome, predict_propensity

DENSITY_FLOOR = 1e-8


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian kernel density with a fixed bandwidth.  Callable on arrays."""

    sample: np.ndarray
    bandwidth: float

    @property
    def n(self) -> int:
        return self.sample.size

    def __call__(self, points):
        scalar = np.ndim(points) == 0
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        u = (pts[:, None] - self.sample[None, :]) / self.bandwidth
        dens = np.exp(-0.5 * u * u).sum(axis=1) / (
            self.sample.size * self.bandwidth * math.sqrt(2.0 * math.pi)
        )
        return float(dens[0]) if scalar else dens


def kde_fit(sample) -> DensityEstimate:
    """Gaussian KDE with the Silverman rule-of-thumb bandwidth.

    ``h = 0.9 min(sd, IQR / 1.34) n^{-1/5}``; needs at least two distinct
    points, otherwise the scale degenerates to zero.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2 or float(np.min(x)) == float(np.max(x)):
        raise DegenerateSampleError("density estimation needs at least two distinct points")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    if not (scale > 0.0):
        scale = sd
    bw = 0.9 * scale * x.size ** (-0.2)
    return DensityEstimate(sample=np.array(x, copy=True), bandwidth=bw)


def dr_variance(
    dataset: Dataset,
    target: TargetOutcome,
    curve: Curve,
    pfit: PropensityFit,
    ofit: OutcomeFit,
    density,
) -> np.ndarray:
    """Plug-in variance of an augmented-estimator curve on its own grid.

    ``density`` is any callable returning the running-variable density; a
    value below 1e-8 at a grid point raises :class:`DensityFloorError`.
    Grid points where the influence average has no kernel mass come back NaN.
    """
    if curve.method.kind != "dr":
        raise DomainError("plug-in variance is defined for the augmented (dr) estimator")
    h = curve.bandwidth
    idx = np.flatnonzero(range_mask(dataset, target))
    n_range = idx.size
    if n_range == 0:
        raise DomainError("no in-range units; variance undefined")

    fs = build_fit_sample(dataset, target, DR, pfit, ofit)
    ghat_at_units, _, ok_units, _ = _solve_at_points(
        fs.x, fs.resp, fs.unit_w, dataset.x[idx], h, curve.kernel
    )

    x, w = dataset.x[idx], dataset.w[idx]
    pi = predict_propensity(pfit, x, w)
    p = np.where(dataset.d[idx] == 1, pi, 1.0 - pi)
    r = (dataset.z[idx] == target.j).astype(float)
    delta = predict_outcome(ofit, x, w)
    rp = r / p
    psi = rp * (dataset.y[idx] - ghat_at_units) - (rp - 1.0) * (delta - ghat_at_units)
    psi_sq = psi * psi

    const = kernel_constants(curve.kernel)
    fvals = np.atleast_1d(np.asarray(density(curve.grid), dtype=float))
    low = np.flatnonzero(fvals < DENSITY_FLOOR)
    if low.size:
        pts = ", ".join(f"{curve.grid[k]:.6g}" for k in low[:5])
        raise DensityFloorError(
            f"running-variable density below {DENSITY_FLOOR} at grid points {pts}"
        )

    keep = ok_units
    out = np.full(curve.grid.size, np.nan)
    if keep.any():
        du = (x[keep][None, :] - curve.grid[:, None]) / h
        kw = kernel_value(curve.kernel, du) / h
        denom = kw.sum(axis=1)
        numer = (kw * psi_sq[keep][None, :]).sum(axis=1)
        good = denom > 0.0
        out[good] = (const.r / fvals[good]) * (numer[good] / denom[good]) / (n_range * h)
    return out


@dataclass(frozen=True)
class Band:
    """Pointwise normal confidence band around a curve."""

    grid: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def confidence_band(curve: Curve, level: float = 0.95) -> Band:
    """Pointwise normal band ``center +- z * sqrt(variance)``.

    The curve must carry variances (see :func:`dr_variance`).
    """
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must be inside (0, 1), got {level!r}")
    if curve.variance is None:
        raise DomainError("curve carries no variance; run dr_variance first")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    se = np.sqrt(curve.variance)
    return Band(
        grid=curve.grid,
        center=curve.values,
        lower=curve.values - z * se,
        upper=curve.values + z * se,
        level=level,
    )


@dataclass(frozen=True)
class EffectCurve:
    """Pointwise treatment effect tau(x) = g_1(x) - g_0(x) on a shared grid."""

    grid: np.ndarray
    tau: np.ndarray
    variance: np.ndarray | None
    level: float | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


def effect_curve(
    curve0: Curve,
    curve1: Curve,
    thresholds: Thresholds,
    level: float | None = None,
) -> EffectCurve:
    """Difference the two potential-outcome curves on their shared grid.

    Both curves must target the outcome their name says, share the grid
    exactly, and the grid must lie strictly inside (c0, c1), the only region
    where both curves are identified.  Variances add when both curves carry
    one; the covariance between the curves is ignored.
    """
    if curve0.target.j != 0 or curve1.target.j != 1:
        raise DomainError("effect_curve expects (g_0 curve, g_1 curve) in that order")
    if curve0.grid.shape != curve1.grid.shape or not np.array_equal(curve0.grid, curve1.grid):
        raise AlignmentError("the two curves must share an identical grid")
    g = curve0.grid
    if np.min(g) <= thresholds.c0 or np.max(g) >= thresholds.c1:
        raise AlignmentError(
            "the effect is only identified strictly between the cutoffs; "
            f"grid spans [{np.min(g)}, {np.max(g)}] against ({thresholds.c0}, {thresholds.c1})"
        )
    tau = curve1.values - curve0.values
    variance = None
    if curve0.variance is not None and curve1.variance is not None:
        variance = curve0.variance + curve1.variance
    lower = upper = None
    if level is not None:
        if variance is None:
            raise DomainError("confidence limits need variances on both curves")
        z = NormalDist().inv_cdf(0.5 * (1.0 + level))
        se = np.sqrt(variance)
        lower, upper = tau - z * se, tau + z * se
    return EffectCurve(grid=g, tau=tau, variance=variance, level=level, lower=lower, upper=upper)
