"""Objective profile and cutoff search between the two existing cutoffs.

The objective at a candidate cutoff c anchors at the untreated regression
integrated across the whole interval and subtracts the cost-adjusted effect
mass above c, everything weighted by the running-variable density:

    value(c) = int_{c0}^{c1} g0 f  -  int_{c}^{c1} (tau - MC) f,

with tau = g1 - g0.  Only the tail integral varies with c, so the search is
confined to [c0, c1].  The derivative of the objective in c is
(tau(c) - MC(c)) f(c): the profile rises while the effect exceeds the
marginal cost and falls while the cost dominates.  A cost above the effect
everywhere therefore puts the optimum exactly at the lower cutoff, an
effect that always covers the cost puts it at the upper one, and an
interior optimum marks a downward crossing of the effect through the cost.

Integrals use the composite trapezoid rule on the curve grid; the cell
split by c is handled by linear interpolation of the integrand at c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Thresholds
from .errors import AlignmentError, DomainError
from .estimators import Curve

DEFAULT_RESOLUTION = 1001


@dataclass(frozen=True)
class CostSpec:
    """Marginal treatment cost: a constant, or a table interpolated linearly."""

    constant: float | None = None
    table_x: np.ndarray | None = None
    table_mc: np.ndarray | None = None

    def __post_init__(self) -> None:
        has_const = self.constant is not None
        has_table = self.table_x is not None or self.table_mc is not None
        if has_const == has_table:
            raise DomainError("cost spec needs a constant or a table, not both or neither")
        if has_const:
            if not np.isfinite(self.constant):
                raise DomainError("constant marginal cost must be finite")
            return
        tx = np.asarray(self.table_x, dtype=float)
        tm = np.asarray(self.table_mc, dtype=float)
        if tx.ndim != 1 or tx.shape != tm.shape or tx.size < 2:
            raise DomainError("cost table needs matching 1-d x and mc columns, length >= 2")
        if np.any(np.diff(tx) <= 0.0):
            raise DomainError("cost table x values must be strictly increasing")
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(tm))):
            raise DomainError("cost table must be finite")
        object.__setattr__(self, "table_x", tx)
        object.__setattr__(self, "table_mc", tm)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        if self.constant is not None:
            return np.full(pts.shape, float(self.constant))
        if np.min(pts) < self.table_x[0] or np.max(pts) > self.table_x[-1]:
            raise DomainError(
                f"cost table covers [{self.table_x[0]}, {self.table_x[-1]}] but was asked for"
                f" [{np.min(pts)}, {np.max(pts)}]"
            )
        return np.interp(pts, self.table_x, self.table_mc)


@dataclass(frozen=True)
class ThresholdResult:
    """Search outcome with the full candidate profile for reporting."""

    c_opt: float
    value: float
    boundary: str  # "interior", "at_c0", or "at_c1"
    candidates: np.ndarray
    values: np.ndarray


def _checked_grid(curve0: Curve, curve1: Curve, thresholds: Thresholds) -> np.ndarray:
    if curve0.grid.shape != curve1.grid.shape or not np.array_equal(curve0.grid, curve1.grid):
        raise AlignmentError("the two curves must share an identical grid")
    g = curve0.grid
    if g.size < 2 or np.any(np.diff(g) <= 0.0):
        raise AlignmentError("curve grid must be strictly increasing with >= 2 points")
    if g[0] > thresholds.c0 or g[-1] < thresholds.c1:
        raise AlignmentError(
            f"curve grid [{g[0]}, {g[-1]}] does not cover the cutoff interval"
            f" [{thresholds.c0}, {thresholds.c1}]"
        )
    return g


def _integrands(curve0, curve1, cost, density, grid, thresholds):
    """Density-weighted integrands: the g0 anchor and the net-effect tail."""
    fvals = np.atleast_1d(np.asarray(density(grid), dtype=float))
    mc = cost(grid)
    lo = max(int(np.searchsorted(grid, thresholds.c0, side="right") - 1), 0)
    hi = min(int(np.searchsorted(grid, thresholds.c1, side="left") + 1), grid.size)
    for name, vals in (("g0", curve0.values), ("g1", curve1.values)):
        bad = np.flatnonzero(~np.isfinite(vals[lo:hi])) + lo
        if bad.size:
            pts = ", ".join(f"{grid[k]:.6g}" for k in bad[:5])
            raise DomainError(f"curve {name} has missing values on the grid (x = {pts})")
    anchor = curve0.values * fvals
    tail = (curve1.values - curve0.values - mc) * fvals
    return anchor, tail


def _interp_in_cell(x, y, t, cell):
    x0, x1 = x[cell], x[cell + 1]
    frac = (t - x0) / (x1 - x0)
    return y[cell] + frac * (y[cell + 1] - y[cell])


def _trapz_between(x: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    """Trapezoid integral of piecewise-linear y over [a, b] within x's span."""
    if b <= a:
        return 0.0
    ia = int(np.searchsorted(x, a, side="right") - 1)
    ib = int(np.searchsorted(x, b, side="right") - 1)
    ia = min(max(ia, 0), x.size - 2)
    ib = min(max(ib, 0), x.size - 2)
    ya = _interp_in_cell(x, y, a, ia)
    yb = _interp_in_cell(x, y, b, ib)
    if ia == ib:
        return 0.5 * (ya + yb) * (b - a)
    total = 0.5 * (ya + y[ia + 1]) * (x[ia + 1] - a)
    if ib > ia + 1:
        total += float(np.trapezoid(y[ia + 1 : ib + 1], x[ia + 1 : ib + 1]))
    total += 0.5 * (y[ib] + yb) * (b - x[ib])
    return float(total)


def net_benefit(
    c: float,
    curve0: Curve,
    curve1: Curve,
    cost: CostSpec,
    density,
    thresholds: Thresholds,
) -> float:
    """Evaluate the objective at one candidate cutoff c in [c0, c1]."""
    if not (thresholds.c0 <= c <= thresholds.c1):
        raise DomainError(f"candidate cutoff {c} outside [{thresholds.c0}, {thresholds.c1}]")
    grid = _checked_grid(curve0, curve1, thresholds)
    anchor, tail = _integrands(curve0, curve1, cost, density, grid, thresholds)
    base = _trapz_between(grid, anchor, thresholds.c0, thresholds.c1)
    return base - _trapz_between(grid, tail, c, thresholds.c1)


def optimize_threshold(
    curve0: Curve,
    curve1: Curve,
    cost: CostSpec,
    density,
    thresholds: Thresholds,
    resolution: int = DEFAULT_RESOLUTION,
) -> ThresholdResult:
    """Grid-search the net benefit over [c0, c1].

    Exact value ties go to the smaller candidate.  The result records
    whether the optimum sits on a boundary; when the marginal cost exceeds
    the effect everywhere the profile decreases throughout and the lower
    cutoff wins exactly, and when the effect always covers the cost the
    upper cutoff wins.
    """
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    grid = _checked_grid(curve0, curve1, thresholds)
    anchor, tail = _integrands(curve0, curve1, cost, density, grid, thresholds)
    base = _trapz_between(grid, anchor, thresholds.c0, thresholds.c1)
    candidates = np.linspace(thresholds.c0, thresholds.c1, resolution)
    values = np.empty(resolution)
    for k, c in enumerate(candidates):
        values[k] = base - _trapz_between(grid, tail, float(c), thresholds.c1)
    best = 0
    for k in range(1, resolution):
        if values[k] > values[best]:
            best = k
    c_opt = float(candidates[best])
    if c_opt == thresholds.c0:
        boundary = "at_c0"
    elif c_opt == thresholds.c1:
        boundary = "at_c1"
    else:
        boundary = "interior"
    return ThresholdResult(
        c_opt=c_opt,
        value=float(values[best]),
        boundary=boundary,
        candidates=candidates,
        values=values,
    )
