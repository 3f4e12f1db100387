"""Least-squares cross-validation for the smoothing bandwidth.

The score for g_j at bandwidth h is the mean squared leave-one-out
prediction error over the in-range units whose observed outcome is the
target one:

    LSCV_j(h) = mean over {i : z_i = j, i in range} of (y_i - ghat_{j,-i}(x_i))^2,

where ``ghat_{j,-i}`` is the curve estimator with unit i withheld from the
estimating sum.  Nuisance fits are held fixed across the removals; only the
local sums change.  Units whose withheld fit is infeasible (no local
support at small h) are dropped from the mean and counted.

Both one-sided ranges are read symmetrically: x < c1 for g_0 and x > c0 for
g_1.  Run manifests record this reading.

The inner loop is compiled; it walks a sorted copy of the sample and visits
only the kernel window of each evaluation point, which keeps full-grid
selection affordable inside Monte Carlo studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import Dataset, TargetOutcome
from .errors import BandwidthInfeasibleError, BandwidthSelectionError, DomainError
from .estimators import EstimatorMethod, build_fit_sample, range_mask
from .kernels import KERNEL_CODES
from .nuisance import OutcomeFit, PropensityFit

DEFAULT_GRID_POINTS = 20
DEFAULT_SPAN = (0.1, 2.0)

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BandwidthSearch:
    """Candidate bandwidths, strictly increasing, plus the refinement switch."""

    h_grid: tuple[float, ...]
    refine: bool = False

    def __post_init__(self) -> None:
        if not self.h_grid:
            raise DomainError("bandwidth search needs at least one candidate")
        arr = np.asarray(self.h_grid, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError("candidate bandwidths must be positive and finite")
        if np.any(np.diff(arr) <= 0.0):
            raise DomainError("candidate bandwidths must be strictly increasing")


def default_search(dataset: Dataset, target: TargetOutcome, refine: bool = False) -> BandwidthSearch:
    """Twenty log-spaced candidates spanning [0.1, 2] sample sd of in-range x."""
    x = dataset.x[range_mask(dataset, target)]
    if x.size < 2:
        raise BandwidthSelectionError("fewer than two in-range units; no scale to search over")
    sd = float(np.std(x, ddof=1))
    if not (sd > 0.0):
        raise BandwidthSelectionError("in-range running variable is constant; no scale to search over")
    grid = np.geomspace(DEFAULT_SPAN[0] * sd, DEFAULT_SPAN[1] * sd, DEFAULT_GRID_POINTS)
    return BandwidthSearch(h_grid=tuple(float(v) for v in grid), refine=refine)


@dataclass(frozen=True)
class LscvScore:
    """One scored bandwidth: the mean and how many units it averaged."""

    h: float
    score: float
    n_used: int
    n_excluded: int


@dataclass(frozen=True)
class BandwidthSelection:
    """Search outcome: the chosen score plus the full score table."""

    selected: LscvScore
    table: tuple[LscvScore, ...]
    infeasible: tuple[tuple[float, str], ...] = ()
    refined: bool = False

    @property
    def h(self) -> float:
        return self.selected.h


@njit(cache=True)
def _kern_scalar(code: int, u: float) -> float:
    if code == 0:
        if u < 1.0 and u > -1.0:
            return 0.75 * (1.0 - u * u)
        return 0.0
    if code == 1:
        return 0.3989422804014327 * math.exp(-0.5 * u * u)
    au = abs(u)
    if au < 1.0:
        return 1.0 - au
    return 0.0


@njit(cache=True)
def _loo_sq_errors(xs, resp, uw, eval_x, eval_y, skip_pos, h, code, cond_limit):
    """Squared leave-one-out residual per evaluation unit; NaN when infeasible.

    ``xs`` (with ``resp``/``uw``) is the estimating sample sorted by location;
    ``skip_pos[k]`` is the sorted position of evaluation unit k inside that
    sample, or -1 when it does not belong to it.
    """
    n = xs.shape[0]
    m = eval_x.shape[0]
    out = np.empty(m)
    ok = np.zeros(m, dtype=np.bool_)
    compact = code != 1
    for k in range(m):
        x0 = eval_x[k]
        if compact:
            lo = np.searchsorted(xs, x0 - h, side="left")
            hi = np.searchsorted(xs, x0 + h, side="right")
        else:
            lo, hi = 0, n
        skip = skip_pos[k]
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        t0 = 0.0
        t1 = 0.0
        nsup = 0
        xmin = np.inf
        xmax = -np.inf
        for l in range(lo, hi):
            if l == skip:
                continue
            dxl = xs[l] - x0
            kv = uw[l] * (_kern_scalar(code, dxl / h) / h)
            if kv > 0.0:
                nsup += 1
                if xs[l] < xmin:
                    xmin = xs[l]
                if xs[l] > xmax:
                    xmax = xs[l]
                s0 += kv
                s1 += kv * dxl
                s2 += kv * dxl * dxl
                t0 += kv * resp[l]
                t1 += kv * dxl * resp[l]
        det = s0 * s2 - s1 * s1
        disc = math.sqrt(max((s0 - s2) * (s0 - s2) + 4.0 * s1 * s1, 0.0))
        lmax = 0.5 * ((s0 + s2) + disc)
        if nsup >= 2 and (xmax - xmin) > 0.0 and det > 0.0 and lmax * lmax <= cond_limit * det:
            g = (s2 * t0 - s1 * t1) / det
            r = eval_y[k] - g
            out[k] = r * r
            ok[k] = True
        else:
            out[k] = np.nan
    return out, ok


@dataclass(frozen=True)
class _Prepared:
    """Sorted estimating sample and evaluation units, ready for scoring."""

    xs: np.ndarray
    resp: np.ndarray
    uw: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray
    skip_pos: np.ndarray
    code: int


def _prepare(dataset, target, method, pfit, ofit, kernel):
    from .kernels import _check_kernel

    _check_kernel(kernel)
    fs = build_fit_sample(dataset, target, method, pfit, ofit)
    order = np.argsort(fs.x, kind="stable")
    xs = np.ascontiguousarray(fs.x[order])
    resp = np.ascontiguousarray(fs.resp[order])
    uw = np.ascontiguousarray(fs.unit_w[order])
    sorted_orig = fs.orig_idx[order]

    eval_idx = np.flatnonzero(range_mask(dataset, target) & (dataset.z == target.j))
    pos_by_orig = {int(o): p for p, o in enumerate(sorted_orig)}
    skip_pos = np.array([pos_by_orig.get(int(i), -1) for i in eval_idx], dtype=np.int64)
    return _Prepared(
        xs=xs,
        resp=resp,
        uw=uw,
        eval_x=np.ascontiguousarray(dataset.x[eval_idx]),
        eval_y=np.ascontiguousarray(dataset.y[eval_idx]),
        skip_pos=skip_pos,
        code=KERNEL_CODES[kernel],
    )


def _score_prepared(prep: _Prepared, h: float) -> LscvScore:
    from .estimators import COND_LIMIT

    if prep.eval_x.size == 0:
        raise BandwidthInfeasibleError("no evaluation units carry the target outcome in range")
    sq, ok = _loo_sq_errors(
        prep.xs, prep.resp, prep.uw, prep.eval_x, prep.eval_y, prep.skip_pos,
        float(h), prep.code, COND_LIMIT,
    )
    n_used = int(ok.sum())
    if n_used == 0:
        raise BandwidthInfeasibleError(
            f"every leave-one-out fit failed at h={h}; widen the bandwidth"
        )
    return LscvScore(
        h=float(h),
        score=float(np.mean(sq[ok])),
        n_used=n_used,
        n_excluded=int(prep.eval_x.size - n_used),
    )


def lscv_score(
    dataset: Dataset,
    target: TargetOutcome,
    method: EstimatorMethod,
    h: float,
    pfit: PropensityFit | None = None,
    ofit: OutcomeFit | None = None,
    kernel: str = "epanechnikov",
) -> LscvScore:
    """Score one bandwidth.

    Raises :class:`BandwidthInfeasibleError` when every withheld fit fails.
    """
    if not (h > 0.0) or not np.isfinite(h):
        raise DomainError(f"bandwidth must be positive and finite, got {h!r}")
    return _score_prepared(_prepare(dataset, target, method, pfit, ofit, kernel), h)


def select_bandwidth(
    dataset: Dataset,
    target: TargetOutcome,
    method: EstimatorMethod,
    search: BandwidthSearch | None = None,
    pfit: PropensityFit | None = None,
    ofit: OutcomeFit | None = None,
    kernel: str = "epanechnikov",
) -> BandwidthSelection:
    """Pick the bandwidth with the smallest cross-validation score.

    Exact ties go to the larger bandwidth (smoother curve).  Candidates where
    every withheld fit fails are recorded and skipped; if that happens for
    the whole grid, a :class:`BandwidthSelectionError` carries the reasons.

    With ``search.refine``, one golden-section pass runs between the grid
    neighbors of the minimizer (stopping width 1e-3 of the chosen h) and the
    refined candidate replaces the grid winner when it scores no worse.
    """
    if search is None:
        search = default_search(dataset, target)
    prep = _prepare(dataset, target, method, pfit, ofit, kernel)

    rows: list[LscvScore] = []
    infeasible: list[tuple[float, str]] = []
    for h in search.h_grid:
        try:
            rows.append(_score_prepared(prep, h))
        except BandwidthInfeasibleError as exc:
            infeasible.append((float(h), str(exc)))
    if not rows:
        raise BandwidthSelectionError(
            "no candidate bandwidth produced a usable score", diagnostics=tuple(infeasible)
        )

    best = rows[0]
    for row in rows[1:]:
        if row.score <= best.score:
            best = row
    refined = False
    if search.refine and len(search.h_grid) > 1:
        refined_best = _golden_refine(prep, search.h_grid, best)
        if refined_best is not best:
            best, refined = refined_best, True
    return BandwidthSelection(
        selected=best, table=tuple(rows), infeasible=tuple(infeasible), refined=refined
    )


def _golden_refine(prep: _Prepared, h_grid: tuple[float, ...], best: LscvScore) -> LscvScore:
    """One golden-section pass between the grid neighbors of the minimizer."""
    hs = list(h_grid)
    k = min(range(len(hs)), key=lambda j: abs(hs[j] - best.h))
    a = hs[k - 1] if k > 0 else hs[k]
    b = hs[k + 1] if k + 1 < len(hs) else hs[k]
    if not (a < b):
        return best
    tol = 1e-3 * best.h

    def score_at(h: float) -> LscvScore | None:
        try:
            return _score_prepared(prep, h)
        except BandwidthInfeasibleError:
            return None

    candidates = [best]
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = score_at(c), score_at(d)
    while (b - a) > tol:
        c_val = fc.score if fc is not None else np.inf
        d_val = fd.score if fd is not None else np.inf
        if c_val <= d_val:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = score_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = score_at(d)
        for f in (fc, fd):
            if f is not None:
                candidates.append(f)
    chosen = candidates[0]
    for cand in candidates[1:]:
        if cand.score < chosen.score or (cand.score == chosen.score and cand.h > chosen.h):
            chosen = cand
    return chosen
