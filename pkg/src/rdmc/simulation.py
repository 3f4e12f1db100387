"""Synthetic data generation and the Monte Carlo benchmark harness.

The default design places two groups around cutoffs c0 = 2 and c1 = 6 with

    x  ~ N(4, 1.7^2)                       (or a moment-matched lognormal),
    w_k = eta0_k + eta1_k x + xi_k,        xi_k ~ N(0, 2^2) independent,
    P(d = 1 | x, w) = logistic(0.8 + 0.5 x + 2 w1 - 0.8 w2),
    y_j = beta_j . (1, x, x^2, w1, w2) + eps,   eps ~ N(0, 10^2),

with beta_0 = (0, 16, -1, 42, 36) and beta_1 = (80, -2, 2, 40, 48).  The
observed outcome follows the unit's treatment status z = 1(x > c_d).
Because the covariate means are linear in x, both conditional regressions
have quadratic closed forms, which the oracle tests lean on.

The benchmark harness runs the full estimation pipeline (nuisance fits,
cross-validated bandwidth, curve, integrated squared error against the
closed form) over independent replications and averages.  Replication r
draws from seed ``base_seed + r``, so the result is invariant to which
other replications run and to the degree of parallelism.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bandwidth import BandwidthSearch, default_search, select_bandwidth
from .data import Dataset, TargetOutcome, Thresholds, check_dataset, derive_z
from .errors import DomainError, RdmcError, UnreliableIseError
from .estimators import Curve, EstimatorMethod, default_grid, estimate_curve
from .nuisance import (
    DEFAULT_OUTCOME_SPEC,
    DEFAULT_PROPENSITY_SPEC,
    FeatureSpec,
    fit_outcome,
    fit_propensity,
)

THREADS_ENV = "RDMC_THREADS"

MISSPEC_PROPENSITY_SPEC = FeatureSpec(("1", "x", "w2"))  # drops the strong covariate
MISSPEC_OUTCOME_SPEC = FeatureSpec(("1", "x", "w1", "w2"))  # drops the curvature term


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the synthetic design.  Defaults reproduce the benchmark."""

    n: int = 2000
    mu_x: float = 4.0
    sigma_x: float = 1.7
    x_dist: str = "normal"
    eta0: tuple[float, float] = (-1.5, 2.4)
    eta1: tuple[float, float] = (0.6, 0.4)
    sigma_xi: float = 2.0
    gamma: tuple[float, float, float, float] = (0.8, 0.5, 2.0, -0.8)
    beta0: tuple[float, float, float, float, float] = (0.0, 16.0, -1.0, 42.0, 36.0)
    beta1: tuple[float, float, float, float, float] = (80.0, -2.0, 2.0, 40.0, 48.0)
    sigma_eps: float = 10.0
    c0: float = 2.0
    c1: float = 6.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError("need at least one unit")
        if self.x_dist not in ("normal", "lognormal"):
            raise DomainError(f"x_dist must be 'normal' or 'lognormal', got {self.x_dist!r}")
        for name, v in (("sigma_x", self.sigma_x), ("sigma_xi", self.sigma_xi),
                        ("sigma_eps", self.sigma_eps)):
            if not (v > 0.0):
                raise DomainError(f"{name} must be positive")
        if not (self.c0 < self.c1):
            raise DomainError("need c0 < c1")
        if self.x_dist == "lognormal" and not (self.mu_x > 0.0):
            raise DomainError("lognormal running variable needs a positive mean")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(c0=self.c0, c1=self.c1)


def _draw_x(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.x_dist == "normal":
        return rng.normal(cfg.mu_x, cfg.sigma_x, cfg.n)
    # Lognormal with the same mean and standard deviation as the normal case.
    s2 = math.log1p((cfg.sigma_x / cfg.mu_x) ** 2)
    mu_log = math.log(cfg.mu_x) - 0.5 * s2
    return rng.lognormal(mu_log, math.sqrt(s2), cfg.n)


def generate(config: SimConfig, seed: int) -> Dataset:
    """Draw one dataset.  Seeds index independent streams."""
    rng = np.random.default_rng(seed)
    x = _draw_x(config, rng)
    xi = rng.normal(0.0, config.sigma_xi, (config.n, 2))
    w = np.asarray(config.eta0) + np.outer(x, np.asarray(config.eta1)) + xi
    g = np.asarray(config.gamma)
    lin = g[0] + g[1] * x + g[2] * w[:, 0] + g[3] * w[:, 1]
    pi = 1.0 / (1.0 + np.exp(-lin))
    d = (rng.random(config.n) < pi).astype(np.int8)
    z = derive_z(x, d, config.thresholds)
    eps = rng.normal(0.0, config.sigma_eps, config.n)
    beta = np.where(z[:, None] == 1, np.asarray(config.beta1), np.asarray(config.beta0))
    y = (
        beta[:, 0]
        + beta[:, 1] * x
        + beta[:, 2] * x * x
        + beta[:, 3] * w[:, 0]
        + beta[:, 4] * w[:, 1]
        + eps
    )
    ds = Dataset(x=x, w=w, d=d, z=z, y=y, thresholds=config.thresholds)
    return check_dataset(ds)


@dataclass(frozen=True)
class TrueCurve:
    """Closed-form conditional regression: quadratic coefficients in x."""

    const: float
    slope: float
    curvature: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.const + self.slope * x + self.curvature * x * x
        return float(out) if out.ndim == 0 else out


def true_curve(config: SimConfig, target: TargetOutcome) -> TrueCurve:
    """g_j(x) = E[y_j | x] under the design, integrating out the covariates."""
    b = config.beta1 if target.j == 1 else config.beta0
    e0, e1 = config.eta0, config.eta1
    return TrueCurve(
        const=b[0] + b[3] * e0[0] + b[4] * e0[1],
        slope=b[1] + b[3] * e1[0] + b[4] * e1[1],
        curvature=b[2],
    )


def x_density(config: SimConfig):
    """Analytic density of the running variable under the design."""
    if config.x_dist == "normal":
        mu, sd = config.mu_x, config.sigma_x

        def pdf(pts):
            pts = np.asarray(pts, dtype=float)
            return np.exp(-0.5 * ((pts - mu) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))

        return pdf
    s2 = math.log1p((config.sigma_x / config.mu_x) ** 2)
    mu_log = math.log(config.mu_x) - 0.5 * s2
    s = math.sqrt(s2)

    def pdf_ln(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros_like(pts)
        pos = pts > 0.0
        out[pos] = np.exp(-0.5 * ((np.log(pts[pos]) - mu_log) / s) ** 2) / (
            pts[pos] * s * math.sqrt(2.0 * math.pi)
        )
        return out

    return pdf_ln


def integrated_squared_error(
    curve: Curve,
    truth,
    density,
    lo: float,
    hi: float,
    max_missing_share: float = 0.2,
) -> float:
    """Density-weighted integrated squared error of a fitted curve.

    Trapezoid rule for ``(ghat - g)^2 f`` on the curve grid restricted to
    [lo, hi].  Missing curve values are filled by linear interpolation from
    the surviving neighbors; when more than ``max_missing_share`` of the
    restricted grid is missing the integral is deemed unreliable.
    """
    if not (lo < hi):
        raise DomainError("need lo < hi")
    g = curve.grid
    inside = (g >= lo) & (g <= hi)
    if inside.sum() < 2:
        raise DomainError("fewer than two grid points inside the integration range")
    gx = g[inside]
    vals = curve.values[inside]
    missing = ~np.isfinite(vals)
    if missing.any():
        if missing.mean() > max_missing_share:
            raise UnreliableIseError(
                f"{int(missing.sum())} of {missing.size} grid values missing; integral unreliable"
            )
        vals = vals.copy()
        vals[missing] = np.interp(gx[missing], gx[~missing], vals[~missing])
    diff = vals - truth(gx)
    integrand = diff * diff * np.asarray(density(gx), dtype=float)
    return float(np.trapezoid(integrand, gx))


@dataclass(frozen=True)
class BenchmarkCell:
    """One estimator configuration evaluated by the harness."""

    label: str
    method: EstimatorMethod
    target: TargetOutcome
    propensity_spec: FeatureSpec | None = None  # None: method needs no propensity
    outcome_spec: FeatureSpec | None = None  # None: method needs no outcome fit


def table1_cells() -> tuple[BenchmarkCell, ...]:
    """Both targets under naive, inverse-weighted, and augmented estimation."""
    cells = []
    for j in (0, 1):
        t = TargetOutcome(j)
        cells.append(BenchmarkCell(f"naive:g{j}", EstimatorMethod("naive"), t))
        cells.append(
            BenchmarkCell(
                f"ipw:g{j}", EstimatorMethod("ipw"), t, propensity_spec=DEFAULT_PROPENSITY_SPEC
            )
        )
        cells.append(
            BenchmarkCell(
                f"dr:g{j}",
                EstimatorMethod("dr"),
                t,
                propensity_spec=DEFAULT_PROPENSITY_SPEC,
                outcome_spec=DEFAULT_OUTCOME_SPEC,
            )
        )
    return tuple(cells)


def table2_cells() -> tuple[BenchmarkCell, ...]:
    """Misspecified-nuisance cells for g_0."""
    t = TargetOutcome(0)
    return (
        BenchmarkCell(
            "ipw:g0:pi-wrong", EstimatorMethod("ipw"), t, propensity_spec=MISSPEC_PROPENSITY_SPEC
        ),
        BenchmarkCell(
            "dr:g0:pi-wrong",
            EstimatorMethod("dr"),
            t,
            propensity_spec=MISSPEC_PROPENSITY_SPEC,
            outcome_spec=DEFAULT_OUTCOME_SPEC,
        ),
        BenchmarkCell(
            "dr:g0:delta-wrong",
            EstimatorMethod("dr"),
            t,
            propensity_spec=DEFAULT_PROPENSITY_SPEC,
            outcome_spec=MISSPEC_OUTCOME_SPEC,
        ),
        BenchmarkCell(
            "dr:g0:both-wrong",
            EstimatorMethod("dr"),
            t,
            propensity_spec=MISSPEC_PROPENSITY_SPEC,
            outcome_spec=MISSPEC_OUTCOME_SPEC,
        ),
    )


@dataclass(frozen=True)
class CellSummary:
    """Replication average for one cell."""

    label: str
    estimator: str
    target: int
    mise: float
    n_reps: int
    n_failed: int
    failures: tuple[str, ...] = ()


@dataclass(frozen=True)
class BenchmarkReport:
    """Averaged integrated squared errors for every requested cell."""

    config: SimConfig
    base_seed: int
    replications: int
    cells: tuple[CellSummary, ...]
    degraded: bool = False

    def cell(self, label: str) -> CellSummary:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)


def _replication_ises(args) -> list[float | str]:
    """ISE of every cell on one replication; exceptions become messages."""
    config, seed, cells, grid_size, search_grid, kernel = args
    ds = generate(config, seed)
    grid = default_grid(config.thresholds, grid_size)
    density = x_density(config)

    pfits: dict[FeatureSpec, object] = {}
    ofits: dict[tuple[int, FeatureSpec], object] = {}
    out: list[float | str] = []
    for cell in cells:
        try:
            pfit = ofit = None
            if cell.propensity_spec is not None:
                if cell.propensity_spec not in pfits:
                    pfits[cell.propensity_spec] = fit_propensity(ds, cell.propensity_spec)
                pfit = pfits[cell.propensity_spec]
            if cell.outcome_spec is not None:
                key = (cell.target.j, cell.outcome_spec)
                if key not in ofits:
                    ofits[key] = fit_outcome(ds, cell.target, cell.outcome_spec)
                ofit = ofits[key]
            search = (
                BandwidthSearch(h_grid=search_grid)
                if search_grid
                else default_search(ds, cell.target)
            )
            sel = select_bandwidth(ds, cell.target, cell.method, search, pfit, ofit, kernel)
            curve = estimate_curve(
                ds, cell.target, cell.method, sel.h, grid, pfit, ofit, kernel
            )
            truth = true_curve(config, cell.target)
            out.append(
                integrated_squared_error(curve, truth, density, config.c0, config.c1)
            )
        except RdmcError as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


def thread_budget() -> int:
    """Worker count: the RDMC_THREADS variable, or the machine's cores on 0/unset."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        val = int(raw)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if val < 0:
        raise DomainError(f"{THREADS_ENV} must be >= 0")
    return val if val > 0 else (os.cpu_count() or 1)


def run_benchmark(
    config: SimConfig,
    replications: int,
    base_seed: int,
    cells: tuple[BenchmarkCell, ...] | None = None,
    grid_size: int = 201,
    search_grid: tuple[float, ...] = (),
    kernel: str = "epanechnikov",
    workers: int | None = None,
) -> BenchmarkReport:
    """Average the integrated squared error of each cell over replications.

    Replication r uses seed ``base_seed + r``.  Failed replications of a cell
    are skipped and recorded; a cell with more than 10% failures marks the
    whole report degraded.  Results do not depend on the worker count.
    """
    if replications < 1:
        raise DomainError("need at least one replication")
    cells = cells if cells is not None else table1_cells()
    jobs = [
        (config, base_seed + r, cells, grid_size, tuple(search_grid), kernel)
        for r in range(replications)
    ]
    workers = thread_budget() if workers is None else max(1, workers)
    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=min(workers, replications)) as pool:
            per_rep = list(pool.map(_replication_ises, jobs, chunksize=1))
    else:
        per_rep = [_replication_ises(job) for job in jobs]

    summaries = []
    degraded = False
    for k, cell in enumerate(cells):
        ises = [rep[k] for rep in per_rep]
        good = np.array([v for v in ises if not isinstance(v, str)], dtype=float)
        failures = tuple(v for v in ises if isinstance(v, str))
        if len(failures) > 0.1 * replications:
            degraded = True
        summaries.append(
            CellSummary(
                label=cell.label,
                estimator=cell.method.kind,
                target=cell.target.j,
                mise=float(np.mean(good)) if good.size else math.nan,
                n_reps=int(good.size),
                n_failed=len(failures),
                failures=failures[:5],
            )
        )
    return BenchmarkReport(
        config=config,
        base_seed=base_seed,
        replications=replications,
        cells=tuple(summaries),
        degraded=degraded,
    )
