"""Parametric nuisance models: group propensity and outcome regressions.

Both models share a small feature-term language so the command line can name
design columns explicitly: ``1`` (intercept), ``x``, ``x^2``, and ``w<k>``
for the k-th covariate (1-based).  The propensity model is a binary GLM for
group membership fit by damped Newton iterations; the outcome model is
ordinary least squares on one treatment arm.

Predicted propensities are clipped away from 0 and 1 before they are ever
inverted, so downstream weights stay finite by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, TargetOutcome
from .errors import (
    DomainError,
    PerfectSeparationError,
    RankError,
    SampleSizeError,
)

PROPENSITY_CLIP = 1e-6

_ALLOWED_FIXED = ("1", "x", "x^2")


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered design terms drawn from {1, x, x^2, w<k>}, no duplicates."""

    terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise DomainError("a feature spec needs at least one term")
        seen = set()
        for t in self.terms:
            if t in seen:
                raise DomainError(f"duplicate term {t!r} in feature spec")
            seen.add(t)
            if t in _ALLOWED_FIXED:
                continue
            if t.startswith("w") and t[1:].isdigit() and int(t[1:]) >= 1:
                continue
            raise DomainError(f"unknown feature term {t!r}")

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Build a spec from a comma-separated term list like ``1,x,w1,w2``."""
        return cls(tuple(t.strip() for t in text.split(",") if t.strip()))

    def design(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Design matrix for running-variable values ``x`` and covariates ``w``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(1, -1) if x.shape[0] == 1 else w.reshape(-1, 1)
        cols = []
        for t in self.terms:
            if t == "1":
                cols.append(np.ones_like(x))
            elif t == "x":
                cols.append(x)
            elif t == "x^2":
                cols.append(x * x)
            else:
                k = int(t[1:]) - 1
                if k >= w.shape[1]:
                    raise DomainError(
                        f"term {t!r} refers to covariate {k + 1} but only {w.shape[1]} exist"
                    )
                cols.append(w[:, k])
        return np.column_stack(cols)


DEFAULT_PROPENSITY_SPEC = FeatureSpec(("1", "x", "w1", "w2"))
DEFAULT_OUTCOME_SPEC = FeatureSpec(("1", "x", "x^2", "w1", "w2"))


@dataclass(frozen=True)
class PropensityFit:
    """Fitted group-membership model: P(d = 1 | x, w) = link^{-1}(design @ gamma)."""

    spec: FeatureSpec
    gamma: np.ndarray
    link: str = "logit"
    converged: bool = True
    iterations: int = 0
    loglik_path: tuple[float, ...] = ()


@dataclass(frozen=True)
class OutcomeFit:
    """Least-squares outcome regression for one treatment arm."""

    spec: FeatureSpec
    target: TargetOutcome
    eta: np.ndarray
    n_obs: int = 0


def _inverse_link(lin: np.ndarray, link: str) -> np.ndarray:
    if link == "logit":
        out = np.empty_like(lin)
        pos = lin >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-lin[pos]))
        e = np.exp(lin[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if link == "probit":
        return _phi_cdf(lin)
    raise DomainError(f"unknown link {link!r}; choose 'logit' or 'probit'")


def _phi_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * np.vectorize(math.erfc)(-z / math.sqrt(2.0))


def _binary_loglik(d: np.ndarray, lin: np.ndarray, link: str) -> float:
    p = np.clip(_inverse_link(lin, link), 1e-300, 1.0 - 1e-16)
    return float(np.sum(np.where(d == 1, np.log(p), np.log1p(-p))))


def fit_propensity(
    dataset: Dataset,
    spec: FeatureSpec = DEFAULT_PROPENSITY_SPEC,
    link: str = "logit",
    unit_mask: np.ndarray | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> PropensityFit:
    """Fit the group-membership model by damped Newton iterations.

    The step is halved (up to 30 times) whenever it fails to improve the
    log-likelihood, so the accepted likelihood path is nondecreasing.
    Convergence means the parameter step fell below ``tol`` in infinity norm
    and the score is numerically zero.

    By default the fit pools every unit; pass ``unit_mask`` to restrict the
    sample, e.g. to the estimation range of one target outcome.

    Raises
    ------
    PerfectSeparationError
        When the groups are linearly separable in the design (including the
        trivial case of a single-group sample); the error carries the
        separating direction.
    RankError
        When the design matrix is rank deficient.
    """
    if unit_mask is None:
        x, w, d = dataset.x, dataset.w, dataset.d
    else:
        unit_mask = np.asarray(unit_mask, dtype=bool)
        x, w, d = dataset.x[unit_mask], dataset.w[unit_mask], dataset.d[unit_mask]
    X = spec.design(x, w)
    n, k = X.shape
    if n < k:
        raise SampleSizeError(f"{n} units cannot identify {k} propensity parameters")
    if np.linalg.matrix_rank(X) < k:
        raise RankError("propensity design matrix is rank deficient")
    d = np.asarray(d, dtype=float)
    if d.min() == d.max():
        group = int(d[0])
        direction = np.zeros(k)
        direction[0] = 1.0 if group == 1 else -1.0
        raise PerfectSeparationError(
            f"all units belong to group {group}; membership is perfectly predicted",
            direction=direction,
        )

    gamma = np.zeros(k)
    lin = X @ gamma
    ll = _binary_loglik(d, lin, link)
    path = [ll]
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        p = _inverse_link(lin, link)
        if link == "logit":
            score = X.T @ (d - p)
            wt = p * (1.0 - p)
        else:
            pdf = np.exp(-0.5 * lin * lin) / math.sqrt(2.0 * math.pi)
            pc = np.clip(p, 1e-12, 1.0 - 1e-12)
            score = X.T @ (pdf * (d - pc) / (pc * (1.0 - pc)))
            wt = pdf * pdf / (pc * (1.0 - pc))
        info = X.T @ (X * wt[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise RankError("observed information matrix is singular") from None

        scale = 1.0
        for _ in range(31):
            cand = gamma + scale * step
            lin_cand = X @ cand
            ll_cand = _binary_loglik(d, lin_cand, link)
            if ll_cand >= ll - 1e-12 * abs(ll):
                break
            scale *= 0.5
        else:
            break
        gamma, lin, ll = cand, lin_cand, ll_cand
        path.append(ll)

        sep = _separation_direction(d, lin, gamma)
        if sep is not None:
            raise PerfectSeparationError(
                "groups are perfectly separated; the likelihood has no maximum",
                direction=sep,
            )
        if np.max(np.abs(scale * step)) < tol:
            converged = bool(np.max(np.abs(score)) < 1e-8 * max(1.0, n))
            break

    return PropensityFit(
        spec=spec,
        gamma=gamma,
        link=link,
        converged=converged,
        iterations=iterations,
        loglik_path=tuple(path),
    )


def _separation_direction(d, lin, gamma):
    """Detect a diverging fit that classifies every unit correctly."""
    norm = float(np.linalg.norm(gamma))
    if norm < 30.0:
        return None
    signed = (2.0 * d - 1.0) * lin
    if np.all(signed > 0.0) and np.min(np.abs(lin)) > 10.0:
        return gamma / norm
    return None


def predict_propensity(fit: PropensityFit, x, w) -> np.ndarray | float:
    """Predicted P(d = 1 | x, w), clipped to [1e-6, 1 - 1e-6]."""
    scalar = np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    wv = np.asarray(w, dtype=float)
    if wv.ndim == 1 and scalar:
        wv = wv.reshape(1, -1)
    lin = fit.spec.design(xv, wv) @ fit.gamma
    p = np.clip(_inverse_link(lin, fit.link), PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
    return float(p[0]) if scalar else p


def fit_outcome(
    dataset: Dataset,
    target: TargetOutcome,
    spec: FeatureSpec = DEFAULT_OUTCOME_SPEC,
) -> OutcomeFit:
    """OLS of the observed outcome on the spec, over units with ``z == j``.

    Both groups contribute: every unit whose observed outcome is the target
    potential outcome enters, regardless of group membership.
    """
    mask = dataset.z == target.j
    X = spec.design(dataset.x[mask], dataset.w[mask])
    y = dataset.y[mask]
    n, k = X.shape
    if n < k:
        raise SampleSizeError(f"{n} units with z == {target.j} cannot identify {k} parameters")
    if np.linalg.matrix_rank(X) < k:
        raise RankError("outcome design matrix is rank deficient")
    eta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return OutcomeFit(spec=spec, target=target, eta=eta, n_obs=n)


def predict_outcome(fit: OutcomeFit, x, w) -> np.ndarray | float:
    """Fitted conditional mean of the target outcome at (x, w)."""
    scalar = np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    wv = np.asarray(w, dtype=float)
    if wv.ndim == 1 and scalar:
        wv = wv.reshape(1, -1)
    pred = fit.spec.design(xv, wv) @ fit.eta
    return float(pred[0]) if scalar else pred
