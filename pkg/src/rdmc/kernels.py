"""Smoothing kernels and their moment constants.

Three second-order kernels are supported.  The moment constants
``c2 = int u^2 K(u) du`` and ``r = int K(u)^2 du`` drive the bias and
variance formulas used elsewhere; they are closed forms, verified once by
quadrature in the test suite and hard-coded here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

KERNEL_NAMES = ("epanechnikov", "gaussian", "triangular")

# Integer codes shared with the compiled leave-one-out loop.
KERNEL_CODES = {"epanechnikov": 0, "gaussian": 1, "triangular": 2}

_INV_SQRT_2PI = 0.3989422804014327


@dataclass(frozen=True)
class KernelConstants:
    """Second moment and squared-integral of a kernel."""

    c2: float
    r: float


_CONSTANTS = {
    "epanechnikov": KernelConstants(c2=0.2, r=0.6),
    "gaussian": KernelConstants(c2=1.0, r=0.28209479177387814),  # 1 / (2 sqrt(pi))
    "triangular": KernelConstants(c2=1.0 / 6.0, r=2.0 / 3.0),
}


def _check_kernel(kernel: str) -> str:
    if kernel not in KERNEL_CODES:
        raise DomainError(f"unknown kernel {kernel!r}; choose one of {KERNEL_NAMES}")
    return kernel


def kernel_value(kernel: str, u):
    """Evaluate K(u).  Accepts scalars or arrays and broadcasts.

    Epanechnikov is ``0.75 (1 - u^2)`` on ``|u| <= 1``, triangular is
    ``1 - |u|`` on ``|u| <= 1``, and gaussian is the standard normal density.
    Outside the support the compact kernels return exactly 0.0.
    """
    _check_kernel(kernel)
    u = np.asarray(u, dtype=float)
    if kernel == "epanechnikov":
        out = np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    elif kernel == "triangular":
        out = np.where(np.abs(u) < 1.0, 1.0 - np.abs(u), 0.0)
    else:
        out = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    if out.ndim == 0:
        return float(out)
    return out


def scaled_kernel_weight(kernel: str, diff, h: float):
    """Evaluate the bandwidth-scaled weight ``K(diff / h) / h``.

    Parameters
    ----------
    kernel : str
        One of ``epanechnikov``, ``gaussian``, ``triangular``.
    diff : float or ndarray
        Signed distance between a sample point and the evaluation point.
    h : float
        Bandwidth; must be strictly positive.
    """
    if not (h > 0.0) or not np.isfinite(h):
        raise DomainError(f"bandwidth must be positive and finite, got {h!r}")
    return kernel_value(kernel, np.asarray(diff, dtype=float) / h) / h


def kernel_constants(kernel: str) -> KernelConstants:
    """Return the moment constants (c2, r) of a kernel."""
    _check_kernel(kernel)
    return _CONSTANTS[kernel]
