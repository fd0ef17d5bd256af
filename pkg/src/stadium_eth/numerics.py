"""Shared numerical kernels: Bessel J0, quadrature and Bessel-product integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "bessel_j0",
    "bessel_j0_asymptotic",
    "integrate_1d",
    "integrate_osc_product",
    "gauss_panels",
    "richardson_extrapolate",
]


class QuadratureError(RuntimeError):
    """Raised when a quadrature budget is exhausted before reaching tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and resolution limits for the quadrature routines.

    Parameters
    ----------
    abs_tol, rel_tol : float
        Convergence is declared when the change under refinement is below
        ``max(abs_tol, rel_tol * |estimate|)``.
    max_subdivisions : int
        Upper bound on panel count (or adaptive subintervals).
    samples_per_oscillation : int
        Panels are at most ``2*pi / (samples_per_oscillation * k)`` wide.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 1 << 16
    samples_per_oscillation: int = 8

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.samples_per_oscillation < 8:
            raise ValueError("samples_per_oscillation must be at least 8")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")

    def halved(self) -> "QuadratureSpec":
        return QuadratureSpec(self.abs_tol / 2, self.rel_tol / 2,
                              self.max_subdivisions, self.samples_per_oscillation)


def bessel_j0(x):
    """Bessel function J0 for x >= 0 (scalar or array).

    Backed by the Cephes implementation in scipy, which uses a rational
    approximation below x = 5 and a corrected asymptotic form above.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite x >= 0")
    out = special.j0(arr)
    return float(out) if out.ndim == 0 else out


def bessel_j0_asymptotic(x):
    """Leading large-argument form sqrt(2/(pi x)) cos(x - pi/4)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("bessel_j0_asymptotic is defined only for x > 0")
    out = np.sqrt(2.0 / (np.pi * arr)) * np.cos(arr - np.pi / 4)
    return float(out) if out.ndim == 0 else out


def integrate_1d(f: Callable[[float], float], interval: tuple[float, float],
                 spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Adaptive Gauss-Kronrod integral of a scalar function over a finite interval."""
    a, b = map(float, interval)
    val, err, info = integrate.quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                    limit=min(spec.max_subdivisions, 10000),
                                    full_output=1)[:3]
    if err > max(spec.abs_tol, spec.rel_tol * abs(val)) * 10:
        raise QuadratureError("integrate_1d did not converge", val, err)
    return float(val)


_GL_ORDER = 6


def gauss_panels(a: float, b: float, n_panels: int, order: int = _GL_ORDER):
    """Composite Gauss-Legendre nodes and weights on [a, b] with equal panels."""
    g, gw = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _panel_sum(k1, k2, w, Q, n_panels):
    r, wt = gauss_panels(0.0, Q, n_panels)
    vals = wt * r**w * special.j0(k1 * r) * special.j0(k2 * r)
    # compensated summation keeps the result independent of any chunking
    return math.fsum(vals.tolist())


def integrate_osc_product(k1: float, k2: float, w: int, Q: float,
                          spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of r**w J0(k1 r) J0(k2 r) over [0, Q].

    Panels are sized from the known oscillation frequency and the panel
    count is doubled until two successive estimates agree.
    """
    if k1 < 0 or k2 < 0:
        raise ValueError("wavenumbers must be non-negative")
    if Q <= 0:
        raise ValueError("upper limit Q must be positive")
    k1, k2 = min(k1, k2), max(k1, k2)  # bitwise symmetry in (k1, k2)
    kmax = max(k2, 1.0)
    width = 2 * np.pi / (spec.samples_per_oscillation * kmax)
    n = max(1, int(math.ceil(Q / width)))
    prev = _panel_sum(k1, k2, w, Q, n)
    err = math.inf
    while 2 * n <= spec.max_subdivisions:
        n *= 2
        cur = _panel_sum(k1, k2, w, Q, n)
        err = abs(cur - prev)
        if err <= max(spec.abs_tol, spec.rel_tol * abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("panel budget exhausted in integrate_osc_product", prev, err)


def richardson_extrapolate(values, ratio: float = 2.0, order: float | None = None):
    """Extrapolate a sequence computed at step sizes h, h/ratio, h/ratio**2, ...

    With three or more values and no ``order`` given, the convergence order is
    estimated from the last three and clamped to [1, 2]. Returns
    ``(extrapolated, order_used)``.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    if order is None:
        order = 2.0
        if v.size >= 3:
            d1, d2 = v[-3] - v[-2], v[-2] - v[-1]
            if d1 != 0 and d2 != 0 and d1 / d2 > 0:
                order = float(np.clip(math.log(d1 / d2) / math.log(ratio), 1.0, 2.0))
    est = v[-1] + (v[-1] - v[-2]) / (ratio**order - 1)
    return float(est), order
