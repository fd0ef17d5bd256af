"""Symmetry-adapted basis vanishing on both coordinate axes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PlaneWaveBasis", "make_basis"]


def _sinh_ratio(a, b):
    # sinh(a)/sinh(b) for a >= 0, b > 0 without overflow
    return np.exp(a - b) * (-np.expm1(-2 * a)) / (-np.expm1(-2 * b))


def _cosh_ratio(a, b):
    return np.exp(a - b) * (1 + np.exp(-2 * a)) / (-np.expm1(-2 * b))


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Three families of functions that vanish on x = 0 and y = 0 and solve the
    Helmholtz equation at any wavenumber k.

    * real directions:  sin(k x cos th) sin(k y sin th)
    * top family:       sin(k x cosh t) sinh(k y sinh t) / sinh(k_ref H sinh t)
    * side family:      sinh(k x sinh t) sin(k y cosh t) / sinh(k_ref L sinh t)

    The last two are the same plane waves at complex direction angles; they
    carry the fast boundary oscillations that real directions cannot. ``H``
    and ``L`` are the region height and width, which keeps the evanescent
    columns O(1) on the boundary.
    """

    angles: np.ndarray
    top_rates: np.ndarray
    side_rates: np.ndarray
    k_ref: float
    height: float
    width: float

    @property
    def size(self) -> int:
        return self.angles.size + self.top_rates.size + self.side_rates.size

    @property
    def counts(self) -> tuple[int, int, int]:
        return self.angles.size, self.top_rates.size, self.side_rates.size

    def evaluate(self, k: float, x, y, radial_derivative: bool = False):
        """Basis matrix (points x functions); optionally also r . grad of each column."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        cols, dcols = [], []

        c, s = np.cos(self.angles), np.sin(self.angles)
        ax, ay = k * np.outer(x, c), k * np.outer(y, s)
        sx, sy = np.sin(ax), np.sin(ay)
        cols.append(sx * sy)
        if radial_derivative:
            dcols.append(ax * np.cos(ax) * sy + ay * sx * np.cos(ay))

        if self.top_rates.size:
            q, kap = np.cosh(self.top_rates), np.sinh(self.top_rates)
            b = self.k_ref * self.height * kap
            ax, ay = k * np.outer(x, q), k * np.outer(y, kap)
            sx = np.sin(ax)
            sh = _sinh_ratio(ay, b)
            cols.append(sx * sh)
            if radial_derivative:
                dcols.append(ax * np.cos(ax) * sh + ay * sx * _cosh_ratio(ay, b))

        if self.side_rates.size:
            q, kap = np.cosh(self.side_rates), np.sinh(self.side_rates)
            b = self.k_ref * self.width * kap
            ax, ay = k * np.outer(x, kap), k * np.outer(y, q)
            sy = np.sin(ay)
            sh = _sinh_ratio(ax, b)
            cols.append(sh * sy)
            if radial_derivative:
                dcols.append(ay * np.cos(ay) * sh + ax * sy * _cosh_ratio(ax, b))

        phi = np.hstack(cols)
        if radial_derivative:
            return phi, np.hstack(dcols)
        return phi

    def laplacian(self, k: float, x, y):
        """Analytic Laplacian of every column (equals -k^2 times the column)."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        c, s = np.cos(self.angles), np.sin(self.angles)
        cols = [-(k * c) ** 2 * np.sin(k * np.outer(x, c)) * np.sin(k * np.outer(y, s))
                - (k * s) ** 2 * np.sin(k * np.outer(x, c)) * np.sin(k * np.outer(y, s))]
        if self.top_rates.size:
            q, kap = np.cosh(self.top_rates), np.sinh(self.top_rates)
            b = self.k_ref * self.height * kap
            f = np.sin(k * np.outer(x, q)) * _sinh_ratio(k * np.outer(y, kap), b)
            cols.append((-(k * q) ** 2 + (k * kap) ** 2) * f)
        if self.side_rates.size:
            q, kap = np.cosh(self.side_rates), np.sinh(self.side_rates)
            b = self.k_ref * self.width * kap
            f = _sinh_ratio(k * np.outer(x, kap), b) * np.sin(k * np.outer(y, q))
            cols.append(((k * kap) ** 2 - (k * q) ** 2) * f)
        return np.hstack(cols)


def make_basis(k_ref: float, free_perimeter: float, height: float, width: float,
               n_angles: int | None = None, margin: int = 10,
               n_evanescent: int | None = None, rate_max: float = 2.0) -> PlaneWaveBasis:
    """Default basis for a window centred at ``k_ref``.

    Real directions: round(1.5 k P / pi) + margin, at midpoints of (0, pi/2).
    Evanescent rates: uniform in (0, rate_max], max(30, ceil(1.2 k H)) per family.
    """
    if n_angles is None:
        n_angles = int(round(1.5 * k_ref * free_perimeter / math.pi)) + margin
    if n_evanescent is None:
        n_evanescent = max(30, int(math.ceil(1.2 * k_ref * height)))
    theta = (np.arange(n_angles) + 0.5) * (math.pi / 2) / n_angles
    rates = (np.arange(n_evanescent) + 1.0) * rate_max / n_evanescent
    return PlaneWaveBasis(theta, rates.copy(), rates.copy(), float(k_ref), float(height), float(width))
