"""Quarter-stadium region, its moments and integration rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from numpy.polynomial.legendre import leggauss

from .numerics import QuadratureError

__all__ = ["BilliardGeometry", "BoxGeometry", "BoundaryRule", "AreaRule"]


@dataclass(frozen=True)
class AreaRule:
    """Quadrature nodes ``(x, y)`` with weights ``w`` covering a region."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __len__(self):
        return self.x.size


@dataclass(frozen=True)
class BoundaryRule:
    """Nodes on the non-axis boundary with outward normals and arc-length weights."""

    x: np.ndarray
    y: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    w: np.ndarray

    @property
    def r_dot_n(self):
        return self.x * self.nx + self.y * self.ny


def _gauss01(n):
    g, gw = leggauss(n)
    return 0.5 * (g + 1.0), 0.5 * gw


def _panels(a, b, n_panels, order=10):
    g, gw = leggauss(order)
    e = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    return (mid[:, None] + half[:, None] * g).ravel(), (half[:, None] * gw).ravel()


@dataclass(frozen=True)
class BilliardGeometry:
    """Quarter stadium: rectangle [0, l-h] x [0, h] capped by a quarter disk of radius h.

    ``scale`` multiplies both lengths. The region is treated as closed.
    """

    l: float = 2.0
    h: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        for name in ("l", "h", "scale"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite number")
        if not (self.l > self.h > 0):
            raise ValueError("quarter stadium requires l > h > 0")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    # physical dimensions
    @property
    def width(self) -> float:
        return self.l * self.scale

    @property
    def height(self) -> float:
        return self.h * self.scale

    @property
    def straight(self) -> float:
        return (self.l - self.h) * self.scale

    def area(self) -> float:
        return (self.straight * self.height) + math.pi * self.height**2 / 4

    def perimeter(self) -> float:
        """Full boundary length (axes included)."""
        return self.width + self.height + self.straight + math.pi * self.height / 2

    def free_perimeter(self) -> float:
        """Length of the boundary away from the coordinate axes (top edge plus arc)."""
        return self.straight + math.pi * self.height / 2

    def contains_many(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c, r = self.straight, self.height
        in_strip = (y >= 0) & (y <= r)
        rect = (x >= 0) & (x <= c)
        disk = (x >= c) & ((x - c) ** 2 + y**2 <= r * r)
        return in_strip & (rect | disk)

    def contains(self, point) -> bool:
        x, y = point
        return bool(self.contains_many(x, y))

    def strictly_inside_many(self, x, y, tol: float = 1e-12):
        """Open-region membership with a small boundary tolerance."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c, r = self.straight, self.height
        t = tol * max(1.0, self.width)
        in_strip = (y > t) & (y < r - t) & (x > t)
        rect = x < c - t
        disk = (x - c) ** 2 + y**2 < (r - t) ** 2
        return in_strip & (rect | disk)

    def pair_in_domain(self, q, qt) -> bool:
        q = np.asarray(q, dtype=float)
        qt = np.asarray(qt, dtype=float)
        return self.contains(q + qt / 2) and self.contains(q - qt / 2)

    def area_rule(self, n: int) -> AreaRule:
        """Gauss product rule: n x n on the rectangle, polar n x ceil(pi n/2) on the quarter disk."""
        c, r = self.straight, self.height
        xs, ys, ws = [], [], []
        if c > 0:
            nx = max(2, int(math.ceil(n * c / r)))
            gx, wx = _gauss01(nx)
            gy, wy = _gauss01(n)
            X, Y = np.meshgrid(c * gx, r * gy, indexing="ij")
            xs.append(X.ravel()); ys.append(Y.ravel())
            ws.append(np.outer(c * wx, r * wy).ravel())
        gr, wr = _gauss01(n)
        nt = max(2, int(math.ceil(n * math.pi / 2)))
        gt, wt = _gauss01(nt)
        R, T = np.meshgrid(r * gr, (math.pi / 2) * gt, indexing="ij")
        xs.append((c + R * np.cos(T)).ravel()); ys.append((R * np.sin(T)).ravel())
        ws.append(np.outer(r * wr * r * gr, (math.pi / 2) * wt).ravel())
        return AreaRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))

    def area_rule_for_wavenumber(self, k: float, points_per_wavelength: float = 10.0) -> AreaRule:
        """Product rule with at least ``points_per_wavelength`` nodes per 2*pi/k along the height."""
        n = max(8, int(math.ceil(points_per_wavelength * k * self.height / (2 * math.pi))))
        return self.area_rule(n)

    def boundary_rule(self, k: float, points_per_wavelength: float = 10.0,
                      min_panels: int = 6, order: int = 10) -> BoundaryRule:
        """Composite Gauss-Legendre nodes on the top edge and the arc.

        ``k`` is the shortest wavenumber to resolve along the boundary.
        """
        c, r = self.straight, self.height
        lam = 2 * math.pi / max(k, 1e-12)

        def npan(length):
            return max(min_panels, int(math.ceil(length / lam * points_per_wavelength / order)))

        parts = []
        if c > 0:
            t, w = _panels(0.0, c, npan(c), order)
            parts.append((t, np.full_like(t, r), np.zeros_like(t), np.ones_like(t), w))
        t, w = _panels(0.0, math.pi / 2, npan(math.pi * r / 2), order)
        parts.append((c + r * np.cos(t), r * np.sin(t), np.cos(t), np.sin(t), r * w))
        return BoundaryRule(*(np.concatenate([p[i] for p in parts]) for i in range(5)))

    def region_moment(self, exponents, tol: float = 1e-12, max_n: int = 512) -> float:
        """Integral of x**i y**j over the region, refined until successive rules agree."""
        i, j = exponents
        if i < 0 or j < 0:
            raise ValueError("moment exponents must be non-negative")
        n = max(8, (i + j) // 2 + 4)
        prev = None
        while n <= max_n:
            rule = self.area_rule(n)
            val = math.fsum((rule.w * rule.x**i * rule.y**j).tolist())
            if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
                return val
            prev = val
            n *= 2
        raise QuadratureError("region_moment did not converge", prev, math.nan)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Uniform samples in the region by rejection from the bounding box."""
        out_x, out_y, got = [], [], 0
        while got < n:
            m = int((n - got) * 1.3) + 16
            x = rng.uniform(0, self.width, m)
            y = rng.uniform(0, self.height, m)
            keep = self.contains_many(x, y)
            out_x.append(x[keep]); out_y.append(y[keep]); got += int(keep.sum())
        return np.concatenate(out_x)[:n], np.concatenate(out_y)[:n]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BilliardGeometry":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class BoxGeometry:
    """Rectangle [0, l] x [0, h]; used as a separable sanity case."""

    l: float = 1.0
    h: float = 1.0
    scale: float = 1.0

    @property
    def width(self):
        return self.l * self.scale

    @property
    def height(self):
        return self.h * self.scale

    def area(self):
        return self.width * self.height

    def perimeter(self):
        return 2 * (self.width + self.height)

    def free_perimeter(self):
        return self.width + self.height

    def contains_many(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)

    def contains(self, point):
        return bool(self.contains_many(*point))

    def strictly_inside_many(self, x, y, tol=1e-12):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = tol * max(1.0, self.width)
        return (x > t) & (x < self.width - t) & (y > t) & (y < self.height - t)

    def area_rule(self, n):
        nx = max(2, int(math.ceil(n * self.width / self.height)))
        gx, wx = _gauss01(nx)
        gy, wy = _gauss01(n)
        X, Y = np.meshgrid(self.width * gx, self.height * gy, indexing="ij")
        return AreaRule(X.ravel(), Y.ravel(), np.outer(self.width * wx, self.height * wy).ravel())

    def area_rule_for_wavenumber(self, k, points_per_wavelength=10.0):
        n = max(8, int(math.ceil(points_per_wavelength * k * self.height / (2 * math.pi))))
        return self.area_rule(n)

    def region_moment(self, exponents, tol=1e-12):
        i, j = exponents
        return self.width ** (i + 1) / (i + 1) * self.height ** (j + 1) / (j + 1)

    def to_dict(self):
        return asdict(self)
