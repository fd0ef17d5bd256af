"""Semiclassical predictions for matrix elements of the position observable q_x.

Closed forms, the Bessel-product quadrature route, bandwidth and
thermalization-time scales, and the diagonal average.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize, special

from .geometry import BilliardGeometry
from .numerics import (QuadratureError, QuadratureSpec, integrate_1d,
                       integrate_osc_product, richardson_extrapolate)

__all__ = [
    "PhysicsParams", "FFunctionModel", "SemiclassicalShell", "ClosedFormResult",
    "shell_volume", "mean_level_spacing", "overlap_prefactor", "overlap_prefactor_smeared",
    "overlap_prefactor_extrapolated", "f2_offdiag_numeric", "f2_offdiag_closed_full",
    "f2_offdiag_closed_truncated", "closed_form_evaluate", "asymptotic_integrand_quadrature",
    "bandwidth_prediction", "main_sine_first_zero", "thermalization_time", "diag_semiclassical",
    "energy_shell", "wavenumber", "write_f2_csv",
]


@dataclass(frozen=True)
class PhysicsParams:
    hbar: float = 1.0
    m: float = 1.0
    geometry: BilliardGeometry = field(default_factory=BilliardGeometry)

    def __post_init__(self):
        if not (self.hbar > 0 and self.m > 0):
            raise ValueError("hbar and m must be positive")


@dataclass(frozen=True)
class FFunctionModel:
    """Inputs for the off-diagonal envelope: physics, cutoff Q and domain mode.

    ``Q`` defaults to sqrt(area). ``mode`` is ``"factorized"`` (separate
    centre and separation integrals, radial cutoff Q) or ``"coupled"``
    (both endpoints q +/- q~/2 constrained to the region).
    """

    params: PhysicsParams = field(default_factory=PhysicsParams)
    Q: float | None = None
    mode: str = "factorized"

    def __post_init__(self):
        if self.Q is None:
            object.__setattr__(self, "Q", math.sqrt(self.params.geometry.area()))
        if not self.Q > 0:
            raise ValueError("cutoff Q must be positive")
        if self.mode not in ("factorized", "coupled"):
            raise ValueError(f"unknown domain mode {self.mode!r}")

    @property
    def a(self) -> float:
        return math.sqrt(self.params.geometry.area() / (1 + math.pi / 4))


@dataclass(frozen=True)
class SemiclassicalShell:
    energy: float
    volume: float


@dataclass(frozen=True)
class ClosedFormResult:
    value: float
    degenerate: bool


def wavenumber(E, params: PhysicsParams):
    return np.sqrt(2 * params.m * np.asarray(E, dtype=float)) / params.hbar


def shell_volume(params: PhysicsParams) -> float:
    return 2 * math.pi * params.m * params.geometry.area()


def energy_shell(E: float, params: PhysicsParams) -> SemiclassicalShell:
    return SemiclassicalShell(float(E), shell_volume(params))


def mean_level_spacing(params: PhysicsParams) -> float:
    """Weyl mean level spacing 2 pi hbar^2 / (m S)."""
    return 2 * math.pi * params.hbar**2 / (params.m * params.geometry.area())


def overlap_prefactor(params: PhysicsParams) -> float:
    """Coefficient of delta(Ei - Ej) in the shell-averaged Wigner overlap."""
    return 2 * math.pi * params.hbar**2 / (params.m * params.geometry.area())


def _gauss(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def overlap_prefactor_smeared(params: PhysicsParams, E: float, sigma: float) -> float:
    """Overlap chain with Gaussian-smeared deltas, integrated over the second energy.

    Evaluates  hbar^2/(m^2 S) * int dEj int d^2p  d_s(p^2/2m - E) d_s(p^2/2m - Ej)
    by nested Gauss-Legendre quadrature; tends to ``overlap_prefactor`` as sigma -> 0.
    """
    if sigma <= 0 or E <= 0:
        raise ValueError("E and sigma must be positive")
    m, hb, S = params.m, params.hbar, params.geometry.area()
    span = 12 * sigma
    if E <= 2 * span:
        raise ValueError("E must exceed 24 sigma so the smeared shell stays at positive energy")
    g, gw = leggauss(200)
    # kinetic energy e = p^2/2m, so d^2p = 2 pi m de
    e = E + span * g
    inner_e = 2 * math.pi * m * span * gw * _gauss(e - E, sigma)
    ej = E - 2 * span + 2 * span * (g + 1)
    wj = 2 * span * gw
    kern = _gauss(e[:, None] - ej[None, :], sigma)
    total = float(inner_e @ kern @ wj)
    return hb**2 / (m**2 * S) * total


def overlap_prefactor_extrapolated(params: PhysicsParams, E: float,
                                   sigmas=(0.1, 0.05, 0.025)) -> float:
    vals = [overlap_prefactor_smeared(params, E, s) for s in sigmas]
    ratio = sigmas[0] / sigmas[1]
    est, _ = richardson_extrapolate(vals, ratio=ratio)
    return est


# --- quadrature route --------------------------------------------------------

def _coupled_f2(ki, kj, geom: BilliardGeometry, spec: QuadratureSpec, chunk=2048):
    """(1/S^2) int_Omega int_Omega u_x v_x J0(ki|u-v|) J0(kj|u-v|) du dv.

    Equivalent to the centre/separation form with both endpoints in the
    region (unit Jacobian for u = q + q~/2, v = q - q~/2).
    """
    S = geom.area()
    kmax = max(ki, kj, 1.0)

    def evaluate(n):
        rule = geom.area_rule(n)
        x, y, w = rule.x, rule.y, rule.w
        wx = w * x
        parts = []
        for s in range(0, x.size, chunk):
            dx = x[s:s + chunk, None] - x[None, :]
            dy = y[s:s + chunk, None] - y[None, :]
            r = np.hypot(dx, dy)
            kern = special.j0(ki * r) * special.j0(kj * r)
            parts.append(wx[s:s + chunk] @ (kern @ wx))
        return math.fsum(parts) / S**2

    n = max(12, int(math.ceil(spec.samples_per_oscillation * kmax * geom.height / (2 * math.pi))))
    prev = evaluate(n)
    err = math.inf
    budget = spec.max_subdivisions
    while True:
        n = int(math.ceil(n * 1.5))
        if 4 * n * n > budget * 64:
            raise QuadratureError("coupled-domain quadrature exceeded node budget", prev, err)
        cur = evaluate(n)
        err = abs(cur - prev)
        if err <= max(spec.abs_tol, spec.rel_tol * abs(cur)) * 100:
            return cur
        prev = cur


def f2_offdiag_numeric(Ei: float, Ej: float, model: FFunctionModel,
                       spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Quadrature estimate of |<Ei|q_x|Ej>|^2 from the shell-averaged Wigner functions.

    Factorized mode:
        (V20/S^2) 2 pi I1(Q) - (pi/(4 S)) I3(Q),
        I_w(Q) = int_0^Q r^w J0(ki r) J0(kj r) dr.
    """
    if Ei <= 0 or Ej <= 0:
        raise ValueError("energies must be positive")
    p = model.params
    ki, kj = float(wavenumber(Ei, p)), float(wavenumber(Ej, p))
    geom = p.geometry
    if model.mode == "coupled":
        return _coupled_f2(ki, kj, geom, spec)
    S = geom.area()
    V20 = geom.region_moment((2, 0))
    I1 = integrate_osc_product(ki, kj, 1, model.Q, spec)
    I3 = integrate_osc_product(ki, kj, 3, model.Q, spec)
    return V20 / S**2 * 2 * math.pi * I1 - math.pi / (4 * S) * I3


# --- closed forms -------------------------------------------------------------

def _g_series(x):
    # (sin x - x cos x)/x^3 = sum_{n>=1} (-1)^(n+1) 2n x^(2n-2)/(2n+1)!
    x2 = x * x
    out = np.zeros_like(x)
    term_fact = 1.0
    for n in range(1, 12):
        term_fact = math.factorial(2 * n + 1)
        out = out + (-1) ** (n + 1) * 2 * n * x2 ** (n - 1) / term_fact
    return out


def _g(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.5
    xs = np.where(small, 1.0, x)
    big = (np.sin(xs) - xs * np.cos(xs)) / xs**3
    return np.where(small, _g_series(x), big)


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def closed_form_evaluate(Ei, Ej, model: FFunctionModel, full: bool = True,
                         degeneracy_guard: float = 1e-8):
    """Vectorized closed form; returns ``(values, degenerate_mask)``.

    The difference part is written as
        c Q [(A - Q^2/8) sinc(x) + (Q^2/4) g(x)],  x = c Q (sqrt Ei - sqrt Ej),
    with g(x) = (sin x - x cos x)/x^3, which is exact and has a finite limit at
    Ei = Ej. Pairs whose root-energy gap is below ``degeneracy_guard * (sqrt Ei + sqrt Ej)``
    are evaluated at the limit x = 0 and flagged.
    """
    Ei = np.asarray(Ei, dtype=float)
    Ej = np.asarray(Ej, dtype=float)
    if np.any(Ei <= 0) or np.any(Ej <= 0):
        raise ValueError("energies must be positive")
    p = model.params
    geom = p.geometry
    S = geom.area()
    A = geom.region_moment((2, 0)) / S
    Q = model.Q
    c = math.sqrt(2 * p.m) / p.hbar
    eta = 1.0 / c
    si, sj = np.sqrt(Ei), np.sqrt(Ej)
    d = si - sj
    s = si + sj
    K = p.hbar**2 / (p.m * S * np.sqrt(si * sj))
    degenerate = np.abs(d) < degeneracy_guard * s
    x = np.where(degenerate, 0.0, c * Q * d)
    body = c * Q * ((A - Q**2 / 8) * _sinc(x) + (Q**2 / 4) * _g(x))
    if full:
        y = c * Q * s
        body = body + (A * (1 - np.cos(y)) / s + (Q**2 / 8) * np.cos(y) / s
                       - (eta * Q / 4) * np.sin(y) / s**2
                       - (eta**2 / 4) * (np.cos(y) - 1) / s**3)
    return K * body, degenerate


def f2_offdiag_closed_full(Ei: float, Ej: float, model: FFunctionModel,
                           degeneracy_guard: float = 1e-8) -> ClosedFormResult:
    """Exact integral of the large-argument integrand over [0, Q].

    Keeps both the sqrt(Ei)-sqrt(Ej) and the sqrt(Ei)+sqrt(Ej) oscillations.
    """
    v, deg = closed_form_evaluate(Ei, Ej, model, True, degeneracy_guard)
    return ClosedFormResult(float(v), bool(deg))


def f2_offdiag_closed_truncated(Ei: float, Ej: float, model: FFunctionModel,
                                degeneracy_guard: float = 1e-8) -> ClosedFormResult:
    """Closed form keeping only the sqrt(Ei)-sqrt(Ej) terms."""
    v, deg = closed_form_evaluate(Ei, Ej, model, False, degeneracy_guard)
    return ClosedFormResult(float(v), bool(deg))


def asymptotic_integrand_quadrature(Ei: float, Ej: float, model: FFunctionModel,
                                    n_points: int = 1_000_001) -> float:
    """Dense trapezoid integral of the Bessel-product integrand with J0 replaced by its
    leading asymptotic form. Reference for the closed form."""
    p = model.params
    geom = p.geometry
    S = geom.area()
    V20 = geom.region_moment((2, 0))
    a, b = float(wavenumber(Ei, p)), float(wavenumber(Ej, p))
    r = np.linspace(0.0, model.Q, n_points)
    f = np.cos(a * r - np.pi / 4) * np.cos(b * r - np.pi / 4)
    I0 = np.trapezoid(f, r)
    I2 = np.trapezoid(r**2 * f, r)
    pref = 2.0 / (np.pi * math.sqrt(a * b))
    return pref * (V20 / S**2 * 2 * math.pi * I0 - math.pi / (4 * S) * I2)


# --- scales -------------------------------------------------------------------

def bandwidth_prediction(E: float, model: FFunctionModel) -> float:
    """Half the period of the main oscillation: pi hbar sqrt(2E/m) / Q."""
    if E <= 0:
        raise ValueError("E must be positive")
    p = model.params
    return math.pi * p.hbar * math.sqrt(2 * E / p.m) / model.Q


def main_sine_first_zero(E: float, model: FFunctionModel) -> float:
    """Smallest ΔE > 0 where the leading sine of the closed form vanishes, with the
    pair placed symmetrically about E: c Q (sqrt(E + ΔE/2) - sqrt(E - ΔE/2)) = pi."""
    p = model.params
    c = math.sqrt(2 * p.m) / p.hbar

    def phase(de):
        return c * model.Q * (math.sqrt(E + de / 2) - math.sqrt(E - de / 2)) - math.pi

    hi = 2 * E * (1 - 1e-12)
    if phase(hi) < 0:
        raise ValueError("no zero of the main sine below ΔE = 2E")
    return float(optimize.brentq(phase, 0.0, hi, xtol=1e-14 * E, rtol=1e-14))


def thermalization_time(w_b: float, hbar: float) -> float:
    if not w_b > 0:
        raise ValueError("bandwidth must be positive")
    return hbar / w_b


def diag_semiclassical(params: PhysicsParams) -> float:
    """Microcanonical average of q_x: first x-moment of the region over its area."""
    g = params.geometry
    return g.region_moment((1, 0)) / g.area()


def write_f2_csv(path, Ei, Ej, numeric, full, truncated, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["Ei", "Ej", "f2_numeric", "f2_closed_full", "f2_closed_truncated"])
        for row in zip(Ei, Ej, numeric, full, truncated):
            w.writerow([repr(float(v)) for v in row])
