"""Scaling-method solver: many Dirichlet eigenpairs near a reference wavenumber
from one symmetric eigenproblem built on the free boundary."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import BilliardGeometry
from ..semiclassics import PhysicsParams
from .basis import PlaneWaveBasis, make_basis

__all__ = ["SolverSettings", "EigenState", "SpectralWindow", "solve_window",
           "solve_range", "evaluate_state", "boundary_residual", "weyl_count"]


@dataclass(frozen=True)
class SolverSettings:
    """Knobs for the scaling method.

    ``half_width`` is the accepted |k - k_ref| in units of 1/height; the
    eigenvalue error grows like the cube of that offset, so the window is
    absolute rather than a fraction of k.
    """

    half_width: float = 0.05
    margin: int = 10
    rate_max: float = 2.0
    singular_cutoff: float = 1e-8
    boundary_ppw: float = 10.0
    residual_ppw: float = 20.0
    norm_ppw: float = 10.0
    residual_max: float = 1e-3
    degeneracy_guard: float = 1e-6
    duplicate_overlap: float = 0.5

    def __post_init__(self):
        if not (0 < self.half_width < 1):
            raise ValueError("half_width must lie in (0, 1)")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass(frozen=True)
class EigenState:
    index: int
    k: float
    energy: float
    hbar: float
    m: float
    basis: PlaneWaveBasis
    coeffs: np.ndarray
    residual: float
    geometry: BilliardGeometry

    @property
    def angles(self):
        return self.basis.angles

    def sample(self, x, y):
        """psi at points known to lie in the region (no membership test)."""
        return self.basis.evaluate(self.k, x, y) @ self.coeffs


@dataclass(frozen=True)
class SpectralWindow:
    k_min: float
    k_max: float
    k_center: float
    states: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def evaluate_state(state: EigenState, points) -> np.ndarray:
    """psi at each point, zero outside the region."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    inside = state.geometry.contains_many(x, y)
    out = np.zeros(x.size)
    if np.any(inside):
        out[inside] = state.sample(x[inside], y[inside])
    return out


def boundary_residual(geometry, basis: PlaneWaveBasis, k: float, coeffs, norm_sq: float,
                      ppw: float = 20.0) -> float:
    """RMS of psi on the free boundary over RMS of psi in the region."""
    b = geometry.boundary_rule(k * math.cosh(basis.top_rates.max(initial=0.0)), ppw)
    psi_b = basis.evaluate(k, b.x, b.y) @ coeffs
    rms_b = math.sqrt(float(np.sum(b.w * psi_b**2)) / float(np.sum(b.w)))
    rms_in = math.sqrt(norm_sq / geometry.area())
    return rms_b / rms_in


def weyl_count(k, geometry) -> float:
    """Two-term Weyl estimate of the number of Dirichlet states below k."""
    return geometry.area() * k**2 / (4 * math.pi) - geometry.perimeter() * k / (4 * math.pi)


def _min_angles(k, geometry, margin):
    return int(math.ceil(k * geometry.free_perimeter() / math.pi)) + margin


@dataclass
class _Candidate:
    k: float
    offset: float
    coeffs: np.ndarray
    basis: PlaneWaveBasis
    residual: float
    psi: np.ndarray | None = None


def _window_candidates(geometry, k0, settings: SolverSettings, n_basis, accept,
                       area_rule=None):
    """Solve the scaling eigenproblem at k0 and return normalized candidates."""
    P = geometry.free_perimeter()
    if n_basis is not None and n_basis < _min_angles(k0, geometry, settings.margin):
        raise ValueError(
            f"basis size {n_basis} below resolvability bound "
            f"{_min_angles(k0, geometry, settings.margin)} at k={k0}")
    basis = make_basis(k0, P, geometry.height, geometry.width, n_angles=n_basis,
                       margin=settings.margin, rate_max=settings.rate_max)
    kb = k0 * math.cosh(settings.rate_max)
    b = geometry.boundary_rule(kb, settings.boundary_ppw)
    phi, rd = basis.evaluate(k0, b.x, b.y, radial_derivative=True)
    sw = np.sqrt(b.w / b.r_dot_n)
    U, s, Vt = np.linalg.svd(sw[:, None] * phi, full_matrices=False)
    keep = s > settings.singular_cutoff * s[0]
    warnings = []
    if not np.all(keep):
        warnings.append(f"k_ref={k0!r}: truncated {int((~keep).sum())} of {s.size} singular values")
    Uk, sk, Vk = U[:, keep], s[keep], Vt[keep].T
    M = (Uk.T @ (sw[:, None] * rd) @ Vk) / sk
    mu, Y = np.linalg.eigh((M + M.T) / k0)
    with np.errstate(divide="ignore"):
        eps = 2.0 / mu
    C = (Vk / sk) @ Y
    hw = settings.half_width / geometry.height
    sel = np.flatnonzero(np.abs(eps) <= hw)
    if area_rule is None:
        area_rule = geometry.area_rule_for_wavenumber(k0 + hw, settings.norm_ppw)
    out = []
    for j in sel:
        kj = float(k0 - eps[j])
        if not accept(kj):
            continue
        c = C[:, j]
        psi = basis.evaluate(kj, area_rule.x, area_rule.y) @ c
        nrm = float(np.sum(area_rule.w * psi**2))
        c = c / math.sqrt(nrm)
        psi = psi / math.sqrt(nrm)
        res = boundary_residual(geometry, basis, kj, c, 1.0, settings.residual_ppw)
        out.append(_Candidate(kj, float(eps[j]), c, basis, res, psi))
    return out, warnings


def _to_states(cands, params, geometry, index_offset=0):
    states = []
    for n, c in enumerate(cands):
        states.append(EigenState(
            index=index_offset + n + 1, k=c.k,
            energy=params.hbar**2 * c.k**2 / (2 * params.m),
            hbar=params.hbar, m=params.m, basis=c.basis, coeffs=c.coeffs,
            residual=c.residual, geometry=geometry))
    return states


def solve_window(geometry: BilliardGeometry, params: PhysicsParams, k_center: float,
                 n_basis: int | None = None,
                 settings: SolverSettings = SolverSettings()) -> SpectralWindow:
    """All accepted eigenpairs with |k - k_center| <= half_width / height."""
    if not k_center > 0:
        raise ValueError("k_center must be positive")
    hw = settings.half_width / geometry.height
    cands, warnings = _window_candidates(geometry, k_center, settings, n_basis, lambda k: True)
    good = []
    for c in sorted(cands, key=lambda c: c.k):
        if c.residual < settings.residual_max:
            good.append(c)
        else:
            warnings.append(f"rejected k={c.k!r}: boundary residual {c.residual:.2e}")
    good = _apply_guard(good, settings.degeneracy_guard * k_center, warnings)
    return SpectralWindow(k_center - hw, k_center + hw, k_center,
                          _to_states(good, params, geometry), warnings)


def _apply_guard(cands, dk, warnings):
    out = []
    for c in cands:
        if out and c.k - out[-1].k < dk:
            worse = c if c.residual >= out[-1].residual else out[-1]
            warnings.append(f"dropped k={worse.k!r}: closer than degeneracy guard to a neighbour")
            if worse is out[-1]:
                out[-1] = c
            continue
        out.append(c)
    return out


def solve_range(geometry: BilliardGeometry, params: PhysicsParams, k_min: float, k_max: float,
                settings: SolverSettings = SolverSettings(), progress=None):
    """Stitch overlapping windows to cover [k_min, k_max].

    Windows are spaced 1.8 half-widths apart. Each window keeps candidates in
    its own core slice plus a small collar. Duplicates from adjacent windows
    are recognised by sampled-overlap on a shared rule, and the copy with the
    smaller offset from its window centre wins.
    Returns ``(states, windows)`` where ``windows`` lists
    ``(k_center, [state positions])``.
    """
    if not (0 < k_min < k_max):
        raise ValueError("need 0 < k_min < k_max")
    hw = settings.half_width / geometry.height
    step = 1.8 * hw
    collar = 0.1 * hw
    n_win = max(1, int(math.ceil((k_max - k_min) / step)))
    centers = k_min + step * (np.arange(n_win) + 0.5)
    shared = geometry.area_rule_for_wavenumber(k_max + hw, settings.norm_ppw)
    pool, warnings = [], []
    for w, kc in enumerate(centers):
        lo = max(k_min, kc - step / 2 - collar)
        hi = min(k_max, kc + step / 2 + collar)
        cands, warn = _window_candidates(geometry, float(kc), settings, None,
                                         lambda k, lo=lo, hi=hi: lo <= k <= hi, shared)
        warnings.extend(warn)
        for c in cands:
            c.window = w
            if c.residual < settings.residual_max:
                pool.append(c)
            else:
                warnings.append(f"rejected k={c.k!r}: boundary residual {c.residual:.2e}")
        if progress:
            progress(w + 1, n_win)
    pool.sort(key=lambda c: c.k)
    merged = []
    for c in pool:
        dup = None
        for prev in reversed(merged[-4:]):
            if prev.window == c.window or abs(prev.k - c.k) > 2 * collar:
                continue
            ov = abs(float(np.sum(shared.w * prev.psi * c.psi)))
            if ov > settings.duplicate_overlap:
                dup = prev
                break
        if dup is None:
            merged.append(c)
        elif abs(c.offset) < abs(dup.offset):
            merged[merged.index(dup)] = c
    merged.sort(key=lambda c: c.k)
    merged = _apply_guard(merged, settings.degeneracy_guard * k_max, warnings)
    for c in merged:
        c.psi = None
    states = _to_states(merged, params, geometry)
    windows = {}
    for pos, c in enumerate(merged):
        windows.setdefault(float(centers[c.window]), []).append(pos)
    return states, sorted(windows.items()), warnings
