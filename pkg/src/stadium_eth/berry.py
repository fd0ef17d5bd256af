"""Momentum-circle amplitudes of eigenstates and their two-point correlations.

Also provides the random-wave (Berry ensemble) route to the off-diagonal
envelope, which must agree with the Bessel-product quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .numerics import QuadratureError, QuadratureSpec
from .semiclassics import FFunctionModel, PhysicsParams, wavenumber

__all__ = ["AmplitudeField", "EnergyShell", "CorrelationTable", "ResamplingError",
           "amplitude_field", "resample", "correlation_same_state", "correlation_cross_state",
           "synthetic_fields", "berry_f2_equivalence", "integrated_off_center"]


class ResamplingError(ValueError):
    pass


@dataclass(frozen=True)
class AmplitudeField:
    index: int
    energy: float
    momentum: float
    angles: np.ndarray
    amplitudes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class EnergyShell:
    center: int
    n_ave: int

    def __post_init__(self):
        if self.n_ave < 1:
            raise ValueError("N_ave must be >= 1")

    def members(self, n_total: int) -> range:
        lo = self.center - self.n_ave // 2
        lo = min(max(lo, 0), n_total - self.n_ave)
        if lo < 0:
            raise ValueError("shell larger than the available spectrum")
        return range(lo, lo + self.n_ave)


@dataclass
class CorrelationTable:
    x: np.ndarray
    value: np.ndarray
    count: np.ndarray
    stderr: np.ndarray
    n_ave: int
    central: int


def _sign_fix(a):
    return a if a[np.argmax(np.abs(a))] >= 0 else -a


def amplitude_field(state) -> AmplitudeField:
    """Real-direction coefficients as samples on the quarter momentum circle.

    The evanescent columns of the basis have no real momentum and are left out.
    Amplitudes are scaled so that sum w_n A_n^2 = 1 with w_n = pi/(2N) and sign-fixed
    so the largest-magnitude entry is positive.
    """
    na = state.basis.angles.size
    a = np.asarray(state.coeffs[:na], dtype=float)
    w = np.full(na, (math.pi / 2) / na)
    nrm = math.sqrt(float(np.sum(w * a * a)))
    if nrm == 0:
        raise ValueError("state has no real-direction content")
    return AmplitudeField(state.index, state.energy, state.hbar * state.k,
                          state.basis.angles.copy(), _sign_fix(a / nrm), w)


def resample(field: AmplitudeField, angles: np.ndarray) -> AmplitudeField:
    """Linear interpolation onto another set of directions, renormalized and sign-fixed."""
    angles = np.asarray(angles, dtype=float)
    lo, hi = field.angles.min(), field.angles.max()
    if np.any(angles < 0) or np.any(angles > math.pi / 2):
        raise ResamplingError("target directions must lie in [0, pi/2]")
    if field.angles.size < 2 or not np.all(np.diff(field.angles) > 0):
        raise ResamplingError("source directions must be strictly increasing")
    # amplitudes vanish at both ends of the quarter circle by symmetry
    xa = np.concatenate([[0.0], field.angles, [math.pi / 2]]) if lo > 0 and hi < math.pi / 2 \
        else field.angles
    ya = np.concatenate([[0.0], field.amplitudes, [0.0]]) if xa.size > field.angles.size \
        else field.amplitudes
    a = np.interp(angles, xa, ya)
    w = np.full(angles.size, (math.pi / 2) / angles.size)
    nrm = math.sqrt(float(np.sum(w * a * a)))
    if nrm == 0:
        raise ResamplingError("resampled amplitudes vanish")
    return AmplitudeField(field.index, field.energy, field.momentum, angles, _sign_fix(a / nrm), w)


def _common(fields, n_angles=None):
    if n_angles is None:
        n_angles = min(f.angles.size for f in fields)
    grid = (np.arange(n_angles) + 0.5) * (math.pi / 2) / n_angles
    return [f if (f.angles.size == grid.size and np.allclose(f.angles, grid)) else resample(f, grid)
            for f in fields], grid


def _member_binned(idx_list, val_list, nb):
    """Bin means per member, then mean and spread across members.

    The standard error comes from the member-to-member scatter, which stays
    honest when values inside one member are correlated; a single member
    falls back to the within-bin scatter.
    """
    per = []
    cnt = np.zeros(nb, dtype=np.int64)
    s1 = np.zeros(nb)
    s2 = np.zeros(nb)
    for idx, v in zip(idx_list, val_list):
        c = np.bincount(idx, minlength=nb)
        t = np.bincount(idx, weights=v, minlength=nb)
        per.append(np.where(c > 0, t / np.maximum(c, 1), np.nan))
        cnt += c
        s1 += t
        s2 += np.bincount(idx, weights=v * v, minlength=nb)
    per = np.array(per)
    with np.errstate(invalid="ignore"):
        mean = np.where(cnt > 0, s1 / np.maximum(cnt, 1), np.nan)
        if len(per) > 1:
            n_ok = np.sum(np.isfinite(per), axis=0)
            sd = np.nanstd(per, axis=0, ddof=1) if np.all(n_ok > 1) else \
                np.array([np.nanstd(col, ddof=1) if np.sum(np.isfinite(col)) > 1 else np.nan
                          for col in per.T])
            se = sd / np.sqrt(np.maximum(n_ok, 1))
        else:
            var = (s2 - cnt * np.nan_to_num(mean) ** 2) / np.maximum(cnt - 1, 1)
            se = np.where(cnt > 1, np.sqrt(np.maximum(var, 0) / np.maximum(cnt, 1)), np.nan)
    return mean, cnt, se


def correlation_same_state(fields, shell: EnergyShell, n_bins: int = 40,
                           n_angles: int | None = None) -> CorrelationTable:
    """Shell average of A_i(p1) A_i(p2) binned by chord distance |p1 - p2|.

    Distances are in units of the state's own momentum, so the axis runs
    over [0, sqrt 2] for directions in one quadrant. The bin holding zero
    separation is normalized to 1.
    """
    members = [fields[n] for n in shell.members(len(fields))]
    members, grid = _common(members, n_angles)
    d = 2 * np.abs(np.sin(0.5 * (grid[:, None] - grid[None, :])))
    edges = np.linspace(0.0, math.sqrt(2) * (1 + 1e-12), n_bins + 1)
    idx = np.searchsorted(edges, d.ravel(), side="right") - 1
    mean, cnt, se = _member_binned([idx] * len(members),
                                   [np.outer(f.amplitudes, f.amplitudes).ravel() for f in members],
                                   n_bins)
    norm = mean[0]
    mean, se = mean / norm, se / abs(norm)
    return CorrelationTable(0.5 * (edges[1:] + edges[:-1]), mean, cnt, se, shell.n_ave, 0)


def correlation_cross_state(fields, shell: EnergyShell, de_width: float,
                            n_angles: int | None = None, max_de: float | None = None
                            ) -> CorrelationTable:
    """Direction-averaged A_i(p) A_j(p) for shell anchors i against every field j,
    binned by E_i - E_j. The i = j terms form their own central bin (value 1).
    """
    fields, grid = _common(list(fields), n_angles)
    E = np.array([f.energy for f in fields])
    A = np.array([f.amplitudes for f in fields])
    w = fields[0].weights
    anchors = list(shell.members(len(fields)))
    overlaps = [(A @ (w * A[i]), E[i] - E, i) for i in anchors]
    if max_de is None:
        max_de = float(max(np.max(np.abs(de)) for _, de, _ in overlaps))
    nside = max(1, int(math.ceil(max_de / de_width)))
    edges = np.concatenate([-de_width * np.arange(nside, 0, -1), [0.0],
                            de_width * np.arange(1, nside + 1)])
    nb = edges.size - 1
    idx_list, val_list, self_vals = [], [], []
    for ov, de, i in overlaps:
        mask = np.arange(len(fields)) != i
        idx = np.searchsorted(edges, de[mask], side="right") - 1
        ok = (idx >= 0) & (idx < nb)
        idx_list.append(idx[ok]); val_list.append(ov[mask][ok]); self_vals.append(ov[i])
    mean, cnt, se = _member_binned(idx_list, val_list, nb)
    centers = 0.5 * (edges[1:] + edges[:-1])
    sv = np.array(self_vals)
    norm = float(sv.mean())
    central = nside
    x_out = np.insert(centers, central, 0.0)
    val = np.insert(mean, central, norm) / norm
    cnt_out = np.insert(cnt, central, sv.size)
    se_out = np.insert(se, central, float(sv.std()) / math.sqrt(sv.size)) / norm
    return CorrelationTable(x_out, val, cnt_out, se_out, shell.n_ave, central)


def integrated_off_center(table: CorrelationTable) -> float:
    """Sum of |correlation| times bin count fraction outside the central bin."""
    mask = np.arange(table.value.size) != table.central
    v = np.nan_to_num(table.value[mask])
    return float(np.sum(np.abs(v)) / mask.sum())


def synthetic_fields(n_states: int, n_angles: int, energies, rng: np.random.Generator,
                     momentum: float = 1.0):
    """Independent Gaussian amplitude vectors (an uncorrelated random-wave ensemble)."""
    grid = (np.arange(n_angles) + 0.5) * (math.pi / 2) / n_angles
    w = np.full(n_angles, (math.pi / 2) / n_angles)
    out = []
    for n in range(n_states):
        a = rng.standard_normal(n_angles)
        a /= math.sqrt(float(np.sum(w * a * a)))
        out.append(AmplitudeField(n, float(energies[n]), momentum, grid, _sign_fix(a), w))
    return out


# --- random-wave route to the off-diagonal envelope --------------------------

def _two_point(k, r, phi, n_dir):
    """(1/M) sum_m cos(k r n_m . e_phi): the random-wave two-point function at
    separation r along direction phi, for M uniformly spread real directions."""
    th = (np.arange(n_dir) + 0.5) * 2 * math.pi / n_dir
    proj = np.cos(th[None, None, :] - phi[None, :, None])
    return np.cos(k * r[:, None, None] * proj).mean(axis=-1)


def _berry_estimate(ki, kj, Q, V20, S, n_panels, n_dir, n_phi):
    g, gw = leggauss(6)
    e = np.linspace(0.0, Q, n_panels + 1)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    r = (mid[:, None] + half[:, None] * g).ravel()
    wr = (half[:, None] * gw).ravel()
    phi = (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    acc_local = []
    acc_corr = []
    for s in range(0, r.size, 512):
        rr = r[s:s + 512]
        prod = _two_point(ki, rr, phi, n_dir) * _two_point(kj, rr, phi, n_dir)
        ang0 = prod.mean(axis=1) * 2 * math.pi
        ang2 = (prod * np.cos(phi)[None, :] ** 2).mean(axis=1) * 2 * math.pi
        acc_local.append(wr[s:s + 512] * rr * ang0)
        acc_corr.append(wr[s:s + 512] * rr**3 * ang2)
    local = math.fsum(np.concatenate(acc_local).tolist())
    corr = math.fsum(np.concatenate(acc_corr).tolist())
    return (V20 * local - S / 4 * corr) / S**2


def berry_f2_equivalence(params: PhysicsParams, Ei: float, Ej: float,
                         model: FFunctionModel | None = None,
                         spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Off-diagonal envelope from shell-averaged Wigner functions built from random waves.

    The shell average of a state's Wigner function is replaced by the
    random-wave ensemble: its two-point function is an explicit average of
    plane waves over real directions at |p| = sqrt(2 m E). The separation
    integral is done on a polar grid (Gauss panels in r, midpoint in angle)
    with no Bessel functions involved; the direction count and the panels are
    doubled until the estimate settles.
    """
    if model is None:
        model = FFunctionModel(params)
    if Ei <= 0 or Ej <= 0:
        raise ValueError("energies must be positive")
    geom = params.geometry
    S = geom.area()
    V20 = geom.region_moment((2, 0))
    Q = model.Q
    ki, kj = float(wavenumber(Ei, params)), float(wavenumber(Ej, params))
    kmax = max(ki, kj, 1.0)
    n_panels = max(1, int(math.ceil(Q * spec.samples_per_oscillation * kmax / (2 * math.pi))))
    n_dir = 2 * int(math.ceil(kmax * Q)) + 40
    n_phi = 8
    prev = _berry_estimate(ki, kj, Q, V20, S, n_panels, n_dir, n_phi)
    err = math.inf
    while n_panels * 2 <= spec.max_subdivisions:
        n_panels *= 2
        n_dir = int(n_dir * 1.5)
        n_phi *= 2
        cur = _berry_estimate(ki, kj, Q, V20, S, n_panels, n_dir, n_phi)
        err = abs(cur - prev)
        if err <= max(spec.abs_tol, spec.rel_tol * abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("random-wave envelope did not converge", prev, err)
