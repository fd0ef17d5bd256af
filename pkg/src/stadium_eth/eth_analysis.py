"""Exact matrix elements of q_x between solved eigenstates and their ETH statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .semiclassics import FFunctionModel, bandwidth_prediction, closed_form_evaluate

__all__ = [
    "EthMatrix", "CoarseTable", "BandProfile", "DiagonalSeries", "ResidualSummary",
    "psi_tables", "matrix_element", "compute_matrix", "coarse_grain_f2",
    "band_profile_and_width", "diagonal_series", "residual_statistics", "profile_width",
]

_BLOCK = 32


def _check_ppw(ppw):
    if ppw < 10:
        raise ValueError(f"quadrature resolution {ppw} points per wavelength is below the "
                         "required 10")


def _rule_for(states, ppw):
    _check_ppw(ppw)
    geom = states[0].geometry
    kmax = max(s.k for s in states)
    return geom.area_rule_for_wavenumber(kmax, ppw)


def matrix_element(state_i, state_j, points_per_wavelength: float = 10.0) -> float:
    """Integral of psi_i x psi_j over the region."""
    if (state_i.geometry != state_j.geometry or state_i.hbar != state_j.hbar
            or state_i.m != state_j.m):
        raise ValueError("states must share geometry and physical parameters")
    rule = _rule_for([state_i, state_j], points_per_wavelength)
    a = state_i.sample(rule.x, rule.y)
    b = state_j.sample(rule.x, rule.y)
    return float(np.sum(rule.w * rule.x * a * b))


def psi_tables(states, rule, threads: int = 1):
    """Row n holds psi_n at the rule nodes. Rows are computed independently."""
    out = np.empty((len(states), rule.x.size))

    def fill(n):
        out[n] = states[n].sample(rule.x, rule.y)

    with threadpool_limits(1):
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                list(ex.map(fill, range(len(states))))
        else:
            for n in range(len(states)):
                fill(n)
    return out


@dataclass
class EthMatrix:
    energies: np.ndarray
    wavenumbers: np.ndarray
    indices: np.ndarray
    O: np.ndarray
    norms: np.ndarray
    hbar: float
    m: float
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.energies.size

    def pairs(self):
        """Upper-triangle pairs (i < j) as arrays ``(i, j)``."""
        return np.triu_indices(self.size, 1)


def compute_matrix(states, points_per_wavelength: float = 10.0, threads: int = 1,
                   stride: int = 1) -> EthMatrix:
    """Dense O_ij = <i|x|j> for the given states (every ``stride``-th one).

    The sweep is split into fixed 32 x 32 blocks of the upper triangle; each
    block is one matrix product with BLAS pinned to a single thread, so the
    result does not depend on how many worker threads share the blocks.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    states = sorted(states, key=lambda s: s.k)[::stride]
    if len(states) < 2:
        raise ValueError("need at least two states")
    rule = _rule_for(states, points_per_wavelength)
    T = psi_tables(states, rule, threads)
    Tx = T * (rule.w * rule.x)
    n = len(states)
    O = np.zeros((n, n))
    blocks = [(a, b) for a in range(0, n, _BLOCK) for b in range(a, n, _BLOCK)]

    def work(ab):
        a, b = ab
        O[a:a + _BLOCK, b:b + _BLOCK] = Tx[a:a + _BLOCK] @ T[b:b + _BLOCK].T

    with threadpool_limits(1):
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                list(ex.map(work, blocks))
        else:
            for ab in blocks:
                work(ab)
    iu = np.triu_indices(n, 1)
    O[(iu[1], iu[0])] = O[iu]
    with threadpool_limits(1):
        norms = np.array([float(np.dot(T[i] * rule.w, T[i])) for i in range(n)])
    return EthMatrix(
        energies=np.array([s.energy for s in states]),
        wavenumbers=np.array([s.k for s in states]),
        indices=np.array([s.index for s in states]),
        O=O, norms=norms, hbar=states[0].hbar, m=states[0].m,
        meta=dict(n_points=int(rule.x.size), points_per_wavelength=points_per_wavelength,
                  stride=stride))


@dataclass
class CoarseTable:
    """Bin means of |O_ij|^2 over ordered pairs i != j.

    Bin edges sit at integer multiples of ``de`` (ΔE) and ``ebar_width`` (Ē).
    """

    ebar: np.ndarray
    de: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    stderr: np.ndarray
    de_width: float
    ebar_width: float
    underfilled: np.ndarray
    min_count: int

    def lookup(self, ebar, de):
        """Bin mean for each (Ē, ΔE); NaN where no bin exists."""
        key = {(a, b): v for a, b, v in zip(self._ebar_index(self.ebar),
                                            self._de_index(self.de), self.mean)}
        ia, ib = self._ebar_index(np.asarray(ebar)), self._de_index(np.asarray(de))
        return np.array([key.get((a, b), np.nan) for a, b in zip(ia, ib)])

    def _ebar_index(self, e):
        return np.floor(np.asarray(e) / self.ebar_width).astype(np.int64)

    def _de_index(self, d):
        return np.floor(np.asarray(d) / self.de_width).astype(np.int64)


def coarse_grain_f2(matrix: EthMatrix, de_width: float, ebar_width: float | None = None,
                    stride: int = 1, min_count: int = 20) -> CoarseTable:
    """Mean |O_ij|^2 in (Ē, ΔE) bins; the diagonal is excluded.

    Both orderings of each pair are used, so the table is symmetric in ΔE.
    With ``ebar_width`` None a single Ē bin covers the whole window.
    """
    if de_width <= 0:
        raise ValueError("ΔE bin width must be positive")
    E = matrix.energies[::stride]
    O = matrix.O[::stride, ::stride]
    if ebar_width is None:
        ebar_width = float(E.max() * 2 + 1)
    i, j = np.nonzero(~np.eye(E.size, dtype=bool))
    ebar = 0.5 * (E[i] + E[j])
    de = E[i] - E[j]
    v = O[i, j] ** 2
    ia = np.floor(ebar / ebar_width).astype(np.int64)
    ib = np.floor(de / de_width).astype(np.int64)
    keys = np.stack([ia, ib], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    cnt = np.bincount(inv)
    s1 = np.bincount(inv, weights=v)
    s2 = np.bincount(inv, weights=v * v)
    mean = s1 / cnt
    var = np.where(cnt > 1, (s2 - cnt * mean**2) / np.maximum(cnt - 1, 1), np.nan)
    stderr = np.sqrt(np.maximum(var, 0) / cnt)
    # ordered pairs come in mirrored couples, so the independent count is half
    underfilled = cnt // 2 < min_count
    return CoarseTable(
        ebar=(uniq[:, 0] + 0.5) * ebar_width, de=(uniq[:, 1] + 0.5) * de_width,
        mean=mean, count=cnt, stderr=stderr, de_width=float(de_width),
        ebar_width=float(ebar_width), underfilled=underfilled, min_count=min_count)


@dataclass
class BandProfile:
    de: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    stderr: np.ndarray
    ebar: float
    hwhm: float
    first_minimum: float
    peak: float
    peak_at: float
    smoothed: bool


def _moving_average3(v):
    p = np.concatenate([[v[0]], v, [v[-1]]])
    return (p[:-2] + p[1:-1] + p[2:]) / 3


def profile_width(de, values):
    """Half width at half maximum and first-minimum location of a band profile.

    ``de`` holds increasing |ΔE| >= 0. The half-maximum level is taken from
    the profile maximum and the crossing is searched outward from it, with
    linear interpolation between samples. When the profile is not monotone
    between the maximum and the crossing a 3-bin moving average is used
    instead. Returns ``(hwhm, first_min, peak, peak_at, smoothed)``.
    """
    de = np.asarray(de, dtype=float)
    v = np.asarray(values, dtype=float)

    def crossing(prof):
        p = int(np.argmax(prof))
        peak = float(prof[p])
        half = 0.5 * peak
        below = np.flatnonzero(prof[p:] < half)
        if below.size == 0:
            return peak, float(de[p]), math.nan, False
        n = p + int(below[0])
        monotone = bool(np.all(np.diff(prof[p:n + 1]) <= 0))
        x0, x1, y0, y1 = de[n - 1], de[n], prof[n - 1], prof[n]
        return peak, float(de[p]), float(x0 + (half - y0) * (x1 - x0) / (y1 - y0)), monotone

    peak, at, w, ok = crossing(v)
    smoothed = False
    if not ok:
        peak, at, w, _ = crossing(_moving_average3(v))
        smoothed = True
    first_min = math.nan
    sm = _moving_average3(v)
    start = int(np.argmax(sm))
    for n in range(start + 1, sm.size - 1):
        if sm[n] <= sm[n - 1] and sm[n] < sm[n + 1]:
            first_min = float(de[n])
            break
    return w, first_min, peak, at, smoothed


def band_profile_and_width(table: CoarseTable, ebar: float | None = None) -> BandProfile:
    """Profile versus |ΔE| in one Ē bin (default: the best-populated one), and its width.

    Mirrored ΔE bins are pooled; the value nearest ΔE = 0 is taken as the peak.
    """
    if ebar is None:
        sums = {}
        for e, c in zip(table.ebar, table.count):
            sums[e] = sums.get(e, 0) + c
        ebar = max(sums, key=lambda e: (sums[e], -e))
    else:
        ebar = (math.floor(ebar / table.ebar_width) + 0.5) * table.ebar_width
    sel = np.isclose(table.ebar, ebar)
    de, mean, cnt = table.de[sel], table.mean[sel], table.count[sel]
    # fold onto |ΔE| bins: centre (n+1/2)w pairs with -(n+1/2)w
    absbin = np.floor(np.abs(de) / table.de_width).astype(int)
    nb = int(absbin.max()) + 1
    c = np.bincount(absbin, weights=cnt, minlength=nb)
    s = np.bincount(absbin, weights=mean * cnt, minlength=nb)
    var_s = np.bincount(absbin, weights=(table.stderr[sel] * cnt) ** 2, minlength=nb)
    ok = c > 0
    centers = (np.arange(nb) + 0.5) * table.de_width
    m = np.where(ok, s / np.where(ok, c, 1), np.nan)
    se = np.sqrt(var_s) / np.where(ok, c, 1)
    centers, m, c, se = centers[ok], m[ok], c[ok], se[ok]
    hw, fm, peak, at, smoothed = profile_width(centers, m)
    return BandProfile(centers, m, c, se, float(ebar), hw, fm, peak, at, smoothed)


@dataclass
class DiagonalSeries:
    energies: np.ndarray
    values: np.ndarray
    running_mean: np.ndarray
    bin_centers: np.ndarray
    bin_mean: np.ndarray
    bin_std: np.ndarray
    bin_count: np.ndarray


def diagonal_series(matrix: EthMatrix, n_bins: int = 4) -> DiagonalSeries:
    """Diagonal elements, their cumulative mean, and mean/std in equal-width energy bins."""
    E = matrix.energies
    d = np.diag(matrix.O).copy()
    running = np.cumsum(d) / np.arange(1, d.size + 1)
    edges = np.linspace(E.min(), E.max(), n_bins + 1)
    which = np.clip(np.searchsorted(edges, E, side="right") - 1, 0, n_bins - 1)
    cnt = np.bincount(which, minlength=n_bins)
    mean = np.bincount(which, weights=d, minlength=n_bins) / np.maximum(cnt, 1)
    sq = np.bincount(which, weights=d * d, minlength=n_bins) / np.maximum(cnt, 1)
    std = np.sqrt(np.maximum(sq - mean**2, 0) * cnt / np.maximum(cnt - 1, 1))
    return DiagonalSeries(E, d, running, 0.5 * (edges[1:] + edges[:-1]), mean, std, cnt)


@dataclass
class ResidualSummary:
    source: str
    n_pairs: int
    n_excluded: int
    mean: float
    variance: float
    second_moment: float
    excess_kurtosis: float
    fraction_positive: float
    mean_ci: tuple
    variance_ci: tuple
    kurtosis_ci: tuple
    band: float

    def to_dict(self):
        d = dict(self.__dict__)
        for k in ("mean_ci", "variance_ci", "kurtosis_ci"):
            d[k] = list(d[k])
        return d


def _moments(r):
    mu = r.mean(axis=-1, keepdims=True)
    c = r - mu
    m2 = (c**2).mean(axis=-1)
    m4 = (c**4).mean(axis=-1)
    return mu[..., 0], m2, m4 / m2**2 - 3.0


def residual_statistics(matrix: EthMatrix, source: str = "closed-form",
                        model: FFunctionModel | None = None, table: CoarseTable | None = None,
                        band: float | None = None, n_boot: int = 1000, seed: int = 0,
                        min_pairs: int = 200) -> ResidualSummary:
    """Statistics of r_ij = O_ij / f^(E_i, E_j) over pairs i < j with |ΔE| <= band.

    ``source='closed-form'`` takes f^ from the closed-form envelope (``model``
    required, default band = predicted bandwidth at the window centre).
    ``source='coarse-grained'`` takes it from ``table``; then the mean of r^2
    over all tabulated pairs equals 1 by construction.
    """
    E = matrix.energies
    i, j = matrix.pairs()
    de = E[i] - E[j]
    ebar = 0.5 * (E[i] + E[j])
    if source == "closed-form":
        if model is None:
            raise ValueError("closed-form residuals need an FFunctionModel")
        if band is None:
            band = bandwidth_prediction(float(np.median(E)), model)
        f2, _ = closed_form_evaluate(E[i], E[j], model, full=True)
    elif source == "coarse-grained":
        if table is None:
            raise ValueError("coarse-grained residuals need a CoarseTable")
        if band is None:
            band = math.inf
        f2 = table.lookup(ebar, de)
    else:
        raise ValueError(f"unknown residual source {source!r}")
    inband = np.abs(de) <= band
    good = inband & np.isfinite(f2) & (f2 > 1e-300)
    n_excl = int((inband & ~good).sum())
    r = matrix.O[i, j][good] / np.sqrt(f2[good])
    if r.size < min_pairs:
        raise ValueError(f"only {r.size} in-band pairs; need at least {min_pairs}")
    mean, var, kurt = (float(v) for v in _moments(r))
    rng = np.random.default_rng(seed)
    bm, bv, bk = [], [], []
    for start in range(0, n_boot, 100):
        nb = min(100, n_boot - start)
        idx = rng.integers(0, r.size, size=(nb, r.size))
        a, b, c = _moments(r[idx])
        bm.append(a); bv.append(b); bk.append(c)
    bm, bv, bk = (np.concatenate(x) for x in (bm, bv, bk))

    def ci(x):
        lo, hi = np.percentile(x, [2.5, 97.5])
        return (float(lo), float(hi))

    return ResidualSummary(source, int(r.size), n_excl, mean, var, float(np.mean(r**2)), kurt,
                           float(np.mean(r > 0)), ci(bm), ci(bv), ci(bk), float(band))
