"""Five-point finite-difference Dirichlet Laplacian on a grid masked to the region."""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

__all__ = ["fd_laplacian", "fd_solve"]


def _weyl_k(n, geometry):
    # invert S k^2/(4 pi) - P k/(4 pi) = n for k
    S, P = geometry.area(), geometry.perimeter()
    return (P + math.sqrt(P * P + 16 * math.pi * S * n)) / (2 * S)


def fd_laplacian(geometry, hgrid: float):
    """Return ``(L, mask, shape)``: minus the discrete Laplacian on interior nodes.

    Nodes sit at (i h, j h); nodes on or outside the boundary carry the
    Dirichlet value 0.
    """
    nx = int(round(geometry.width / hgrid))
    ny = int(round(geometry.height / hgrid))
    xs = np.arange(nx + 1) * hgrid
    ys = np.arange(ny + 1) * hgrid
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    mask = geometry.strictly_inside_many(X, Y)
    idx = -np.ones(mask.shape, dtype=np.int64)
    idx[mask] = np.arange(int(mask.sum()))
    rows, cols, vals = [], [], []
    I, J = np.nonzero(mask)
    me = idx[I, J]
    rows.append(me); cols.append(me); vals.append(np.full(me.size, 4.0))
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ii, jj = I + di, J + dj
        ok = (ii >= 0) & (ii <= nx) & (jj >= 0) & (jj <= ny)
        nb = np.full(I.size, -1)
        nb[ok] = idx[ii[ok], jj[ok]]
        good = nb >= 0
        rows.append(me[good]); cols.append(nb[good]); vals.append(np.full(int(good.sum()), -1.0))
    n = int(mask.sum())
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)) / hgrid**2
    return L, mask, (nx + 1, ny + 1)


def fd_solve(geometry, hgrid: float, n_states: int, hbar: float = 1.0, m: float = 1.0):
    """Lowest Dirichlet eigenpairs of -(hbar^2/2m) Laplacian.

    Returns a list of ``(E, psi)`` with ``psi`` on the full (nx+1, ny+1) node
    grid, zero off the interior, normalized so that sum(psi^2) h^2 = 1.
    Refuses grids with k_max * h >= 0.5.
    """
    if hgrid <= 0 or n_states < 1:
        raise ValueError("need hgrid > 0 and n_states >= 1")
    k_est = _weyl_k(n_states + 3 * math.sqrt(n_states) + 2, geometry)
    if k_est * hgrid >= 0.5:
        raise ValueError(f"grid too coarse: estimated k_max*h = {k_est * hgrid:.3f} >= 0.5")
    L, mask, shape = fd_laplacian(geometry, hgrid)
    vals, vecs = eigsh(L, k=n_states, sigma=0.0, which="LM")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    if math.sqrt(vals[-1]) * hgrid >= 0.5:
        raise ValueError("grid too coarse for the requested states: k_max*h >= 0.5")
    out = []
    for lam, v in zip(vals, vecs.T):
        psi = np.zeros(shape)
        psi[mask] = v / (math.sqrt(float(np.sum(v * v))) * hgrid)
        out.append((hbar**2 * float(lam) / (2 * m), psi))
    return out
