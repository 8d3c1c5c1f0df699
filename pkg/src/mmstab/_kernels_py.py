"""Numpy implementation of the grid-oracle inner max (fallback for the compiled kernel)."""

from __future__ import annotations

import numpy as np

CHUNK = 256


def _block_values(Q, q, r, X, Z):
    """0.5 w'Qw + q'w + r for all pairs w = (x, z); shape (len(X), len(Z))."""
    n = X.shape[1]
    Qxx, Qxz, Qzz = Q[:n, :n], Q[:n, n:], Q[n:, n:]
    tx = 0.5 * np.einsum("ij,jk,ik->i", X, Qxx, X) + X @ q[:n]
    tz = 0.5 * np.einsum("ij,jk,ik->i", Z, Qzz, Z) + Z @ q[n:]
    return tx[:, None] + (X @ Qxz) @ Z.T + tz[None, :] + r


def grid_inner_max(X, Z, Qf, qf, rf, Qc, qc, rc, kinds, ystar, radius, feas_tol):
    X = np.ascontiguousarray(X, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    nx = X.shape[0]
    out = np.full(nx, -np.inf)
    idx = np.full(nx, -1, dtype=np.int64)
    inball = np.sum((Z - ystar) ** 2, axis=1) <= radius * radius * (1.0 + 1e-12)
    Zb = Z[inball]
    where = np.flatnonzero(inball)
    if Zb.shape[0] == 0:
        return out, idx
    for s in range(0, nx, CHUNK):
        Xc = X[s: s + CHUNK]
        ok = np.ones((Xc.shape[0], Zb.shape[0]), dtype=bool)
        for c in range(len(kinds)):
            cv = _block_values(Qc[c], qc[c], rc[c], Xc, Zb)
            ok &= (np.abs(cv) <= feas_tol) if kinds[c] == 1 else (cv <= feas_tol)
        vals = np.where(ok, _block_values(Qf, qf, rf, Xc, Zb), -np.inf)
        j = np.argmax(vals, axis=1)
        best = vals[np.arange(Xc.shape[0]), j]
        out[s: s + CHUNK] = best
        idx[s: s + CHUNK] = np.where(np.isfinite(best), where[j], -1)
    return out, idx
