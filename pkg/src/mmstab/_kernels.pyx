# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled nested inner max for the grid oracle.

Each quadratic form over w = (x, z) splits as t_x(x) + (Qxz' x)'z + t_z(z) + r.
The z terms are tabulated once, the x terms once per grid x, so the
inner loop costs O(m) per form and stops at the first violated constraint.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def grid_inner_max(const double[:, ::1] X, const double[:, ::1] Z,
                   const double[:, ::1] Qf, const double[::1] qf, double rf,
                   const double[:, :, ::1] Qc, const double[:, ::1] qc, const double[::1] rc,
                   const signed char[::1] kinds, const double[::1] ystar,
                   double radius, double feas_tol):
    """For each row x of X: max f(x, z) over grid rows z with ||z - y*|| <= radius and z in Y(x)."""
    cdef Py_ssize_t nx = X.shape[0], nzp = Z.shape[0], n = X.shape[1], m = Z.shape[1]
    cdef Py_ssize_t nc = kinds.shape[0], nf = nc + 1
    cdef Py_ssize_t a, b, bb, i, j, c, nb, arg
    cdef double acc, row, diff, best, cv
    cdef bint ok

    # form 0 is the objective, forms 1.. the constraints
    Qs_np = np.empty((nf, n + m, n + m))
    Qs_np[0] = Qf
    if nc:
        Qs_np[1:] = Qc
    qs_np = np.empty((nf, n + m))
    qs_np[0] = qf
    if nc:
        qs_np[1:] = qc
    rs_np = np.empty(nf)
    rs_np[0] = rf
    if nc:
        rs_np[1:] = rc
    cdef double[:, :, ::1] Qs = Qs_np
    cdef double[:, ::1] qs = qs_np
    cdef double[::1] rs = rs_np

    keep_np = np.empty(nzp, dtype=np.intp)
    cdef Py_ssize_t[::1] keep = keep_np
    cdef double r2 = radius * radius * (1.0 + 1e-12)
    nb = 0
    for b in range(nzp):
        acc = 0.0
        for i in range(m):
            diff = Z[b, i] - ystar[i]
            acc += diff * diff
        if acc <= r2:
            keep[nb] = b
            nb += 1

    tz_np = np.empty((nb, nf))
    cdef double[:, ::1] tz = tz_np
    px_np = np.empty((nf, m))
    cdef double[:, ::1] px = px_np
    tx_np = np.empty(nf)
    cdef double[::1] tx = tx_np

    out = np.full(nx, -np.inf)
    idx = np.full(nx, -1, dtype=np.int64)
    cdef double[::1] out_v = out
    cdef long long[::1] idx_v = idx

    with nogil:
        for bb in range(nb):
            b = keep[bb]
            for c in range(nf):
                acc = 0.0
                for i in range(m):
                    row = 0.0
                    for j in range(m):
                        row += Qs[c, n + i, n + j] * Z[b, j]
                    acc += Z[b, i] * (0.5 * row + qs[c, n + i])
                tz[bb, c] = acc + rs[c]
        for a in range(nx):
            for c in range(nf):
                acc = 0.0
                for i in range(n):
                    row = 0.0
                    for j in range(n):
                        row += Qs[c, i, j] * X[a, j]
                    acc += X[a, i] * (0.5 * row + qs[c, i])
                tx[c] = acc
                for j in range(m):
                    row = 0.0
                    for i in range(n):
                        row += X[a, i] * Qs[c, i, n + j]
                    px[c, j] = row
            best = -INFINITY
            arg = -1
            for bb in range(nb):
                b = keep[bb]
                ok = True
                for c in range(1, nf):
                    cv = tx[c] + tz[bb, c]
                    for j in range(m):
                        cv += px[c, j] * Z[b, j]
                    if kinds[c - 1] == 1:
                        if fabs(cv) > feas_tol:
                            ok = False
                            break
                    elif cv > feas_tol:
                        ok = False
                        break
                if not ok:
                    continue
                cv = tx[0] + tz[bb, 0]
                for j in range(m):
                    cv += px[0, j] * Z[b, j]
                if cv > best:
                    best = cv
                    arg = b
            out_v[a] = best
            idx_v[a] = arg
    return out, idx
