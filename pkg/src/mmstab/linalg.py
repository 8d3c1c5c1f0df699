"""Small dense linear-algebra helpers shared by the certificate modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def singular_values(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def sigma_min_ratio(A: np.ndarray) -> tuple[float, float]:
    """(sigma_min, sigma_max) of A, counting missing singular values as zero.

    For a wide matrix with more rows than columns the row set cannot be
    independent, so sigma_min is reported as 0.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return np.inf, 0.0
    s = singular_values(A)
    if A.shape[0] > A.shape[1]:
        return 0.0, float(s[0]) if s.size else 0.0
    return float(s[-1]), float(s[0])


def rows_independent(A: np.ndarray, rel_tol: float) -> tuple[bool, float]:
    """Scale-relative rank test on the rows of A: sigma_min > rel_tol * sigma_max."""
    smin, smax = sigma_min_ratio(A)
    if A.shape[0] == 0:
        return True, float("inf")
    return bool(smin > rel_tol * smax and smax > 0.0), smin


def kernel_basis(A: np.ndarray, dim: int, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of ker A for A with ``dim`` columns."""
    A = np.asarray(A, dtype=float).reshape(-1, dim)
    if A.shape[0] == 0:
        return np.eye(dim)
    return sla.null_space(A, rcond=rel_tol)


def gram_schmidt_kernel(A: np.ndarray, completion: np.ndarray) -> np.ndarray:
    """Kernel basis of A by Gram-Schmidt on the columns of [A^T, completion^T].

    ``completion`` is a fixed block chosen so that the stacked square matrix
    is nonsingular; orthogonalizing in a fixed column order makes the
    returned basis depend continuously on A.  Modified Gram-Schmidt with one
    reorthogonalization pass.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    completion = np.atleast_2d(np.asarray(completion, dtype=float))
    dim = completion.shape[1]
    A = A.reshape(-1, dim)
    cols = np.vstack([A, completion]).T
    if cols.shape != (dim, dim):
        raise ValueError(f"stacked matrix has shape {cols.shape}, expected square of size {dim}")
    Q = np.zeros_like(cols)
    for j in range(dim):
        v = cols[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= (Q[:, i] @ v) * Q[:, i]
        nv = np.linalg.norm(v)
        if nv <= 1e-13 * max(1.0, np.linalg.norm(cols[:, j])):
            raise np.linalg.LinAlgError("stacked matrix is singular; completion block does not complete A")
        Q[:, j] = v / nv
    return Q[:, A.shape[0]:]


def completion_for(A: np.ndarray, dim: int) -> np.ndarray:
    """A fixed completion block making [A; C] square and nonsingular (C spans ker A)."""
    return kernel_basis(A, dim).T


def reduced_eigs(M: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Eigenvalues of Z' M Z (symmetrized); empty when Z has no columns."""
    if Z.shape[1] == 0:
        return np.zeros(0)
    R = Z.T @ M @ Z
    return np.linalg.eigvalsh(0.5 * (R + R.T))


def cond2(A: np.ndarray) -> float:
    s = singular_values(A)
    if s.size == 0:
        return 1.0
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def cone_min_quadratic(M: np.ndarray, Z: np.ndarray, A0: np.ndarray, tol: float = 1e-12,
                       cap: int = 16) -> float:
    """min t'Mt over unit t in {Z s : A0 Z s <= 0}, exact by face enumeration.

    A minimizer with active rows S is an eigenvector of M restricted to
    ker A0_S within range Z, so enumerating every S and keeping the
    feasible eigenvectors (either sign) yields the minimum.  Returns +inf
    when the cone is {0}.
    """
    k = Z.shape[1]
    if k == 0:
        return float("inf")
    A0 = np.asarray(A0, dtype=float).reshape(-1, M.shape[0])
    B = A0 @ Z
    r = B.shape[0]
    if r == 0:
        e = reduced_eigs(M, Z)
        return float(e[0])
    if r > cap:
        raise ValueError(f"cone with {r} inequality rows exceeds the face-enumeration cap {cap}")
    R = Z.T @ M @ Z
    R = 0.5 * (R + R.T)
    scale = max(1.0, float(np.max(np.abs(B))))
    best = float("inf")
    for mask in range(1 << r):
        S = [i for i in range(r) if mask >> i & 1]
        W = kernel_basis(B[S], k) if S else np.eye(k)
        if W.shape[1] == 0:
            continue
        vals, vecs = np.linalg.eigh(W.T @ R @ W)
        for lam, e in zip(vals, vecs.T):
            t = W @ e
            for sgn in (1.0, -1.0):
                if np.all(sgn * (B @ t) <= tol * scale):
                    best = min(best, float(lam))
                    break
    return best
