"""Symmetric eigendecomposition by cyclic Jacobi rotations."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Cyclic-by-row Jacobi with the Rutishauser rotation formulas. Sweeps stop
    once the off-diagonal Frobenius norm drops below ``tol`` times the matrix
    norm; for the small matrices used here (up to 64x64) that takes well under
    a dozen sweeps.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J on rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise DomainError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def psd_sqrt(cov, tol=1e-12):
    """Principal square root ``U diag(sqrt(max(lambda, 0))) U^T``."""
    w, u = jacobi_eigh(cov, tol=tol)
    root = (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T
    return 0.5 * (root + root.T)
