"""Dense complex Hermitian linear algebra for small matrices.

Everything here targets the matrix sizes that dominate this workload
(antenna / surface dimensions, well under 100x100), so a dependency-free
cyclic Jacobi sweep is both simple and numerically robust.
"""

from __future__ import annotations

import math

import numpy as np

HERMITIAN_TOL = 1e-10
JACOBI_OFF_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
EIGENVALUE_FLOOR_REL = 1e-12  # modes below this fraction of lambda_max count as rank-deficient


def require_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate that m is a square Hermitian matrix; returns m as complex128."""
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev >= tol:
        raise ValueError(f"matrix is not Hermitian: max |M - M^H| = {dev:.3e} >= {tol:.1e}")
    return m


def hermitian_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns (w, U) with eigenvalues w sorted descending and unitary U such
    that m = U @ diag(w) @ U^H. Raises ValueError on non-square or
    non-Hermitian input.
    """
    a = require_hermitian(m).copy()
    n = a.shape[0]
    if n == 1:
        return np.array([a[0, 0].real]), np.ones((1, 1), dtype=np.complex128)

    u = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), u

    for _ in range(JACOBI_MAX_SWEEPS):
        off = math.sqrt(max(0.0, np.sum(np.abs(a) ** 2) - np.sum(np.abs(np.diag(a)) ** 2)))
        if off <= JACOBI_OFF_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                r = abs(a[p, q])
                if r <= 1e-300 or r <= JACOBI_OFF_TOL * scale / n:
                    continue
                phase = a[p, q] / r
                # rotation angle from the 2x2 block; smaller-root choice keeps it stable
                tau = (a[q, q].real - a[p, p].real) / (2.0 * r)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau)) if tau != 0.0 else 1.0
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array([[c, s * phase], [-s * np.conj(phase), c]], dtype=np.complex128)
                a[:, [p, q]] = a[:, [p, q]] @ rot
                a[[p, q], :] = rot.conj().T @ a[[p, q], :]
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                u[:, [p, q]] = u[:, [p, q]] @ rot

    w = np.real(np.diag(a))
    order = np.argsort(-w, kind="stable")
    return w[order], u[:, order]


def logdet_psd(m: np.ndarray) -> float:
    """Log-determinant of a Hermitian PSD matrix as the sum of eigenvalue logs.

    Eigenvalues in [-HERMITIAN_TOL, 0] are treated as exact zeros and
    contribute nothing (pseudo-log-determinant of a rank-deficient input);
    anything below -1e-10 means the matrix is indefinite and is rejected.
    """
    w, _ = hermitian_eigh(m)
    if w.size and w[-1] < -1e-10:
        raise ValueError(f"matrix is not positive semidefinite: min eigenvalue {w[-1]:.3e}")
    pos = w[w > 0.0]
    return float(np.sum(np.log(pos)))


def complex_gaussian(rows: int, cols: int, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian matrix with per-entry power `variance`."""
    if variance <= 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))
