"""Dense-matrix helpers with explicit tolerance policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ToleranceProfile:
    """Tolerances shared by rank, PSD and convergence tests."""

    rank_rel_tol: float = 1e-10   # singular values below this fraction of the largest count as zero
    psd_eig_tol: float = 1e-9     # allowed negative eigenvalue, relative to max(1, ||m||)
    residual_tol: float = 1e-8    # relative stopping tolerance for fixed-point solvers

    def __post_init__(self):
        for name in ("rank_rel_tol", "psd_eig_tol", "residual_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = ToleranceProfile()


def _finite(m) -> np.ndarray:
    m = np.asarray(m)
    m = m.astype(complex if np.iscomplexobj(m) else float, copy=False)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return (m + m^T) / 2 (works on stacks of matrices too)."""
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def svd_descending(m):
    """Thin SVD ``m = U @ diag(sigma) @ V.T`` with ``sigma`` sorted descending.

    Returns ``(U, sigma, V)``; note ``V`` (not its transpose) is returned.
    """
    m = _finite(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    # LAPACK already sorts, but be explicit about the contract
    order = np.argsort(-s, kind="stable")
    return u[:, order], s[order], vt[order].T


def numeric_rank(m, tol: ToleranceProfile = DEFAULT_TOL) -> int:
    """Number of singular values above ``rank_rel_tol * sigma_max``."""
    m = _finite(m)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_rel_tol * s[0]))


def is_psd(m, tol: ToleranceProfile = DEFAULT_TOL) -> bool:
    """PSD test with a norm-relative eigenvalue floor.

    Raises if ``m`` is asymmetric beyond rounding (1e-12 relative).
    """
    m = _finite(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("is_psd expects a square matrix")
    scale = max(1.0, np.linalg.norm(m, 2))
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(symmetrize(m))
    return bool(w.size == 0 or w[0] >= -tol.psd_eig_tol * scale)


def spectral_radius(a) -> float:
    a = _finite(a)
    return float(np.max(np.abs(np.linalg.eigvals(a)), initial=0.0))


def spectral_norm(a) -> float:
    a = _finite(a)
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def psd_sqrt(m: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric square root (or inverse square root) of a PSD matrix."""
    w, q = np.linalg.eigh(symmetrize(m))
    w = np.clip(w, 0.0, None)
    if inverse:
        if np.any(w <= 0):
            raise np.linalg.LinAlgError("inverse square root of a singular matrix")
        w = 1.0 / np.sqrt(w)
    else:
        w = np.sqrt(w)
    return (q * w) @ q.T
