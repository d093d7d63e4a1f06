"""Dense least-squares kernels used by every solver in the package.

Solves are QR based: raw normal equations lose half the digits on the
ill-conditioned design matrices produced by alternating least squares,
and the recovery targets here sit near machine precision.
"""

import numpy as np
import scipy.linalg

from .errors import RankDeficient

# Smallest |R_jj| / largest |R_jj| below this flags the matrix as rank
# deficient.
RANK_RTOL = 1e-12


def as_vector(x) -> np.ndarray:
    """Coerce ``x`` to a 1-D float array, rejecting NaN/Inf entries."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf entries")
    return v


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D float array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def _economic_qr(a: np.ndarray):
    """Economic QR of ``a`` with a relative rank check on diag(R)."""
    q, r = scipy.linalg.qr(a, mode="economic", check_finite=False)
    diag = np.abs(np.diag(r))
    largest = diag.max(initial=0.0)
    if largest == 0.0 or diag.min() < RANK_RTOL * largest:
        raise RankDeficient(
            f"smallest R diagonal {diag.min(initial=0.0):.3e} below "
            f"{RANK_RTOL:.0e} x largest {largest:.3e}"
        )
    return q, r


def solve_least_squares(a, b) -> np.ndarray:
    """Return ``argmin_v ||b - A v||_2`` for a full-column-rank ``A``.

    Parameters
    ----------
    a : (Q, P) array_like
        Design matrix with Q >= P >= 1.
    b : (Q,) array_like
        Right-hand side.

    Raises
    ------
    RankDeficient
        If the smallest R diagonal of the QR factorization falls below
        ``RANK_RTOL`` times the largest.
    """
    a = as_matrix(a)
    b = as_vector(b)
    q_rows, p_cols = a.shape
    if p_cols < 1 or q_rows < p_cols:
        raise ValueError(f"need Q >= P >= 1, got shape {a.shape}")
    if b.shape[0] != q_rows:
        raise ValueError(f"A has {q_rows} rows but b has {b.shape[0]} entries")
    q, r = _economic_qr(a)
    return scipy.linalg.solve_triangular(r, q.T @ b, check_finite=False)


def hat_diagonal(a) -> np.ndarray:
    """Diagonal of the orthogonal projector onto the column space of ``A``.

    Returns h with ``h_q = (A (A^T A)^{-1} A^T)_{qq}``; every entry lies in
    [0, 1] and the entries sum to the column count.
    """
    a = as_matrix(a)
    q_rows, p_cols = a.shape
    if p_cols < 1 or q_rows < p_cols:
        raise ValueError(f"need Q >= P >= 1, got shape {a.shape}")
    q, _ = _economic_qr(a)
    return np.sum(q * q, axis=1)
