"""Low-rank factor arithmetic for the compact corrections.

A correction is stored as ``U @ W.T`` with ``U`` of shape (rows, k) and ``W``
of shape (cols, k).  Everything here works on those factor pairs.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy import signal

__all__ = ["recompress", "hankel_product_factors", "hankel_columns", "pad_rows", "hankel_matmat"]

_BLOCK = 24
# inner dimensions up to this are factored exactly
_DIRECT_RANK = 256
_RNG_SEED = 20240607


def pad_rows(x: np.ndarray, m: int) -> np.ndarray:
    """Zero-pad (or cut) the rows of ``x`` to exactly ``m``."""
    if x.shape[0] == m:
        return x
    if x.shape[0] > m:
        return x[:m]
    out = np.zeros((m,) + x.shape[1:])
    out[: x.shape[0]] = x
    return out


def recompress(u: np.ndarray, w: np.ndarray, rel_tol: float, abs_tol: float):
    """Truncated SVD of ``u @ w.T`` plus trimming of negligible trailing rows/cols.

    Singular values below ``rel_tol * sigma_max`` (or below ``abs_tol``) are
    dropped.  Trailing rows and columns whose entries are all below
    ``abs_tol`` are cut.

    Returns
    -------
    u, w : ndarray
        New factors, ``u`` carrying the singular values and ``w`` having
        orthonormal columns.  Both have zero columns when the correction
        vanishes.
    """
    r, c = u.shape[0], w.shape[0]
    if u.shape[1] == 0 or r == 0 or c == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    qu, ru = sla.qr(u, mode="economic", check_finite=False)
    qw, rw = sla.qr(w, mode="economic", check_finite=False)
    core = ru @ rw.T
    us, s, vt = sla.svd(core, full_matrices=False, check_finite=False, lapack_driver="gesdd")
    if s.size == 0 or s[0] <= abs_tol:
        return np.zeros((0, 0)), np.zeros((0, 0))
    keep = int(np.count_nonzero((s > rel_tol * s[0]) & (s > abs_tol)))
    un = qu @ (us[:, :keep] * s[:keep])
    wn = qw @ vt[:keep].T
    rows = _last_significant(un, wn, abs_tol)
    if rows == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    un = un[:rows]
    cols = _last_significant(wn, un, abs_tol)
    if cols == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    wn = wn[:cols]
    return np.ascontiguousarray(un), np.ascontiguousarray(wn)


def _last_significant(a: np.ndarray, b: np.ndarray, tol: float, block: int = 128) -> int:
    """One past the last row ``i`` of ``a @ b.T`` holding an entry ``>= tol``.

    A cheap per-row bound ``|a_i| @ max|b|`` discards most rows; the
    remaining trailing rows are checked exactly, block by block.
    """
    bound = np.abs(a) @ np.abs(b).max(axis=0)
    big = np.flatnonzero(bound >= tol)
    if big.size == 0:
        return 0
    end = int(big[-1]) + 1
    while end > 0:
        start = max(0, end - block)
        m = np.abs(a[start:end] @ b.T).max(axis=1)
        hit = np.flatnonzero(m >= tol)
        if hit.size:
            return start + int(hit[-1]) + 1
        end = start
        big = np.flatnonzero(bound[:end] >= tol)
        end = int(big[-1]) + 1 if big.size else 0
    return 0


def hankel_matmat(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``H @ x`` for the square Hankel matrix ``H[i, s] = c[i + s]`` of order ``len(c)``.

    Entries with ``i + s >= len(c)`` are zero.  ``x`` may have fewer rows
    than ``len(c)``; missing rows count as zero.
    """
    m = c.size
    if x.ndim == 1:
        x = x[:, None]
    x = pad_rows(x, m)
    if m <= 64:
        return sla.hankel(c) @ x
    # (H x)_i = sum_s c[i+s] x[s]: a correlation, i.e. convolution with reversed x
    full = signal.fftconvolve(c[:, None], x[::-1], axes=0)
    return full[m - 1: 2 * m - 1]


def hankel_columns(c: np.ndarray, k: int) -> np.ndarray:
    """First ``k`` columns of the Hankel matrix ``H[i, s] = c[i + s]`` (order ``len(c)``)."""
    m = c.size
    padded = np.concatenate([c, np.zeros(k)])
    return np.lib.stride_tricks.sliding_window_view(padded, k)[:m].copy()


def hankel_product_factors(ca: np.ndarray, cb: np.ndarray, tol: float):
    """Factors ``U @ W.T`` of the product ``Ha @ Hb`` of two Hankel matrices.

    ``Ha[i, s] = ca[i + s]`` and ``Hb[s, j] = cb[s + j]``, both zero past
    the end of their coefficients, so the inner index runs over
    ``K = min(len(ca), len(cb))`` terms.  For small ``K`` the exact rank-K
    factors are returned; otherwise a blocked adaptive randomized range
    finder with FFT products is run until a fresh block of samples has
    column norms below ``tol``.  The numerical rank of the product is much
    smaller than that of either factor, whose trailing coefficients sit at
    the compression threshold.
    """
    ca = np.ascontiguousarray(ca, dtype=float)
    cb = np.ascontiguousarray(cb, dtype=float)
    ma, mb = ca.size, cb.size
    k = min(ma, mb)
    if k == 0 or not np.any(ca) or not np.any(cb):
        return np.zeros((ma, 0)), np.zeros((mb, 0))
    if k <= _DIRECT_RANK:
        return hankel_columns(ca, k), hankel_columns(cb, k)

    def apply(x):  # (Ha Hb) x
        z = hankel_matmat(cb, x)[:k]
        return hankel_matmat(ca, pad_rows(z, ma))

    def apply_t(y):  # (Ha Hb)^T y; both Hankel matrices are symmetric
        z = hankel_matmat(ca, y)[:k]
        return hankel_matmat(cb, pad_rows(z, mb))

    rng = np.random.default_rng(_RNG_SEED)
    noise = 8.0 * np.finfo(float).eps * np.linalg.norm(ca) * np.linalg.norm(cb) * np.sqrt(max(ma, mb))
    sample_tol = max(tol / 10.0, noise)
    q = np.zeros((ma, 0))
    while q.shape[1] + _BLOCK < k:
        y = apply(rng.standard_normal((mb, _BLOCK)))
        if q.shape[1]:
            y -= q @ (q.T @ y)
            y -= q @ (q.T @ y)
        if np.linalg.norm(y, axis=0).max() < sample_tol:
            return q, apply_t(q)
        qb, _ = sla.qr(y, mode="economic", check_finite=False)
        if q.shape[1]:
            qb -= q @ (q.T @ qb)
            qb, _ = sla.qr(qb, mode="economic", check_finite=False)
        q = np.hstack([q, qb])
    return hankel_columns(ca, k), hankel_columns(cb, k)
