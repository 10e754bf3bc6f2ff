"""Extended quasi-Toeplitz matrices ``A = T(a) + E + 1 v^T``.

``T(a)`` is the semi-infinite Toeplitz matrix of a finitely supported symbol,
``E`` a correction with finite support stored densely or as ``U @ W.T``, and
``1 v^T`` the limit part (``v`` finitely supported).  All indices are 0-based
in code; row ``i`` of ``T(a)`` holds ``a_{i-j}`` in column ``j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import signal

from ..algebra import BREAKDOWN_CONDITION, OnesAction
from ..errors import BackendMismatch, Breakdown, SpectralError
from .lowrank import hankel_product_factors, pad_rows, recompress
from .symbol import MACHINE_EPS, LaurentSymbol

__all__ = [
    "DEFAULT_THRESHOLD",
    "CompactCorrection",
    "EqtMatrix",
    "StructureStats",
    "toeplitz_times",
]

DEFAULT_THRESHOLD = 1e-15
# corrections this small on both sides stay dense after compression
_DENSE_LIMIT = 64
_ROW_BLOCK = 512


def toeplitz_times(sym: LaurentSymbol, x: np.ndarray) -> np.ndarray:
    """``T(a) @ x`` for a block ``x`` supported on its first ``len(x)`` rows.

    The result has ``max(len(x) + kmax, 0)`` rows; rows past that are zero.
    """
    if x.ndim == 1:
        x = x[:, None]
    r, k = x.shape
    if sym.is_zero or r == 0 or k == 0:
        return np.zeros((0, k))
    n_out = r + sym.kmax
    if n_out <= 0:
        return np.zeros((0, k))
    c = sym.coeffs
    if c.size * r <= 4096 or min(c.size, r) <= 8:
        y = signal.convolve(c[:, None], x, method="direct")
    else:
        y = signal.fftconvolve(c[:, None], x, axes=0)
    o = sym.offset
    out = np.zeros((n_out, k))
    lo = max(0, o)
    hi = min(n_out, y.shape[0] + o)
    if hi > lo:
        out[lo:hi] = y[lo - o: hi - o]
    return out


class CompactCorrection:
    """Finitely supported correction block.

    Stored either densely (``rows x cols``) or as factors ``U @ W.T``.
    """

    __slots__ = ("_u", "_w", "_compressed")

    def __init__(self, u=None, w=None):
        if u is None:
            u = np.zeros((0, 0))
        u = np.array(u, dtype=float, ndmin=2)
        if w is not None:
            w = np.array(w, dtype=float, ndmin=2)
            if u.shape[1] != w.shape[1]:
                raise ValueError("factor ranks differ")
            w.setflags(write=False)
        u.setflags(write=False)
        self._u, self._w = u, w
        # set on the output of recompression, which is a fixed point of it
        self._compressed = False

    @classmethod
    def zero(cls) -> "CompactCorrection":
        return cls(np.zeros((0, 0)), np.zeros((0, 0)))

    @classmethod
    def from_dense(cls, block) -> "CompactCorrection":
        return cls(block, None)

    @classmethod
    def from_factors(cls, u, w) -> "CompactCorrection":
        return cls(u, w)

    @property
    def storage(self) -> str:
        return "dense" if self._w is None else "factored"

    @property
    def rows(self) -> int:
        return self._u.shape[0]

    @property
    def cols(self) -> int:
        return self._u.shape[1] if self._w is None else self._w.shape[0]

    @property
    def rank(self) -> int:
        """Number of stored factor columns (numerical rank after compression)."""
        if self._w is None:
            if self._u.size == 0:
                return 0
            return int(np.linalg.matrix_rank(self._u))
        return self._u.shape[1]

    @property
    def is_zero(self) -> bool:
        return self.rows == 0 or self.cols == 0 or (self._w is not None and self._u.shape[1] == 0)

    def factors(self):
        """``(U, W)`` with ``E = U @ W.T`` (dense storage returns ``(E, I)``)."""
        if self._w is None:
            return self._u, np.eye(self._u.shape[1])
        return self._u, self._w

    def to_dense(self, rows: int | None = None, cols: int | None = None) -> np.ndarray:
        rows = self.rows if rows is None else rows
        cols = self.cols if cols is None else cols
        out = np.zeros((rows, cols))
        if self.is_zero:
            return out
        r, c = min(rows, self.rows), min(cols, self.cols)
        if self._w is None:
            out[:r, :c] = self._u[:r, :c]
        else:
            out[:r, :c] = self._u[:r] @ self._w[:c].T
        return out

    def __repr__(self):
        return f"CompactCorrection({self.storage}, {self.rows}x{self.cols}, k={self._u.shape[1]})"


@dataclass(frozen=True)
class StructureStats:
    """Numerical extents of an EQT matrix (entries below a tolerance count as zero)."""

    lb: int
    ub: int
    rc: int
    cc: int
    rk: int
    lim: int

    def as_row(self) -> list[int]:
        return [self.lb, self.ub, self.rc, self.cc, self.rk, self.lim]


def _clean_vector(v, eps: float) -> np.ndarray:
    v = np.array(v, dtype=float).ravel()
    if eps > 0:
        v[np.abs(v) < eps] = 0.0
    nz = np.flatnonzero(v)
    v = v[: nz[-1] + 1] if nz.size else np.zeros(0)
    v.setflags(write=False)
    return v


def _pad_vec(v: np.ndarray, m: int) -> np.ndarray:
    if v.size >= m:
        return v[:m] if v.size > m else v
    out = np.zeros(m)
    out[: v.size] = v
    return out


class EqtMatrix:
    """Semi-infinite matrix ``T(a) + E + 1 v^T`` with thresholded arithmetic.

    Parameters
    ----------
    symbol : LaurentSymbol, dict or None
        Toeplitz part.  A dict maps offsets ``i - j`` to coefficients.
    correction : CompactCorrection, ndarray or None
        Compact correction; an array is taken as a dense block.
    limit : array_like or None
        The vector ``v`` of the limit part ``1 v^T``.
    threshold : float
        Compression threshold used by every operation producing this value.
    """

    __slots__ = ("symbol", "correction", "limit", "threshold")
    __array_priority__ = 100

    def __init__(self, symbol=None, correction=None, limit=None,
                 threshold: float = DEFAULT_THRESHOLD):
        if symbol is None:
            symbol = LaurentSymbol()
        elif isinstance(symbol, dict):
            symbol = LaurentSymbol.from_dict(symbol)
        if correction is None:
            correction = CompactCorrection.zero()
        elif not isinstance(correction, CompactCorrection):
            correction = CompactCorrection.from_dense(correction)
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        self.symbol = symbol
        self.correction = correction
        self.limit = _clean_vector(np.zeros(0) if limit is None else limit, 0.0)
        self.threshold = float(threshold)

    # constructors --------------------------------------------------------------
    @classmethod
    def eye(cls, threshold: float = DEFAULT_THRESHOLD) -> "EqtMatrix":
        return cls(LaurentSymbol.constant(1.0), threshold=threshold)

    @classmethod
    def zero(cls, threshold: float = DEFAULT_THRESHOLD) -> "EqtMatrix":
        return cls(threshold=threshold)

    @classmethod
    def toeplitz(cls, coeffs: dict, threshold: float = DEFAULT_THRESHOLD) -> "EqtMatrix":
        return cls(LaurentSymbol.from_dict(coeffs), threshold=threshold)

    @classmethod
    def ones_outer(cls, v, threshold: float = DEFAULT_THRESHOLD) -> "EqtMatrix":
        """The limit-only matrix ``1 v^T``."""
        return cls(limit=v, threshold=threshold)

    def identity(self) -> "EqtMatrix":
        return EqtMatrix.eye(self.threshold)

    def zeros(self) -> "EqtMatrix":
        return EqtMatrix.zero(self.threshold)

    def outer_ones(self, u) -> "EqtMatrix":
        return EqtMatrix.ones_outer(u, self.threshold)

    def with_threshold(self, threshold: float) -> "EqtMatrix":
        return EqtMatrix(self.symbol, self.correction, self.limit, threshold)

    # inspection ------------------------------------------------------------------
    @property
    def is_qt(self) -> bool:
        """True when the limit part vanishes (member of the QT subalgebra)."""
        return self.limit.size == 0

    def __repr__(self):
        return (f"EqtMatrix(symbol=[{self.symbol.kmin}..{self.symbol.kmax}], "
                f"{self.correction!r}, limit={self.limit.size})")

    def storage_size(self) -> int:
        """Number of stored floating-point values."""
        u, w = (self.correction.factors() if self.correction.storage == "factored"
                else (self.correction.to_dense(), np.zeros((0, 0))))
        return self.symbol.coeffs.size + u.size + w.size + self.limit.size

    def truncate(self, n: int, m: int | None = None) -> np.ndarray:
        """Leading ``n x m`` block (``m = n`` by default) as a dense array."""
        m = n if m is None else m
        out = np.zeros((n, m))
        a = self.symbol
        if not a.is_zero and n and m:
            col = a.dense(0, n - 1)
            row = a.dense(-(m - 1), 0)[::-1]
            out += sla.toeplitz(col, row)
        out += self.correction.to_dense(n, m)
        if self.limit.size:
            out += _pad_vec(self.limit, m)[None, :]
        return out

    def _factors(self):
        return self.correction.factors()

    # norms and row sums ----------------------------------------------------------
    def _scan_extent(self) -> int:
        a = self.symbol
        kmax = max(a.kmax, 0) if not a.is_zero else 0
        return max(self.correction.rows, self.limit.size + kmax, kmax)

    def _row_abs_sums(self, nrows: int) -> np.ndarray:
        """Exact absolute row sums of rows ``0..nrows-1``."""
        a = self.symbol
        u, w = self._factors()
        v = self.limit
        c0 = max(w.shape[0] if self.correction.rows else 0, v.size)
        out = np.empty(nrows)
        if not a.is_zero:
            cum = np.cumsum(np.abs(a.coeffs))
        for i0 in range(0, nrows, _ROW_BLOCK):
            i1 = min(nrows, i0 + _ROW_BLOCK)
            s = np.zeros(i1 - i0)
            if c0:
                d = np.zeros((i1 - i0, c0))
                if not a.is_zero:
                    d += sla.toeplitz(a.dense(i0, i1 - 1), a.dense(i0 - c0 + 1, i0)[::-1])
                if self.correction.rows > i0 and not self.correction.is_zero:
                    ub = u[i0:i1]
                    d[: ub.shape[0], : w.shape[0]] += ub @ w.T
                if v.size:
                    d[:, : v.size] += v
                s += np.abs(d).sum(axis=1)
            if not a.is_zero:
                # Toeplitz entries in columns >= c0 have offsets k <= i - c0
                kk = np.arange(i0, i1) - c0
                idx = np.clip(kk - a.kmin, -1, a.coeffs.size - 1)
                s += np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0)
            out[i0:i1] = s
        return out

    def norm_inf(self) -> float:
        """Supremum of absolute row sums: exact scan plus the asymptotic row value."""
        asym = self.symbol.abs_sum() + float(np.abs(self.limit).sum())
        n = self._scan_extent()
        if n == 0:
            return asym
        return float(max(asym, self._row_abs_sums(n).max()))

    def ones_action(self) -> OnesAction:
        a = self.symbol
        tail = -a.ones_tail()
        if not self.correction.is_zero:
            u, w = self._factors()
            m = max(tail.size, u.shape[0])
            tail = _pad_vec(tail, m) + _pad_vec(u @ w.sum(axis=0), m)
        return OnesAction(a.at_one() + float(self.limit.sum()), tail, None)

    # algebra -----------------------------------------------------------------------
    def _eps(self, other) -> float:
        if not isinstance(other, EqtMatrix):
            raise BackendMismatch(f"cannot combine EqtMatrix with {type(other).__name__}")
        return min(self.threshold, other.threshold)

    def __add__(self, other):
        eps = self._eps(other)
        return _assemble(
            self.symbol + other.symbol,
            [self._factors(), other._factors()] if not other.correction.is_zero else [self._factors()],
            _pad_vec(self.limit, max(self.limit.size, other.limit.size))
            + _pad_vec(other.limit, max(self.limit.size, other.limit.size)),
            eps,
        )

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        if self.correction.storage == "dense":
            corr = CompactCorrection.from_dense(-self.correction.to_dense())
        else:
            u, w = self._factors()
            corr = CompactCorrection.from_factors(-u, w)
        return EqtMatrix(-self.symbol, corr, -self.limit, self.threshold)

    def __mul__(self, alpha):
        if not np.isscalar(alpha):
            return NotImplemented
        alpha = float(alpha)
        u, w = self._factors()
        return _assemble(self.symbol.scale(alpha), [(alpha * u, w)], alpha * self.limit, self.threshold)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return eqt_mul(self, other)

    def inv(self) -> "EqtMatrix":
        return eqt_inverse(self)

    def compress(self) -> "EqtMatrix":
        eps = self.threshold
        if self.correction.is_zero or self.correction._compressed:
            return EqtMatrix(self.symbol.trim(eps), self.correction, _clean_vector(self.limit, eps), eps)
        return _assemble(self.symbol, [self._factors()], self.limit, eps)

    # block actions (used by inversion) ---------------------------------------
    def apply_qt(self, x: np.ndarray) -> np.ndarray:
        """``(T(a) + E) @ x`` for a finitely supported block ``x`` (limit part ignored)."""
        if x.ndim == 1:
            x = x[:, None]
        parts = [toeplitz_times(self.symbol, x)]
        if not self.correction.is_zero:
            u, w = self._factors()
            m = min(w.shape[0], x.shape[0])
            parts.append(u @ (w[:m].T @ x[:m]))
        return _sum_blocks(parts, x.shape[1])

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        """``A.T @ x`` for a finitely supported block ``x``; includes ``v (1^T x)``."""
        if x.ndim == 1:
            x = x[:, None]
        parts = [toeplitz_times(self.symbol.reversed(), x)]
        if not self.correction.is_zero:
            u, w = self._factors()
            m = min(u.shape[0], x.shape[0])
            parts.append(w @ (u[:m].T @ x[:m]))
        if self.limit.size:
            parts.append(np.outer(self.limit, x.sum(axis=0)))
        return _sum_blocks(parts, x.shape[1])

    # statistics and I/O -------------------------------------------------------
    def structure_stats(self, tol: float = MACHINE_EPS) -> StructureStats:
        """Bandwidths, correction extents, rank and limit length above ``tol``.

        Entries of modulus below ``tol`` count as zero.  The rank counts
        singular values of the correction above ``tol`` times the largest one.
        """
        a = self.symbol.trim(tol)
        lb = a.lower_bandwidth
        ub = a.upper_bandwidth
        rc = cc = rk = 0
        if not self.correction.is_zero:
            u, w = self._factors()
            colmax = np.zeros(w.shape[0])
            last_row = -1
            for i0 in range(0, u.shape[0], _ROW_BLOCK):
                blk = np.abs(u[i0: i0 + _ROW_BLOCK] @ w.T)
                rows_big = np.flatnonzero(blk.max(axis=1) >= tol)
                if rows_big.size:
                    last_row = i0 + rows_big[-1]
                np.maximum(colmax, blk.max(axis=0), out=colmax)
            rc = last_row + 1
            cols_big = np.flatnonzero(colmax >= tol)
            cc = int(cols_big[-1] + 1) if cols_big.size else 0
            if rc and cc:
                qu, ru = sla.qr(u[:rc], mode="economic")
                qw, rw = sla.qr(w[:cc], mode="economic")
                s = sla.svdvals(ru @ rw.T)
                rk = int(np.count_nonzero(s > tol * s[0])) if s.size and s[0] > 0 else 0
            else:
                rc = cc = 0
        v = np.flatnonzero(np.abs(self.limit) >= tol)
        lim = int(v[-1] + 1) if v.size else 0
        return StructureStats(lb, ub, int(rc), int(cc), rk, lim)

    def to_dict(self) -> dict:
        corr = self.correction
        if corr.storage == "dense":
            values = corr.to_dense().tolist()
        else:
            u, w = corr.factors()
            values = {"u": u.tolist(), "w": w.tolist()}
        return {
            "threshold": self.threshold,
            "symbol": {"offset_min": self.symbol.offset,
                       "coefficients": self.symbol.coeffs.tolist()},
            "correction": {"storage": corr.storage,
                           "dimensions": [corr.rows, corr.cols],
                           "values": values},
            "limit": {"values": self.limit.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EqtMatrix":
        sym = LaurentSymbol(d["symbol"]["coefficients"], d["symbol"]["offset_min"])
        c = d["correction"]
        r, k = c["dimensions"]
        if c["storage"] == "dense":
            block = np.array(c["values"], dtype=float).reshape(r, k)
            corr = CompactCorrection.from_dense(block)
        elif c["storage"] == "factored":
            u = np.array(c["values"]["u"], dtype=float)
            w = np.array(c["values"]["w"], dtype=float)
            rank = u.shape[1] if u.ndim == 2 else 0
            corr = CompactCorrection.from_factors(u.reshape(r, rank), w.reshape(k, rank))
        else:
            raise ValueError(f"unknown correction storage {c['storage']!r}")
        return cls(sym, corr, d["limit"]["values"], d["threshold"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EqtMatrix":
        return cls.from_dict(json.loads(text))


def _sum_blocks(parts, k: int) -> np.ndarray:
    m = max((p.shape[0] for p in parts), default=0)
    out = np.zeros((m, k))
    for p in parts:
        out[: p.shape[0]] += p
    return out


def _assemble(symbol: LaurentSymbol, factor_pairs, limit, eps: float) -> EqtMatrix:
    """Build a compressed EqtMatrix from a symbol, correction pieces and a limit vector."""
    pairs = [(u, w) for u, w in factor_pairs if u.size and w.size and u.shape[1]]
    corr = CompactCorrection.zero()
    if pairs:
        rows = max(u.shape[0] for u, _ in pairs)
        cols = max(w.shape[0] for _, w in pairs)
        u = np.hstack([pad_rows(u, rows) for u, _ in pairs])
        w = np.hstack([pad_rows(w, cols) for _, w in pairs])
        u, w = recompress(u, w, eps, eps)
        if u.size:
            r, c, k = u.shape[0], w.shape[0], u.shape[1]
            if min(r, c) <= _DENSE_LIMIT and k * (r + c) >= r * c:
                corr = CompactCorrection.from_dense(u @ w.T)
            else:
                corr = CompactCorrection.from_factors(u, w)
            corr._compressed = True
    return EqtMatrix(symbol.trim(eps), corr, _clean_vector(limit, eps), eps)


def _hankel_term(a: LaurentSymbol, b: LaurentSymbol, eps: float):
    """Factors of ``-H(a+) H(b-)``, the correction in ``T(a) T(b) = T(ab) + C``."""
    ca = a.dense(1, a.kmax)            # Ha[i, s] = a_{i+s+1}
    cb = b.dense(b.kmin, -1)[::-1]     # Hb[s, j] = b_{-(s+j+1)}
    tol = eps * max(1.0, float(np.abs(ca).sum()) * float(np.abs(cb).sum()))
    u, w = hankel_product_factors(ca, cb, tol)
    return -u, w


def eqt_mul(A: EqtMatrix, B: EqtMatrix) -> EqtMatrix:
    """Product of two EQT matrices, compressed with the smaller threshold."""
    eps = A._eps(B)
    a, b = A.symbol, B.symbol
    va, vb = A.limit, B.limit
    pairs = []
    if not a.is_zero and not b.is_zero and a.kmax >= 1 and b.kmin <= -1:
        pairs.append(_hankel_term(a, b, eps))
    ua, wa = A._factors()
    ub, wb = B._factors()
    has_a = not A.correction.is_zero
    has_b = not B.correction.is_zero
    if has_b and not a.is_zero:
        pairs.append((toeplitz_times(a, ub), wb))
    if vb.size and not a.is_zero and a.kmax >= 1:
        pairs.append((-a.ones_tail()[:, None], vb[:, None]))
    if has_a and not b.is_zero:
        pairs.append((ua, toeplitz_times(b.reversed(), wa)))
    if has_a and has_b:
        m = min(wa.shape[0], ub.shape[0])
        pairs.append((ua @ (wa[:m].T @ ub[:m]), wb))
    if has_a and vb.size:
        pairs.append((ua @ wa.sum(axis=0)[:, None], vb[:, None]))

    # limit part: a(1) v_B + B^T v_A
    lim_parts = []
    if vb.size:
        lim_parts.append((a.at_one() + float(va.sum())) * vb)
    if va.size:
        lim_parts.append(toeplitz_times(b.reversed(), va[:, None]).ravel())
        if has_b:
            m = min(ub.shape[0], va.size)
            lim_parts.append(wb @ (ub[:m].T @ va[:m]))
    n = max((p.size for p in lim_parts), default=0)
    limit = np.zeros(n)
    for p in lim_parts:
        limit[: p.size] += p
    return _assemble(a * b, pairs, limit, eps)


def toeplitz_inverse(a: LaurentSymbol, eps: float = DEFAULT_THRESHOLD) -> EqtMatrix:
    """``T(a)^{-1} = T(1/a_low) T(1/a_up)`` from the canonical factorization of ``a``."""
    if a.is_zero:
        raise SpectralError("zero symbol")
    if a.kmin == a.kmax == 0:
        return EqtMatrix(LaurentSymbol.constant(1.0 / a.coeffs[0]), threshold=eps)
    _, _, inv_low, inv_up = a.wiener_hopf(eps)
    return eqt_mul(EqtMatrix(inv_low, threshold=eps), EqtMatrix(inv_up, threshold=eps))


def _checked_inverse(m: np.ndarray, what: str) -> np.ndarray:
    if m.shape[0] == 0:
        return m
    cond = np.linalg.cond(m, 1)
    if not np.isfinite(cond) or cond > BREAKDOWN_CONDITION:
        raise Breakdown(f"{what} is singular to working precision (cond={cond:.3e})")
    return np.linalg.inv(m)


def eqt_inverse(A: EqtMatrix) -> EqtMatrix:
    """Inverse in the EQT algebra.

    ``T(a)`` is inverted through its Wiener-Hopf factorization, the compact
    correction is folded in with a Woodbury update and the limit part with a
    Sherman-Morrison update.

    Raises
    ------
    SpectralError
        The symbol vanishes on the unit circle.
    WindingError
        The symbol has nonzero winding number.
    Breakdown
        A capacitance matrix of the low-rank updates is singular.
    """
    eps = A.threshold
    tinv = toeplitz_inverse(A.symbol, eps)
    binv = tinv
    if not A.correction.is_zero:
        u, w = A._factors()
        y = tinv.apply_qt(u)
        z = tinv.apply_transpose(w)
        m = min(w.shape[0], y.shape[0])
        cap = np.eye(u.shape[1]) + w[:m].T @ y[:m]
        capinv = _checked_inverse(cap, "Woodbury capacitance matrix")
        binv = _assemble(tinv.symbol, [tinv._factors(), (-(y @ capinv), z)], tinv.limit, eps)
    if A.limit.size:
        v = A.limit
        oa = binv.ones_action()
        row = binv.apply_transpose(v[:, None]).ravel()
        den = 1.0 + oa.scalar_part * float(v.sum()) + float(v @ _pad_vec(oa.tail, v.size))
        if abs(den) < 1e3 * MACHINE_EPS * max(1.0, abs(oa.scalar_part) * float(np.abs(v).sum())):
            raise Breakdown("Sherman-Morrison denominator vanishes")
        pairs = [binv._factors()]
        if oa.tail.size:
            pairs.append((-oa.tail[:, None] / den, row[:, None]))
        lim = _pad_vec(binv.limit, max(binv.limit.size, row.size)) \
            - (oa.scalar_part / den) * _pad_vec(row, max(binv.limit.size, row.size))
        binv = _assemble(binv.symbol, pairs, lim, eps)
    return binv
