"""Laurent symbols with finite support and the scalar Wiener-algebra kernels.

A symbol ``a(z) = sum_k a_k z^k`` generates the semi-infinite Toeplitz matrix
``T(a)`` with entries ``t_ij = a_{i-j}``.  Positive offsets sit below the
diagonal, negative offsets above it.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import signal

from ..errors import NoWienerSolution, SpectralError, WindingError

__all__ = ["LaurentSymbol", "convolve", "grid_values", "coefficients_from_values"]

MACHINE_EPS = float(np.finfo(float).eps)
MAX_GRID = 1 << 22
# below this length np.convolve beats the FFT
_DIRECT_CONV = 256


def convolve(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Full linear convolution, via FFT for long inputs."""
    if x.size == 0 or y.size == 0:
        return np.zeros(0)
    if min(x.size, y.size) <= _DIRECT_CONV:
        return np.convolve(x, y)
    return signal.fftconvolve(x, y)


def grid_values(coeffs: np.ndarray, offset: int, n: int) -> np.ndarray:
    """Values of the symbol at the ``n``-th roots of unity ``exp(2 pi i j / n)``.

    ``n`` must exceed the support length, otherwise coefficients alias.
    """
    wrapped = np.zeros(n)
    idx = (np.arange(coeffs.size) + offset) % n
    np.add.at(wrapped, idx, coeffs)
    return np.fft.ifft(wrapped) * n


def coefficients_from_values(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`grid_values` in wrapped order: entry ``k mod n`` holds ``a_k``."""
    return np.fft.fft(values) / values.size


def _unwrapped(wrapped: np.ndarray, kmin: int, kmax: int) -> np.ndarray:
    """Pick offsets ``kmin..kmax`` out of a wrapped coefficient array."""
    n = wrapped.size
    return wrapped[np.arange(kmin, kmax + 1) % n]


def _tail_small(wrapped: np.ndarray, eps: float) -> bool:
    """True when the band ``n/4 <= |k| <= n/2`` is negligible.

    The largest band coefficient must be below ``eps`` or, for large
    coefficient vectors, below the FFT rounding level.
    """
    n = wrapped.size
    band = np.abs(wrapped[n // 4: n - n // 4 + 1]).max()
    floor = 16.0 * MACHINE_EPS * float(np.abs(wrapped).max())
    return bool(band < max(eps, floor))


class LaurentSymbol:
    """Finitely supported Laurent series ``sum_{k=offset}^{offset+len-1} c_k z^k``.

    Instances are immutable.  Leading and trailing zero coefficients are
    stripped on construction, so ``kmin``/``kmax`` are the true support ends.
    """

    __slots__ = ("_c", "_offset", "_key")

    def __init__(self, coeffs=(), offset: int = 0):
        c = np.array(coeffs, dtype=float).ravel()
        nz = np.flatnonzero(c)
        if nz.size == 0:
            c, offset = np.zeros(0), 0
        else:
            offset = int(offset) + int(nz[0])
            c = c[nz[0]: nz[-1] + 1].copy()
        c.setflags(write=False)
        self._c = c
        self._offset = offset
        self._key = None

    # construction helpers -------------------------------------------------
    @classmethod
    def from_dict(cls, mapping) -> "LaurentSymbol":
        if not mapping:
            return cls()
        lo, hi = min(mapping), max(mapping)
        c = np.zeros(hi - lo + 1)
        for k, v in mapping.items():
            c[k - lo] = v
        return cls(c, lo)

    @classmethod
    def constant(cls, value: float) -> "LaurentSymbol":
        return cls([value], 0)

    # basic properties -------------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def offset(self) -> int:
        return self._offset

    @property
    def kmin(self) -> int:
        return self._offset

    @property
    def kmax(self) -> int:
        return self._offset + self._c.size - 1

    @property
    def is_zero(self) -> bool:
        return self._c.size == 0

    @property
    def lower_bandwidth(self) -> int:
        return max(self.kmax, 0) if not self.is_zero else 0

    @property
    def upper_bandwidth(self) -> int:
        return max(-self.kmin, 0) if not self.is_zero else 0

    def key(self) -> bytes:
        """Hashable fingerprint used for caching structure-dependent work."""
        if self._key is None:
            self._key = self._offset.to_bytes(8, "little", signed=True) + self._c.tobytes()
        return self._key

    def coef(self, k: int) -> float:
        i = k - self._offset
        return float(self._c[i]) if 0 <= i < self._c.size else 0.0

    def dense(self, kmin: int, kmax: int) -> np.ndarray:
        """Coefficients for offsets ``kmin..kmax`` (zero outside the support)."""
        out = np.zeros(kmax - kmin + 1)
        if self.is_zero or kmax < kmin:
            return out
        lo, hi = max(kmin, self.kmin), min(kmax, self.kmax)
        if lo <= hi:
            out[lo - kmin: hi - kmin + 1] = self._c[lo - self._offset: hi - self._offset + 1]
        return out

    def as_dict(self) -> dict[int, float]:
        return {self._offset + i: float(v) for i, v in enumerate(self._c) if v != 0.0}

    def __repr__(self):
        return f"LaurentSymbol(kmin={self.kmin}, kmax={self.kmax})"

    def __eq__(self, other):
        if not isinstance(other, LaurentSymbol):
            return NotImplemented
        return self._offset == other._offset and np.array_equal(self._c, other._c)

    def __hash__(self):
        return hash(self.key())

    # evaluation -------------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.is_zero:
            return np.zeros_like(z)
        # Horner in z on the reversed coefficients, then scale by z^offset
        acc = np.zeros_like(z)
        for c in self._c[::-1]:
            acc = acc * z + c
        return acc * z ** self._offset

    def at_one(self) -> float:
        return float(self._c.sum())

    def abs_sum(self) -> float:
        return float(np.abs(self._c).sum())

    def ones_tail(self) -> np.ndarray:
        """``r`` with ``T(a) 1 = a(1) 1 - r``; ``r_i = sum_{k >= i} a_k`` for ``i >= 1``."""
        if self.kmax < 1:
            return np.zeros(0)
        pos = self.dense(1, self.kmax)
        return np.cumsum(pos[::-1])[::-1]

    # algebra ------------------------------------------------------------------
    def __add__(self, other: "LaurentSymbol") -> "LaurentSymbol":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        lo, hi = min(self.kmin, other.kmin), max(self.kmax, other.kmax)
        return LaurentSymbol(self.dense(lo, hi) + other.dense(lo, hi), lo)

    def __neg__(self) -> "LaurentSymbol":
        return LaurentSymbol(-self._c, self._offset)

    def __sub__(self, other: "LaurentSymbol") -> "LaurentSymbol":
        return self + (-other)

    def scale(self, alpha: float) -> "LaurentSymbol":
        return LaurentSymbol(alpha * self._c, self._offset)

    def __mul__(self, other):
        if isinstance(other, LaurentSymbol):
            if self.is_zero or other.is_zero:
                return LaurentSymbol()
            return LaurentSymbol(convolve(self._c, other._c), self._offset + other._offset)
        if np.isscalar(other):
            return self.scale(float(other))
        return NotImplemented

    __rmul__ = __mul__

    def reversed(self) -> "LaurentSymbol":
        """The symbol of ``T(a)^T``: ``k -> -k``."""
        if self.is_zero:
            return self
        return LaurentSymbol(self._c[::-1], -self.kmax)

    def part(self, lo: int | None = None, hi: int | None = None) -> "LaurentSymbol":
        """Restriction to offsets in ``[lo, hi]`` (open ends when ``None``)."""
        if self.is_zero:
            return self
        lo = self.kmin if lo is None else max(lo, self.kmin)
        hi = self.kmax if hi is None else min(hi, self.kmax)
        if lo > hi:
            return LaurentSymbol()
        return LaurentSymbol(self.dense(lo, hi), lo)

    def trim(self, eps: float) -> "LaurentSymbol":
        """Zero coefficients with modulus below ``eps``."""
        if self.is_zero or eps <= 0:
            return self
        small = np.abs(self._c) < eps
        if not small.any():
            return self
        c = self._c.copy()
        c[small] = 0.0
        return LaurentSymbol(c, self._offset)

    # spectral kernels --------------------------------------------------------
    def _start_grid(self) -> int:
        span = max(self._c.size, 1)
        return max(256, 1 << int(np.ceil(np.log2(4 * span))))

    def check_invertible(self, rel_tol: float = 1e-13) -> int:
        """Verify ``a`` is bounded away from zero on the circle; return winding number.

        The winding number is counted with the argument principle on a grid of
        ``2**12`` points, doubled while any step of the argument exceeds pi/4.
        """
        if self.is_zero:
            raise SpectralError("zero symbol")
        n = max(1 << 12, self._start_grid())
        while True:
            vals = grid_values(self._c, self._offset, n)
            mod = np.abs(vals)
            if mod.min() <= rel_tol * max(mod.max(), 1.0):
                raise SpectralError(f"symbol vanishes on the unit circle (min |a| = {mod.min():.3e})")
            steps = np.angle(np.roll(vals, -1) / vals)
            if np.abs(steps).max() < np.pi / 4 or n >= MAX_GRID:
                return int(np.rint(steps.sum() / (2 * np.pi)))
            n *= 2

    def reciprocal(self, eps: float = 1e-15) -> "LaurentSymbol":
        """Coefficients of ``1/a`` (requires ``a`` nonzero on the unit circle)."""
        return _reciprocal(self.key(), self, eps)

    def wiener_hopf(self, eps: float = 1e-15):
        """Canonical factorization ``a = a_up * a_low`` on the unit circle.

        ``a_low`` has offsets ``>= 0`` (analytic inside the disk) and ``a_up``
        offsets ``<= 0`` (analytic outside).  Computed by splitting the
        Fourier coefficients of ``log a``; the grid doubles until the
        coefficient tails fall below ``eps``.

        Returns
        -------
        (a_low, a_up, inv_low, inv_up)
            The factors and their reciprocals, all as :class:`LaurentSymbol`.

        Raises
        ------
        SpectralError, WindingError
            If ``a`` vanishes on the circle or has nonzero winding number.
        """
        return _wiener_hopf(self.key(), self, eps)


class _Ref(tuple):
    """Tuple wrapper that hashes to a constant so lru_cache keys on ``key`` only."""

    def __hash__(self):
        return 0

    def __eq__(self, other):
        return True


@lru_cache(maxsize=256)
def _reciprocal_cached(key: bytes, eps: float, sym_ref: tuple):
    sym = sym_ref[0]
    n = sym._start_grid()
    while n <= MAX_GRID:
        vals = grid_values(sym.coeffs, sym.offset, n)
        mod = np.abs(vals)
        if mod.min() <= 1e-13 * max(mod.max(), 1.0):
            raise SpectralError("symbol vanishes on the unit circle")
        wrapped = coefficients_from_values(1.0 / vals).real
        if _tail_small(wrapped, eps):
            half = n // 4
            c = _unwrapped(wrapped, -half, half)
            return LaurentSymbol(c, -half).trim(eps)
        n *= 2
    raise NoWienerSolution("reciprocal coefficients do not decay")


def _reciprocal(key, sym, eps):
    return _reciprocal_cached(key, eps, _Ref((sym,)))


@lru_cache(maxsize=128)
def _wiener_hopf_cached(key: bytes, eps: float, sym_ref):
    sym = sym_ref[0]
    wind = sym.check_invertible()
    if wind != 0:
        raise WindingError(f"symbol has winding number {wind}")
    n = sym._start_grid()
    while n <= MAX_GRID:
        vals = grid_values(sym.coeffs, sym.offset, n)
        # continuous branch of the argument; periodic because the winding is 0
        arg = np.unwrap(np.angle(vals))
        logv = np.log(np.abs(vals)) + 1j * arg
        lw = coefficients_from_values(logv)
        if not _tail_small(lw, eps):
            n *= 2
            continue
        half = n // 2
        k = np.fft.fftfreq(n, 1.0 / n).astype(int)
        plus = np.where(k >= 0, lw, 0.0)
        minus = np.where(k < 0, lw, 0.0)
        # values of the split logs on the grid
        lp = np.fft.ifft(plus) * n
        lm = np.fft.ifft(minus) * n
        facs = []
        ok = True
        for sign_vals, lower in ((np.exp(lp), True), (np.exp(lm), False),
                                 (np.exp(-lp), True), (np.exp(-lm), False)):
            w = coefficients_from_values(sign_vals).real
            if not _tail_small(w, eps):
                ok = False
                break
            if lower:
                facs.append(LaurentSymbol(_unwrapped(w, 0, half // 2), 0).trim(eps))
            else:
                facs.append(LaurentSymbol(_unwrapped(w, -(half // 2), 0), -(half // 2)).trim(eps))
        if ok:
            return tuple(facs)
        n *= 2
    raise NoWienerSolution("Wiener-Hopf factors do not decay within the maximum grid")


def _wiener_hopf(key, sym, eps):
    return _wiener_hopf_cached(key, eps, _Ref((sym,)))
