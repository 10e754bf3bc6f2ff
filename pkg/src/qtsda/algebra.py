"""Matrix-algebra contract used by the solvers, plus the finite dense backend.

Solvers never touch raw arrays.  They only combine elements with ``+``, ``-``,
``@``, unary minus, :meth:`inv`, :meth:`norm_inf` and :meth:`ones_action`, so the
same code runs on finite :class:`DenseMatrix` values and on semi-infinite
:class:`~qtsda.qt.eqt.EqtMatrix` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, TypeVar, runtime_checkable

import numpy as np
import scipy.linalg as sla

from .errors import BackendMismatch, Breakdown

__all__ = [
    "AlgebraElement",
    "OnesAction",
    "DenseMatrix",
    "as_element",
    "matmul",
    "mat_inverse",
    "norm_inf",
    "ones_action",
    "residual",
    "residual_norm",
]

T = TypeVar("T", bound="AlgebraElement")

# condition numbers above this are treated as singular
BREAKDOWN_CONDITION = 1.0 / (100.0 * np.finfo(float).eps)


@runtime_checkable
class AlgebraElement(Protocol):
    """What a backend value must provide for the solvers to run on it."""

    def __add__(self: T, other: T) -> T: ...

    def __sub__(self: T, other: T) -> T: ...

    def __neg__(self: T) -> T: ...

    def __matmul__(self: T, other: T) -> T: ...

    def inv(self: T) -> T: ...

    def norm_inf(self) -> float: ...

    def ones_action(self) -> "OnesAction": ...

    def identity(self: T) -> T: ...

    def zeros(self: T) -> T: ...

    def compress(self: T) -> T: ...


@dataclass(frozen=True)
class OnesAction:
    """The vector ``A @ 1`` written as ``scalar_part * 1 + tail``.

    ``tail`` has finite support; entries past its end equal ``scalar_part``.
    ``length`` is the vector length for finite backends and ``None`` for
    semi-infinite ones.  Dense matrices report ``scalar_part = 0`` and the
    full row-sum vector as ``tail``.
    """

    scalar_part: float
    tail: np.ndarray
    length: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tail", np.asarray(self.tail, dtype=float).ravel())

    def __add__(self, other: "OnesAction") -> "OnesAction":
        m = max(self.tail.size, other.tail.size)
        length = self.length if self.length == other.length else None
        return OnesAction(self.scalar_part + other.scalar_part,
                          _pad(self.tail, m) + _pad(other.tail, m), length)

    def __sub__(self, other: "OnesAction") -> "OnesAction":
        return self + OnesAction(-other.scalar_part, -other.tail, other.length)

    def head(self, n: int) -> np.ndarray:
        """First ``n`` entries of the represented vector."""
        return self.scalar_part + _pad(self.tail[:n], n)

    def deviation_from(self, value: float) -> float:
        """Sup-norm distance between the represented vector and ``value * 1``."""
        near = float(np.max(np.abs(self.scalar_part + self.tail - value), initial=0.0))
        if self.length is not None and self.length <= self.tail.size:
            return near
        return max(near, abs(self.scalar_part - value))


def _pad(x: np.ndarray, m: int) -> np.ndarray:
    if x.size >= m:
        return x
    out = np.zeros(m)
    out[:x.size] = x
    return out


class DenseMatrix:
    """A square real matrix of finite order ``n``.

    Parameters
    ----------
    data : array_like
        Square 2-D array with finite entries.
    """

    __slots__ = ("_a",)
    __array_priority__ = 100

    def __init__(self, data):
        a = np.array(data, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"DenseMatrix needs a non-empty square array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("DenseMatrix entries must be finite")
        a.setflags(write=False)
        self._a = a

    @classmethod
    def _wrap(cls, a: np.ndarray) -> "DenseMatrix":
        obj = cls.__new__(cls)
        a.setflags(write=False)
        obj._a = a
        return obj

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._a

    @property
    def order(self) -> int:
        return self._a.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"DenseMatrix(order={self.order})"

    def _check(self, other) -> np.ndarray:
        if not isinstance(other, DenseMatrix):
            raise BackendMismatch(f"cannot combine DenseMatrix with {type(other).__name__}")
        if other.order != self.order:
            raise BackendMismatch(f"order mismatch: {self.order} vs {other.order}")
        return other._a

    def __add__(self, other):
        return DenseMatrix._wrap(self._a + self._check(other))

    def __sub__(self, other):
        return DenseMatrix._wrap(self._a - self._check(other))

    def __neg__(self):
        return DenseMatrix._wrap(-self._a)

    def __matmul__(self, other):
        return DenseMatrix._wrap(self._a @ self._check(other))

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return DenseMatrix._wrap(self._a * float(scalar))

    __rmul__ = __mul__

    def inv(self) -> "DenseMatrix":
        """Inverse through a pivoted LU factorization.

        Raises
        ------
        Breakdown
            If the estimated 1-norm condition number exceeds ``1/(100 eps)``.
        """
        n = self.order
        lu, piv, info = sla.lapack.dgetrf(self._a)
        if info > 0:
            raise Breakdown(f"singular matrix: zero pivot at position {info}")
        anorm = np.abs(self._a).sum(axis=0).max()
        rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
        if anorm == 0.0 or rcond * BREAKDOWN_CONDITION < 1.0:
            raise Breakdown(f"matrix is singular to working precision (rcond={rcond:.3e})")
        inv_a, info = sla.lapack.dgetri(lu, piv)
        if info != 0:
            raise Breakdown("LU inversion failed")
        return DenseMatrix._wrap(np.ascontiguousarray(inv_a.reshape(n, n)))

    def norm_inf(self) -> float:
        return float(np.abs(self._a).sum(axis=1).max())

    def ones_action(self) -> OnesAction:
        return OnesAction(0.0, self._a.sum(axis=1), self.order)

    def identity(self) -> "DenseMatrix":
        return DenseMatrix._wrap(np.eye(self.order))

    def zeros(self) -> "DenseMatrix":
        return DenseMatrix._wrap(np.zeros((self.order, self.order)))

    def compress(self) -> "DenseMatrix":
        return self

    def storage_size(self) -> int:
        return self._a.size

    def outer_ones(self, u) -> "DenseMatrix":
        """The rank-one element ``1 u^T``."""
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.order:
            raise BackendMismatch("u must have the matrix order")
        return DenseMatrix._wrap(np.outer(np.ones(self.order), u))


def as_element(x):
    """Wrap array-likes in :class:`DenseMatrix`; pass algebra elements through."""
    if isinstance(x, AlgebraElement) and not isinstance(x, np.ndarray):
        return x
    return DenseMatrix(x)


def matmul(a, b):
    return a @ b


def mat_inverse(a):
    return a.inv()


def norm_inf(a) -> float:
    return a.norm_inf()


def ones_action(a) -> OnesAction:
    return a.ones_action()


def residual(am1, a0, a1, x):
    """``A_{-1} + A_0 X + A_1 X^2``."""
    return am1 + a0 @ x + a1 @ (x @ x)


def residual_norm(am1, a0, a1, x) -> float:
    """Infinity norm of the quadratic residual at ``x``."""
    return residual(am1, a0, a1, x).norm_inf()
