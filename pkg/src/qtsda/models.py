"""Random walks in the quarter plane and the coefficients of their equation for G.

A walk is described by the probabilities ``a[i][j]`` of a move ``(i, j)``
with ``i, j in {-1, 0, 1}`` (``i`` is the level change, ``j`` the phase
change) away from the phase boundary, and by ``x[i] = (x_{i,0}, x_{i,1})``
on the boundary phase 0.  Level blocks are ``B_i = T(a^{(i)}) + E_i`` with
``T(a^{(i)})`` tridiagonal and the first row replaced by ``x[i]``.
"""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import BranchAmbiguous, ModelInvalid, NoWienerSolution, NotSubstochastic
from .qt.eqt import DEFAULT_THRESHOLD, EqtMatrix
from .qt.symbol import MACHINE_EPS, MAX_GRID, LaurentSymbol, coefficients_from_values, grid_values

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "QuarterPlaneModel",
    "DriftClass",
    "PRESETS",
    "preset",
    "load_model",
    "parse_model",
    "build_coefficients",
    "classify_drift",
    "compute_symbol_g",
    "symbol_g_cyclic_reduction",
    "symbol_residual",
    "preset_file",
    "make_gtilde_rank1",
    "make_gtilde_toeplitz",
]

_STEPS = (-1, 0, 1)


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ModelInvalid(f"not a probability: {value!r}")
    if isinstance(value, (int, float)):
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ModelInvalid(f"cannot parse probability {value!r}") from None
    raise ModelInvalid(f"not a probability: {value!r}")


@dataclass(frozen=True)
class QuarterPlaneModel:
    """Transition probabilities of a quarter-plane random walk.

    Parameters
    ----------
    inner : 3x3 nested sequence
        ``inner[i+1][j+1]`` is the probability ``a_{i,j}`` of the move
        ``(i, j)`` away from the boundary.
    boundary_x : 3x2 nested sequence
        ``boundary_x[i+1] = (x_{i,0}, x_{i,1})`` on the boundary phase.
    name : str
        Label used in reports.

    Probabilities are kept as exact fractions; numbers are read through
    their decimal representation and strings may be ``"p/q"``.
    """

    inner: tuple
    boundary_x: tuple
    name: str = "model"

    def __post_init__(self):
        inner = _matrix(self.inner, 3, 3, "inner")
        bx = _matrix(self.boundary_x, 3, 2, "boundary_x")
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "boundary_x", bx)
        self.validate()

    def validate(self, tol: float = 1e-12) -> None:
        vals = [p for row in self.inner + self.boundary_x for p in row]
        if any(p < 0 for p in vals):
            raise ModelInvalid("probabilities must be nonnegative")
        s_in = sum(p for row in self.inner for p in row)
        s_bd = sum(p for row in self.boundary_x for p in row)
        if abs(float(s_in) - 1.0) > tol:
            raise ModelInvalid(f"inner probabilities sum to {float(s_in)!r}, not 1")
        if abs(float(s_bd) - 1.0) > tol:
            raise ModelInvalid(f"boundary probabilities sum to {float(s_bd)!r}, not 1")

    def a(self, i: int, j: int) -> Fraction:
        return self.inner[i + 1][j + 1]

    def x(self, i: int, j: int) -> Fraction:
        return self.boundary_x[i + 1][j]

    def level_sum(self, i: int) -> Fraction:
        return sum(self.inner[i + 1])

    def mirrored(self) -> "QuarterPlaneModel":
        """Swap the roles of level moves -1 and +1."""
        return QuarterPlaneModel(self.inner[::-1], self.boundary_x[::-1], self.name + "-mirrored")

    def to_toml(self) -> str:
        def row(vals):
            return "[" + ", ".join(f'"{v}"' for v in vals) + "]"
        lines = [
            "# quarter-plane random walk; probabilities are exact \"p/q\" strings",
            "# inner[i+1][j+1] = a_{i,j} for level move i and phase move j in (-1, 0, 1)",
            "# boundary_x[i+1] = [x_{i,0}, x_{i,1}], the first row of B_i",
            f'name = "{self.name}"', "inner = ["]
        lines += [f"  {row(r)}," for r in self.inner]
        lines += ["]", "boundary_x = ["]
        lines += [f"  {row(r)}," for r in self.boundary_x]
        lines.append("]")
        return "\n".join(lines) + "\n"


def _matrix(rows, m: int, n: int, what: str) -> tuple:
    try:
        rows = [list(r) for r in rows]
    except TypeError:
        raise ModelInvalid(f"{what} must be a {m}x{n} array") from None
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ModelInvalid(f"{what} must be a {m}x{n} array")
    return tuple(tuple(_frac(v) for v in r) for r in rows)


def _scaled(rows, alpha: int):
    return [[Fraction(v, alpha) for v in r] for r in rows]


def _from_blocks(name, alpha, bm1, b0, b1) -> QuarterPlaneModel:
    # each block is given as its leading 2x3 section: boundary row then an inner row
    blocks = (bm1, b0, b1)
    inner = [blk[1] for blk in blocks]
    bx = [blk[0][:2] for blk in blocks]
    return QuarterPlaneModel(_scaled(inner, alpha), _scaled(bx, alpha), name)


PRESETS = {
    "test1": lambda: _from_blocks(
        "test1", 9,
        [[3, 3, 0], [2, 0, 1]], [[1, 1, 0], [1, 0, 1]], [[0, 1, 0], [2, 1, 1]]),
    "test2": lambda: _from_blocks(
        "test2", 16,
        [[5, 5, 0], [2, 0, 1]], [[2, 2, 0], [7, 0, 2]], [[1, 1, 0], [2, 1, 1]]),
    "test3": lambda: _from_blocks(
        "test3", 968,
        [[484, 121, 0], [80, 120, 160]], [[121, 0, 0], [84, 80, 80]],
        [[121, 121, 0], [160, 124, 80]]),
}


def preset(name: str) -> QuarterPlaneModel:
    """One of the benchmark walks ``test1``, ``test2``, ``test3``."""
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_file(name: str):
    """Path-like handle of the golden model file of a preset."""
    return resources.files("qtsda") / "presets" / f"{name}.toml"


def parse_model(text: str, default_name: str = "model") -> QuarterPlaneModel:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelInvalid(f"malformed model file: {exc}") from None
    missing = {"inner", "boundary_x"} - data.keys()
    if missing:
        raise ModelInvalid(f"model file lacks keys {sorted(missing)}")
    return QuarterPlaneModel(data["inner"], data["boundary_x"], str(data.get("name", default_name)))


def load_model(path) -> QuarterPlaneModel:
    """Read a model file (TOML with keys ``inner``, ``boundary_x`` and optional ``name``)."""
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), path.stem)


# coefficients -----------------------------------------------------------------

def _level_block(m: QuarterPlaneModel, i: int, threshold: float) -> EqtMatrix:
    sym = {1: float(m.a(i, -1)), 0: float(m.a(i, 0)), -1: float(m.a(i, 1))}
    first = np.array([[float(m.x(i, 0) - m.a(i, 0)), float(m.x(i, 1) - m.a(i, 1))]])
    corr = first if np.any(first) else None
    return EqtMatrix(sym, corr, None, threshold)


def build_coefficients(m: QuarterPlaneModel, threshold: float = DEFAULT_THRESHOLD):
    """``(A_{-1}, A0, A1) = (-B_{-1}, I - B_0, -B_1)`` as QT matrices."""
    bm1, b0, b1 = (_level_block(m, i, threshold) for i in _STEPS)
    eye = EqtMatrix.eye(threshold)
    return (-bm1).compress(), (eye - b0), (-b1).compress()


class DriftClass(str, enum.Enum):
    QT_SOLUTION = "QtSolution"
    EQT_SOLUTION = "EqtSolution"
    NULL_RECURRENT_BOUNDARY = "NullRecurrentBoundary"


def classify_drift(m: QuarterPlaneModel, tol: float = 1e-14) -> DriftClass:
    """Whether G has a zero limit part, from the level drift of the inner walk."""
    down, up = float(m.level_sum(-1)), float(m.level_sum(1))
    if abs(down - up) <= tol:
        return DriftClass.NULL_RECURRENT_BOUNDARY
    return DriftClass.QT_SOLUTION if down > up else DriftClass.EQT_SOLUTION


# the symbol of T(g) --------------------------------------------------------------

def _scalar_symbols(m: QuarterPlaneModel):
    """Symbols of the Toeplitz parts of ``A_{-1}, A0, A1``."""
    out = []
    for i in _STEPS:
        s = LaurentSymbol.from_dict({1: -float(m.a(i, -1)), 0: -float(m.a(i, 0)),
                                     -1: -float(m.a(i, 1))})
        if i == 0:
            s = s + LaurentSymbol.constant(1.0)
        out.append(s)
    return tuple(out)


def _min_root(c, b, a, tie_tol: float = 1e-10):
    """Smaller-modulus root of ``a t^2 + b t + c`` (elementwise, complex)."""
    disc = np.sqrt(b * b - 4 * a * c + 0j)
    sgn = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
    q = -(b + sgn * disc) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        r_small = np.where(q != 0, c / q, 0.0)
        r_big = np.where(a != 0, q / a, np.inf)
    gap = np.abs(r_big) - np.abs(r_small)
    if np.any(gap <= tie_tol * np.maximum(1.0, np.abs(r_small))):
        raise BranchAmbiguous("roots of equal modulus: the minimal branch is not isolated")
    return r_small


def _cr_values(c, b, a, max_steps: int = 64):
    """Pointwise cyclic reduction for the minimal root of ``a t^2 + b t + c``."""
    am1, a0, a1, ahat = c.astype(complex), b.astype(complex), a.astype(complex), b.astype(complex)
    for _ in range(max_steps):
        inv = 1.0 / a0
        t1 = am1 * inv * a1
        new_am1 = -am1 * inv * am1
        new_a1 = -a1 * inv * a1
        a0 = a0 - 2 * t1
        ahat = ahat - t1
        am1, a1 = new_am1, new_a1
        if np.all(np.abs(am1 * a1) <= MACHINE_EPS**2 * np.abs(a0) ** 2):
            break
    return -c / ahat


def _symbol_from_values(evaluate, syms, eps: float) -> LaurentSymbol:
    am1, a0, a1 = syms
    span = max(s.coeffs.size for s in syms)
    n = max(256, 1 << int(np.ceil(np.log2(4 * span))))
    while n <= MAX_GRID:
        vals = evaluate(*(grid_values(s.coeffs, s.offset, n) for s in syms))
        w = coefficients_from_values(vals).real
        band = np.abs(w[n // 4: n - n // 4 + 1]).max()
        if band < max(eps, 16 * MACHINE_EPS * np.abs(w).max()):
            half = n // 4
            idx = np.arange(-half, half + 1)
            return LaurentSymbol(w[idx % n], -half).trim(eps)
        n *= 2
    raise NoWienerSolution("symbol coefficients do not decay within the maximum grid")


def symbol_g_cyclic_reduction(m: QuarterPlaneModel, eps: float = DEFAULT_THRESHOLD) -> LaurentSymbol:
    """Symbol of T(g) by cyclic reduction at each grid node (no branch choice)."""
    return _symbol_from_values(_cr_values, _scalar_symbols(m), eps)


def compute_symbol_g(m: QuarterPlaneModel, eps: float = DEFAULT_THRESHOLD) -> LaurentSymbol:
    """Symbol ``g`` of the Toeplitz part of G.

    Solves ``a1(z) g^2 + a0(z) g + a_{-1}(z) = 0`` at roots of unity taking
    the smaller-modulus root, and recovers the coefficients by an inverse
    transform, doubling the grid until the discarded band is below ``eps``.
    If the two roots are not separated on the grid, pointwise cyclic
    reduction is used instead.

    Raises
    ------
    BranchAmbiguous
        For null-recurrent drift (coalescing roots at ``z = 1``).
    NoWienerSolution
        If the coefficients fail to decay.
    """
    if classify_drift(m) is DriftClass.NULL_RECURRENT_BOUNDARY:
        raise BranchAmbiguous("null-recurrent drift: roots coalesce at z = 1")
    syms = _scalar_symbols(m)
    try:
        return _symbol_from_values(_min_root, syms, eps)
    except BranchAmbiguous:
        return _symbol_from_values(_cr_values, syms, eps)


def symbol_residual(m: QuarterPlaneModel, g: LaurentSymbol, z) -> np.ndarray:
    """``|a1 g^2 + a0 g + a_{-1}|`` at the points ``z``."""
    am1, a0, a1 = _scalar_symbols(m)
    gz = g(z)
    return np.abs(a1(z) * gz * gz + a0(z) * gz + am1(z))


# initial approximations ----------------------------------------------------------

def make_gtilde_rank1(threshold: float = DEFAULT_THRESHOLD) -> EqtMatrix:
    """``I/2 + 1 e_1^T / 2``."""
    return EqtMatrix(LaurentSymbol.constant(0.5), None, [0.5], threshold)


def make_gtilde_toeplitz(g: LaurentSymbol, threshold: float = DEFAULT_THRESHOLD,
                         tol: float = 1e-12) -> EqtMatrix:
    """``T(g) + (1 - T(g) 1) e_1^T``, a stochastic matrix with Toeplitz part ``T(g)``.

    ``1 - T(g) 1 = (1 - g(1)) 1 + r_g`` splits into the limit part
    ``1 ((1 - g(1)) e_1)^T`` and the compact column ``r_g e_1^T``.

    Raises
    ------
    NotSubstochastic
        If ``g(1) > 1 + tol``.
    """
    g1 = g.at_one()
    if g1 > 1.0 + tol:
        raise NotSubstochastic(f"g(1) = {g1!r} exceeds 1")
    r = g.ones_tail()
    corr = r[:, None] if r.size else None
    lim = [1.0 - g1] if abs(1.0 - g1) > 0 else None
    return EqtMatrix(g, corr, lim, threshold).compress()
