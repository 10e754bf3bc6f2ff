"""Brute-force and spectral validators on dense matrices.

Nothing here is used by the solvers; these are independent references for
tests and for generating derived example values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .algebra import DenseMatrix
from .errors import OracleInapplicable

__all__ = [
    "SpectrumReport",
    "spectrum",
    "dense_truncation",
    "random_qbd",
    "qbd_coefficients",
    "minimal_solution_oracle",
    "companion_pencil",
    "defect_pencil",
    "pencil_equivalence_check",
    "dual_subspace",
    "match_spectra",
    "brauer_shift_check",
    "invariant_subspace_residual",
    "convergence_rates",
]

MATCH_TOL = 1e-10


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: tuple
    spectral_radius: float

    def second_modulus(self) -> float:
        """Second largest eigenvalue modulus (0 for order 1)."""
        mods = sorted((abs(e) for e in self.eigenvalues), reverse=True)
        return mods[1] if len(mods) > 1 else 0.0


def spectrum(a) -> SpectrumReport:
    ev = np.linalg.eigvals(np.asarray(a, dtype=float))
    return SpectrumReport(tuple(complex(e) for e in ev), float(np.abs(ev).max()))


def _arr(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


def dense_truncation(A, n: int, m: int | None = None) -> DenseMatrix:
    """Leading ``n x n`` block of an EQT matrix (``n x m`` returned as an array)."""
    if n < 1:
        raise ValueError("n must be positive")
    if m is not None and m != n:
        return A.truncate(n, m)
    return DenseMatrix(A.truncate(n))


def random_qbd(n: int, rng: np.random.Generator, bias: float = 1.2, max_tries: int = 100):
    """Random positive-recurrent QBD blocks ``(B_{-1}, B_0, B_1)`` of order ``n``.

    Entries are uniform, rows of ``B_{-1} + B_0 + B_1`` normalized to one,
    then ``B_{-1}`` is scaled by ``bias`` and the rows renormalized.  Draws
    whose mean drift is not towards level 0 are rejected.
    """
    for _ in range(max_tries):
        b = [rng.random((n, n)) for _ in range(3)]
        s = sum(x.sum(axis=1) for x in b)
        b = [x / s[:, None] for x in b]
        b[0] = b[0] * bias
        s = sum(x.sum(axis=1) for x in b)
        b = [x / s[:, None] for x in b]
        if _drift(*b) < 0:
            return tuple(b)
    raise RuntimeError("could not draw a positive-recurrent QBD")


def _drift(bm1, b0, b1) -> float:
    """``pi (B_1 - B_{-1}) 1`` with ``pi`` stationary for ``B_{-1} + B_0 + B_1``."""
    a = bm1 + b0 + b1
    n = a.shape[0]
    w, vl = sla.eig(a, left=True, right=False)
    pi = np.real(vl[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()
    return float(pi @ (b1 - bm1).sum(axis=1)) if n else 0.0


def qbd_coefficients(bm1, b0, b1):
    """``(A_{-1}, A_0, A_1) = (-B_{-1}, I - B_0, -B_1)`` as dense elements."""
    n = _arr(b0).shape[0]
    return DenseMatrix(-_arr(bm1)), DenseMatrix(np.eye(n) - _arr(b0)), DenseMatrix(-_arr(b1))


def minimal_solution_oracle(am1, a0, a1, tol: float = 1e-13, max_iter: int = 1_000_000) -> DenseMatrix:
    """Minimal nonnegative solution by monotone fixed-point iteration from 0.

    Iterates ``X <- (I - B_0 - B_1 X)^{-1} B_{-1}`` which increases
    monotonically to ``G`` for QBD coefficients; monotonicity is asserted.

    Raises
    ------
    OracleInapplicable
        If the coefficients are not of QBD sign structure.
    """
    A = [_arr(x) for x in (am1, a0, a1)]
    n = A[0].shape[0]
    bm1, b0, b1 = -A[0], np.eye(n) - A[1], -A[2]
    for b in (bm1, b0, b1):
        if b.min() < -1e-15:
            raise OracleInapplicable("blocks B_i must be nonnegative")
    if (bm1 + b0 + b1).sum(axis=1).max() > 1 + 1e-12:
        raise OracleInapplicable("B_{-1} + B_0 + B_1 must be substochastic")
    x = np.zeros((n, n))
    eye = np.eye(n)
    for _ in range(max_iter):
        xn = np.linalg.solve(eye - b0 - b1 @ x, bm1)
        if (xn - x).min() < -1e-13:
            raise AssertionError("fixed-point iteration lost monotonicity")
        x = xn
        r = np.abs(A[0] + A[1] @ x + A[2] @ x @ x).sum(axis=1).max()
        if r <= tol:
            return DenseMatrix(x)
    raise RuntimeError("oracle iteration did not reach the residual tolerance")


def companion_pencil(am1, a0, a1):
    """``M = [[0, I], [-A_{-1}, -A_0]]``, ``N = [[I, 0], [0, A_1]]``."""
    am1, a0, a1 = _arr(am1), _arr(a0), _arr(a1)
    n = a0.shape[0]
    z, eye = np.zeros((n, n)), np.eye(n)
    return np.block([[z, eye], [-am1, -a0]]), np.block([[eye, z], [z, a1]])


def defect_pencil(am1, a0, a1, gtilde):
    """Pencil of the defect equation: ``M~ = [[G~, I], [-R(G~), -(A_0 + A_1 G~)]]``, ``N~ = N``."""
    am1, a0, a1, gt = _arr(am1), _arr(a0), _arr(a1), _arr(gtilde)
    r = a1 @ gt @ gt + a0 @ gt + am1
    n = a0.shape[0]
    eye = np.eye(n)
    mt = np.block([[gt, eye], [-r, -(a0 + a1 @ gt)]])
    _, nn = companion_pencil(am1, a0, a1)
    return mt, nn


def pencil_equivalence_check(am1, a0, a1, gtilde, mt=None, nt=None, tol: float = 1e-13) -> bool:
    """Check ``M~ = L M R`` and ``N~ = L N R`` with ``L = [[I, 0], [-A_1 G~, I]]``, ``R = [[I, 0], [G~, I]]``.

    ``mt``, ``nt`` default to :func:`defect_pencil`; pass perturbed ones to probe detection.
    """
    gt, a1_ = _arr(gtilde), _arr(a1)
    n = gt.shape[0]
    eye, z = np.eye(n), np.zeros((n, n))
    L = np.block([[eye, z], [-a1_ @ gt, eye]])
    R = np.block([[eye, z], [gt, eye]])
    m, nn = companion_pencil(am1, a0, a1)
    if mt is None or nt is None:
        mt0, nt0 = defect_pencil(am1, a0, a1, gtilde)
        mt = mt0 if mt is None else mt
        nt = nt0 if nt is None else nt
    ok_m = np.abs(L @ m @ R - _arr(mt)).max() <= tol
    ok_n = np.abs(L @ nn @ R - _arr(nt)).max() <= tol
    return bool(ok_m and ok_n)


def dual_subspace(V, gtilde, coeffs=None, tol: float = 1e-12):
    """``Y = V (I - G~ V)^{-1}`` and ``Z = (I - G~ V) V (I - G~ V)^{-1}``.

    When ``coeffs = (A_{-1}, A_0, A_1)`` is given, also verifies
    ``M~ [Y; I] Z = N~ [Y; I]`` to ``tol`` and raises ``AssertionError`` if not.
    """
    v, gt = np.atleast_2d(_arr(V)), np.atleast_2d(_arr(gtilde))
    n = v.shape[0]
    k = np.eye(n) - gt @ v
    kinv = DenseMatrix(k).inv().array
    y = v @ kinv
    z = k @ v @ kinv
    if coeffs is not None:
        mt, nt = defect_pencil(*coeffs, gt)
        basis = np.vstack([y, np.eye(n)])
        err = np.abs(mt @ basis @ z - nt @ basis).sum(axis=1).max()
        if err > tol:
            raise AssertionError(f"dual subspace relation violated ({err:.3e})")
    return DenseMatrix(y), DenseMatrix(z)


def match_spectra(a, b, tol: float = MATCH_TOL) -> bool:
    """Greedy nearest matching of two eigenvalue multisets."""
    a, b = list(np.asarray(a, dtype=complex)), list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return False
    for x in a:
        d = [abs(x - y) for y in b]
        j = int(np.argmin(d))
        if d[j] > tol:
            return False
        b.pop(j)
    return True


def brauer_shift_check(G, u, tol: float = MATCH_TOL) -> bool:
    """Spectrum of ``G - 1 u^T`` equals that of ``G`` with one eigenvalue 1 replaced by 0."""
    g = np.atleast_2d(_arr(G))
    u = _arr(u).ravel()
    n = g.shape[0]
    ev = list(np.linalg.eigvals(g))
    j = int(np.argmin([abs(e - 1) for e in ev]))
    if abs(ev[j] - 1) > tol:
        return False
    ev[j] = 0.0
    shifted = np.linalg.eigvals(g - np.outer(np.ones(n), u))
    return match_spectra(shifted, ev, tol)


def invariant_subspace_residual(pencil, X, W) -> float:
    """``||M [I; X] - N [I; X] W||_inf`` for ``pencil = (M, N)`` or an SSF-I quadruple."""
    if hasattr(pencil, "E"):
        e, p, f, q = (_arr(getattr(pencil, k)) for k in "EPFQ")
        n = e.shape[0]
        z, eye = np.zeros((n, n)), np.eye(n)
        m = np.block([[e, z], [-p, eye]])
        nn = np.block([[eye, -q], [z, f]])
    else:
        m, nn = (_arr(x) for x in pencil)
        n = m.shape[0] // 2
    basis = np.vstack([np.eye(n), _arr(X)])
    return float(np.abs(m @ basis - nn @ basis @ _arr(W)).sum(axis=1).max())


def convergence_rates(G, V) -> dict:
    """``sigma = rho(G)``, ``tau = rho(V)`` and ``sigma_tilde = |lambda_2(G)|``."""
    sg, sv = spectrum(G), spectrum(V)
    return {"sigma": sg.spectral_radius, "tau": sv.spectral_radius,
            "sigma_tilde": sg.second_modulus()}
