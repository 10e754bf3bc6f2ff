"""Doubling solver for ``A1 X^2 + A0 X + A_{-1} = 0`` and a fixed-point baseline.

Everything here is written against the algebra contract of :mod:`qtsda.algebra`
and runs unchanged on :class:`~qtsda.algebra.DenseMatrix` and
:class:`~qtsda.qt.eqt.EqtMatrix` values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np

from .algebra import DenseMatrix, residual_norm
from .errors import Breakdown, NotReducible, PreconditionError

__all__ = [
    "Ssf1Pencil",
    "SdaState",
    "Standard",
    "DefectCorrected",
    "StochasticImproved",
    "InitScheme",
    "StopRule",
    "Termination",
    "SolveReport",
    "reduce_to_ssf1",
    "init_standard",
    "init_defect_corrected",
    "init_stochastic_improved",
    "init_pencil",
    "sda_step",
    "run_sda",
    "solve_sda",
    "run_fixed_point",
]

# tolerance for the stochasticity precondition of the improved scheme
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Ssf1Pencil:
    """Pencil ``M - lambda N`` with ``M = [[E, 0], [-P, I]]`` and ``N = [[I, -Q], [0, F]]``."""

    E: object
    P: object
    F: object
    Q: object


@dataclass(frozen=True)
class SdaState:
    """Iterates of the doubling recurrence after ``k`` steps."""

    E: object
    F: object
    P: object
    Q: object
    k: int = 0
    residual_history: tuple = ()

    @classmethod
    def from_pencil(cls, pencil: Ssf1Pencil) -> "SdaState":
        return cls(pencil.E, pencil.F, pencil.P, pencil.Q, 0, ())


@dataclass(frozen=True)
class Standard:
    """Classical initialization from the companion linearization."""


@dataclass(frozen=True)
class DefectCorrected:
    """Refine an approximation ``gtilde``; iterates ``P_k`` approach ``G - gtilde``."""

    gtilde: object


@dataclass(frozen=True)
class StochasticImproved:
    """Defect correction with the eigenvalue 1 deflated through ``S = gtilde - 1 u^T``."""

    gtilde: object
    u: object


InitScheme = Union[Standard, DefectCorrected, StochasticImproved]


@dataclass(frozen=True)
class StopRule:
    """Stopping rule: stop when ``r_k < tol`` or ``r_k >= r_{k-1}``.

    An increase of the residual once the best residual is already below
    ``floor`` means rounding noise has been reached; that run counts as
    Converged.  Above ``floor`` an increase is reported as Stagnated.

    Doubling drives the residual down like ``theta^(2^k)``, so consecutive
    ratios ``r_k / r_{k-1}`` shrink quickly.  When ``stall_window``
    consecutive ratios stay at or above ``stall_ratio`` the iteration has
    lost its doubling behaviour (for instance when the solution lies
    outside the subalgebra holding the iterates) and the doubling run is
    reported as Stagnated.  Below ``floor`` a single such ratio already ends a
    doubling run as Converged.  Both solvers also stop, Stagnated, when an
    iterate needs more than ``max_storage`` stored numbers.
    """

    tol: float = 1e-14
    max_iter: int = 64
    floor: float = 1e-12
    stall_ratio: float = 0.5
    stall_window: int = 3
    max_storage: int = 50_000_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.floor < self.tol:
            raise ValueError("floor must not be below tol")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


class Termination(str, Enum):
    CONVERGED = "Converged"
    STAGNATED = "Stagnated"
    BREAKDOWN = "Breakdown"
    MAX_ITER = "MaxIter"


@dataclass
class SolveReport:
    """Outcome of a solve.

    ``solution`` is the candidate with the smallest residual seen (the last
    one unless the run stagnated).  ``iterations`` counts the steps
    performed; ``best_iteration`` is the step that produced ``solution``.
    Converged implies ``residual < stop.floor`` (and ``< stop.tol`` unless
    the run ended on a residual increase).
    """

    solution: object
    dual_approx: object
    iterations: int
    residual_history: list
    termination: Termination
    wall_time: float
    method: str = ""
    best_iteration: int = 0
    f_norm_history: list = field(default_factory=list)
    message: str = ""

    @property
    def residual(self) -> float:
        """Residual of :attr:`solution`."""
        if not self.residual_history:
            return math.nan
        return self.residual_history[self.best_iteration]


def reduce_to_ssf1(M, N) -> Ssf1Pencil:
    """Bring a dense ``2n x 2n`` pencil ``M - lambda N`` into SSF-I.

    With ``M = [M1, M2]`` and ``N = [N1, N2]`` split into column halves,
    ``[[E, -Q], [-P, F]] = S^{-1} [M1, N2]`` where ``S = [N1, M2]``.

    Raises
    ------
    NotReducible
        If ``S`` is singular to working precision.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.shape != N.shape or M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError("M and N must be square of the same even order")
    n = M.shape[0] // 2
    S = np.hstack([N[:, :n], M[:, n:]])
    try:
        Sinv = DenseMatrix(S).inv().array
    except Breakdown as exc:
        raise NotReducible(f"S = [N1, M2] is singular: {exc}") from None
    Z = Sinv @ np.hstack([M[:, :n], N[:, n:]])
    return Ssf1Pencil(E=DenseMatrix(Z[:n, :n]), P=DenseMatrix(-Z[n:, :n]),
                      F=DenseMatrix(Z[n:, n:]), Q=DenseMatrix(-Z[:n, n:]))


def init_standard(am1, a0, a1) -> Ssf1Pencil:
    """``E = P = -A0^{-1} A_{-1}``, ``F = Q = -A0^{-1} A1``."""
    k = a0.inv()
    e = -(k @ am1)
    f = -(k @ a1)
    return Ssf1Pencil(E=e, P=e, F=f, Q=f)


def _defect_parts(am1, a0, a1, gtilde):
    k = (a0 + a1 @ gtilde).inv()
    r = am1 + a0 @ gtilde + a1 @ (gtilde @ gtilde)
    p = -(k @ r)
    f = -(k @ a1)
    return p, f


def init_defect_corrected(am1, a0, a1, gtilde) -> Ssf1Pencil:
    """Pencil for the increment ``H = G - gtilde``.

    With ``K = (A0 + A1 gtilde)^{-1}`` and the defect
    ``R = A1 gtilde^2 + A0 gtilde + A_{-1}``: ``P = -K R``, ``E = gtilde + P``
    and ``F = Q = -K A1``.
    """
    p, f = _defect_parts(am1, a0, a1, gtilde)
    return Ssf1Pencil(E=gtilde + p, P=p, F=f, Q=f)


def _check_stochastic(gtilde, u) -> None:
    dev = gtilde.ones_action().deviation_from(1.0)
    if dev > STOCHASTIC_TOL:
        raise PreconditionError(f"gtilde is not stochastic (max |row sum - 1| = {dev:.3e})")
    us = float(np.sum(np.asarray(u, dtype=float)))
    if abs(us - 1.0) > STOCHASTIC_TOL:
        raise PreconditionError(f"u must sum to 1, got {us!r}")


def init_stochastic_improved(am1, a0, a1, gtilde, u) -> Ssf1Pencil:
    """Pencil of the simplified defect equation for a stochastic ``gtilde``.

    ``S = gtilde - 1 u^T``, ``E = S - K R``, ``P = -K R``, ``F = Q = -K A1``.

    Raises
    ------
    PreconditionError
        If ``gtilde`` is not stochastic or ``u`` does not sum to one.
    """
    _check_stochastic(gtilde, u)
    p, f = _defect_parts(am1, a0, a1, gtilde)
    s = gtilde - gtilde.outer_ones(u)
    return Ssf1Pencil(E=s + p, P=p, F=f, Q=f)


def init_pencil(am1, a0, a1, scheme: InitScheme) -> Ssf1Pencil:
    if isinstance(scheme, Standard):
        return init_standard(am1, a0, a1)
    if isinstance(scheme, DefectCorrected):
        return init_defect_corrected(am1, a0, a1, scheme.gtilde)
    if isinstance(scheme, StochasticImproved):
        return init_stochastic_improved(am1, a0, a1, scheme.gtilde, scheme.u)
    raise TypeError(f"unknown init scheme {scheme!r}")


def sda_step(state: SdaState) -> SdaState:
    """One doubling step.

    ``E+ = E (I-QP)^{-1} E``, ``F+ = F (I-PQ)^{-1} F``,
    ``P+ = P + F (I-PQ)^{-1} P E``, ``Q+ = Q + E (I-QP)^{-1} Q F``.

    Raises
    ------
    Breakdown
        If ``I - QP`` or ``I - PQ`` is singular to working precision.
    """
    E, F, P, Q = state.E, state.F, state.P, state.Q
    eye = E.identity()
    ew = E @ (eye - Q @ P).inv()
    fw = F @ (eye - P @ Q).inv()
    return SdaState(
        E=ew @ E,
        F=fw @ F,
        P=P + fw @ (P @ E),
        Q=Q + ew @ (Q @ F),
        k=state.k + 1,
        residual_history=state.residual_history,
    )


def _stalled(hist, stop: StopRule) -> bool:
    w = stop.stall_window
    if w <= 0 or len(hist) <= w:
        return False
    return all(hist[-i] >= stop.stall_ratio * hist[-i - 1] for i in range(1, w + 1))


def _storage(x) -> int:
    size = getattr(x, "storage_size", None)
    return int(size()) if size is not None else 0


def _on_increase(best: float, stop: StopRule, k: int):
    # a residual that fails to decrease ends the run
    if best < stop.floor:
        return Termination.CONVERGED, f"residual at working precision; increase at step {k}"
    return Termination.STAGNATED, f"residual increased at step {k}"


def _candidate(scheme: InitScheme, p):
    if isinstance(scheme, Standard):
        return p
    return scheme.gtilde + p


def run_sda(pencil: Ssf1Pencil, scheme: InitScheme, coeffs, stop: StopRule = StopRule(),
            method: str = "") -> SolveReport:
    """Iterate the doubling recurrence until the residual test decides.

    The residual ``||A_{-1} + A0 G_k + A1 G_k^2||_inf`` is evaluated on the
    candidate ``G_k = P_k`` (standard scheme) or ``G_k = gtilde + P_k``
    (defect schemes).  The run stops when the residual falls below
    ``stop.tol`` (Converged), when it fails to decrease or stalls
    (Stagnated unless already at ``stop.floor``; the best iterate is
    reported), on a singular pivot (Breakdown) or after ``stop.max_iter``
    steps (MaxIter).  See :class:`StopRule`.

    Parameters
    ----------
    pencil : Ssf1Pencil
        Starting quadruple, usually from :func:`init_pencil`.
    scheme : InitScheme
        Decides how the candidate solution is assembled from ``P_k``.
    coeffs : tuple
        ``(A_{-1}, A0, A1)``.
    """
    am1, a0, a1 = coeffs
    t0 = time.perf_counter()
    state = SdaState.from_pencil(pencil)
    cand = _candidate(scheme, state.P)
    hist = [residual_norm(am1, a0, a1, cand)]
    state = replace(state, residual_history=tuple(hist))
    fnorms = [state.F.norm_inf()]
    best, best_i, best_q = cand, 0, state.Q
    term, msg = None, ""
    if not math.isfinite(hist[0]):
        term, msg = Termination.BREAKDOWN, "non-finite initial residual"
    elif hist[0] < stop.tol:
        term = Termination.CONVERGED
    while term is None:
        if state.k >= stop.max_iter:
            term = Termination.MAX_ITER
            break
        try:
            state = sda_step(state)
        except Breakdown as exc:
            term, msg = Termination.BREAKDOWN, str(exc)
            break
        cand = _candidate(scheme, state.P)
        r = residual_norm(am1, a0, a1, cand)
        hist.append(r)
        state = replace(state, residual_history=tuple(hist))
        fnorms.append(state.F.norm_inf())
        if not math.isfinite(r):
            term, msg = Termination.BREAKDOWN, "non-finite residual"
        elif r < stop.tol:
            best, best_i, best_q = cand, state.k, state.Q
            term = Termination.CONVERGED
        elif r >= hist[-2]:
            term, msg = _on_increase(hist[best_i], stop, state.k)
        else:
            best, best_i, best_q = cand, state.k, state.Q
            if r < stop.floor and r >= stop.stall_ratio * hist[-2]:
                # quadratic convergence has ended in rounding noise
                term = Termination.CONVERGED
                msg = f"residual at working precision; no reduction at step {state.k}"
            elif _stalled(hist, stop):
                term = Termination.STAGNATED
                msg = (f"residual ratios above {stop.stall_ratio} for {stop.stall_window} steps; "
                       "the doubling iteration is not converging (for the standard scheme this "
                       "happens when the solution has a nonzero limit part)")
            elif _storage(state.F) + _storage(state.P) > stop.max_storage:
                term, msg = Termination.STAGNATED, "iterate storage exceeds max_storage"
    return SolveReport(
        solution=best, dual_approx=best_q, iterations=len(hist) - 1,
        residual_history=hist, termination=term, wall_time=time.perf_counter() - t0,
        method=method, best_iteration=best_i, f_norm_history=fnorms, message=msg,
    )


def solve_sda(am1, a0, a1, scheme: InitScheme = Standard(), stop: StopRule = StopRule(),
              method: str = "") -> SolveReport:
    """Build the pencil for ``scheme`` and run the doubling iteration.

    Breakdown while building the pencil is reported, not raised.
    """
    t0 = time.perf_counter()
    try:
        pencil = init_pencil(am1, a0, a1, scheme)
    except Breakdown as exc:
        return SolveReport(None, None, 0, [], Termination.BREAKDOWN,
                           time.perf_counter() - t0, method, 0, [], str(exc))
    rep = run_sda(pencil, scheme, (am1, a0, a1), stop, method)
    rep.wall_time = time.perf_counter() - t0
    return rep


def run_fixed_point(am1, a0, a1, x0, stop: StopRule = StopRule(max_iter=100_000),
                    method: str = "") -> SolveReport:
    """Fixed-point iteration ``X <- -A0^{-1} (A_{-1} + A1 X^2)``.

    Written as ``X <- X - A0^{-1} R(X)`` so that each step reuses the
    residual matrix it has just measured.  Same stopping rule as
    :func:`run_sda`; ``dual_approx`` is ``None``.

    Raises
    ------
    Breakdown
        If ``A0`` is singular.
    """
    t0 = time.perf_counter()
    a0inv = a0.inv()
    x = x0
    hist, k = [], 0
    best, best_i = x, 0
    term, msg = None, ""
    while True:
        res = am1 + a0 @ x + a1 @ (x @ x)
        r = res.norm_inf()
        hist.append(r)
        if not math.isfinite(r):
            term, msg = Termination.BREAKDOWN, "non-finite residual"
            break
        if k and r >= hist[-2]:
            term, msg = _on_increase(hist[best_i], stop, k)
            break
        best, best_i = x, k
        if r < stop.tol:
            term = Termination.CONVERGED
            break
        if k >= stop.max_iter:
            term = Termination.MAX_ITER
            break
        if _storage(x) > stop.max_storage:
            term, msg = Termination.STAGNATED, "iterate storage exceeds max_storage"
            break
        x = x - a0inv @ res
        k += 1
    return SolveReport(
        solution=best, dual_approx=None, iterations=len(hist) - 1,
        residual_history=hist, termination=term, wall_time=time.perf_counter() - t0,
        method=method, best_iteration=best_i, message=msg,
    )
