"""Two-phase revised simplex for small equality-form linear programs.

Solves ``min c @ x  s.t.  A @ x = b, x >= 0``.  Each iteration recomputes
the basic solution, the duals and the entering direction from the original
data, so round-off does not accumulate across pivots.  Bland's rule (lowest
eligible index enters, lowest basic index breaks ratio ties) prevents
cycling, so the result is deterministic.  Intended for problems with at
most a few hundred variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, NumericalFailure

PIVOT_TOL = 1e-9
COST_TOL = 1e-10
FEAS_TOL = 1e-9
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int


def _basic_solution(M, basis, b):
    try:
        xb = np.linalg.solve(M[:, basis], b)
    except np.linalg.LinAlgError:
        raise NumericalFailure("basis matrix became singular") from None
    xb[np.abs(xb) < ZERO_TOL] = 0.0
    return xb


def _run(M, b, cost, basis, n_enter, n_real, locked, max_iter, iters):
    """Pivot until no column below ``n_enter`` has negative reduced cost.

    Columns at or beyond ``n_real`` are artificial.  With ``locked`` set they
    sit at zero and must leave as soon as the entering direction touches
    their row, whatever the sign.
    """
    while True:
        xb = _basic_solution(M, basis, b)
        B = M[:, basis]
        y = np.linalg.solve(B.T, cost[basis])
        reduced = cost[:n_enter] - M[:, :n_enter].T @ y
        reduced[[j for j in basis if j < n_enter]] = 0.0
        eligible = np.flatnonzero(reduced < -COST_TOL)
        if eligible.size == 0:
            return iters
        col = int(eligible[0])
        d = np.linalg.solve(B, M[:, col])
        step = d > PIVOT_TOL
        ratios = np.full(len(basis), np.inf)
        ratios[step] = np.maximum(xb[step], 0.0) / d[step]
        if locked:
            stuck = (np.array(basis) >= n_real) & (np.abs(d) > PIVOT_TOL)
            ratios[stuck] = 0.0
        if not np.isfinite(ratios).any():
            raise Infeasible("linear program is unbounded")
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
        row = int(min(ties, key=lambda r: basis[r]))
        basis[row] = col
        iters += 1
        if iters > max_iter:
            raise NumericalFailure(f"simplex exceeded {max_iter} iterations")


def solve(c, A, b, max_iter=None):
    """Minimize ``c @ x`` over ``A @ x = b``, ``x >= 0``."""
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * max(n, 1)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # equilibrate rows so pivot tolerances mean the same thing everywhere
    norms = np.abs(A).max(axis=1)
    norms[norms == 0] = 1.0
    A /= norms[:, None]
    b /= norms

    # phase 1: artificial identity basis, minimize their sum
    M = np.hstack([A, np.eye(m)])
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    iters = _run(M, b, cost, basis, n + m, n, False, max_iter, 0)
    xb = _basic_solution(M, basis, b)
    infeas = float(sum(x for x, j in zip(xb, basis) if j >= n))
    if infeas > FEAS_TOL * max(1.0, float(b.max(initial=0.0))):
        raise Infeasible(f"no feasible point (phase-one residual {infeas:.3g})")

    # phase 2: artificials never re-enter; any still basic are held at zero
    cost = np.concatenate([c, np.zeros(m)])
    iters = _run(M, b, cost, basis, n, n, True, max_iter, iters)

    xb = _basic_solution(M, basis, b)
    x = np.zeros(n)
    for v, j in zip(xb, basis):
        if j < n:
            x[j] = v
    if (x < -FEAS_TOL).any():
        raise NumericalFailure("solution has negative components")
    x = np.clip(x, 0.0, None)
    return LPResult(x, float(c @ x), iters)
