"""Dense two-phase primal simplex for small equality-form LPs.

Solves  min c @ x  s.t.  A @ x = b, x >= 0  with Bland's rule, so pivoting is
deterministic and cannot cycle. Instances here are tiny by construction
(transport polytopes over a few thousand variables at most), so a dense
tableau beats anything cleverer on simplicity and exactness.
"""

from __future__ import annotations

import numpy as np

from .prob_core import SpectrError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8


class LpError(SpectrError):
    """The LP was infeasible or unbounded (an internal error for valid marginals)."""


def solve_equality_lp(c, A, b, tol: float = PIVOT_TOL) -> tuple[np.ndarray, float]:
    """Return (x, objective) minimizing c @ x over {A x = b, x >= 0}."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64)
    m, n = A.shape

    # Equality rows with negative rhs are flipped so the artificial basis is feasible.
    neg = b < 0
    if np.any(neg):
        A = A.copy()
        A[neg] *= -1.0
        b[neg] *= -1.0

    # Phase 1 tableau: [A | I | b] plus a reduced-cost row for min(sum of artificials).
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    _iterate(T, basis, tol)
    if -T[m, -1] > FEAS_TOL:
        raise LpError(f"infeasible: phase-1 residual {-T[m, -1]:.3e}")

    T, basis = _drop_artificials(T, basis, n, tol)
    mm = len(basis)

    # Phase 2: rebuild the reduced-cost row for the real objective.
    T[mm, :n] = c
    T[mm, -1] = 0.0
    for i, bi in enumerate(basis):
        if c[bi] != 0.0:
            T[mm] -= c[bi] * T[i]

    _iterate(T, basis, tol)

    x = np.zeros(n)
    for i, bi in enumerate(basis):
        x[bi] = T[i, -1]
    np.clip(x, 0.0, None, out=x)
    return x, float(c @ x)


def _iterate(T, basis, tol):
    m = len(basis)
    cost = T[m]
    while True:
        # Bland: entering variable = smallest index with negative reduced cost.
        negative = cost[:-1] < -tol
        if not negative.any():
            return
        col = int(np.argmax(negative))
        colvals = T[:m, col]
        rhs = T[:m, -1]
        eligible = colvals > tol
        if not eligible.any():
            raise LpError("unbounded: no eligible pivot row")
        ratios = np.full(m, np.inf)
        ratios[eligible] = rhs[eligible] / colvals[eligible]
        rmin = ratios.min()
        # Bland tie-break: among minimum ratios, leave the smallest basis variable.
        ties = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, abs(rmin)))
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, row, col)


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _drop_artificials(T, basis, n, tol):
    """Pivot artificial variables out of the basis; drop rows that prove redundant."""
    keep = []
    for i in range(len(basis)):
        if basis[i] < n:
            keep.append(i)
            continue
        row_abs = np.abs(T[i, :n])
        if row_abs.max(initial=0.0) > tol:
            _pivot(T, basis, i, int(np.argmax(row_abs)))
            keep.append(i)
        # else: zero row over the real variables, a redundant constraint.
    new_basis = [basis[i] for i in keep]
    rows = keep + [len(basis)]
    T = T[np.ix_(rows, list(range(n)) + [T.shape[1] - 1])].copy()
    return T, new_basis
