"""Dense two-phase simplex for small inequality-form linear programs.

Problems are ``min f @ p  s.t.  A_ineq @ p <= b_ineq`` with every component
of ``p`` free in sign.  Free variables are split into positive and negative
parts, slacks are added per row, and rows with a negative right-hand side get
an artificial variable for phase one.  Bland's rule is used for both the
entering and the leaving variable, so the method cannot cycle.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

TOL = 1e-9


class LPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    cost: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        self.A_ineq = np.asarray(self.A_ineq, dtype=float).reshape(-1, self.cost.size)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        if self.A_ineq.shape[0] != self.b_ineq.size:
            raise ValueError(
                f"A_ineq has {self.A_ineq.shape[0]} rows but b_ineq has {self.b_ineq.size}"
            )

    @property
    def variable_dim(self) -> int:
        return self.cost.size

    def to_text(self) -> str:
        """Plain-text dump for debugging (one labelled row per line)."""
        buf = io.StringIO()
        buf.write(f"# LP variables={self.variable_dim} rows={self.b_ineq.size}\n")
        buf.write("min " + " ".join(repr(float(v)) for v in self.cost) + "\n")
        for row, rhs in zip(self.A_ineq, self.b_ineq):
            buf.write(" ".join(repr(float(v)) for v in row) + f" <= {float(rhs)!r}\n")
        return buf.getvalue()


@dataclass
class LPResult:
    x: np.ndarray | None
    cost: float
    status: LPStatus
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run_simplex(T, basis, allowed, tol, max_iter):
    """Iterate on tableau ``T`` (objective in the last row) until optimal.

    Returns ``(status, iterations)`` with status ``"optimal"`` or
    ``"unbounded"``.
    """
    n_rows = T.shape[0] - 1
    for it in range(max_iter):
        obj = T[-1, :-1]
        entering = -1
        for j in allowed:
            if obj[j] < -tol:
                entering = j
                break
        if entering < 0:
            return "optimal", it
        col = T[:n_rows, entering]
        rhs = T[:n_rows, -1]
        best_row, best_ratio = -1, np.inf
        for i in range(n_rows):
            if col[i] > tol:
                ratio = rhs[i] / col[i]
                if ratio < best_ratio - tol or (
                    abs(ratio - best_ratio) <= tol and basis[i] < basis[best_row]
                ):
                    best_row, best_ratio = i, ratio
        if best_row < 0:
            return "unbounded", it
        _pivot(T, best_row, entering)
        basis[best_row] = entering
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram, tol: float = TOL, max_iter: int | None = None) -> LPResult:
    A, b, f = lp.A_ineq, lp.b_ineq, lp.cost
    k, d = A.shape
    if k == 0:
        if np.any(np.abs(f) > tol):
            return LPResult(None, -np.inf, LPStatus.UNBOUNDED)
        return LPResult(np.zeros(d), 0.0, LPStatus.OPTIMAL)

    neg = b < 0
    n_art = int(neg.sum())
    n_struct = 2 * d + k
    n_cols = n_struct + n_art
    sign = np.where(neg, -1.0, 1.0)

    T = np.zeros((k + 1, n_cols + 1))
    T[:k, :d] = A * sign[:, None]
    T[:k, d:2 * d] = -A * sign[:, None]
    T[:k, 2 * d:n_struct] = np.diag(sign)
    T[:k, -1] = b * sign
    basis = np.empty(k, dtype=int)
    art_rows = np.flatnonzero(neg)
    for a_idx, i in enumerate(art_rows):
        T[i, n_struct + a_idx] = 1.0
        basis[i] = n_struct + a_idx
    basis[~neg] = 2 * d + np.flatnonzero(~neg)
    if max_iter is None:
        max_iter = 50 * (k + n_cols) + 1000
    iters = 0

    if n_art:
        # phase one: minimise the sum of the artificial variables
        T[-1, n_struct:n_cols] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        _, it = _run_simplex(T, basis, range(n_cols), tol, max_iter)
        iters += it
        scale = max(1.0, float(np.max(np.abs(b))))
        if -T[-1, -1] > 1e3 * tol * scale:
            return LPResult(None, np.inf, LPStatus.INFEASIBLE, iters)
        keep = []
        for i in range(k):
            if basis[i] >= n_struct:
                row = T[i, :n_struct]
                candidates = np.flatnonzero(np.abs(row) > tol)
                if candidates.size:
                    _pivot(T, i, int(candidates[0]))
                    basis[i] = int(candidates[0])
                    keep.append(i)
                # otherwise the row is redundant and dropped
            else:
                keep.append(i)
        T = np.vstack([T[keep][:, list(range(n_struct)) + [n_cols]], np.zeros((1, n_struct + 1))])
        basis = basis[keep]
    n_rows = T.shape[0] - 1

    # phase two
    c_full = np.concatenate([f, -f, np.zeros(k)])
    T[-1, :] = 0.0
    T[-1, :n_struct] = c_full
    for i in range(n_rows):
        cb = c_full[basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    status, it = _run_simplex(T, basis, range(n_struct), tol, max_iter)
    iters += it
    if status == "unbounded":
        return LPResult(None, -np.inf, LPStatus.UNBOUNDED, iters)
    z = np.zeros(n_struct)
    z[basis] = T[:n_rows, -1]
    x = z[:d] - z[d:2 * d]
    return LPResult(x, float(f @ x), LPStatus.OPTIMAL, iters)
