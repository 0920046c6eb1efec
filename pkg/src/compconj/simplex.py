"""Small dense LPs in standard form, solved with HiGHS through SciPy.

Solves ``min c @ x  s.t.  A @ x = b, x >= 0`` for the feasibility and
support-function problems of the qualification checks (a handful of rows,
a few dozen columns).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

__all__ = ["LPResult", "solve_lp", "feasible"]

_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    value: float


def solve_lp(c, A, b) -> LPResult:
    """Minimise ``c @ x`` subject to ``A @ x = b`` and ``x >= 0``."""
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float).ravel()
    c = np.array(c, dtype=float).ravel()
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    status = _STATUS.get(res.status)
    if status is None:
        raise RuntimeError(f"LP solver failed: {res.message}")
    if status == "optimal":
        return LPResult(status, np.asarray(res.x), float(res.fun))
    return LPResult(status, None, np.inf if status == "infeasible" else -np.inf)


def feasible(A, b) -> bool:
    A = np.array(A, dtype=float, ndmin=2)
    return solve_lp(np.zeros(A.shape[1]), A, b).status != "infeasible"
