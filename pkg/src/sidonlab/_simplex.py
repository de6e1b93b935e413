"""Vertex (active-set) simplex with Bland's rule.

Solves ``max c.a  s.t.  G a <= b`` over free ``a`` in R^n with ``b >= 0``,
so the origin is feasible.  A vertex is held as the labels of ``n`` active
rows; every iteration re-solves the ``n x n`` active system from the
original data, so rounding never accumulates the way it does in a dense
tableau on heavily degenerate polytopes (thousands of rows tight at once).

Phase 0 walks from the origin to a vertex, adding one blocking row per step
along the projection of ``c`` onto the null space of the active rows.
Phase 1 is the primal simplex on the slacks: the multipliers ``lam`` solve
``G_K^T lam = c``; a negative one names the leaving row, the ratio test
names the entering row, and both ties go to the smallest label.  At the end
``lam >= 0`` and ``c.a = lam.b_K`` certify optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnboundedLP(ArithmeticError):
    def __init__(self, direction):
        self.direction = np.asarray(direction)
        super().__init__("LP unbounded along a recession direction")


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    pivots: int
    active: np.ndarray      # labels of the rows defining the optimal vertex
    duals: np.ndarray       # multipliers on those rows, all >= 0


def _ratio_step(G, b, a, d, skip, pivot_tol, tol):
    gd = G @ d
    ok = gd > pivot_tol
    if skip is not None:
        ok[skip] = False
    rows = np.nonzero(ok)[0]
    if rows.size == 0:
        return None, 0.0
    slack = np.maximum(b[rows] - G[rows] @ a, 0.0)
    t = slack / gd[rows]
    best = t.min()
    tied = rows[t <= best + tol * (1.0 + best)]
    return int(tied.min()), float(best)


def vertex_max(c, G, b, tol: float = 1e-12, pivot_tol: float = 1e-9,
               max_pivots: int = 100_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = G.shape
    if np.any(b < 0):
        raise ValueError("b must be non-negative (origin must be feasible)")
    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    ptol = pivot_tol * scale
    a = np.zeros(n)
    K: list[int] = []
    pivots = 0

    # phase 0: reach a vertex without lowering c.a
    while len(K) < n:
        if K:
            _, s, vt = np.linalg.svd(G[K])
            N = vt[len(K):]
        else:
            N = np.eye(n)
        d = N.T @ (N @ c)
        if np.linalg.norm(d) <= tol * max(1.0, np.linalg.norm(c)):
            d = N[0]
        r, t = _ratio_step(G, b, a, d, K, ptol, tol)
        if r is None:
            d = -d
            r, t = _ratio_step(G, b, a, d, K, ptol, tol)
            if r is None or c @ d > tol:
                raise UnboundedLP(d)
        K.append(r)
        a = a + t * d
        pivots += 1
    K_arr = np.array(K)
    a = np.linalg.solve(G[K_arr], b[K_arr])

    # phase 1: Bland pivots between vertices
    while True:
        GK = G[K_arr]
        lam = np.linalg.solve(GK.T, c)
        neg = np.nonzero(lam < -tol * max(1.0, np.abs(c).max()))[0]
        if neg.size == 0:
            break
        k = int(neg[np.argmin(K_arr[neg])])
        e = np.zeros(n)
        e[k] = 1.0
        d = -np.linalg.solve(GK, e)
        r, _ = _ratio_step(G, b, a, d, K_arr, ptol, tol)
        if r is None:
            raise UnboundedLP(d)
        K_arr = K_arr.copy()
        K_arr[k] = r
        a = np.linalg.solve(G[K_arr], b[K_arr])
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("pivot limit reached")
    return LPResult(a, float(c @ a), pivots, K_arr, np.maximum(lam, 0.0))
