"""Mirror correspondences at a fixed transform as a linear assignment problem.

The score ``C[i, j] = x_i . reflect(x_j)`` rewards sending reflected point
``j`` onto point ``i``.  A row assignment ``sigma`` (``sigma[i] = j``) is
turned into a :class:`Correspondence` with ``mirror[j] = i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import ContractError, Correspondence

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class AssignmentProblem:
    score: np.ndarray
    cap: int | None = None

    def __post_init__(self):
        C = np.array(self.score, dtype=float, copy=True)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
            raise ContractError(f"score must be a non-empty square matrix, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ContractError("score must be finite")
        if self.cap is not None and not 1 <= 2 * self.cap <= C.shape[0]:
            raise ContractError(f"cap k must satisfy 1 <= 2k <= n, got k={self.cap}")
        C.setflags(write=False)
        object.__setattr__(self, "score", C)

    @property
    def n(self) -> int:
        return self.score.shape[0]


def score_matrix(X: np.ndarray, Xm: np.ndarray) -> np.ndarray:
    """``C = X^T X_m`` for points ``X`` and their reflections ``X_m``."""
    return X.T @ Xm


def residual_scores(X: np.ndarray, Xm: np.ndarray) -> np.ndarray:
    """``-1/2 |x_i - xm_j|^2``; same optimal permutations as :func:`score_matrix`.

    It differs from ``X^T X_m`` by row and column constants only, but its
    entries are comparable across pairs, which matters when a cap drops some.
    """
    sq = 0.5 * (np.sum(X * X, axis=0)[:, None] + np.sum(Xm * Xm, axis=0)[None, :])
    return X.T @ Xm - sq


def tie_tolerance(C: np.ndarray) -> float:
    return 64.0 * EPS * C.shape[0] * max(1.0, float(np.max(np.abs(C))))


def column_potentials(cost: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Dual column potentials certifying that ``sigma`` minimises ``cost``.

    With ``u_i = cost[i, sigma_i] - v[sigma_i]`` every reduced cost
    ``cost - u - v`` is non-negative.  ``v`` holds shortest-path distances in
    the exchange graph (edge ``sigma_i -> j`` of weight
    ``cost[i, j] - cost[i, sigma_i]``), computed by vectorised Bellman-Ford.
    """
    n = cost.shape[0]
    W = cost - cost[np.arange(n), sigma][:, None]
    v = np.zeros(n)
    for _ in range(n + 1):
        cand = np.min(v[sigma][:, None] + W, axis=0)
        new = np.minimum(v, cand)
        if np.array_equal(new, v):
            break
        v = new
    return v


def _lexicographic_refine(tight: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Smallest assignment vector among perfect matchings of the tight graph.

    Greedy over rows: row ``i`` takes the smallest tight column ``j`` for
    which the remaining rows can still be rematched, found as an alternating
    path from the current owner of ``j`` back to ``sigma[i]`` through rows
    not yet fixed.
    """
    n = sigma.shape[0]
    sigma = sigma.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[sigma] = np.arange(n)
    fixed = np.zeros(n, dtype=bool)
    adj = [np.flatnonzero(tight[i]) for i in range(n)]
    for i in range(n):
        fixed[i] = True
        if adj[i].size == 1:
            continue
        target = sigma[i]
        for j in adj[i]:
            if j >= target:
                break
            start = owner[j]
            if fixed[start]:
                continue
            path = _alternating_path(adj, sigma, owner, fixed, start, target)
            if path is None:
                continue
            # path: rows r_0..r_m, r_k moves to col c_k, ending at target
            for r, c in path:
                sigma[r] = c
                owner[c] = r
            sigma[i] = j
            owner[j] = i
            break
    return sigma


def _alternating_path(adj, sigma, owner, fixed, start, target):
    prev = {start: None}
    queue = deque([start])
    while queue:
        r = queue.popleft()
        for c in adj[r]:
            if c == sigma[r]:
                continue
            if c == target:
                moves = [(r, c)]
                while prev[r] is not None:
                    pr = prev[r]
                    moves.append((pr, sigma[r]))
                    r = pr
                return moves
            nxt = owner[c]
            if fixed[nxt] or nxt in prev:
                continue
            prev[nxt] = r
            queue.append(nxt)
    return None


def _optimal_rows(C: np.ndarray) -> np.ndarray:
    _, sigma = linear_sum_assignment(C, maximize=True)
    cost = -C
    v = column_potentials(cost, sigma)
    u = cost[np.arange(C.shape[0]), sigma] - v[sigma]
    reduced = cost - u[:, None] - v[None, :]
    tight = reduced <= tie_tolerance(C)
    if np.all(np.count_nonzero(tight, axis=1) == 1):
        return sigma
    return _lexicographic_refine(tight, sigma)


def rows_to_correspondence(sigma: np.ndarray) -> Correspondence:
    mirror = np.empty_like(sigma)
    mirror[sigma] = np.arange(sigma.shape[0])
    return Correspondence(mirror)


def optimal_rows(prob: AssignmentProblem) -> np.ndarray:
    """Maximising assignment vector ``sigma`` (``sigma[i]`` = column of row ``i``).

    Among assignments whose score is within rounding of the optimum the
    lexicographically smallest vector is returned.
    """
    return _optimal_rows(prob.score)


def solve_assignment(prob: AssignmentProblem) -> Correspondence:
    """Full permutation maximising ``sum_i C[i, sigma_i]``."""
    return rows_to_correspondence(_optimal_rows(prob.score))


def solve_assignment_capped(prob: AssignmentProblem, k: int) -> Correspondence:
    """Keep at most ``2k`` entries of the optimal full matching.

    The full matching splits into units: a self match (one entry), a mutual
    pair (two entries, kept or dropped together) and a one-way entry.  Units
    are taken in order of decreasing score per entry, skipping any that
    would exceed the budget.  This is a filter on the full optimum, not an
    exact solution of the cardinality-constrained problem.
    """
    n = prob.n
    if not 1 <= 2 * k <= n:
        raise ContractError(f"cap k must satisfy 1 <= 2k <= n, got k={k}")
    C = prob.score
    sigma = _optimal_rows(C)
    units = []
    seen = np.zeros(n, dtype=bool)
    for i in range(n):
        if seen[i]:
            continue
        j = sigma[i]
        if j != i and sigma[j] == i:
            seen[i] = seen[j] = True
            units.append((0.5 * (C[i, j] + C[j, i]), min(i, j), [(i, j), (j, i)]))
        else:
            seen[i] = True
            units.append((C[i, j], i, [(i, j)]))
    # stable order: score descending, then smallest row
    units.sort(key=lambda u: (-u[0], u[1]))
    budget = 2 * k
    mirror = np.full(n, -1, dtype=np.int64)
    for _, _, entries in units:
        if len(entries) > budget:
            continue
        for row, col in entries:
            mirror[col] = row
        budget -= len(entries)
        if budget == 0:
            break
    return Correspondence(mirror)


def assignment_value(C: np.ndarray, corr: Correspondence) -> float:
    """``sum C[mirror[j], j]`` over matched columns ``j``."""
    idx = corr.matched
    return float(np.sum(C[corr.mirror[idx], idx]))
