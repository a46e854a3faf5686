"""Minimum-weight perfect matching of detection events, with boundary matches.

Each detection event ``u`` may pair with another event or with the
boundary. The boundary is handled by giving every event a virtual twin
``u'`` joined to ``u`` with the boundary weight; twins are joined to each
other at zero cost, so a perfect matching of the doubled graph is a valid
pairing of the events.

Weights are converted to exact integers (floats are dyadic rationals), so
optima are computed without rounding. Among optimal matchings the one whose
sorted item list is lexicographically smallest is returned, items being
``(i, j)`` pairs with ``i < j`` and boundary matches ``(i, B)`` sorted after
all pairs of ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from adaptqec.blossom import max_weight_matching
from adaptqec.graph import DetectorId

DP_MAX_NODES = 8


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class MatchingProblem:
    nodes: tuple
    pair_weights: np.ndarray = field(repr=False)  # symmetric (n, n); inf = no edge
    boundary_weights: np.ndarray = field(repr=False)  # (n,); inf = no boundary match

    def __post_init__(self):
        n = len(self.nodes)
        pw = np.asarray(self.pair_weights, dtype=float).reshape(n, n)
        bw = np.asarray(self.boundary_weights, dtype=float).reshape(n)
        if not np.array_equal(pw, pw.T):
            raise MatchingError("pair weights must be symmetric")
        finite = np.concatenate([pw[np.isfinite(pw)], bw[np.isfinite(bw)]])
        if np.any(finite < 0) or np.any(np.isnan(pw)) or np.any(np.isnan(bw)):
            raise MatchingError("weights must be non-negative")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "pair_weights", pw)
        object.__setattr__(self, "boundary_weights", bw)

    @classmethod
    def from_functions(cls, nodes: Sequence[Hashable], pair_weight: Callable,
                       boundary_weight: Callable) -> "MatchingProblem":
        n = len(nodes)
        pw = np.full((n, n), np.inf)
        for i in range(n):
            for j in range(i + 1, n):
                pw[i, j] = pw[j, i] = pair_weight(nodes[i], nodes[j])
        bw = np.array([boundary_weight(u) for u in nodes], dtype=float)
        return cls(tuple(nodes), pw, bw)


@dataclass(frozen=True)
class Matching:
    pairs: frozenset  # frozenset of (u, v) tuples in node order
    to_boundary: frozenset
    total_weight: float

    @property
    def items(self) -> int:
        return len(self.pairs) + len(self.to_boundary)


@dataclass(frozen=True)
class CorrectionResult:
    predicted_logical: int
    matching: Matching


def _integer_costs(problem: MatchingProblem):
    """Exact integer costs with the lexicographic tie-break folded into the low bits.

    Returns ``(pair_cost, boundary_cost)`` as nested lists with ``None`` for
    missing edges.
    """
    n = len(problem.nodes)
    pw, bw = problem.pair_weights, problem.boundary_weights
    ratios = {}
    for w in np.concatenate([pw[np.triu_indices(n, 1)], bw]):
        if math.isfinite(w) and w not in ratios:
            ratios[w] = float(w).as_integer_ratio()
    denom = max((den for _, den in ratios.values()), default=1)
    as_int = {w: num * (denom // den) for w, (num, den) in ratios.items()}
    total_items = n * (n + 1) // 2
    pair_cost = [[None] * n for _ in range(n)]
    bnd_cost = [None] * n
    rank = 0
    for i in range(n):
        for j in range(i + 1, n):
            w = pw[i, j]
            if math.isfinite(w):
                c = (as_int[w] << total_items) - (1 << (total_items - 1 - rank))
                pair_cost[i][j] = pair_cost[j][i] = c
            rank += 1
        if math.isfinite(bw[i]):
            bnd_cost[i] = (as_int[bw[i]] << total_items) - (1 << (total_items - 1 - rank))
        rank += 1
    return pair_cost, bnd_cost


def _solve_dp(n, pair_cost, bnd_cost):
    """Exact subset dynamic programme; returns partner list (-1 = boundary) or None."""
    full = (1 << n) - 1
    best = {0: (0, None)}

    def solve(mask):
        if mask in best:
            return best[mask][0]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        choice, value = None, None
        if bnd_cost[i] is not None:
            sub = solve(rest)
            if sub is not None:
                value, choice = bnd_cost[i] + sub, -1
        j_bits = rest
        while j_bits:
            j = (j_bits & -j_bits).bit_length() - 1
            j_bits &= j_bits - 1
            c = pair_cost[i][j]
            if c is None:
                continue
            sub = solve(rest & ~(1 << j))
            if sub is not None and (value is None or c + sub < value):
                value, choice = c + sub, j
        best[mask] = (value, choice)
        return value

    if solve(full) is None:
        return None
    partner = [None] * n
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = best[mask][1]
        partner[i] = j
        mask &= ~(1 << i)
        if j >= 0:
            partner[j] = i
            mask &= ~(1 << j)
    return partner


def _solve_blossom(n, pair_cost, bnd_cost):
    costs = [c for row in pair_cost for c in row if c is not None]
    costs += [c for c in bnd_cost if c is not None]
    top = max(costs, default=0) + 1
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if pair_cost[i][j] is not None:
                edges.append((i, j, top - pair_cost[i][j]))
        if bnd_cost[i] is not None:
            edges.append((i, n + i, top - bnd_cost[i]))
    for i in range(n):
        for j in range(i + 1, n):
            edges.append((n + i, n + j, top))
    mate = max_weight_matching(edges, max_cardinality=True)
    mate += [-1] * (2 * n - len(mate))
    if any(m == -1 for m in mate):
        return None
    return [(-1 if mate[i] == n + i else mate[i]) for i in range(n)]


def min_weight_perfect_matching(problem: MatchingProblem, method: str = "auto") -> Matching:
    """Optimal pairing of ``problem.nodes`` (each node paired or sent to the boundary).

    ``method`` is ``"blossom"``, ``"dp"`` (exact subset recursion, small
    inputs) or ``"auto"``; all return the same matching.
    """
    n = len(problem.nodes)
    if n == 0:
        return Matching(frozenset(), frozenset(), 0.0)
    pair_cost, bnd_cost = _integer_costs(problem)
    if method == "auto":
        method = "dp" if n <= DP_MAX_NODES else "blossom"
    if method == "dp":
        partner = _solve_dp(n, pair_cost, bnd_cost)
    elif method == "blossom":
        partner = _solve_blossom(n, pair_cost, bnd_cost)
    else:
        raise ValueError(f"unknown method {method!r}")
    if partner is None:
        raise MatchingError("no perfect matching: some events cannot be paired or sent to the boundary")
    nodes = problem.nodes
    pairs, bnd, chosen = [], [], []
    for i, j in enumerate(partner):
        if j == -1:
            bnd.append(nodes[i])
            chosen.append(problem.boundary_weights[i])
        elif i < j:
            pairs.append((nodes[i], nodes[j]))
            chosen.append(problem.pair_weights[i, j])
    return Matching(frozenset(pairs), frozenset(bnd), math.fsum(chosen))


def match_indices(pair_weights: np.ndarray, boundary_weights: np.ndarray) -> list[int]:
    """Index-level matching used by the fast decoding path: partner per event, -1 = boundary."""
    n = len(boundary_weights)
    if n == 0:
        return []
    problem = MatchingProblem(tuple(range(n)), pair_weights, boundary_weights)
    pair_cost, bnd_cost = _integer_costs(problem)
    solve = _solve_dp if n <= DP_MAX_NODES else _solve_blossom
    partner = solve(n, pair_cost, bnd_cost)
    if partner is None:
        raise MatchingError("no perfect matching")
    return partner


def decode(record, weights, unreachable_weight: float | None = None) -> CorrectionResult:
    """Match the detection events of ``record`` and predict the logical flip.

    ``weights`` provides ``pair_weight``, ``boundary_weight``, ``pair_logical``
    and ``boundary_logical``. Infinite weights mean the match is impossible,
    unless ``unreachable_weight`` is given, in which case they are replaced
    by that finite penalty.
    """
    nodes = [DetectorId(a, t) for a, t in record.events()]
    problem = MatchingProblem.from_functions(nodes, weights.pair_weight, weights.boundary_weight)
    if unreachable_weight is not None:
        problem = MatchingProblem(
            problem.nodes,
            np.where(np.isinf(problem.pair_weights), unreachable_weight, problem.pair_weights),
            np.where(np.isinf(problem.boundary_weights), unreachable_weight, problem.boundary_weights),
        )
    matching = min_weight_perfect_matching(problem)
    parity = 0
    for u, v in matching.pairs:
        parity ^= weights.pair_logical(u, v)
    for u in matching.to_boundary:
        parity ^= weights.boundary_logical(u)
    return CorrectionResult(parity, matching)


def score(record, result: CorrectionResult) -> bool:
    return result.predicted_logical == record.true_logical
