"""Matching weights from edge probabilities.

Two backends:

* ``exact``: the weight of a detector pair is minus the log of the summed
  probability of every error chain joining them, obtained in closed form
  from ``(1 - A)^{-1}`` with ``A`` the off-diagonal edge-probability matrix.
  A boundary weight additionally terminates the chain on a boundary edge.
* ``dijkstra``: only the most probable chain is kept, i.e. shortest paths
  with additive cost ``-ln p`` per edge.

The logical parity attached to a match always comes from the most
probable chain.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from adaptqec.graph import (
    BOUNDARY,
    DetectorErrorModel,
    DetectorId,
    build_repetition_dem,
)

EXACT = "exact"
DIJKSTRA = "dijkstra"
BACKENDS = (EXACT, DIJKSTRA)
DEFAULT_CAP = 4096
DEFAULT_MARGIN = 5


class WeightError(ValueError):
    pass


def _neg_log(x):
    with np.errstate(divide="ignore"):
        return -np.log(x)


@dataclass(frozen=True)
class ShortestPaths:
    """Single-source result: costs to every detector and to the boundary."""

    source: DetectorId
    dist: np.ndarray  # per detector index, inf if unreachable
    parity: np.ndarray  # logical parity of the chosen path
    boundary_dist: float
    boundary_parity: int
    boundary_path: tuple = ()


def _dijkstra(model: DetectorErrorModel, source: DetectorId, need_path: bool = False) -> ShortestPaths:
    n = model.n_detectors
    dist = np.full(n, np.inf)
    parity = np.zeros(n, dtype=np.uint8)
    prev_edge = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    s = model.index(source)
    dist[s] = 0.0
    # ties resolve by (round, ancilla) through the detector index
    heap = [(0.0, s)]
    best_b, best_b_par, best_b_edge = math.inf, 0, -1
    edges = model.edges
    cost = [(-math.log(e.probability) if e.probability > 0 else math.inf) for e in edges]
    while heap:
        du, ui = heapq.heappop(heap)
        if done[ui]:
            continue
        done[ui] = True
        for ei in model.adjacency[model.node(ui)]:
            c = cost[ei]
            if c == math.inf:
                continue
            e = edges[ei]
            nd = du + c
            par = parity[ui] ^ e.logical_crossing
            if e.is_boundary:
                if nd < best_b:
                    best_b, best_b_par, best_b_edge = nd, par, ei
                continue
            vi = model.index(e.v if model.index(e.u) == ui else e.u)
            if nd < dist[vi]:
                dist[vi] = nd
                parity[vi] = par
                prev_edge[vi] = ei
                heapq.heappush(heap, (nd, vi))
    path = ()
    if need_path and best_b_edge >= 0:
        chain = [best_b_edge]
        node = model.index(edges[best_b_edge].u)
        while node != s:
            ei = int(prev_edge[node])
            chain.append(ei)
            e = edges[ei]
            node = model.index(e.u) if model.index(e.v) == node else model.index(e.v)
        path = tuple(reversed(chain))
    return ShortestPaths(source, dist, parity, best_b, int(best_b_par), path)


@dataclass(frozen=True)
class WeightTable:
    """Weights from each source detector to every detector of ``model`` and to the boundary."""

    model: DetectorErrorModel = field(repr=False)
    sources: tuple
    pair: np.ndarray = field(repr=False)  # (len(sources), n_detectors)
    pair_parity: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)  # (len(sources),)
    boundary_parity: np.ndarray = field(repr=False)
    backend: str = DIJKSTRA
    _rows: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._rows.update({s: i for i, s in enumerate(self.sources)})

    def _lookup(self, u: DetectorId, v: DetectorId):
        if u in self._rows:
            return self._rows[u], self.model.index(v)
        if v in self._rows:
            return self._rows[v], self.model.index(u)
        raise WeightError(f"no weights for pair {u}, {v}")

    def pair_weight(self, u: DetectorId, v: DetectorId) -> float:
        r, c = self._lookup(u, v)
        return float(self.pair[r, c])

    def pair_logical(self, u: DetectorId, v: DetectorId) -> int:
        r, c = self._lookup(u, v)
        return int(self.pair_parity[r, c])

    def boundary_weight(self, u: DetectorId) -> float:
        if u not in self._rows:
            raise WeightError(f"no boundary weight for {u}")
        return float(self.boundary[self._rows[u]])

    def boundary_logical(self, u: DetectorId) -> int:
        return int(self.boundary_parity[self._rows[u]])


def _restrict(model: DetectorErrorModel, block) -> DetectorErrorModel:
    if block is None:
        return model
    r0, r1 = block
    if not 0 <= r0 < r1 <= model.rounds:
        raise WeightError(f"block {block} outside rounds [0, {model.rounds})")
    edges = []
    for e in model.edges:
        if all(r0 <= node.round < r1 for node in e.endpoints()):
            u = DetectorId(e.u.ancilla, e.u.round - r0)
            v = BOUNDARY if e.is_boundary else DetectorId(e.v.ancilla, e.v.round - r0)
            edges.append(type(e)(u, v, e.probability, e.kind, e.logical_crossing))
    return DetectorErrorModel(model.d, r1 - r0, model.lag, tuple(edges))


def interior_matrix(model: DetectorErrorModel) -> tuple[np.ndarray, np.ndarray]:
    """``(A, b)``: symmetric off-diagonal edge probabilities and per-detector boundary probability."""
    n = model.n_detectors
    a = np.zeros((n, n))
    b = np.zeros(n)
    for e in model.edges:
        i = model.index(e.u)
        if e.is_boundary:
            b[i] += e.probability
        else:
            j = model.index(e.v)
            a[i, j] += e.probability
            a[j, i] += e.probability
    return a, b


def _check_convergent(a: np.ndarray) -> None:
    if a.size == 0 or a.sum(axis=1).max() < 1.0:
        return
    radius = np.abs(np.linalg.eigvalsh(a)).max()
    if radius >= 1.0:
        raise WeightError(f"chain sum diverges: spectral radius {radius:.4f} >= 1")


def _resolve_sources(model, sources) -> tuple:
    if sources is None:
        return tuple(model.detectors())
    sources = tuple(DetectorId(*s) for s in sources)
    for s in sources:
        if s not in model.adjacency:
            raise WeightError(f"source {s} is not a detector of the model")
    return sources


def weights_shortest_path(model: DetectorErrorModel, sources=None) -> WeightTable:
    """Most-probable-chain weights from each source (default: every detector)."""
    sources = _resolve_sources(model, sources)
    n = model.n_detectors
    pair = np.full((len(sources), n), np.inf)
    ppar = np.zeros((len(sources), n), dtype=np.uint8)
    bnd = np.full(len(sources), np.inf)
    bpar = np.zeros(len(sources), dtype=np.uint8)
    for r, s in enumerate(sources):
        sp = _dijkstra(model, s)
        pair[r] = sp.dist
        ppar[r] = sp.parity
        bnd[r] = sp.boundary_dist
        bpar[r] = sp.boundary_parity
    return WeightTable(model, sources, pair, ppar, bnd, bpar, DIJKSTRA)


def weights_exact(model: DetectorErrorModel, block=None, sources=None,
                  cap: int = DEFAULT_CAP) -> WeightTable:
    """All-chain weights by dense inversion over the rounds ``block`` (default: all)."""
    sub = _restrict(model, block)
    if sub.n_detectors > cap:
        raise WeightError(f"{sub.n_detectors} detectors exceed the dense cap {cap}")
    sources = _resolve_sources(sub, sources)
    a, b = interior_matrix(sub)
    _check_convergent(a)
    n = sub.n_detectors
    rows = np.array([sub.index(s) for s in sources], dtype=np.int64)
    rhs = np.zeros((n, len(rows)))
    rhs[rows, np.arange(len(rows))] = 1.0
    try:
        green = np.linalg.solve(np.eye(n) - a, rhs).T  # rows of (1-A)^-1, symmetric
    except np.linalg.LinAlgError as exc:
        raise WeightError("singular chain matrix") from exc
    chain = green.copy()
    chain[np.arange(len(rows)), rows] = 0.0
    pair = _neg_log(np.clip(chain, 0.0, None))
    pair[np.arange(len(rows)), rows] = 0.0
    bnd = _neg_log(np.clip(green @ b, 0.0, None))
    dominant = weights_shortest_path(sub, sources)
    return WeightTable(sub, sources, pair, dominant.pair_parity, bnd,
                       dominant.boundary_parity, EXACT)


def _walk_sums(model: DetectorErrorModel, u: DetectorId, tol: float, max_len: int):
    a, b = interior_matrix(model)
    x = np.zeros(model.n_detectors)
    x[model.index(u)] = 1.0
    total = x.copy()
    for _ in range(max_len):
        x = x @ a
        total += x
        if x.sum() < tol:
            return total, b
    raise WeightError("walk series did not converge")


def path_sum_bruteforce(model: DetectorErrorModel, u: DetectorId, v=BOUNDARY,
                        cap: int = 12, tol: float = 1e-15, simple: bool = False,
                        max_len: int = 100_000) -> float:
    """Total probability of error chains from ``u`` to ``v`` (or to the boundary).

    By default every walk (consecutive detectors distinct) is summed, grown
    one step at a time until the remaining terms fall below ``tol``. With
    ``simple=True`` only self-avoiding paths are enumerated explicitly.
    """
    if model.n_detectors > cap:
        raise WeightError(f"brute force limited to {cap} detectors")
    if simple:
        return _simple_path_sum(model, u, v)
    total, b = _walk_sums(model, u, tol, max_len)
    if v is BOUNDARY:
        return float(total @ b)
    if v == u:
        raise WeightError("pair endpoints must differ")
    return float(total[model.index(v)])


def _simple_path_sum(model: DetectorErrorModel, u: DetectorId, v) -> float:
    a, b = interior_matrix(model)
    start = model.index(u)
    target = None if v is BOUNDARY else model.index(v)
    n = model.n_detectors
    total = 0.0

    def walk(node, weight, visited):
        nonlocal total
        if target is None:
            total += weight * b[node]
        elif node == target:
            total += weight
            return
        for nxt in range(n):
            if a[node, nxt] > 0 and not visited & (1 << nxt):
                walk(nxt, weight * a[node, nxt], visited | (1 << nxt))

    walk(start, 1.0, 1 << start)
    return total


# -- translation-invariant tables ----------------------------------------------


def pooled_model(class_probs: Mapping, d: int, rounds: int, lag: int = 1) -> DetectorErrorModel:
    """Repetition DEM whose every edge carries the probability of its class."""
    from adaptqec.estimator import classes_to_rates

    return build_repetition_dem(d, rounds, lag, classes_to_rates(d, class_probs))


class StationaryWeights:
    """Weights for a DEM whose edge probabilities do not depend on the round.

    Pair weights depend only on the two ancillas and the round difference,
    boundary weights only on the ancilla. Values are read from a block of
    ``2 * (span + margin) + 1`` rounds around its central round, so that
    truncation of the block does not affect them.
    """

    def __init__(self, class_probs: Mapping, d: int, lag: int = 1, span: int = 100,
                 backend: str = DIJKSTRA, margin: int = DEFAULT_MARGIN):
        if backend not in BACKENDS:
            raise WeightError(f"unknown backend {backend!r}")
        self.d, self.lag, self.span, self.backend = d, lag, span, backend
        self.class_probs = dict(class_probs)
        rounds = 2 * (span + margin) + 1
        centre = span + margin
        block = pooled_model(class_probs, d, rounds, lag)
        sources = [DetectorId(a, centre) for a in range(d - 1)]
        table = (weights_exact(block, sources=sources) if backend == EXACT
                 else weights_shortest_path(block, sources))
        k = d - 1
        cols = np.array([[block.index(DetectorId(b, centre + dt)) for dt in range(span + 1)]
                         for b in range(k)])
        self.pair_table = table.pair[:, cols]  # [a, b, dt]
        self.parity_table = table.pair_parity[:, cols]
        # same-round entries appear twice; keep the a < b copy so lookups are symmetric
        low = np.tril_indices(k, -1)
        for t in (self.pair_table, self.parity_table):
            t[low[0], low[1], 0] = t[low[1], low[0], 0]
        self.boundary_table = np.array(table.boundary, dtype=float)
        self.boundary_parity_table = np.array(table.boundary_parity, dtype=np.uint8)

    def _cell(self, u, v):
        dt = v[1] - u[1]
        if dt < 0:
            u, v, dt = v, u, -dt
        if dt > self.span:
            raise WeightError(f"round separation {dt} exceeds table span {self.span}")
        return u[0], v[0], dt

    def pair_weight(self, u, v) -> float:
        return float(self.pair_table[self._cell(u, v)])

    def pair_logical(self, u, v) -> int:
        return int(self.parity_table[self._cell(u, v)])

    def boundary_weight(self, u) -> float:
        return float(self.boundary_table[u[0]])

    def boundary_logical(self, u) -> int:
        return int(self.boundary_parity_table[u[0]])

    def matrices(self, ancillas: np.ndarray, rounds: np.ndarray):
        """Vectorised lookup for a list of events: pair weights, pair parities,
        boundary weights and boundary parities."""
        dt = rounds[None, :] - rounds[:, None]
        lo = np.where(dt >= 0, ancillas[:, None], ancillas[None, :])
        hi = np.where(dt >= 0, ancillas[None, :], ancillas[:, None])
        adt = np.abs(dt)
        if adt.size and adt.max() > self.span:
            raise WeightError(f"round separation {adt.max()} exceeds table span {self.span}")
        return (self.pair_table[lo, hi, adt], self.parity_table[lo, hi, adt],
                self.boundary_table[ancillas], self.boundary_parity_table[ancillas])
