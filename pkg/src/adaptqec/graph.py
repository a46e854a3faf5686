"""Space-time detector graph of the repetition code.

Detectors are indexed by ``(ancilla, round)``. Each edge of the graph is an
independent error mechanism that toggles its (one or two) endpoint
detectors; the boundary is a single shared pseudo-endpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, TextIO, Union

import numpy as np

SPACE = "space"
TIME = "time"
BOUNDARY_KIND = "boundary"
EDGE_KINDS = (SPACE, TIME, BOUNDARY_KIND)


class DetectorId(NamedTuple):
    ancilla: int
    round: int


class _Boundary:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOUNDARY"

    def __reduce__(self):
        return (_Boundary, ())


BOUNDARY = _Boundary()

Endpoint = Union[DetectorId, _Boundary]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeSpec:
    """One error mechanism. ``v`` is ``BOUNDARY`` for boundary edges."""

    u: Endpoint
    v: Endpoint
    probability: float
    kind: str
    logical_crossing: int = 0

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise GraphError(f"unknown edge kind {self.kind!r}")
        if not 0.0 <= self.probability < 0.5:
            raise GraphError(f"edge probability {self.probability} outside [0, 1/2)")
        if self.u is BOUNDARY and self.v is BOUNDARY:
            raise GraphError("an edge has at most one boundary endpoint")
        if self.u is BOUNDARY:
            # canonical form keeps the detector first
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)
        if (self.v is BOUNDARY) != (self.kind == BOUNDARY_KIND):
            raise GraphError("boundary edges must have exactly one boundary endpoint")

    @property
    def is_boundary(self) -> bool:
        return self.v is BOUNDARY

    def endpoints(self) -> tuple[DetectorId, ...]:
        return (self.u,) if self.is_boundary else (self.u, self.v)


@dataclass(frozen=True)
class DetectorErrorModel:
    """Catalog of independent edges over the ``(d-1) x rounds`` detector grid."""

    d: int
    rounds: int
    lag: int
    edges: tuple[EdgeSpec, ...]
    adjacency: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 2 or self.rounds < 1 or self.lag < 1:
            raise GraphError("need d >= 2, rounds >= 1, lag >= 1")
        object.__setattr__(self, "edges", tuple(self.edges))
        adjacency = {
            DetectorId(a, t): [] for t in range(self.rounds) for a in range(self.d - 1)
        }
        seen = set()
        for index, edge in enumerate(self.edges):
            for node in edge.endpoints():
                if node not in adjacency:
                    raise GraphError(f"edge {index} touches unknown detector {node}")
                adjacency[node].append(index)
            key = (edge.u, edge.v, edge.kind)
            if edge.v is not BOUNDARY and (edge.v, edge.u, edge.kind) in seen:
                key = (edge.v, edge.u, edge.kind)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(
            self, "adjacency", {k: tuple(v) for k, v in adjacency.items()}
        )

    @property
    def n_ancillas(self) -> int:
        return self.d - 1

    @property
    def n_detectors(self) -> int:
        return (self.d - 1) * self.rounds

    def detectors(self) -> list[DetectorId]:
        """All detectors in (round, ancilla) order."""
        return [DetectorId(a, t) for t in range(self.rounds) for a in range(self.d - 1)]

    def index(self, node: DetectorId) -> int:
        return node.round * (self.d - 1) + node.ancilla

    def node(self, index: int) -> DetectorId:
        t, a = divmod(index, self.d - 1)
        return DetectorId(a, t)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(u_index, v_index, probability, logical)``; ``v_index`` is -1 at the boundary."""
        u = np.array([self.index(e.u) for e in self.edges], dtype=np.int64)
        v = np.array(
            [-1 if e.is_boundary else self.index(e.v) for e in self.edges], dtype=np.int64
        )
        p = np.array([e.probability for e in self.edges], dtype=float)
        logical = np.array([e.logical_crossing for e in self.edges], dtype=np.uint8)
        return u, v, p, logical

    def with_probabilities(self, probabilities: Sequence[float]) -> "DetectorErrorModel":
        if len(probabilities) != len(self.edges):
            raise GraphError("probability vector length does not match edge count")
        edges = [
            EdgeSpec(e.u, e.v, float(p), e.kind, e.logical_crossing)
            for e, p in zip(self.edges, probabilities)
        ]
        return DetectorErrorModel(self.d, self.rounds, self.lag, tuple(edges))


def _rate_table(gammas, d: int, rounds: int) -> np.ndarray:
    width = 2 * d - 1
    table = np.asarray(gammas, dtype=float)
    if table.ndim == 0:
        table = np.full((rounds, width), float(table))
    elif table.ndim == 1:
        if table.shape[0] != width:
            raise GraphError(f"per-qubit rates need {width} entries (d data + d-1 ancilla)")
        table = np.broadcast_to(table, (rounds, width))
    if table.shape != (rounds, width):
        raise GraphError(f"rate table must have shape ({rounds}, {width}), got {table.shape}")
    if np.any(table < 0) or np.any(table >= 0.5) or not np.all(np.isfinite(table)):
        raise GraphError("all probabilities must lie in [0, 1/2)")
    return table


def build_repetition_dem(d: int, rounds: int, lag: int = 1, gammas=0.0) -> DetectorErrorModel:
    """Phenomenological bit-flip detector error model of a distance-``d`` repetition code.

    ``gammas`` is a scalar, a length ``2d-1`` vector or a ``(rounds, 2d-1)``
    table. Columns ``0..d-1`` are the data qubits ``1..d`` and columns
    ``d..2d-2`` the ancillas ``1..d-1``.

    Edges are emitted round by round: data qubit 1 (left boundary, flips
    the logical observable), interior data qubits as space edges, data
    qubit ``d`` (right boundary), then one time edge per ancilla joining
    ``(a, t)`` and ``(a, t + lag)``. Time edges leaving the window are
    dropped, i.e. the last ``lag`` rounds are read out noiselessly.
    """
    if d < 3 or d % 2 == 0:
        raise GraphError(f"distance must be odd and >= 3, got {d}")
    if rounds < 1:
        raise GraphError("rounds must be >= 1")
    if lag not in (1, 2):
        raise GraphError("lag must be 1 or 2")
    table = _rate_table(gammas, d, rounds)
    edges = []
    for t in range(rounds):
        row = table[t]
        edges.append(EdgeSpec(DetectorId(0, t), BOUNDARY, float(row[0]), BOUNDARY_KIND, 1))
        for k in range(2, d):
            edges.append(
                EdgeSpec(DetectorId(k - 2, t), DetectorId(k - 1, t), float(row[k - 1]), SPACE)
            )
        edges.append(EdgeSpec(DetectorId(d - 2, t), BOUNDARY, float(row[d - 1]), BOUNDARY_KIND))
        if t + lag < rounds:
            for a in range(d - 1):
                edges.append(
                    EdgeSpec(DetectorId(a, t), DetectorId(a, t + lag), float(row[d + a]), TIME)
                )
    return DetectorErrorModel(d, rounds, lag, tuple(edges))


def _check_samples(model: DetectorErrorModel, samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.uint8)
    if samples.shape != (len(model.edges),):
        raise GraphError(
            f"expected {len(model.edges)} edge samples, got shape {samples.shape}"
        )
    return samples


def evaluate_detectors(model: DetectorErrorModel, samples) -> np.ndarray:
    """Detection events as a ``(rounds, d-1)`` 0/1 array.

    A detector fires iff an odd number of its incident edges is on.
    """
    samples = _check_samples(model, samples)
    u, v, _, _ = model.edge_arrays()
    flat = np.zeros(model.n_detectors, dtype=np.uint8)
    on = samples.astype(bool)
    np.bitwise_xor.at(flat, u[on], 1)
    interior = v[on]
    np.bitwise_xor.at(flat, interior[interior >= 0], 1)
    return flat.reshape(model.rounds, model.d - 1)


def logical_parity(model: DetectorErrorModel, samples) -> int:
    samples = _check_samples(model, samples)
    _, _, _, logical = model.edge_arrays()
    return int(np.bitwise_xor.reduce(samples & logical)) if len(samples) else 0


# -- text format -------------------------------------------------------------

_DEM_HEADER = re.compile(r"#\s*dem\s+d=(\d+)\s+rounds=(\d+)\s+lag=(\d+)")


def write_dem(model: DetectorErrorModel, stream: TextIO) -> None:
    stream.write(f"# dem d={model.d} rounds={model.rounds} lag={model.lag}\n")
    for e in model.edges:
        v = "B B" if e.is_boundary else f"{e.v.ancilla} {e.v.round}"
        stream.write(
            f"{e.kind} {e.u.ancilla} {e.u.round} {v} {e.probability!r} {e.logical_crossing}\n"
        )


def read_dem(lines: Iterable[str]) -> DetectorErrorModel:
    header = None
    edges = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _DEM_HEADER.match(line)
            if m:
                header = tuple(int(x) for x in m.groups())
            continue
        parts = line.split()
        if len(parts) != 7:
            raise GraphError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        kind, ua, ut, va, vt, p, logical = parts
        u = DetectorId(int(ua), int(ut))
        v = BOUNDARY if va == "B" else DetectorId(int(va), int(vt))
        edges.append(EdgeSpec(u, v, float(p), kind, int(logical)))
    if header is None:
        raise GraphError("missing '# dem d=.. rounds=.. lag=..' header")
    d, rounds, lag = header
    return DetectorErrorModel(d, rounds, lag, tuple(edges))
