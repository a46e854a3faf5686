"""Edge-probability estimation from detection-event correlators.

Moments are pooled per time-translation class of edges: ``("space", a)``
for the edge between ancillas ``a`` and ``a+1`` in one round, ``("time", a)``
for ancilla ``a`` in rounds ``t`` and ``t+lag``, ``("boundary", a)`` for the
boundary edge of ancilla ``a``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from adaptqec.graph import BOUNDARY_KIND, SPACE, TIME, DetectorErrorModel, DetectorId

DEGENERATE_TOL = 1e-6
_BELOW_HALF = math.nextafter(0.5, 0.0)

ClassKey = tuple  # (kind, ancilla)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeEstimate:
    p_hat: float
    std_err: float
    clamped: bool = False
    n_samples: int = 0


def class_key(edge) -> ClassKey:
    if edge.kind == BOUNDARY_KIND:
        return (BOUNDARY_KIND, edge.u.ancilla)
    if edge.kind == SPACE:
        return (SPACE, min(edge.u.ancilla, edge.v.ancilla))
    return (TIME, edge.u.ancilla)


def uncertainty(p: float, n: int) -> float:
    """Binomial standard error of a rate ``p`` estimated from ``n`` samples."""
    if not 0.0 <= p <= 1.0 or n < 1:
        raise EstimationError(f"need 0 <= p <= 1 and n >= 1, got p={p}, n={n}")
    return math.sqrt(p * (1.0 - p) / n)


def n_min(p_bar: float) -> int:
    """Fewest cycles giving a meaningful estimate of rates near ``p_bar``."""
    if not 0.0 < p_bar < 0.5:
        raise EstimationError(f"p_bar must lie in (0, 1/2), got {p_bar}")
    return math.ceil(1.0 / p_bar - 1e-9)


def n_opt(p_bar: float, omega: float) -> int:
    """Window length (cycles) balancing sampling noise against drift at frequency ``omega``."""
    if not 0.0 < p_bar < 0.5 or omega <= 0:
        raise EstimationError(f"need 0 < p_bar < 1/2 and omega > 0, got {p_bar}, {omega}")
    return round((p_bar * omega**2) ** (-1.0 / 3.0))


def omega_c(p_bar: float) -> float:
    """Highest drift frequency (radians per cycle) the estimator can follow."""
    if not 0.0 < p_bar < 0.5:
        raise EstimationError(f"p_bar must lie in (0, 1/2), got {p_bar}")
    return p_bar


def _stderr(p: float, n) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n else math.inf


def pair_probability(mean_i: float, mean_j: float, mean_ij: float,
                     n: int | None = None) -> EdgeEstimate:
    """Probability of the edge joining two detectors, from their first and joint moments."""
    for m in (mean_i, mean_j, mean_ij):
        if not 0.0 <= m <= 1.0:
            raise EstimationError(f"moments must lie in [0, 1], got {m}")
    if mean_ij > min(mean_i, mean_j) + 1e-15:
        raise EstimationError("joint moment exceeds a marginal")
    xor_mean = mean_i + mean_j - 2.0 * mean_ij
    denom = 1.0 - 2.0 * xor_mean
    if abs(denom) < DEGENERATE_TOL:
        raise EstimationError(f"degenerate denominator 1 - 2<v_i xor v_j> = {denom:g}")
    cov = mean_ij - mean_i * mean_j
    ratio = cov / denom
    if cov < 0 or ratio < 0:
        return EdgeEstimate(0.0, _stderr(0.0, n), True, n or 0)
    if ratio >= 0.25:
        return EdgeEstimate(_BELOW_HALF, _stderr(0.5, n), True, n or 0)
    # root of p(1-p) = ratio below 1/2, written without cancellation
    p = ratio / (0.5 + math.sqrt(0.25 - ratio))
    return EdgeEstimate(p, _stderr(p, n), False, n or 0)


def boundary_probability(mean_i: float, neighbor_ps: Sequence[float],
                         n: int | None = None) -> EdgeEstimate:
    """Probability of a detector's boundary edge given its other incident edges."""
    if not 0.0 <= mean_i <= 1.0:
        raise EstimationError(f"mean must lie in [0, 1], got {mean_i}")
    prod = 1.0
    for q in neighbor_ps:
        if not 0.0 <= q < 0.5:
            raise EstimationError(f"neighbour probability {q} outside [0, 1/2)")
        prod *= 1.0 - 2.0 * q
    if prod < DEGENERATE_TOL:
        raise EstimationError(f"degenerate neighbour product {prod:g}")
    p = 0.5 + (mean_i - 0.5) / prod
    if p < 0.0:
        return EdgeEstimate(0.0, _stderr(0.0, n), True, n or 0)
    if p >= 0.5:
        return EdgeEstimate(_BELOW_HALF, _stderr(0.5, n), True, n or 0)
    return EdgeEstimate(p, _stderr(p, n), False, n or 0)


def covariance_stderr(mean_i: float, mean_j: float, mean_ij: float, n: int) -> float:
    """Sampling standard error of the empirical covariance of two 0/1 variables."""
    cells = {
        (1, 1): mean_ij,
        (1, 0): mean_i - mean_ij,
        (0, 1): mean_j - mean_ij,
        (0, 0): 1.0 - mean_i - mean_j + mean_ij,
    }
    cov = mean_ij - mean_i * mean_j
    fourth = sum(w * (x - mean_i) ** 2 * (y - mean_j) ** 2 for (x, y), w in cells.items())
    return math.sqrt(max(fourth - cov * cov, 0.0) / n)


def _block_sums(block: np.ndarray, lo: int, hi: int, lag: int, pair_hi: int | None = None):
    """Integer sums over rows ``[lo, hi)`` and over time pairs whose earlier row is in
    ``[lo, pair_hi)`` (default ``hi``) and whose later row lies inside ``block``."""
    rows = block[lo:hi]
    sv = rows.sum(axis=0, dtype=np.int64)
    ss = (rows[:, :-1] & rows[:, 1:]).sum(axis=0, dtype=np.int64)
    phi = min(hi if pair_hi is None else pair_hi, len(block) - lag)
    plo = max(lo, 0)
    if phi > plo:
        first = block[plo:phi]
        second = block[plo + lag:phi + lag]
        tp = (first & second).sum(axis=0, dtype=np.int64)
        tf = first.sum(axis=0, dtype=np.int64)
        ts = second.sum(axis=0, dtype=np.int64)
        npairs = phi - plo
    else:
        tp = tf = ts = np.zeros(block.shape[1], dtype=np.int64)
        npairs = 0
    return hi - lo, sv, ss, tp, tf, ts, npairs


class MomentAccumulator:
    """Streaming first/second moments of detection events, optionally over a sliding window.

    With ``window=N`` only the most recent ``N`` rounds contribute; a time
    pair counts while both of its rounds are inside the window.
    """

    def __init__(self, d: int, lag: int = 1, window: int | None = None):
        if d < 2 or lag < 1:
            raise EstimationError("need d >= 2 and lag >= 1")
        if window is not None and window <= lag:
            raise EstimationError(f"window must exceed the lag ({lag})")
        self.d = d
        self.lag = lag
        self.window = window
        k = d - 1
        self.n = 0
        self.n_pairs = 0
        self.sum_v = np.zeros(k, dtype=np.int64)
        self.sum_space = np.zeros(max(k - 1, 0), dtype=np.int64)
        self.sum_time = np.zeros(k, dtype=np.int64)
        self.time_first = np.zeros(k, dtype=np.int64)
        self.time_second = np.zeros(k, dtype=np.int64)
        self.next_round: int | None = None
        self._buf = np.zeros((0, k), dtype=np.uint8)

    def copy(self) -> "MomentAccumulator":
        other = MomentAccumulator(self.d, self.lag, self.window)
        for name in ("n", "n_pairs", "next_round"):
            setattr(other, name, getattr(self, name))
        for name in ("sum_v", "sum_space", "sum_time", "time_first", "time_second", "_buf"):
            setattr(other, name, getattr(self, name).copy())
        return other

    def counts(self) -> tuple:
        return (self.n, self.n_pairs, tuple(self.sum_v), tuple(self.sum_space),
                tuple(self.sum_time), tuple(self.time_first), tuple(self.time_second))

    def _apply(self, sums, sign: int) -> None:
        nrows, sv, ss, tp, tf, ts, npairs = sums
        self.n += sign * nrows
        self.sum_v += sign * sv
        self.sum_space += sign * ss
        self.sum_time += sign * tp
        self.time_first += sign * tf
        self.time_second += sign * ts
        self.n_pairs += sign * npairs

    def add(self, rows, start: int | None = None) -> "MomentAccumulator":
        """Ingest consecutive syndrome rounds (``(m, d-1)`` array) beginning at round ``start``."""
        rows = np.asarray(rows, dtype=np.uint8)
        if rows.ndim == 1:
            rows = rows.reshape(0 if rows.size == 0 else 1, -1)
        if rows.size == 0:
            return self
        if rows.shape[1] != self.d - 1 or np.any(rows > 1):
            raise EstimationError(f"rows must be 0/1 with {self.d - 1} columns")
        if self.next_round is None:
            start = 0 if start is None else start
            self._buf = self._buf[:0]
        elif start is not None and start != self.next_round:
            raise EstimationError(
                f"rows must be contiguous: expected round {self.next_round}, got {start}"
            )
        else:
            start = self.next_round
        old = len(self._buf)
        full = np.concatenate([self._buf, rows]) if old else rows
        # rows appended, plus pairs whose later round is new
        added = _block_sums(full, old, len(full), self.lag)
        pair_lo = max(old - self.lag, 0)
        if pair_lo < old:
            extra = _block_sums(full, pair_lo, pair_lo, self.lag, pair_hi=old)
            added = (added[0], added[1], added[2], added[3] + extra[3],
                     added[4] + extra[4], added[5] + extra[5], added[6] + extra[6])
        self._apply(added, +1)
        if self.window is None:
            self._buf = full[-self.lag:].copy()
        else:
            drop = max(len(full) - self.window, 0)
            if drop:
                self._apply(_block_sums(full, 0, drop, self.lag), -1)
            self._buf = full[drop:].copy()
        self.next_round = start + len(rows)
        return self

    # moments per class -------------------------------------------------------

    def detector_mean(self, a: int) -> float:
        return self.sum_v[a] / self.n

    def space_moments(self, a: int) -> tuple[float, float, float, int]:
        n = self.n
        return self.sum_v[a] / n, self.sum_v[a + 1] / n, self.sum_space[a] / n, n

    def time_moments(self, a: int) -> tuple[float, float, float, int]:
        n = self.n_pairs
        return self.time_first[a] / n, self.time_second[a] / n, self.sum_time[a] / n, n


def accumulate(acc: MomentAccumulator, rows, start: int | None = None) -> MomentAccumulator:
    return acc.add(rows, start)


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Pool two accumulators fed from independent segments (e.g. separate trials)."""
    if (a.d, a.lag) != (b.d, b.lag):
        raise EstimationError("cannot merge accumulators of different shape")
    if a.window is not None or b.window is not None:
        raise EstimationError("sliding-window accumulators cannot be merged")
    out = MomentAccumulator(a.d, a.lag)
    for name in ("n", "n_pairs"):
        setattr(out, name, getattr(a, name) + getattr(b, name))
    for name in ("sum_v", "sum_space", "sum_time", "time_first", "time_second"):
        setattr(out, name, getattr(a, name) + getattr(b, name))
    return out


def topology_classes(model: DetectorErrorModel) -> tuple[list[ClassKey], dict]:
    """Edge classes present in ``model`` and, per boundary class, the classes of the
    other edges incident on a bulk detector of that ancilla."""
    keys = sorted({class_key(e) for e in model.edges}, key=_class_order)
    mid = model.rounds // 2
    neighbours = {}
    for kind, a in keys:
        if kind != BOUNDARY_KIND:
            continue
        incident = model.adjacency[DetectorId(a, mid)]
        neighbours[(kind, a)] = [
            class_key(model.edges[i]) for i in incident if not model.edges[i].is_boundary
        ]
    return keys, neighbours


def _class_order(key: ClassKey):
    return ((SPACE, TIME, BOUNDARY_KIND).index(key[0]), key[1])


def estimate_all(acc: MomentAccumulator, model_topology: DetectorErrorModel,
                 z: float = 2.0) -> dict[ClassKey, EdgeEstimate]:
    """Estimate every edge class of ``model_topology`` from pooled moments.

    Pair classes come first; an estimate whose covariance is within ``z``
    standard errors of zero is forced to 0 (``clamped``). Boundary classes
    then use the pair results for the neighbouring edges.
    """
    if model_topology.lag != acc.lag or model_topology.d != acc.d:
        raise EstimationError("accumulator and topology disagree on d or lag")
    keys, neighbours = topology_classes(model_topology)
    out: dict[ClassKey, EdgeEstimate] = {}
    for key in keys:
        kind, a = key
        if kind == BOUNDARY_KIND:
            continue
        mi, mj, mij, n = acc.space_moments(a) if kind == SPACE else acc.time_moments(a)
        if n < 2:
            raise EstimationError(f"class {key} has only {n} samples")
        est = pair_probability(mi, mj, mij, n)
        cov = mij - mi * mj
        if not est.clamped and cov <= z * covariance_stderr(mi, mj, mij, n):
            est = EdgeEstimate(0.0, _stderr(0.0, n), True, n)
        out[key] = est
    for key in keys:
        if key[0] != BOUNDARY_KIND:
            continue
        if acc.n < 2:
            raise EstimationError(f"class {key} has only {acc.n} samples")
        ps = [out[k].p_hat for k in neighbours[key]]
        out[key] = boundary_probability(acc.detector_mean(key[1]), ps, acc.n)
    return out


def estimates_to_json(estimates: Mapping[ClassKey, EdgeEstimate]) -> str:
    rows = []
    for (kind, a), est in sorted(estimates.items(), key=lambda kv: _class_order(kv[0])):
        rows.append({"kind": kind, "ancilla": a, "p_hat": est.p_hat,
                     "std_err": est.std_err if math.isfinite(est.std_err) else None,
                     "clamped": est.clamped, "n": est.n_samples})
    return json.dumps(rows, indent=1)


def estimates_from_json(text: str) -> dict[ClassKey, EdgeEstimate]:
    out = {}
    for row in json.loads(text):
        se = math.inf if row["std_err"] is None else row["std_err"]
        out[(row["kind"], row["ancilla"])] = EdgeEstimate(row["p_hat"], se, row["clamped"], row["n"])
    return out


def class_probabilities(estimates: Mapping[ClassKey, EdgeEstimate]) -> dict[ClassKey, float]:
    return {k: e.p_hat for k, e in estimates.items()}


def rates_to_classes(d: int, rates: Sequence[float]) -> dict[ClassKey, float]:
    """Map one row of per-qubit rates (data 1..d, ancilla 1..d-1) onto edge classes."""
    if len(rates) != 2 * d - 1:
        raise EstimationError(f"expected {2 * d - 1} rates, got {len(rates)}")
    out = {(BOUNDARY_KIND, 0): float(rates[0]), (BOUNDARY_KIND, d - 2): float(rates[d - 1])}
    for k in range(2, d):
        out[(SPACE, k - 2)] = float(rates[k - 1])
    for a in range(d - 1):
        out[(TIME, a)] = float(rates[d + a])
    return out


def classes_to_rates(d: int, probs: Mapping[ClassKey, float]) -> list[float]:
    """Inverse of :func:`rates_to_classes`; missing classes count as 0."""
    rates = [probs.get((BOUNDARY_KIND, 0), 0.0)]
    rates += [probs.get((SPACE, k - 2), 0.0) for k in range(2, d)]
    rates.append(probs.get((BOUNDARY_KIND, d - 2), 0.0))
    rates += [probs.get((TIME, a), 0.0) for a in range(d - 1)]
    return rates
