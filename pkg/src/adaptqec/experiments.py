"""Training/testing protocols for the adaptive decoder.

A *test set* is a fixed collection of sampled trials. For every trial and
every checkpoint ``t`` the syndrome of the first ``t`` rounds (closed by a
noiseless readout) is decoded and compared with the true logical flip. The
success fraction ``F(t)`` is fitted to ``1/2 + 1/2 (1 - 2 eps)^t``.

All decoders compared in one experiment see the same test sets, so the
differences between them are not swamped by test-set sampling noise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from adaptqec.estimator import (
    MomentAccumulator,
    estimate_all,
    rates_to_classes,
)
from adaptqec.graph import build_repetition_dem
from adaptqec.matching import match_indices
from adaptqec.posterior import logical_posterior
from adaptqec.noise import (
    Constant,
    NoiseSchedule,
    Sinusoid,
    flips_from_table,
    sample_flips,
    syndrome_from_flips,
)
from adaptqec.weights import DIJKSTRA, EXACT, StationaryWeights

# seed-stream tags
_TRAIN, _TEST, _STREAM = 1, 2, 3

DEFAULT_CHECKPOINTS = tuple(range(10, 101, 10))
UNREACHABLE_WEIGHT = 1e4


class ExperimentError(RuntimeError):
    pass


# -- configuration -------------------------------------------------------------


@dataclass
class ExperimentConfig:
    d: int = 3
    lag: int = 1
    rounds_test: int = 100
    schedule: dict = field(default_factory=lambda: {"type": "constant", "gamma0": 0.005})
    n_train: list = field(default_factory=lambda: [100, 316, 1000, 3162, 10000, 31623])
    window: list = field(default_factory=lambda: [500, 2000, 16000])
    repetitions: int = 400
    trials: int = 2000
    z: float = 0.0
    backend: str = EXACT
    seed: int = 0
    checkpoints: list | None = None  # default: ten evenly spaced cycles up to rounds_test
    eval_points: int = 20
    unreachable_weight: float = UNREACHABLE_WEIGHT

    def __post_init__(self):
        if isinstance(self.n_train, int):
            self.n_train = [self.n_train]
        if isinstance(self.window, int):
            self.window = [self.window]
        for name in ("d", "rounds_test", "repetitions", "trials", "eval_points"):
            if getattr(self, name) < 1:
                raise ExperimentError(f"{name} must be positive")
        if any(n < 1 for n in self.n_train) or any(w <= self.lag for w in self.window):
            raise ExperimentError("training lengths must be positive and windows exceed the lag")
        if self.backend not in (EXACT, DIJKSTRA):
            raise ExperimentError(f"backend must be '{EXACT}' or '{DIJKSTRA}'")
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.rounds_test, self.lag)
        self.checkpoints = sorted(set(int(c) for c in self.checkpoints))
        if not self.checkpoints or self.checkpoints[0] < self.lag or self.checkpoints[-1] > self.rounds_test:
            raise ExperimentError("checkpoints must lie between the lag and rounds_test")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def build_schedule(self) -> NoiseSchedule:
        return schedule_from_spec(self.d, self.schedule)


def default_checkpoints(rounds: int, lag: int = 1) -> list[int]:
    """Ten evenly spaced cycles ending at ``rounds`` (10, 20, ..., 100 for 100 rounds)."""
    return sorted({max(lag, round(rounds * k / 10)) for k in range(1, 11)})


def schedule_from_spec(d: int, spec: Mapping) -> NoiseSchedule:
    """``{type: constant|sinusoid, gamma0, amplitude, omega, phase, targets: ancilla|data|all}``."""
    kind = spec.get("type", "constant")
    gamma0 = float(spec["gamma0"])
    base = Constant(gamma0)
    if kind == "constant":
        return NoiseSchedule(d, (base,) * d, (base,) * (d - 1))
    if kind != "sinusoid":
        raise ExperimentError(f"unknown schedule type {kind!r}")
    wave = Sinusoid(gamma0, float(spec.get("amplitude", gamma0)), float(spec["omega"]),
                    float(spec.get("phase", 0.0)))
    targets = spec.get("targets", "ancilla")
    data = wave if targets in ("data", "all") else base
    anc = wave if targets in ("ancilla", "all") else base
    return NoiseSchedule(d, (data,) * d, (anc,) * (d - 1))


# -- test sets -----------------------------------------------------------------


@dataclass
class TestSet:
    """Deduplicated checkpoint syndromes of ``trials`` sampled test runs.

    ``patterns`` maps a translation-normalised event tuple ``((a, r), ...)``
    to a float array ``counts[c, v]``: the number of runs showing that
    pattern at checkpoint ``c`` whose logical flip is ``v``. With
    ``posterior=True`` each run contributes its exact conditional
    probabilities ``(1 - q, q)`` instead of its sampled truth, which leaves
    every success rate unbiased and removes the noise from near-tied
    syndromes.
    """

    checkpoints: tuple
    trials: int
    patterns: dict

    __test__ = False


def checkpoint_syndromes(data: np.ndarray, anc: np.ndarray, lag: int, checkpoints):
    """Yield ``(c, bits, truth)`` for the run truncated after each checkpoint.

    The truncated run keeps the same qubit flips, with ancilla flips in its
    final ``lag`` rounds removed (noiseless closing readout).
    """
    full = syndrome_from_flips(data, anc, lag)
    truth_running = np.cumsum(data[:, 0].astype(np.int64)) & 1
    for c, t in enumerate(checkpoints):
        bits = full[:t].copy()
        lo = max(t - lag, 0)
        bits[lo:t] ^= anc[lo:t].astype(np.uint8)
        yield c, bits, int(truth_running[t - 1])


def _normalise(bits: np.ndarray) -> tuple:
    rounds, ancillas = np.nonzero(bits)
    if len(rounds) == 0:
        return ()
    r0 = rounds[0]
    return tuple(zip(ancillas.tolist(), (rounds - r0).tolist()))


def _batch_patterns(bits: np.ndarray) -> list[tuple]:
    """Translation-normalised event tuples for a (trials, rounds, d-1) batch."""
    trial, rounds, ancillas = np.nonzero(bits)
    bounds = np.searchsorted(trial, np.arange(bits.shape[0] + 1))
    anc_l, rnd_l = ancillas.tolist(), rounds.tolist()
    out = []
    for lo, hi in zip(bounds[:-1].tolist(), bounds[1:].tolist()):
        if lo == hi:
            out.append(())
            continue
        r0 = rnd_l[lo]
        out.append(tuple(zip(anc_l[lo:hi], [r - r0 for r in rnd_l[lo:hi]])))
    return out


def build_test_set(schedule: NoiseSchedule, lag: int, rounds: int, trials: int, seed,
                   checkpoints=DEFAULT_CHECKPOINTS, t_offset: int = 0,
                   posterior: bool = True) -> TestSet:
    checkpoints = tuple(checkpoints)
    if min(checkpoints) < lag or max(checkpoints) > rounds:
        raise ExperimentError("checkpoints must lie in [lag, rounds]")
    seed = tuple(np.atleast_1d(seed).tolist())
    table = schedule.table(rounds, t_offset)
    flips = [flips_from_table(table, lag, seed + (k,)) for k in range(trials)]
    data = np.stack([f[0] for f in flips])
    anc = np.stack([f[1] for f in flips])
    full = syndrome_from_flips(data, anc, lag)
    truncated = []
    for t in checkpoints:
        bits = full[:, :t].copy()
        bits[:, t - lag:t] ^= anc[:, t - lag:t].astype(np.uint8)
        truncated.append(bits)
    if posterior:
        closing = [bits[:, t - lag:t] for bits, t in zip(truncated, checkpoints)]
        q = logical_posterior(table, lag, full, checkpoints, closing)
    else:
        truth = np.cumsum(data[:, :, 0], axis=1) & 1
        q = truth[:, [t - 1 for t in checkpoints]].astype(float)
    patterns: dict = {}
    n_c = len(checkpoints)
    for c, bits in enumerate(truncated):
        for k, key in enumerate(_batch_patterns(bits)):
            counts = patterns.get(key)
            if counts is None:
                counts = patterns[key] = np.zeros((n_c, 2))
            counts[c, 0] += 1.0 - q[k, c]
            counts[c, 1] += q[k, c]
    return TestSet(checkpoints, trials, patterns)


# -- decoding ------------------------------------------------------------------


def _components(pw: np.ndarray, bw: np.ndarray) -> list[list[int]]:
    """Groups of events that can be matched independently.

    Pairing ``i`` with ``j`` when ``w_ij`` exceeds ``b_i + b_j`` is never
    optimal (two boundary matches are cheaper), so only the remaining pairs
    link events. A small tolerance keeps borderline pairs linked, which is
    always safe.
    """
    n = len(bw)
    slack = bw[:, None] + bw[None, :]
    linked = pw <= slack + 1e-9 * np.maximum(slack, 1.0)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(*np.nonzero(np.triu(linked, 1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _solve_component(idx, pw, ppar, bw, bpar) -> int:
    if len(idx) == 1:
        return int(bpar[idx[0]])
    if len(idx) == 2:
        i, j = idx
        # ties go to the pair, which sorts before the boundary match
        if math.fsum((pw[i, j], -bw[i], -bw[j])) <= 0:
            return int(ppar[i, j])
        return int(bpar[i]) ^ int(bpar[j])
    sub = np.ix_(idx, idx)
    partner = match_indices(pw[sub], bw[idx])
    parity = 0
    for k, m in enumerate(partner):
        if m == -1:
            parity ^= int(bpar[idx[k]])
        elif k < m:
            parity ^= int(ppar[idx[k], idx[m]])
    return parity


def _solve_chunk(chunk: tuple, weights: StationaryWeights, unreachable_weight: float) -> int:
    ev = np.array(chunk, dtype=np.int64)
    pw, ppar, bw, bpar = weights.matrices(ev[:, 0], ev[:, 1])
    pw = np.where(np.isinf(pw), unreachable_weight, pw)
    np.fill_diagonal(pw, np.inf)
    bw = np.where(np.isinf(bw), unreachable_weight, bw)
    parity = 0
    for idx in _components(pw, bw):
        parity ^= _solve_component(idx, pw, ppar, bw, bpar)
    return parity


def link_range(weights: StationaryWeights, unreachable_weight: float = UNREACHABLE_WEIGHT) -> int:
    """Largest round separation at which pairing two events can beat
    sending both to the boundary. Events further apart never interact."""
    pt = np.where(np.isinf(weights.pair_table), unreachable_weight, weights.pair_table)
    bw = np.where(np.isinf(weights.boundary_table), unreachable_weight, weights.boundary_table)
    slack = (bw[:, None] + bw[None, :])[:, :, None]
    linked = pt <= slack + 1e-9 * np.maximum(slack, 1.0)
    dts = np.nonzero(linked.any(axis=(0, 1)))[0]
    return int(dts.max()) if len(dts) else 0


def _chunks(pattern: tuple, gap: int):
    """Split a round-sorted pattern where consecutive rounds differ by more than ``gap``;
    each chunk is translated to start at round 0."""
    start = 0
    for k in range(1, len(pattern) + 1):
        if k == len(pattern) or pattern[k][1] - pattern[k - 1][1] > gap:
            r0 = pattern[start][1]
            yield tuple((a, r - r0) for a, r in pattern[start:k])
            start = k


def predict_pattern(pattern: tuple, weights: StationaryWeights,
                    unreachable_weight: float = UNREACHABLE_WEIGHT,
                    cache: dict | None = None, gap: int | None = None) -> int:
    """Predicted logical flip for one round-sorted event pattern ``((ancilla, round), ...)``.

    Equivalent to a single minimum-weight matching of all events. The
    pattern is cut into chunks that cannot interact (see ``link_range``)
    and chunk results are memoised in ``cache``, which is only valid for
    one ``weights`` object and ``unreachable_weight``.
    """
    if not pattern:
        return 0
    if gap is None:
        gap = link_range(weights, unreachable_weight)
    parity = 0
    for chunk in _chunks(pattern, gap):
        if cache is None:
            parity ^= _solve_chunk(chunk, weights, unreachable_weight)
            continue
        hit = cache.get(chunk)
        if hit is None:
            hit = cache[chunk] = _solve_chunk(chunk, weights, unreachable_weight)
        parity ^= hit
    return parity


@dataclass(frozen=True)
class FidelityCurve:
    checkpoints: tuple
    fidelity: tuple
    epsilon: float
    residual: float


def fit_fidelity(checkpoints: Sequence[int], fidelity: Sequence[float]) -> FidelityCurve:
    """Least-squares fit of ``ln(2F - 1) = t ln(1 - 2 eps)`` through the origin."""
    t = np.asarray(checkpoints, dtype=float)
    f = np.asarray(fidelity, dtype=float)
    keep = f > 0.5
    if not np.any(keep):
        raise ExperimentError("decoder at chance level: every F(t) <= 1/2")
    y = np.log(2.0 * f[keep] - 1.0)
    x = t[keep]
    slope = float(x @ y / (x @ x))
    eps = 0.5 * (1.0 - math.exp(slope))
    resid = float(np.sqrt(np.mean((y - slope * x) ** 2)))
    return FidelityCurve(tuple(checkpoints), tuple(float(v) for v in f), eps, resid)


def logical_error_rate(weights: StationaryWeights, test_set: TestSet,
                       unreachable_weight: float = UNREACHABLE_WEIGHT) -> FidelityCurve:
    """Logical error probability per cycle of the decoder ``weights`` on ``test_set``."""
    success = np.zeros(len(test_set.checkpoints))
    cache: dict = {}
    gap = link_range(weights, unreachable_weight)
    for pattern, counts in test_set.patterns.items():
        pred = predict_pattern(pattern, weights, unreachable_weight, cache, gap)
        success += counts[:, pred]
    return fit_fidelity(test_set.checkpoints, success / test_set.trials)


def relative_error(eps_adaptive: float, eps_0: float) -> float:
    if eps_0 <= 0:
        raise ExperimentError("reference error rate must be positive")
    return eps_adaptive / eps_0 - 1.0


# -- training ------------------------------------------------------------------


def topology(d: int, lag: int):
    return build_repetition_dem(d, 2 * lag + 2, lag)


def train_weights(bits: np.ndarray, d: int, lag: int, span: int, backend: str,
                  z: float = 2.0):
    """Estimate class probabilities from syndrome rows and build decoder weights."""
    acc = MomentAccumulator(d, lag).add(bits)
    estimates = estimate_all(acc, topology(d, lag), z)
    probs = {k: e.p_hat for k, e in estimates.items()}
    return StationaryWeights(probs, d, lag, span, backend), estimates


def oracle_weights(schedule: NoiseSchedule, t: int, lag: int, span: int, backend: str):
    rates = schedule.table(1, t)[0]
    return StationaryWeights(rates_to_classes(schedule.d, rates), schedule.d, lag, span, backend)


# -- experiments ---------------------------------------------------------------


def power_law_exponent(ns: Sequence[float], deltas: Sequence[float]) -> float:
    """``alpha`` of ``delta ~ N^-alpha`` by log-log regression over positive deltas."""
    pts = [(math.log(n), math.log(dv)) for n, dv in zip(ns, deltas) if dv > 0]
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    return float(-np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceResult:
    rows: list  # (N, delta_mean, delta_stderr)
    alpha: float
    eps_0: float
    clamped_fraction: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["N", "delta_mean", "delta_stderr", "alpha_fit"])
        for n, mean, se in self.rows:
            w.writerow([n, f"{mean:.10g}", f"{se:.10g}", f"{self.alpha:.10g}"])
        return out.getvalue()


def exp_convergence(config: ExperimentConfig, use_true_probabilities: bool = False,
                    progress=None) -> ConvergenceResult:
    """Relative decoder error against training length ``N``."""
    schedule = config.build_schedule()
    d, lag, span = config.d, config.lag, config.rounds_test
    test = build_test_set(schedule, lag, span, config.trials, (config.seed, _TEST),
                          config.checkpoints)
    ideal = oracle_weights(schedule, 0, lag, span, config.backend)
    eps_0 = logical_error_rate(ideal, test, config.unreachable_weight).epsilon
    rows, clamped = [], {}
    for n in config.n_train:
        deltas, n_clamped = [], 0
        for rep in range(config.repetitions):
            if use_true_probabilities:
                weights = ideal
            else:
                data, anc = sample_flips(schedule, n, lag, (config.seed, _TRAIN, n, rep))
                weights, est = train_weights(syndrome_from_flips(data, anc, lag), d, lag,
                                             span, config.backend, config.z)
                n_clamped += sum(e.clamped for e in est.values())
            eps = logical_error_rate(weights, test, config.unreachable_weight).epsilon
            deltas.append(relative_error(eps, eps_0))
            if progress:
                progress(n, rep)
        deltas = np.array(deltas)
        se = float(deltas.std(ddof=1) / math.sqrt(len(deltas))) if len(deltas) > 1 else math.nan
        rows.append((n, float(deltas.mean()), se))
        clamped[n] = n_clamped
    alpha = power_law_exponent([r[0] for r in rows], [r[1] for r in rows])
    return ConvergenceResult(rows, alpha, eps_0, clamped)


@dataclass
class FluctuationResult:
    windows: tuple
    rows: list  # (t, eps per window..., eps_oracle)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t"] + [f"eps_window_{win}" for win in self.windows] + ["eps_oracle"])
        for t, *vals in self.rows:
            w.writerow([t] + [f"{v:.10g}" for v in vals])
        return out.getvalue()

    def time_average(self) -> dict:
        cols = np.array([r[1:] for r in self.rows], dtype=float)
        names = list(self.windows) + ["oracle"]
        return {k: float(v) for k, v in zip(names, cols.mean(axis=0))}


def refresh_time(t: int, window: int) -> int:
    """Latest weight refresh at or before ``t``; refreshes happen every ``window // 4`` cycles."""
    step = max(window // 4, 1)
    return (t // step) * step


def evaluation_times(config: ExperimentConfig, period: int) -> list[int]:
    """``eval_points`` times spread over one period, starting once every window
    has had a refresh with a full window of history behind it."""
    warm = 0
    for win in config.window:
        step = max(win // 4, 1)
        warm = max(warm, -(-win // step) * step)
    return [warm + (k * period) // config.eval_points for k in range(config.eval_points)]


def _schedule_period(config: ExperimentConfig) -> int:
    omega = float(config.schedule.get("omega", 0.0))
    if config.schedule.get("type") != "sinusoid" or omega <= 0:
        raise ExperimentError("fluctuation experiment needs a sinusoid schedule with omega > 0")
    return int(round(2 * math.pi / omega))


def exp_fluctuation(config: ExperimentConfig, progress=None) -> FluctuationResult:
    """Logical error rate over one noise period for sliding-window decoders.

    Each training stage is an independent syndrome stream starting at
    ``t = 0``. At evaluation time ``t`` a window-``W`` decoder uses the
    weights of its latest refresh ``r <= t``, estimated from rounds
    ``[r - W, r)``. Every decoder at ``t`` is scored on the same test set,
    and the oracle uses the true rates at the middle of the test run.
    """
    schedule = config.build_schedule()
    d, lag, span = config.d, config.lag, config.rounds_test
    period = _schedule_period(config)
    times = evaluation_times(config, period)
    windows = tuple(config.window)
    stream_len = max(times) + 1
    tests = [build_test_set(schedule, lag, span, config.trials, (config.seed, _TEST, k),
                            config.checkpoints, t)
             for k, t in enumerate(times)]
    oracle = [logical_error_rate(oracle_weights(schedule, t + span // 2, lag, span, config.backend),
                                 test, config.unreachable_weight).epsilon
              for t, test in zip(times, tests)]
    sums = np.zeros((len(times), len(windows)))
    for stage in range(config.repetitions):
        data, anc = sample_flips(schedule, stream_len, lag, (config.seed, _STREAM, stage))
        bits = syndrome_from_flips(data, anc, lag)
        for k, t in enumerate(times):
            for j, win in enumerate(windows):
                r = refresh_time(t, win)
                weights, _ = train_weights(bits[r - win:r], d, lag, span, config.backend, config.z)
                sums[k, j] += logical_error_rate(weights, tests[k], config.unreachable_weight).epsilon
        if progress:
            progress(stage)
    means = sums / config.repetitions
    rows = [(t, *means[k].tolist(), oracle[k]) for k, t in enumerate(times)]
    return FluctuationResult(windows, rows)
