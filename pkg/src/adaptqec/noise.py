"""Monte Carlo sampling of repetition-code syndromes under bit-flip noise.

Random numbers come from numpy's counter-based Philox generator. A trial is
keyed by its seed (an int, or a ``(master_seed, trial)`` pair); inside the
trial one uniform variate is drawn per edge of the detector error model, in
edge order, so edge ``k`` always consumes counter position ``k``. An edge is
on when its variate is below the edge probability.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO, Union

import numpy as np

from adaptqec.graph import DetectorErrorModel, build_repetition_dem

Seed = Union[int, Sequence[int]]


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    gamma0: float

    def __call__(self, t):
        return np.full(np.shape(t), self.gamma0, dtype=float) if np.ndim(t) else float(self.gamma0)


@dataclass(frozen=True)
class Sinusoid:
    """``gamma0 + amplitude * sin(omega * t + phase)``, ``omega`` in radians per cycle."""

    gamma0: float
    amplitude: float
    omega: float
    phase: float = 0.0

    def __call__(self, t):
        return self.gamma0 + self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-qubit flip rates. ``data[k-1]`` is data qubit k, ``ancilla[a-1]`` ancilla a."""

    d: int
    data: tuple = field(default=())
    ancilla: tuple = field(default=())

    def __post_init__(self):
        if len(self.data) != self.d or len(self.ancilla) != self.d - 1:
            raise NoiseError(f"distance {self.d} needs {self.d} data and {self.d - 1} ancilla rates")

    @classmethod
    def uniform(cls, d: int, gamma: float) -> "NoiseSchedule":
        rate = Constant(gamma)
        return cls(d, (rate,) * d, (rate,) * (d - 1))

    @classmethod
    def sinusoidal_ancillas(cls, d: int, gamma0: float, amplitude: float, omega: float,
                            phase: float = 0.0) -> "NoiseSchedule":
        return cls(d, (Constant(gamma0),) * d,
                   (Sinusoid(gamma0, amplitude, omega, phase),) * (d - 1))

    @property
    def rates(self) -> tuple:
        """Rate functions in table column order (data 1..d, ancilla 1..d-1)."""
        return tuple(self.data) + tuple(self.ancilla)

    def table(self, rounds: int, t_offset: int = 0) -> np.ndarray:
        """``(rounds, 2d-1)`` rate table for cycles ``t_offset .. t_offset+rounds-1``."""
        t = np.arange(t_offset, t_offset + rounds, dtype=float)
        table = np.column_stack([np.broadcast_to(f(t), t.shape) for f in self.rates])
        if np.any(table < 0) or np.any(table >= 0.5):
            bad = np.argwhere((table < 0) | (table >= 0.5))[0]
            raise NoiseError(
                f"rate {table[tuple(bad)]} of column {bad[1]} at t={t_offset + bad[0]} outside [0, 1/2)"
            )
        return table


def gamma_at(schedule: NoiseSchedule, qubit: int, t) -> float:
    """Rate of table column ``qubit`` (data qubits first, then ancillas) at cycle ``t``."""
    rates = schedule.rates
    if not 0 <= qubit < len(rates):
        raise NoiseError(f"qubit column {qubit} out of range for d={schedule.d}")
    return float(rates[qubit](t))


def true_probabilities(schedule: NoiseSchedule, rounds: int, lag: int = 1,
                       t_offset: int = 0) -> DetectorErrorModel:
    """The detector error model the sampler draws from (edge p equals qubit rate)."""
    return build_repetition_dem(schedule.d, rounds, lag, schedule.table(rounds, t_offset))


@dataclass(frozen=True)
class SyndromeRecord:
    d: int
    rounds: int
    lag: int
    bits: np.ndarray = field(repr=False)
    true_logical: int
    trial_seed: object = None
    t_offset: int = 0

    def events(self) -> list[tuple[int, int]]:
        """Detection events as ``(ancilla, round)`` pairs in (round, ancilla) order."""
        rounds, ancillas = np.nonzero(self.bits)
        return [(int(a), int(t)) for t, a in zip(rounds, ancillas)]


def trial_generator(seed: Seed) -> np.random.Generator:
    entropy = [int(seed)] if np.ndim(seed) == 0 else [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def sample_flips(schedule: NoiseSchedule, rounds: int, lag: int, seed: Seed,
                 t_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample which qubits flip in each cycle.

    Returns ``(data, ancilla)`` boolean arrays of shapes ``(rounds, d)`` and
    ``(rounds, d-1)``. Ancilla flips in the last ``lag`` rounds are always
    off (noiseless closing readout). Variates are consumed in the edge order
    of ``build_repetition_dem``.
    """
    if rounds < 1:
        raise NoiseError("rounds must be >= 1")
    return flips_from_table(schedule.table(rounds, t_offset), lag, seed)


def flips_from_table(table: np.ndarray, lag: int, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    """``sample_flips`` with a precomputed ``(rounds, 2d-1)`` rate table."""
    rounds, cols = table.shape
    d = (cols + 1) // 2
    bulk = max(rounds - lag, 0)
    tail = rounds - bulk
    u = trial_generator(seed).random(bulk * (2 * d - 1) + tail * d)
    data = np.empty((rounds, d), dtype=bool)
    anc = np.zeros((rounds, d - 1), dtype=bool)
    head = u[: bulk * (2 * d - 1)].reshape(bulk, 2 * d - 1)
    data[:bulk] = head[:, :d] < table[:bulk, :d]
    anc[:bulk] = head[:, d:] < table[:bulk, d:]
    data[bulk:] = u[bulk * (2 * d - 1):].reshape(tail, d) < table[bulk:, :d]
    return data, anc


def syndrome_from_flips(data: np.ndarray, anc: np.ndarray, lag: int) -> np.ndarray:
    """Detection events ``(..., rounds, d-1)`` produced by the given flips."""
    bits = data[..., :-1] ^ data[..., 1:] ^ anc
    bits[..., lag:, :] ^= anc[..., :-lag, :]
    return bits.astype(np.uint8)


def sample_trial(schedule: NoiseSchedule, rounds: int, lag: int = 1, seed: Seed = 0,
                 t_offset: int = 0) -> SyndromeRecord:
    """Sample one syndrome history of ``rounds`` cycles starting at cycle ``t_offset``.

    Identical to sampling every edge of ``true_probabilities(...)`` with one
    uniform variate each, but vectorised over the repetition-code layout.
    """
    data, anc = sample_flips(schedule, rounds, lag, seed, t_offset)
    bits = syndrome_from_flips(data, anc, lag)
    logical = int(np.bitwise_xor.reduce(data[:, 0].astype(np.uint8)))
    return SyndromeRecord(schedule.d, rounds, lag, bits, logical, seed, t_offset)


def sample_edges(model: DetectorErrorModel, seed: Seed) -> np.ndarray:
    """Generic per-edge Bernoulli sampling of any detector error model."""
    _, _, p, _ = model.edge_arrays()
    return (trial_generator(seed).random(len(p)) < p).astype(np.uint8)


# -- text format -------------------------------------------------------------

_SYNDROME_HEADER = re.compile(
    r"#\s*syndrome\s+d=(\d+)\s+rounds=(\d+)\s+lag=(\d+)\s+seed=(\S+)\s+logical=([01])"
)


def _format_seed(seed) -> str:
    return str(int(seed)) if np.ndim(seed) == 0 else ",".join(str(int(s)) for s in seed)


def write_syndrome(record: SyndromeRecord, stream: TextIO) -> None:
    stream.write(
        f"# syndrome d={record.d} rounds={record.rounds} lag={record.lag} "
        f"seed={_format_seed(record.trial_seed)} logical={record.true_logical}\n"
    )
    for t, row in enumerate(record.bits):
        stream.write(f"{t} " + " ".join(str(int(b)) for b in row) + "\n")


def read_syndrome(lines: Iterable[str]) -> SyndromeRecord:
    header = None
    rows = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _SYNDROME_HEADER.match(line)
            if m:
                header = m.groups()
            continue
        parts = line.split()
        if int(parts[0]) != len(rows):
            raise NoiseError(f"line {lineno}: rounds must be listed in order")
        rows.append([int(b) for b in parts[1:]])
    if header is None:
        raise NoiseError("missing '# syndrome ...' header")
    d, rounds, lag = (int(x) for x in header[:3])
    seed = tuple(int(s) for s in header[3].split(",")) if "," in header[3] else int(header[3])
    bits = np.array(rows, dtype=np.uint8).reshape(len(rows), d - 1)
    if bits.shape[0] != rounds or np.any(bits > 1):
        raise NoiseError("syndrome body does not match header")
    return SyndromeRecord(d, rounds, lag, bits, int(header[4]), seed)


def expected_event_density(gamma: float, degree: int = 4) -> float:
    """Firing probability of a detector with ``degree`` incident edges of rate ``gamma``."""
    return 0.5 * (1.0 - (1.0 - 2.0 * gamma) ** degree)


def omega_from_period(period: float) -> float:
    return 2.0 * math.pi / period
