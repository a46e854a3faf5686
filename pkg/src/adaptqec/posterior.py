"""Exact posterior of the logical flip given a repetition-code syndrome.

Per round the noise flips data qubits ``x`` (``d`` bits) and ancilla
outcomes ``m`` (``d - 1`` bits), and the detection events are

    s(t) = H x(t) + m(t) + m(t - L)      (mod 2)

with ``H x`` the parities of neighbouring data qubits. Given the ancilla
flips, ``H x(t)`` is fixed and exactly two data patterns produce it: one
with qubit 1 unflipped and its complement. A forward pass over rounds with
state ``(m(t-L+1), ..., m(t), logical parity)`` therefore gives the exact
probability that the data flips of qubit 1 have odd total parity.

Used to score decoders by their expected success on a sampled syndrome,
which has far lower variance than scoring against the sampled truth.
"""

from __future__ import annotations

import numpy as np

MAX_STATE_BITS = 12


class PosteriorError(ValueError):
    pass


def _codes(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis of a 0/1 array into integers (bit i = column i)."""
    k = bits.shape[-1]
    return (bits.astype(np.int64) << np.arange(k)).sum(axis=-1)


def _round_tables(rates: np.ndarray, d: int):
    """Per-round probabilities: ancilla pattern ``P(m = a)`` and, for each
    required parity pattern ``c``, the two data solutions ``P(x_c)``, ``P(~x_c)``."""
    k = d - 1
    gd, ga = rates[:, :d], rates[:, d:]
    a_bits = (np.arange(2 ** k)[:, None] >> np.arange(k)) & 1  # (2^k, k)
    pa = np.prod(np.where(a_bits[None], ga[:, None, :], 1 - ga[:, None, :]), axis=2)
    # x_c has x_1 = 0 and x_{i+1} = x_i + c_i
    x = np.zeros((2 ** k, d), dtype=np.int64)
    x[:, 1:] = np.cumsum(a_bits, axis=1) & 1
    p0 = np.prod(np.where(x[None], gd[:, None, :], 1 - gd[:, None, :]), axis=2)
    p1 = np.prod(np.where(1 - x[None], gd[:, None, :], 1 - gd[:, None, :]), axis=2)
    return pa, p0, p1


class _Forward:
    def __init__(self, d: int, lag: int, trials: int):
        self.k, self.lag = d - 1, lag
        if self.k * lag + 1 > MAX_STATE_BITS:
            raise PosteriorError(f"state space too large for d={d}, lag={lag}")
        self.nh = 2 ** (self.k * lag)
        self.alpha = np.zeros((trials, self.nh, 2))
        self.alpha[:, 0, 0] = 1.0
        # history index h = (m(t-L+1), ..., m(t)) with the oldest in the high bits
        self.oldest = np.arange(self.nh) >> (self.k * (lag - 1))

    def step(self, alpha, code, pa, p0, p1):
        """One round: ``code`` (trials,) syndrome codes; ``pa`` (2^k,), ``p0``/``p1`` (2^k,)."""
        k = self.k
        a = np.arange(2 ** k)
        c = code[:, None, None] ^ a[None, :, None] ^ self.oldest[None, None, :]  # (T, A, H)
        q0, q1 = p0[c], p1[c]
        even = alpha[:, None, :, 0] * q0 + alpha[:, None, :, 1] * q1
        odd = alpha[:, None, :, 1] * q0 + alpha[:, None, :, 0] * q1
        nn = 2 ** (k * (self.lag - 1))
        out = np.zeros_like(alpha)
        # new history = (newer << k) | a, summing over the dropped oldest entry
        for par, term in ((0, even), (1, odd)):
            acc = term.reshape(alpha.shape[0], 2 ** k, 2 ** k, nn).sum(axis=2)
            acc *= pa[None, :, None]
            out[:, :, par] = acc.transpose(0, 2, 1).reshape(alpha.shape[0], -1)
        total = out.sum(axis=(1, 2), keepdims=True)
        return out / np.where(total > 0, total, 1.0)


def logical_posterior(rates: np.ndarray, lag: int, full_bits: np.ndarray,
                      checkpoints, closing_bits) -> np.ndarray:
    """Probability that the logical flipped, for each trial and checkpoint.

    ``rates`` is the (rounds, 2d-1) per-round table (data columns first),
    ``full_bits`` the (trials, rounds, d-1) syndromes of the untruncated
    runs. ``closing_bits[c]`` holds the (trials, lag, d-1) final rows of the
    run truncated at ``checkpoints[c]``, whose closing ``lag`` rounds have
    noiseless ancilla readout. Returns an array (trials, len(checkpoints)).
    """
    trials, rounds, k = full_bits.shape
    d = k + 1
    pa, p0, p1 = _round_tables(np.asarray(rates, dtype=float), d)
    quiet = np.zeros(2 ** k)
    quiet[0] = 1.0
    codes = _codes(full_bits)
    fwd = _Forward(d, lag, trials)
    alpha = fwd.alpha
    out = np.zeros((trials, len(checkpoints)))
    order = sorted(range(len(checkpoints)), key=lambda c: checkpoints[c])
    t = 0
    for c in order:
        stop = checkpoints[c] - lag
        if stop < 0:
            raise PosteriorError("checkpoints must be at least the lag")
        while t < stop:
            alpha = fwd.step(alpha, codes[:, t], pa[t], p0[t], p1[t])
            t += 1
        closing = _codes(np.asarray(closing_bits[c]))
        a = alpha
        for j in range(lag):
            a = fwd.step(a, closing[:, j], quiet, p0[stop + j], p1[stop + j])
        norm = a.sum(axis=(1, 2))
        if np.any(norm <= 0):
            raise PosteriorError("syndrome has zero probability under the noise model")
        out[:, c] = a[:, :, 1].sum(axis=1) / norm
    return out
