"""Seeded random streams for the optimizers and the synthetic data.

The generator is SplitMix64 (Steele, Lea & Flood, 2014) in counter form:
the i-th output (i = 1, 2, ...) is ``mix(seed + i * 0x9E3779B97F4A7C15)``
modulo 2**64 with

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

Derived quantities, all fixed so other implementations can replay a run:

* uniform double: ``(z >> 11) * 2**-53`` in [0, 1)
* integer in [0, k): ``floor(u * k)``
* minibatch of size b from n: partial Fisher-Yates over a persistent pool
  (initially 0..n-1); step j swaps pool[j] with pool[j + floor(u*(n-j))],
  and the batch is pool[0:b] in that order
* weighted index: smallest i with ``u * sum(w) < cumsum(w)[i]``
* standard normal: Marsaglia polar method on pairs ``(2u1 - 1, 2u2 - 1)``;
  an accepted pair yields ``u*f`` then ``v*f``, the second is dropped if
  an odd count was requested
"""

from __future__ import annotations

import enum

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

_BLOCK = 1024


class SplitMix64:
    """Counter-based SplitMix64 stream with block buffering."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0  # number of outputs consumed
        self._buf: list = []
        self._buf_pos = 0

    def _raw(self, start: int, count: int) -> np.ndarray:
        """Outputs start+1 .. start+count as uint64."""
        i = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + i * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
        return z ^ (z >> np.uint64(31))

    def _take_uniforms(self, count: int) -> np.ndarray:
        z = self._raw(self.counter, count)
        self.counter += count
        return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def next_u64(self) -> int:
        self._flush_buffer()
        z = int(self._raw(self.counter, 1)[0])
        self.counter += 1
        return z

    def _flush_buffer(self) -> None:
        # Put back values that were buffered but never handed out.
        if self._buf_pos < len(self._buf):
            self.counter -= len(self._buf) - self._buf_pos
        self._buf = []
        self._buf_pos = 0

    def uniform(self) -> float:
        if self._buf_pos >= len(self._buf):
            self._buf = self._take_uniforms(_BLOCK).tolist()
            self._buf_pos = 0
        u = self._buf[self._buf_pos]
        self._buf_pos += 1
        return u

    def uniforms(self, count: int) -> np.ndarray:
        self._flush_buffer()
        return self._take_uniforms(count)

    def standard_normal(self, count: int) -> np.ndarray:
        self._flush_buffer()
        out = []
        have = 0
        while have < count:
            need_pairs = (count - have + 1) // 2
            chunk = max(16, int(need_pairs * 1.35) + 8)
            start = self.counter
            u = self._take_uniforms(2 * chunk).reshape(chunk, 2) * 2.0 - 1.0
            s = u[:, 0] ** 2 + u[:, 1] ** 2
            ok = (s > 0.0) & (s < 1.0)
            pos = np.flatnonzero(ok)
            if pos.size > need_pairs:
                pos = pos[:need_pairs]
                # rewind to just after the last pair used
                self.counter = start + 2 * (int(pos[-1]) + 1)
            acc = u[pos]
            ss = s[pos]
            f = np.sqrt(-2.0 * np.log(ss) / ss)
            z = (acc * f[:, None]).reshape(-1)
            out.append(z)
            have += z.size
        return np.concatenate(out)[:count] if out else np.zeros(0)


class Scheme(enum.Enum):
    UNIFORM_SUBSET = "uniform_subset"
    ROW_NORM_WEIGHTED = "row_norm_weighted"


class SamplerState:
    """RNG stream plus the minibatch pool it permutes in place."""

    def __init__(self, seed: int, scheme: Scheme = Scheme.UNIFORM_SUBSET):
        self.rng = SplitMix64(seed)
        self.scheme = Scheme(scheme)
        self._pool: list | None = None

    def _pool_for(self, n: int) -> list:
        if self._pool is None or len(self._pool) != n:
            self._pool = list(range(n))
        return self._pool


def sample_minibatch(state: SamplerState, n: int, b: int) -> np.ndarray:
    """b distinct indices, uniform over all b-subsets of range(n)."""
    if not 1 <= b <= n:
        raise ValueError(f"need 1 <= b <= n, got b={b}, n={n}")
    pool = state._pool_for(n)
    rng = state.rng
    for j in range(b):
        r = j + int(rng.uniform() * (n - j))
        pool[j], pool[r] = pool[r], pool[j]
    return np.array(pool[:b], dtype=np.int64)


def sample_index(state: SamplerState, k: int) -> int:
    """Uniform integer in [0, k)."""
    if k < 1:
        raise ValueError("k must be positive")
    return int(state.rng.uniform() * k)


def sample_weighted_row(state: SamplerState, weights) -> int:
    """Index i with probability w_i / sum(w)."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    cum = np.cumsum(w)
    total = cum[-1] if cum.size else 0.0
    if not total > 0:
        raise ValueError("weights are all zero")
    return _weighted_from_cumsum(state, cum)


def _weighted_from_cumsum(state: SamplerState, cum: np.ndarray) -> int:
    total = cum[-1]
    i = int(np.searchsorted(cum, state.rng.uniform() * total, side="right"))
    if i >= cum.size:
        # u * total rounded up to total; take the last positive-weight index
        i = int(np.searchsorted(cum, total, side="left"))
    return i
