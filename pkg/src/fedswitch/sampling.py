"""Deterministic keyed randomness.

Every random draw in a run is made from a stream addressed by
(run_seed, round, client, step, purpose). Streams are realized with the
Philox counter-based generator keyed directly by the packed address, so
the same key yields the same stream on every platform and process, and
distinct keys yield independent streams. There is no shared sequential
generator state anywhere.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from fedswitch.softmax import ClientMask

SERVER = -1     # client sentinel for server-side draws
NO_STEP = -1    # step sentinel for draws not tied to a local step

# step tags multiplexing the INIT purpose
INIT_MODEL = 0
INIT_SPLIT = 1
INIT_PARTITION = 2
INIT_SYNTH = 3

_ROUND_BITS = 24
_STEP_BITS = 16
_CLIENT_BITS = 20
_PURPOSE_BITS = 4
_U64 = 0xFFFFFFFFFFFFFFFF


class Purpose(IntEnum):
    SUBSET = 1
    VALUE_BATCH = 2
    GRAD_BATCH = 3
    INIT = 4


@dataclass(frozen=True)
class RngStreamKey:
    """Address of one random stream."""

    run_seed: int
    round: int
    client: int
    step: int
    purpose: Purpose

    def __post_init__(self):
        if not 0 <= self.round < (1 << _ROUND_BITS):
            raise ValueError(f"round out of key range: {self.round}")
        if not -1 <= self.client < (1 << _CLIENT_BITS) - 1:
            raise ValueError(f"client out of key range: {self.client}")
        if not -1 <= self.step < (1 << _STEP_BITS) - 1:
            raise ValueError(f"step out of key range: {self.step}")

    def packed(self) -> tuple[int, int]:
        """(low, high) 64-bit words of the Philox key."""
        low = int(self.purpose)
        low = (low << _CLIENT_BITS) | (self.client + 1)
        low = (low << _STEP_BITS) | (self.step + 1)
        low = (low << _ROUND_BITS) | self.round
        return low, self.run_seed & _U64

    def generator(self) -> np.random.Generator:
        """Fresh generator for this key (the semantic definition)."""
        low, high = self.packed()
        return np.random.Generator(np.random.Philox(key=(high << 64) | low))


class _Local(threading.local):
    def __init__(self):
        self.philox = np.random.Philox(key=0)
        self.gen = np.random.Generator(self.philox)
        self.state = self.philox.state


_local = _Local()


def generator_for(key: RngStreamKey) -> np.random.Generator:
    """Generator for ``key``, reusing a thread-local Philox instance.

    Bitwise-identical to ``key.generator()`` but ~4x cheaper; the cached
    instance must not escape the current call chain.
    """
    low, high = key.packed()
    st = _local.state
    inner = st["state"]
    inner["key"][0] = low
    inner["key"][1] = high
    inner["counter"][:] = 0
    st["buffer_pos"] = 4
    st["has_uint32"] = 0
    st["uinteger"] = 0
    _local.philox.state = st
    return _local.gen


def sample_subset(n: int, m: int, key: RngStreamKey) -> ClientMask:
    """Uniform draw of an m-subset of {0..n-1}.

    Partial Fisher-Yates shuffle keeping the first m positions; the m
    swap offsets are drawn in one vectorized call.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    gen = generator_for(key)
    offsets = gen.integers(0, n - np.arange(m))
    idx = list(range(n))
    for i in range(m):
        j = i + int(offsets[i])
        idx[i], idx[j] = idx[j], idx[i]
    return ClientMask(tuple(sorted(idx[:m])))


def sample_batch(dataset_size: int, batch: int, key: RngStreamKey) -> np.ndarray:
    """``batch`` indices drawn i.i.d. uniformly with replacement."""
    if dataset_size < 1:
        raise ValueError("dataset must be nonempty")
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    gen = generator_for(key)
    return gen.integers(0, dataset_size, size=batch, dtype=np.intp)
