"""Shared pieces of the per-round state transitions."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..compressors import RngStream

THREADS_ENV = "BASISKIT_THREADS"


class DivergenceError(RuntimeError):
    """An iterate became non-finite; the run must halt."""

    def __init__(self, round_k):
        super().__init__(f"non-finite iterate at round {round_k}")
        self.round = round_k


@dataclass
class RoundStats:
    """Per-round accounting: bit counts per client plus diagnostics."""

    up_bits: list = field(default_factory=list)
    down_bits: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def up_bits_per_node(self):
        return sum(self.up_bits) / len(self.up_bits)

    @property
    def down_bits_per_node(self):
        return sum(self.down_bits) / len(self.down_bits)


def map_clients(fn, indices):
    """Apply fn to each client index, in order. Honors BASISKIT_THREADS;
    results are always gathered in ascending client order so aggregation
    is deterministic regardless of the pool size."""
    workers = int(os.environ.get(THREADS_ENV, "1") or "1")
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))


def check_finite(x, round_k):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(round_k)
    return x


def stream(seed, round_k, client, purpose):
    return RngStream(seed=seed, round=round_k, client=client, purpose=purpose)


def sample_participants(n, tau, rng):
    """Fixed-size uniform subset without replacement; every client has
    marginal probability tau/n."""
    if tau >= n:
        return list(range(n))
    return sorted(int(i) for i in rng.choice(n, size=tau, replace=False))


def default_alpha(compressor):
    """Learning-rate default: 1 for contraction operators, 1/(omega+1)
    for purely unbiased ones."""
    if compressor.delta is not None:
        return 1.0
    return 1.0 / (compressor.omega + 1.0)


def default_eta(compressor):
    if compressor.delta is not None and compressor.deterministic:
        return 1.0
    if compressor.omega is not None:
        return 1.0 / (compressor.omega + 1.0)
    return 1.0
