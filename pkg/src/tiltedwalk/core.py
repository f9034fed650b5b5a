"""Path arithmetic, seeded sampling streams, and the Monte Carlo engine.

Increment paths are plain float64 arrays with an explicit start index (the
index may be negative: two-sided paths arise when conditioning on a central
window).  All randomness flows through counter-based Philox streams keyed by
``(seed, stream_id)``, so any draw is reproducible bit-for-bit and distinct
streams are independent.
"""

from __future__ import annotations

import abc
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.random import Generator, Philox

from .defaults import EXP_GUARD, MC_BLOCK_SIZE, MC_SAMPLES
from .errors import TiltOverflowError

__all__ = [
    "IncrementPath",
    "PartialSums",
    "MCEstimate",
    "IncrementSampler",
    "stream_rng",
    "partial_sums",
    "tilted_weight",
    "mc_tilted_expectation",
]

_U64 = 2**64


def stream_rng(seed: int, stream_id: int) -> Generator:
    """Independent, reproducible generator for stream ``stream_id`` of ``seed``.

    Philox is counter-based: the (seed, stream) pair is the key, so streams
    never overlap and construction is cheap.
    """
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if not 0 <= stream_id < _U64:
        raise ValueError(f"stream_id must be a 64-bit unsigned integer, got {stream_id}")
    key = np.array([seed, stream_id], dtype=np.uint64)
    return Generator(Philox(key=key))


@dataclass(frozen=True)
class IncrementPath:
    """Finite stretch of increments X_start .. X_end (end = start + len - 1)."""

    start_index: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("increment values must be one-dimensional")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def end_index(self) -> int:
        return self.start_index + len(self) - 1


@dataclass(frozen=True)
class PartialSums:
    """Cumulative sums with the S_0 = 0 convention: sums[j] = X_1 + ... + X_j.

    For a two-sided path starting at m, sums[j] covers the first j
    increments, so S_{m,n} is sums[n - m + 1].
    """

    sums: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sums", np.asarray(self.sums, dtype=float))
        if self.sums.ndim != 1 or self.sums.shape[0] < 1 or self.sums[0] != 0.0:
            raise ValueError("partial sums must be 1-d with a leading 0")

    def __len__(self) -> int:
        return self.sums.shape[0]

    @property
    def final(self) -> float:
        return float(self.sums[-1])

    def increments(self) -> np.ndarray:
        """Successive differences; recovers the generating path."""
        return np.diff(self.sums)


def partial_sums(path: IncrementPath) -> PartialSums:
    """Cumulative sums of a path, with the leading S_0 = 0 entry."""
    out = np.empty(len(path) + 1)
    out[0] = 0.0
    np.cumsum(path.values, out=out[1:])
    return PartialSums(out)


def tilted_weight(sums: PartialSums, theta: float) -> float:
    """exp(-theta * S_final), the integrand of every tilted expectation.

    Raises ``TiltOverflowError`` when the exponent exceeds double range;
    that only happens when theta is badly bracketed for the model at hand.
    Underflow to 0 is harmless and allowed.
    """
    exponent = -theta * sums.final
    if exponent > EXP_GUARD:
        raise TiltOverflowError(
            f"tilted weight exp({exponent:.3g}) exceeds double range; "
            f"theta={theta:.6g} looks mis-bracketed"
        )
    return math.exp(exponent)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error.

    stderr is the sample standard deviation over sqrt(n_samples); identical
    (seed, n_samples) reproduce the estimate bit-for-bit.
    """

    mean: float
    stderr: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    def within(self, target: float, k: float = 4.0) -> bool:
        """True when ``target`` lies inside mean +- k * stderr."""
        return abs(self.mean - target) <= k * self.stderr


class IncrementSampler(abc.ABC):
    """Deterministic map (seed, stream_id, n) -> stationary increment path.

    Implementations must be stationary in law and must give independent
    output for distinct stream ids under one seed.
    """

    @abc.abstractmethod
    def sample_block(self, seed: int, stream_id: int, n_paths: int, n: int) -> np.ndarray:
        """Draw ``n_paths`` independent paths as an (n_paths, n) array."""

    def sample(self, seed: int, stream_id: int, n: int) -> IncrementPath:
        return IncrementPath(1, self.sample_block(seed, stream_id, 1, n)[0])


def _block_layout(n_samples: int, block_size: int, stream_offset: int = 0) -> list[tuple[int, int]]:
    """(stream_id, size) pairs partitioning n_samples in fixed order."""
    blocks = []
    stream = stream_offset
    remaining = n_samples
    while remaining > 0:
        size = min(block_size, remaining)
        blocks.append((stream, size))
        stream += 1
        remaining -= size
    return blocks


def mc_tilted_expectation(
    sampler: IncrementSampler,
    theta: float,
    n: int,
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    event: Optional[Callable[[IncrementPath], bool]] = None,
    threads: int = 1,
    block_size: int = MC_BLOCK_SIZE,
    stream_offset: int = 0,
) -> MCEstimate:
    """Plain Monte Carlo estimate of E(exp(-theta * S_n); event).

    ``event=None`` means the whole sample space.  Sampling is partitioned
    into fixed-size blocks, one Philox stream per block, and reduced in
    block order, so the result does not depend on ``threads``.  Callers
    running several estimates under one seed keep them independent by
    spacing ``stream_offset``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if n < 1:
        raise ValueError("path length n must be positive")

    def run_block(spec: tuple[int, int]) -> tuple[float, float]:
        stream, size = spec
        paths = sampler.sample_block(seed, stream, size, n)
        exponents = -theta * paths.sum(axis=1)
        worst = exponents.max()
        if worst > EXP_GUARD:
            raise TiltOverflowError(
                f"tilted weight exp({worst:.3g}) exceeds double range; "
                f"theta={theta:.6g} looks mis-bracketed"
            )
        weights = np.exp(exponents)
        if event is not None:
            keep = np.fromiter(
                (bool(event(IncrementPath(1, row))) for row in paths),
                dtype=bool,
                count=size,
            )
            weights = np.where(keep, weights, 0.0)
        return float(weights.sum()), float((weights * weights).sum())

    blocks = _block_layout(n_samples, block_size, stream_offset)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run_block, blocks))
    else:
        partials = [run_block(b) for b in blocks]

    total = 0.0
    total_sq = 0.0
    for s, sq in partials:  # fixed block order: thread count cannot change this
        total += s
        total_sq += sq
    mean = total / n_samples
    var = max(0.0, (total_sq - n_samples * mean * mean) / (n_samples - 1))
    return MCEstimate(mean, math.sqrt(var / n_samples), n_samples, seed)
