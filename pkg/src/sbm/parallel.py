"""Replica-block scheduling.

Replicas are grouped into fixed-size blocks; each block is simulated from its
own RNG stream address and blocks are combined in block order, so results are
byte-identical no matter how many workers execute them or in which order they
finish.  The worker count comes from the SBM_WORKERS environment variable
unless given explicitly.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

# Replicas per RNG/vectorisation block. Fixed so that results do not depend
# on the worker count; large enough that numpy per-call overhead amortises.
BLOCK_SIZE = 128


@dataclass(frozen=True)
class Block:
    """A contiguous range of replicas sharing one vectorised simulation."""

    index: int
    start: int
    count: int
    master_seed: int


def make_blocks(n_replicas: int, master_seed: int, block_size: int = BLOCK_SIZE) -> list[Block]:
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    blocks = []
    start = 0
    while start < n_replicas:
        count = min(block_size, n_replicas - start)
        blocks.append(Block(len(blocks), start, count, master_seed))
        start += count
    return blocks


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("SBM_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def map_blocks(fn, blocks: list[Block], workers: int | None = None) -> list:
    """Apply ``fn`` to every block, in parallel if workers > 1.

    Results come back indexed by block, never by completion order.  ``fn``
    must be picklable (a top-level function or functools.partial of one).
    """
    w = worker_count(workers)
    if w <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    out: list = [None] * len(blocks)
    with ProcessPoolExecutor(max_workers=w) as ex:
        for i, result in zip(range(len(blocks)), ex.map(fn, blocks)):
            out[i] = result
    return out


def gather_samples(results: list, pick=None) -> np.ndarray:
    """Concatenate per-replica arrays from block results, in block order."""
    parts = [pick(r) if pick is not None else r for r in results]
    return np.concatenate(parts, axis=0)
