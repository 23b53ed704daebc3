"""Deterministic random streams and an order-preserving worker pool.

Replicas are processed in fixed-size blocks.  Block ``k`` of an experiment
tagged ``tag`` under root seed ``s`` draws from
``PCG64(SeedSequence(s, spawn_key=(crc32(tag), k)))``, so its output depends
only on ``(s, tag, k)`` and never on the worker that ran it.
"""
from __future__ import annotations

import multiprocessing as mp
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable

import numpy as np

BLOCK = 2000
SEED_ENV = "LOOPFORGE_SEED"


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode())


def block_rng(seed: int, tag: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(tag_key(tag), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


# Worker state is installed once per process so large operators are not
# re-pickled for every block.
_STATE: dict = {}


def _install(fn, ctx):
    _STATE["fn"] = fn
    _STATE["ctx"] = ctx


def _run(job):
    seed, tag, block, size = job
    return _STATE["fn"](_STATE["ctx"], block_rng(seed, tag, block), size)


class BlockRunner:
    """Runs ``fn(ctx, rng, size)`` over blocks, returning results in block order."""

    def __init__(self, fn: Callable[[Any, np.random.Generator, int], Any], ctx: Any,
                 seed: int, tag: str, jobs: int = 1, block: int = BLOCK):
        self.fn, self.ctx, self.seed, self.tag = fn, ctx, int(seed), tag
        self.jobs = max(1, int(jobs))
        self.block = int(block)
        self._pool = None
        self._next = 0

    def __enter__(self):
        if self.jobs > 1:
            method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
            self._pool = ProcessPoolExecutor(
                self.jobs, mp_context=mp.get_context(method),
                initializer=_install, initargs=(self.fn, self.ctx),
            )
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
        return False

    def take(self, count: int, sizes: list[int] | None = None) -> list:
        """Run the next ``count`` blocks."""
        sizes = sizes or [self.block] * count
        jobs = [(self.seed, self.tag, self._next + i, sizes[i]) for i in range(count)]
        self._next += count
        if self._pool is None:
            return [self.fn(self.ctx, block_rng(s, t, k), n) for s, t, k, n in jobs]
        return list(self._pool.map(_run, jobs))


def run_fixed(fn, ctx, n: int, seed: int, tag: str, jobs: int = 1, block: int = BLOCK) -> list:
    """Exactly ``n`` replicas split into blocks; the last block may be short."""
    sizes = [block] * (n // block) + ([n % block] if n % block else [])
    with BlockRunner(fn, ctx, seed, tag, jobs, block) as runner:
        return runner.take(len(sizes), sizes)


def run_until(fn, ctx, n: int, count: Callable[[Any], int], seed: int, tag: str,
              jobs: int = 1, block: int = BLOCK, max_blocks: int = 100_000) -> list:
    """Run blocks until ``sum(count(result)) >= n``; extra blocks are discarded.

    Blocks are launched ``jobs`` at a time and consumed in order, so the
    retained prefix is independent of ``jobs``.
    """
    kept, total = [], 0
    with BlockRunner(fn, ctx, seed, tag, jobs, block) as runner:
        while total < n:
            if runner._next >= max_blocks:
                raise RuntimeError(f"{tag}: acceptance too low, {total} of {n} after {max_blocks} blocks")
            for res in runner.take(runner.jobs):
                if total >= n:
                    break
                kept.append(res)
                total += count(res)
    return kept
