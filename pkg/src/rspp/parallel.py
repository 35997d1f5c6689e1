"""Counter-based random streams and a deterministic worker pool.

Every piece of simulation work in the package is addressed by a derivation
path ``(run_id, iteration, purpose, slot)``. The stream for a path is a Philox
generator keyed by a :class:`numpy.random.SeedSequence` built from the master
seed and the path, so a slot's randomness is fixed before anyone knows how many
slots a repeat loop will end up consuming.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np


class Purpose(enum.IntEnum):
    """Tags separating the independent uses of randomness within one iteration."""

    DATA = 1
    PROPOSE = 2
    ACCEPT = 3
    AUX = 4
    SIMULATE = 5
    ZETA_CURRENT = 6
    ZETA_PROPOSED = 7
    REPEAT = 8
    PILOT = 9
    CV = 10
    INIT = 11


@dataclass(frozen=True)
class StreamFamily:
    master_seed: int
    run_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def seed_sequence(self, iteration: int, purpose: int, slot: int = 0) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            int(self.master_seed),
            spawn_key=(int(self.run_id), int(iteration), int(purpose), int(slot)),
        )

    def stream(self, iteration: int, purpose: int, slot: int = 0) -> np.random.Generator:
        """Generator for one derivation path; the same path always replays."""
        return np.random.Generator(np.random.Philox(self.seed_sequence(iteration, purpose, slot)))

    def child(self, run_id: int) -> "StreamFamily":
        return StreamFamily(self.master_seed, run_id)


class TaskError(RuntimeError):
    """A pooled task failed; ``slot`` is its position in the submitted list."""

    def __init__(self, slot: int, cause: BaseException):
        super().__init__(f"task in slot {slot} failed: {cause!r}")
        self.slot = slot
        self.cause = cause


@dataclass
class PoolConfig:
    workers: int = 1
    max_batches: int = 100_000

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_batches < 1:
            raise ValueError("max_batches must be >= 1")


class WorkerPool:
    """Ordered map over self-contained tasks.

    Tasks never share mutable state and each one carries its own stream, so the
    result list is identical whatever the worker count. Threads are used
    because the heavy kernels are compiled with ``nogil``.
    """

    def __init__(self, workers: int = 1, max_batches: int = 100_000):
        self.config = PoolConfig(workers, max_batches)
        self._executor = ThreadPoolExecutor(workers) if workers > 1 else None

    @property
    def workers(self) -> int:
        return self.config.workers

    def map(self, fn: Callable[[Any], Any], tasks: Sequence[Any]) -> list:
        if self._executor is None:
            out = []
            for slot, task in enumerate(tasks):
                try:
                    out.append(fn(task))
                except Exception as exc:
                    raise TaskError(slot, exc) from exc
            return out
        futures = [self._executor.submit(fn, task) for task in tasks]
        out = []
        for slot, fut in enumerate(futures):
            try:
                out.append(fut.result())
            except Exception as exc:
                for rest in futures[slot + 1:]:
                    rest.cancel()
                raise TaskError(slot, exc) from exc
        return out

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def map_parallel(fn: Callable[[Any], Any], tasks: Sequence[Any], pool: WorkerPool | None = None) -> list:
    """Results of ``fn`` over ``tasks`` in task order (serial when ``pool`` is None)."""
    if pool is None:
        pool = _SERIAL
    return pool.map(fn, tasks)


_SERIAL = WorkerPool(1)
