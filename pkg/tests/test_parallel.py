import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rspp.parallel import PoolConfig, Purpose, StreamFamily, TaskError, WorkerPool, map_parallel


def _draw(args):
    fam, slot = args
    g = fam.stream(3, Purpose.AUX, slot)
    return g.normal(size=int(g.integers(1, 50))).sum()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6), st.integers(1, 11), st.integers(0, 10 ** 6))
def test_same_path_replays(seed, it, purpose, slot):
    f = StreamFamily(seed)
    assert np.array_equal(f.stream(it, purpose, slot).random(8), StreamFamily(seed).stream(it, purpose, slot).random(8))


def test_paths_differ():
    f = StreamFamily(1)
    base = f.stream(1, Purpose.AUX, 0).random(4)
    for other in (f.stream(2, Purpose.AUX, 0), f.stream(1, Purpose.ACCEPT, 0), f.stream(1, Purpose.AUX, 1),
                  f.child(1).stream(1, Purpose.AUX, 0), StreamFamily(2).stream(1, Purpose.AUX, 0)):
        assert not np.array_equal(base, other.random(4))


def test_seed_range():
    with pytest.raises(ValueError):
        StreamFamily(-1)
    with pytest.raises(ValueError):
        StreamFamily(2 ** 64)


def test_pool_config():
    with pytest.raises(ValueError):
        PoolConfig(workers=0)
    with pytest.raises(ValueError):
        WorkerPool(0)


def test_map_parallel_identical_across_workers():
    fam = StreamFamily(77)
    tasks = [(fam, s) for s in range(200)]
    ref = map_parallel(_draw, tasks)
    for w in (1, 2, 7):
        with WorkerPool(w) as pool:
            assert map_parallel(_draw, tasks, pool) == ref


def test_map_parallel_reports_first_failed_slot():
    def fn(x):
        if x in (5, 9):
            raise ValueError(f"bad {x}")
        return x

    for w in (1, 4):
        with WorkerPool(w) as pool:
            with pytest.raises(TaskError) as ei:
                map_parallel(fn, list(range(12)), pool)
        assert ei.value.slot == 5 and isinstance(ei.value.cause, ValueError)


def test_stream_independence_screen():
    n_streams, n = 10_000, 20_000
    fam = StreamFamily(2024)
    prev = None
    worst = 0.0
    block = []
    for s in range(n_streams):
        x = fam.stream(1, Purpose.SIMULATE, s).standard_normal(n)
        x = (x - x.mean()) / x.std()
        if prev is not None:
            worst = max(worst, abs(float(x @ prev) / n))
        if s < 200:
            block.append(x)
        prev = x
    assert worst < 0.05
    c = np.corrcoef(np.array(block))
    np.fill_diagonal(c, 0.0)
    assert np.abs(c).max() < 0.05
    # neighbouring iterations and purposes
    for t in range(1, 500):
        a = fam.stream(t, Purpose.PROPOSE).standard_normal(n)
        b = fam.stream(t + 1, Purpose.PROPOSE).standard_normal(n)
        c2 = fam.stream(t, Purpose.ACCEPT).standard_normal(n)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.05 and abs(np.corrcoef(a, c2)[0, 1]) < 0.05
