import numpy as np
import pytest

from transient_impact.streams import block_generator, estimate, path_blocks, run_blocks, worker_count


def test_estimate():
    est = estimate([1.0, 2.0, 3.0, 4.0])
    assert est.value == 2.5
    assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert np.isnan(estimate([1.0]).std_error)
    with pytest.raises(ValueError):
        estimate([])


def test_path_blocks_cover_range():
    blocks = path_blocks(10, 4)
    assert blocks == [(0, 0, 4), (1, 4, 8), (2, 8, 10)]


def test_block_streams_are_keyed():
    a = block_generator(5, 0).standard_normal(4)
    b = block_generator(5, 0).standard_normal(4)
    c = block_generator(5, 1).standard_normal(4)
    d = block_generator(6, 0).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_run_blocks_independent_of_workers():
    def fn(b, start, stop):
        rng = block_generator(1, b)
        return {"x": rng.standard_normal(stop - start), "i": np.arange(start, stop)}

    one = run_blocks(fn, 1000, workers=1, block_size=64)
    many = run_blocks(fn, 1000, workers=4, block_size=64)
    assert np.array_equal(one["x"], many["x"])
    assert np.array_equal(one["i"], np.arange(1000))


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("TIL_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("TIL_THREADS", "junk")
    assert worker_count() >= 1
