import numpy as np
import pytest

from fundsep.rng import BLOCK_LANES, NoiseSource, worker_count


def test_blocks_are_independent_of_layout():
    whole = NoiseSource(7, 0, 2 * BLOCK_LANES, antithetic=False).draw(4)
    second = NoiseSource(7, BLOCK_LANES, BLOCK_LANES, antithetic=False).draw(4)
    np.testing.assert_array_equal(whole[:, BLOCK_LANES:], second)


def test_prefix_stable_under_path_count():
    a = NoiseSource(3, 0, 300).draw(5)
    b = NoiseSource(3, 0, 700).draw(5)
    np.testing.assert_array_equal(a, b[:, :300])


def test_chunked_draws_match_single_draw():
    one = NoiseSource(1, 0, 10, dim=2).draw(6)
    src = NoiseSource(1, 0, 10, dim=2)
    two = np.concatenate([src.draw(2), src.draw(4)])
    np.testing.assert_array_equal(one, two)


def test_antithetic_pairs():
    x = NoiseSource(0, 0, 64, dim=3).draw(2)
    np.testing.assert_array_equal(x[:, 0::2], -x[:, 1::2])


def test_seeds_differ():
    assert not np.array_equal(NoiseSource(0, 0, 8).draw(1), NoiseSource(1, 0, 8).draw(1))


def test_unaligned_start():
    with pytest.raises(ValueError):
        NoiseSource(0, 5, 10)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("FUNDSEP_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("FUNDSEP_THREADS", "zero")
    assert worker_count(2) == 2
    monkeypatch.setenv("FUNDSEP_THREADS", "-3")
    assert worker_count() == 1
