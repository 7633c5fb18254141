import numpy as np
import pytest

from qunravel import NOISE_ALGORITHM, NoiseSource


def test_equal_addresses_reproduce_sequences():
    a = NoiseSource(42, 7, 3).normal_increments(500, 1e-3)
    b = NoiseSource(42, 7, 3).normal_increments(500, 1e-3)
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    a = NoiseSource(42, 0, 2).normal_increments(100, 1e-3)
    b = NoiseSource(42, 1, 2).normal_increments(100, 1e-3)
    c = NoiseSource(43, 0, 2).normal_increments(100, 1e-3)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)


def test_chunked_draws_match_one_shot():
    one = NoiseSource(9, 2, 2).normal_increments(1000, 1e-3)
    gen = NoiseSource(9, 2, 2).generator()
    parts = [gen.standard_normal((k, 2)) for k in (123, 400, 477)]
    chunked = np.concatenate(parts) * np.sqrt(1e-3)
    assert np.array_equal(one, chunked)


def test_increment_statistics():
    dt = 1e-2
    inc = NoiseSource(0, 0, 1).normal_increments(200_000, dt).ravel()
    assert abs(inc.mean()) < 4 * np.sqrt(dt / inc.size)
    assert inc.var() == pytest.approx(dt, rel=0.02)


def test_validation():
    with pytest.raises(ValueError):
        NoiseSource(-1, 0, 1)
    with pytest.raises(ValueError):
        NoiseSource(0, 2**64, 1)
    with pytest.raises(ValueError):
        NoiseSource(0, 0, 0)
    with pytest.raises(ValueError):
        NoiseSource(0, 0, 1).normal_increments(10, 0.0)


def test_algorithm_name_is_documented():
    assert "philox" in NOISE_ALGORITHM.lower()
    assert "ziggurat" in NOISE_ALGORITHM.lower()
