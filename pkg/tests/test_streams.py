import numpy as np
import pytest

from erwlab.streams import CounterStream, SeedKey, philox4x32


def test_philox_known_answer_zero_key():
    words = philox4x32((0, 0, 0, 0), (0, 0))
    assert [int(w) for w in words] == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]


def test_philox_is_vectorized():
    counters = np.arange(5, dtype=np.uint64)
    batch = philox4x32((counters, 0, 0, 0), (7, 9))
    for i in range(5):
        single = philox4x32((i, 0, 0, 0), (7, 9))
        assert [int(w[i]) for w in batch] == [int(w) for w in single]


def test_uniforms_are_reproducible_and_addressed():
    stream = CounterStream(seed=2024, replica=3)
    sites = np.arange(-4, 4)
    visits = np.arange(1, 9)
    block = stream.uniforms(sites[:, None], visits[None, :])
    assert block.shape == (8, 8)
    assert np.all((block >= 0.0) & (block < 1.0))
    np.testing.assert_array_equal(block, CounterStream(2024, 3).uniforms(sites[:, None], visits[None, :]))
    # a single cell does not depend on which block it was drawn with
    assert stream.uniforms(np.array([2]), np.array([5]))[0] == block[6, 4]


def test_channels_and_replicas_are_distinct():
    sites = np.arange(100)
    base = CounterStream(1, 0).uniforms(sites, np.ones(100))
    assert not np.array_equal(base, CounterStream(1, 0).uniforms(sites, np.ones(100), channel=1))
    assert not np.array_equal(base, CounterStream(1, 1).uniforms(sites, np.ones(100)))
    assert not np.array_equal(base, CounterStream(2, 0).uniforms(sites, np.ones(100)))


def test_uniform_mean():
    values = CounterStream(99, 0).uniforms(np.arange(1000)[:, None], np.arange(1, 101)[None, :])
    assert values.mean() == pytest.approx(0.5, abs=5 * np.sqrt(1 / 12 / values.size))


def test_seed_key_round_trip():
    stream = CounterStream.from_key(SeedKey(seed=2**63 + 5, replica=11))
    assert stream.seed_key == SeedKey(2**63 + 5, 11)


@pytest.mark.parametrize("seed, replica", [(-1, 0), (2**64, 0), (0, -1), (0, 2**32)])
def test_rejects_out_of_range_keys(seed, replica):
    with pytest.raises(ValueError):
        CounterStream(seed, replica)
