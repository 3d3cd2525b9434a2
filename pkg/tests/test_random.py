import numpy as np

from resilient_consensus._random import derive_seed, stream


def test_same_tags_same_stream():
    assert np.array_equal(stream(3, "error", 1, 7).random(5), stream(3, "error", 1, 7).random(5))


def test_tags_separate_streams():
    a = stream(3, "error", 1, 7).random(5)
    assert not np.array_equal(a, stream(3, "error", 1, 8).random(5))
    assert not np.array_equal(a, stream(3, "error", 2, 7).random(5))
    assert not np.array_equal(a, stream(4, "error", 1, 7).random(5))
    assert not np.array_equal(a, stream(3, "link", 1, 7).random(5))


def test_derive_seed_is_stable():
    assert derive_seed(1, "x") == derive_seed(1, "x")
    assert derive_seed(1, "x") != derive_seed(1, "y")
