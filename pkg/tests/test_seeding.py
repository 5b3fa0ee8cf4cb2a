import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arot.seeding import derive_seed, node_rng, seed_sequence, substream

keys = st.lists(st.one_of(st.integers(0, 2**31), st.text(max_size=8),
                          st.floats(0.01, 0.99, allow_nan=False)), max_size=4)


def test_frozen_values():
    # pinned so that every stored report stays reproducible across releases
    assert derive_seed(0, "search", 0, 1) == 7628697078974098273
    assert derive_seed(7, "cell", "DCA", "MIA+PHX", 0.1, 0, "gbm", "normal") == 1473195889346560556
    assert substream(0, "outer", 0).permutation(10).tolist() == [8, 5, 9, 6, 2, 3, 7, 0, 4, 1]


def test_string_keys_hash_with_crc32():
    a = seed_sequence(5, "outer").generate_state(4)
    b = np.random.SeedSequence(5, spawn_key=(zlib.crc32(b"outer"),)).generate_state(4)
    assert a.tolist() == b.tolist()


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        substream(0, -1)


@given(st.integers(0, 2**32), keys)
def test_substream_is_pure(seed, path):
    assert substream(seed, *path).random(3).tolist() == substream(seed, *path).random(3).tolist()


@given(st.integers(0, 2**32), keys)
def test_derive_seed_range(seed, path):
    s = derive_seed(seed, *path)
    assert 0 <= s < 2**63


@given(st.integers(0, 1000), st.integers(0, 50), st.integers(0, 50))
def test_sibling_streams_differ(seed, a, b):
    if a != b:
        assert derive_seed(seed, "tree", a) != derive_seed(seed, "tree", b)


def test_node_rng_depends_on_position():
    x = node_rng(1, 2, 3).random()
    assert x == node_rng(1, 2, 3).random()
    assert x != node_rng(1, 2, 2).random()
    assert x != node_rng(1, 3, 3).random()
