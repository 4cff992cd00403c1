import numpy as np
import pytest

from maxmart.rng import Seed, derive_master, philox_block, raw_blocks, uniforms
from maxmart.stats import ks_uniform


@pytest.mark.parametrize("master,stream", [(0, 0), (42, 7), (2**64 - 1, 123456789)])
def test_philox_matches_numpy(master, stream):
    # numpy increments its counter before the first block, so its block k is our block k + 1
    bg = np.random.Philox(key=np.array([master, stream], dtype=np.uint64),
                          counter=np.zeros(4, dtype=np.uint64))
    expected = bg.random_raw(4 * 8).reshape(8, 4)
    ours = raw_blocks(Seed(master, stream), 8, start=1)
    np.testing.assert_array_equal(ours, expected)


def test_block_is_pure_function_of_counter():
    k0, k1 = Seed(5, 9).key
    a = philox_block(k0, k1, np.uint64(3), np.uint64(0))
    b = philox_block(k0, k1, np.uint64(3), np.uint64(0))
    c = philox_block(k0, k1, np.uint64(4), np.uint64(0))
    assert tuple(a) == tuple(b)
    assert tuple(a) != tuple(c)


def test_uniforms_in_half_open_unit_interval():
    u = uniforms(Seed(1, 2), 10_000)
    assert u.min() > 0 and u.max() <= 1


def test_seed_masks_to_64_bits():
    assert Seed(-1, 2**64 + 3) == Seed(2**64 - 1, 3)


def test_derived_masters_differ_by_label_and_stream():
    vals = {derive_master(7, s, lab) for s in range(10) for lab in range(5)}
    assert len(vals) == 50
    assert derive_master(7, 1, 2) == derive_master(7, 1, 2)
    assert Seed(7, 1).child(2) == derive_master(7, 1, 2)


@pytest.mark.parametrize("n", [10**3, 10**5])
def test_uniform_stream_passes_ks(n):
    assert ks_uniform(uniforms(Seed(2024, 0), n), 0.01).passed
