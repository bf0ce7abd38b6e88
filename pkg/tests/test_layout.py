import numpy as np
import pytest

from flashann import layout


def test_stride_and_offsets():
    # count + ids + code region, one byte per codeword, 16-slot batches
    assert layout.block_stride(64, 16) == 4 + 256 + 4 * 16 * 16
    assert layout.block_stride(32, 16) == 4 + 128 + 2 * 16 * 16
    assert layout.block_stride(64, 0) == 4 + 256
    assert layout.codes_offset(64) == 260
    assert layout.num_batches(64) == 4
    assert layout.num_batches(33) == 3


def test_write_one_read_back_masked():
    blocks = layout.alloc_blocks(2, 64, 4)
    codes = np.array([[1, 2, 3, 4]], dtype=np.uint8)
    layout.write_vertex_block(blocks, 0, 64, 4, np.array([42]), codes)
    ids, cw, mask = layout.read_neighbor_batch(blocks, 0, 64, 4, 0)
    assert ids[0] == 42
    assert mask[0] and not mask[1:].any()
    assert np.array_equal(cw[:, 0], [1, 2, 3, 4])
    # padded lanes carry codeword 0
    assert not cw[:, 1:].any()


def test_full_capacity_order_preserved():
    cap, m = 64, 3
    blocks = layout.alloc_blocks(1, cap, m)
    rng = np.random.default_rng(0)
    ids = rng.permutation(1000)[:cap]
    codes = rng.integers(0, 16, size=(cap, m), dtype=np.uint8)
    layout.write_vertex_block(blocks, 0, cap, m, ids, codes)
    assert np.array_equal(layout.read_ids(blocks, 0, cap), ids)
    assert np.array_equal(layout.read_neighbor_codes(blocks, 0, cap, m), codes)
    # four batches, subspace-major groups inside each
    for b in range(4):
        lane_ids, cw, mask = layout.read_neighbor_batch(blocks, 0, cap, m, b)
        assert mask.all()
        assert np.array_equal(lane_ids, ids[b * 16 : (b + 1) * 16])
        assert np.array_equal(cw.T, codes[b * 16 : (b + 1) * 16])


def test_randomized_roundtrip():
    rng = np.random.default_rng(123)
    for _ in range(50):
        cap = int(rng.choice([16, 32, 48, 64]))
        m = int(rng.choice([0, 1, 8, 16]))
        count = int(rng.integers(0, cap + 1))
        blocks = layout.alloc_blocks(3, cap, m)
        row = int(rng.integers(0, 3))
        ids = rng.choice(10**6, size=count, replace=False)
        codes = rng.integers(0, 16, size=(count, m), dtype=np.uint8) if m else None
        layout.write_vertex_block(blocks, row, cap, m, ids, codes)
        assert np.array_equal(layout.read_ids(blocks, row, cap), ids)
        if m:
            assert np.array_equal(layout.read_neighbor_codes(blocks, row, cap, m), codes)


def test_capacity_enforced():
    blocks = layout.alloc_blocks(1, 16, 0)
    with pytest.raises(ValueError):
        layout.write_vertex_block(blocks, 0, 16, 0, np.arange(17))


def test_subspace_major_byte_positions():
    # the 16 bytes of one subspace group must be contiguous: that group is
    # exactly the shuffle-index operand for the batch kernel
    cap, m = 32, 5
    blocks = layout.alloc_blocks(1, cap, m)
    ids = np.arange(20)
    codes = np.arange(20 * m, dtype=np.uint8).reshape(20, m) % 16
    layout.write_vertex_block(blocks, 0, cap, m, ids, codes)
    off = layout.codes_offset(cap)
    region = blocks[0, off:]
    for batch in range(2):
        for sub in range(m):
            group = region[batch * m * 16 + sub * 16 : batch * m * 16 + (sub + 1) * 16]
            for lane in range(16):
                j = batch * 16 + lane
                expected = codes[j, sub] if j < 20 else 0
                assert group[lane] == expected
