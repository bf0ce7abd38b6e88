"""Vertex block memory layout.

Every vertex owns one contiguous block per graph layer it appears on:

    offset 0                int32   live neighbor count
    offset 4                int32   neighbor ids, fixed capacity, -1 in empty slots
    offset 4 + 4*capacity   uint8   neighbor codeword region (compact strategies only)

The codeword region groups neighbors in batches of ``BATCH`` slots.  Within a
batch, the bytes are subspace-major: the 16 codewords of subspace 0 for the
batch's neighbors, then the 16 codewords of subspace 1, and so on.  A single
16-byte group is therefore directly loadable as the index operand of a
byte-shuffle instruction.  Empty slots carry codeword 0 and id -1; they are
masked out by the live count before results are reported.
"""

from __future__ import annotations

import numpy as np

BATCH = 16
ID_SENTINEL = -1  # int32 view of 0xFFFFFFFF
PAD_CODE = 0


def num_batches(capacity: int) -> int:
    return -(-capacity // BATCH)


def block_stride(capacity: int, code_subspaces: int) -> int:
    """Bytes per vertex block: count + id slots + codeword region."""
    return 4 + 4 * capacity + num_batches(capacity) * code_subspaces * BATCH


def codes_offset(capacity: int) -> int:
    return 4 + 4 * capacity


def alloc_blocks(n_rows: int, capacity: int, code_subspaces: int) -> np.ndarray:
    """Allocate empty blocks: count 0, ids -1, codewords 0."""
    stride = block_stride(capacity, code_subspaces)
    blocks = np.zeros((n_rows, stride), dtype=np.uint8)
    ids = blocks[:, 4 : 4 + 4 * capacity].view(np.int32)
    ids.fill(ID_SENTINEL)
    return blocks


def read_count(blocks: np.ndarray, row: int) -> int:
    return int(blocks[row, 0:4].view(np.int32)[0])


def write_count(blocks: np.ndarray, row: int, count: int) -> None:
    blocks[row, 0:4].view(np.int32)[0] = count


def read_ids(blocks: np.ndarray, row: int, capacity: int) -> np.ndarray:
    """Live neighbor ids of one block (a copy)."""
    count = read_count(blocks, row)
    ids = blocks[row, 4 : 4 + 4 * capacity].view(np.int32)
    return ids[:count].copy()


def write_vertex_block(
    blocks: np.ndarray,
    row: int,
    capacity: int,
    code_subspaces: int,
    neighbor_ids: np.ndarray,
    neighbor_codes: np.ndarray | None = None,
) -> None:
    """Overwrite one block with the given neighbors (and their codewords).

    ``neighbor_codes`` is (count, code_subspaces) uint8, one codeword per
    subspace per neighbor; required whenever code_subspaces > 0.
    """
    count = len(neighbor_ids)
    if count > capacity:
        raise ValueError(f"neighbor count {count} exceeds capacity {capacity}")
    ids = blocks[row, 4 : 4 + 4 * capacity].view(np.int32)
    ids.fill(ID_SENTINEL)
    ids[:count] = neighbor_ids
    if code_subspaces:
        if neighbor_codes is None:
            raise ValueError("neighbor codes required for a coded block")
        off = codes_offset(capacity)
        region = blocks[row, off:]
        region.fill(PAD_CODE)
        for j in range(count):
            b, lane = divmod(j, BATCH)
            base = b * code_subspaces * BATCH
            region[base + lane : base + code_subspaces * BATCH : BATCH] = (
                neighbor_codes[j]
            )
    write_count(blocks, row, count)


def read_neighbor_batch(
    blocks: np.ndarray,
    row: int,
    capacity: int,
    code_subspaces: int,
    batch: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One batch of a block: (ids[16], codes[M,16] subspace-major, live mask[16])."""
    nb = num_batches(capacity)
    if not 0 <= batch < nb:
        raise IndexError(f"batch {batch} out of range for capacity {capacity}")
    count = read_count(blocks, row)
    ids = blocks[row, 4 : 4 + 4 * capacity].view(np.int32)
    lane_ids = ids[batch * BATCH : (batch + 1) * BATCH].copy()
    lo = batch * BATCH
    mask = (np.arange(lo, lo + BATCH) < count) & (lane_ids != ID_SENTINEL)
    if code_subspaces:
        off = codes_offset(capacity) + batch * code_subspaces * BATCH
        codes = (
            blocks[row, off : off + code_subspaces * BATCH]
            .reshape(code_subspaces, BATCH)
            .copy()
        )
    else:
        codes = np.zeros((0, BATCH), dtype=np.uint8)
    return lane_ids, codes, mask


def read_neighbor_codes(
    blocks: np.ndarray, row: int, capacity: int, code_subspaces: int
) -> np.ndarray:
    """Codewords of the live neighbors, in slot order: (count, M) uint8."""
    count = read_count(blocks, row)
    out = np.empty((count, code_subspaces), dtype=np.uint8)
    off = codes_offset(capacity)
    for j in range(count):
        b, lane = divmod(j, BATCH)
        base = off + b * code_subspaces * BATCH
        out[j] = blocks[row, base + lane : base + code_subspaces * BATCH : BATCH]
    return out
