"""Index file format: one little-endian container holding the graph arrays,
the trained model, and the original vectors.

Layout (all integers little-endian):

    magic    8 bytes  b"FANNIDX1"
    version  uint32
    meta     uint32 length + UTF-8 JSON (strategy, params, entry point, ...)
    count    uint32 number of array sections
    per array:
        name   uint32 length + UTF-8
        dtype  uint32 length + numpy dtype string (e.g. "<f4")
        ndim   uint32, then int64 shape entries
        data   uint64 byte length + raw bytes

See docs/FORMAT.md for the vertex-block byte layout inside the graph arrays.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .dataset import VectorDataset
from .errors import FormatError
from .flash import FlashProvider
from .graph import BuildParams, GraphIndex
from .providers import ExactProvider, PCAProvider, PQProvider, SQProvider

MAGIC = b"FANNIDX1"
VERSION = 1

PROVIDER_CLASSES = {
    "exact": ExactProvider,
    "pq": PQProvider,
    "sq": SQProvider,
    "pca": PCAProvider,
    "flash": FlashProvider,
}


def _write_array(f, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    nb = name.encode()
    dt = arr.dtype.str.encode()
    f.write(struct.pack("<I", len(nb)) + nb)
    f.write(struct.pack("<I", len(dt)) + dt)
    f.write(struct.pack("<I", arr.ndim))
    for s in arr.shape:
        f.write(struct.pack("<q", s))
    raw = arr.tobytes()
    f.write(struct.pack("<Q", len(raw)))
    f.write(raw)


def _read_array(f) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<I", f.read(4))
    name = f.read(nlen).decode()
    (dlen,) = struct.unpack("<I", f.read(4))
    dtype = np.dtype(f.read(dlen).decode())
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = tuple(struct.unpack("<q", f.read(8))[0] for _ in range(ndim))
    (nbytes,) = struct.unpack("<Q", f.read(8))
    raw = f.read(nbytes)
    if len(raw) != nbytes:
        raise FormatError("truncated index file")
    return name, np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def save_index(path, g: GraphIndex, provider, dataset: VectorDataset) -> None:
    state = provider.state_dict()
    scalars = {k: v for k, v in state.items() if not isinstance(v, np.ndarray)}
    arrays = {k: v for k, v in state.items() if isinstance(v, np.ndarray)}
    meta = {
        "version": VERSION,
        "strategy": g.strategy,
        "n": g.n,
        "dim": g.dim,
        "C": g.params.C,
        "R": g.params.R,
        "seed": g.params.seed,
        "threads": g.params.threads,
        "entry_point": g.entry_point,
        "max_layer": g.max_layer,
        "code_subspaces": g.code_subspaces,
        "provider_scalars": scalars,
    }
    mb = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(mb)) + mb)
        sections = {
            "levels": g.levels,
            "base_blocks": g.base_blocks,
            "upper_offsets": g.upper_offsets,
            "upper_blocks": g.upper_blocks,
            "vectors": dataset.data,
        }
        for k, v in arrays.items():
            sections[f"prov.{k}"] = v
        if provider.kind in ("pq", "sq", "flash"):
            sections["codes"] = provider.core_arrays()["codes"]
        f.write(struct.pack("<I", len(sections)))
        for name, arr in sections.items():
            _write_array(f, name, arr)


def load_index(path):
    """Returns (graph, provider, dataset); the provider comes re-attached."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise FormatError(f"{path}: not an index file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported index version {version} (expected {VERSION})")
        (mlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(mlen).decode())
        (count,) = struct.unpack("<I", f.read(4))
        sections = dict(_read_array(f) for _ in range(count))

    params = BuildParams(C=meta["C"], R=meta["R"], seed=meta["seed"], threads=meta["threads"])
    g = GraphIndex.__new__(GraphIndex)
    g.dim = meta["dim"]
    g.params = params
    g.strategy = meta["strategy"]
    g.code_subspaces = meta["code_subspaces"]
    g.levels = sections["levels"]
    g.base_cap = 2 * params.R
    g.upper_cap = params.R
    g.base_blocks = sections["base_blocks"]
    g.upper_offsets = sections["upper_offsets"]
    g.upper_blocks = sections["upper_blocks"]
    g.entry_point = meta["entry_point"]
    g.max_layer = meta["max_layer"]
    g.counters = {}

    state = dict(meta["provider_scalars"])
    for name, arr in sections.items():
        if name.startswith("prov."):
            state[name[5:]] = arr
    provider = PROVIDER_CLASSES[meta["strategy"]].from_state(state)
    dataset = VectorDataset(sections["vectors"])
    provider.attach(dataset)
    if "codes" in sections:
        provider.core_arrays()["codes"] = sections["codes"]
    return g, provider, dataset
