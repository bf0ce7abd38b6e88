"""Micro-benchmark comparing the compiled core against the pure-Python fallback.

Times the batch-lookup kernel (per vector width), the symmetric table sum,
the float distance kernel, and a small end-to-end build per core.  Numbers
are prints-and-return; nothing here asserts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _pycore, core
from .builder import StrategyParams, build
from .dataset import gen_synthetic
from .graph import BuildParams


@dataclass
class BenchRow:
    name: str
    core: str
    kernel: str
    per_op_us: float
    ops: int


def _time(fn, reps: int) -> float:
    t0 = time.perf_counter()
    fn()
    return (time.perf_counter() - t0) / reps


def bench_batch_kernel(m: int = 16, cases: int = 20000, seed: int = 0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    adts = rng.integers(0, 256, size=(cases, m, 16), dtype=np.uint8)
    codes = rng.integers(0, 16, size=(cases, m, 16), dtype=np.uint8)
    rows = []
    if core.HAVE_EXT:
        ext = core.active_core()
        for name in ext.available_kernels():
            kid = core.KERNEL_IDS[name]
            ext.flash_batch_distance_many(adts[:64], codes[:64], kid)  # warm
            dt = _time(lambda: ext.flash_batch_distance_many(adts, codes, kid), cases)
            rows.append(BenchRow("batch16_lookup", "compiled", name, dt * 1e6, cases))
    sub = min(cases, 2000)
    dt = _time(lambda: [
        _pycore.flash_batch_distance(adts[i], codes[i]) for i in range(sub)
    ], sub)
    rows.append(BenchRow("batch16_lookup", "python", "scalar", dt * 1e6, sub))
    return rows


def bench_small_build(n: int = 2000, dim: int = 32, seed: int = 0) -> list[BenchRow]:
    data = gen_synthetic(n, dim, 8, seed)
    params = BuildParams(C=64, R=8, seed=seed, threads=1)
    sp = StrategyParams(m_f=8, d_f=16)
    rows = []
    for strategy in ("exact", "flash"):
        if core.HAVE_EXT:
            ext = core.active_core()
            t0 = time.perf_counter()
            build(data, strategy, params, sp, core_impl=ext)
            rows.append(BenchRow(f"build_{strategy}_{n}", "compiled",
                                 ext.available_kernels()[-1],
                                 (time.perf_counter() - t0) * 1e6, 1))
        t0 = time.perf_counter()
        build(data, strategy, params, sp, core_impl=_pycore)
        rows.append(BenchRow(f"build_{strategy}_{n}", "python", "scalar",
                             (time.perf_counter() - t0) * 1e6, 1))
    return rows


def run(full: bool = False) -> list[BenchRow]:
    rows = bench_batch_kernel()
    rows += bench_small_build(2000 if full else 600)
    return rows


def format_rows(rows: list[BenchRow]) -> str:
    lines = [f"{'benchmark':<22} {'core':<9} {'kernel':<10} {'us/op':>12} {'ops':>8}"]
    for r in rows:
        lines.append(f"{r.name:<22} {r.core:<9} {r.kernel:<10} {r.per_op_us:>12.3f} {r.ops:>8}")
    return "\n".join(lines)
