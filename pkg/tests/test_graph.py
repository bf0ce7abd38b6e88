import math

import numpy as np
import pytest

from flashann.dataset import VectorDataset, gen_synthetic
from flashann.errors import ConfigError
from flashann.graph import (
    BuildParams,
    GraphIndex,
    assign_layers,
    check_invariants,
    layer_from_uniform,
    uniform_draws,
)
from flashann.providers import ExactProvider


class TestBuildParams:
    def test_validation(self):
        with pytest.raises(ConfigError):
            BuildParams(C=8, R=16)
        with pytest.raises(ConfigError):
            BuildParams(R=1)
        with pytest.raises(ConfigError):
            BuildParams(threads=0)

    def test_caps(self):
        p = BuildParams(C=64, R=12)
        assert p.cap(0) == 24 and p.cap(1) == 12 and p.cap(3) == 12
        assert p.ml == pytest.approx(1.0 / math.log(12))


class TestLayerAssignment:
    def test_u_one_maps_to_zero(self):
        assert layer_from_uniform(1.0, 32) == 0

    def test_analytic_inversion(self):
        # u = R^-1 sits exactly at the first layer boundary
        assert layer_from_uniform(math.exp(-math.log(32)), 32) == 1

    def test_deterministic_per_id(self):
        a = assign_layers(1000, 9, 32)
        b = assign_layers(1000, 9, 32)
        assert np.array_equal(a, b)
        # different seed changes the draw
        assert not np.array_equal(a, assign_layers(1000, 10, 32))

    def test_distribution_vs_closed_form(self):
        n = 1_000_000
        levels = assign_layers(n, 1234, 32)
        frac = (levels >= 1).mean()
        p = 1.0 / 32
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(frac - p) < 3 * sigma

    def test_draws_in_unit_interval(self):
        u = uniform_draws(100000, 7)
        assert u.min() > 0.0 and u.max() <= 1.0


class TestInvariantSweep:
    def _tiny(self):
        data = VectorDataset(np.array(
            [[0, 0], [1, 0], [0, 1], [2, 2]], dtype=np.float32))
        params = BuildParams(C=8, R=2, seed=0)
        levels = np.zeros(4, dtype=np.int32)
        g = GraphIndex(4, 2, params, "exact", 0, levels)
        g.entry_point = 0
        g.max_layer = 0
        prov = ExactProvider()
        prov.attach(data)
        return g, prov

    def test_clean_graph_passes(self):
        from flashann import layout

        g, prov = self._tiny()
        layout.write_vertex_block(g.base_blocks, 0, g.base_cap, 0, np.array([1, 2]))
        layout.write_vertex_block(g.base_blocks, 1, g.base_cap, 0, np.array([0]))
        layout.write_vertex_block(g.base_blocks, 2, g.base_cap, 0, np.array([0]))
        assert check_invariants(g, prov, heuristic_sample=4) == []

    def test_self_loop_detected(self):
        from flashann import layout

        g, prov = self._tiny()
        layout.write_vertex_block(g.base_blocks, 1, g.base_cap, 0, np.array([1]))
        bad = check_invariants(g)
        assert any("self loop" in b for b in bad)

    def test_out_of_range_detected(self):
        from flashann import layout

        g, _ = self._tiny()
        layout.write_vertex_block(g.base_blocks, 0, g.base_cap, 0, np.array([99]))
        bad = check_invariants(g)
        assert any("out of range" in b for b in bad)

    def test_entry_point_checked(self):
        g, _ = self._tiny()
        g.entry_point = -1
        bad = check_invariants(g)
        assert any("entry point" in b for b in bad)


def test_upper_rows_allocated_per_level():
    levels = np.array([0, 2, 0, 1], dtype=np.int32)
    g = GraphIndex(4, 3, BuildParams(C=8, R=2), "exact", 0, levels)
    assert g.upper_blocks.shape[0] == 3
    assert g.upper_offsets[0] == -1 and g.upper_offsets[2] == -1
    assert g.upper_offsets[1] == 0 and g.upper_offsets[3] == 2
    with pytest.raises(ConfigError):
        g.neighbors(0, 1)
    assert list(g.neighbors(1, 2)) == []


def test_degree_stats_on_built_graph():
    from flashann import BuildParams as BP
    from flashann import build

    ds = gen_synthetic(500, 16, 4, seed=3)
    res = build(ds, "exact", BP(C=32, R=6, seed=3))
    mean0, max0 = res.graph.degree_stats(0)
    assert 0 < mean0 <= 12 and max0 <= 12
