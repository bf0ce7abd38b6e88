import numpy as np
import pytest

from flashann.dataset import VectorDataset, gen_synthetic
from flashann.diagnostics import (
    bisector_margin,
    build_triples,
    certify,
    check_triple,
    error_term,
    sign_equivalence_violations,
)
from flashann.flash import FlashProvider, flash_train
from flashann.providers import (
    PCAProvider,
    PQProvider,
    SQProvider,
    pca_train,
    pq_train,
    sq_train,
)


class TestBisectorMargin:
    def test_hand_computed_collinear(self):
        u = np.array([0.0, 0.0])
        v = np.array([1.0, 0.0])
        w = np.array([3.0, 0.0])
        # e = (2, 0), b = 4, margin = -4; u is closer to v
        assert bisector_margin(u, v, w) == -4.0

    def test_sign_matches_distance_gap(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            u, v, w = rng.normal(size=(3, 5))
            margin = bisector_margin(u, v, w)
            gap = ((u - v) @ (u - v)) - ((u - w) @ (u - w))
            if abs(margin) > 1e-9 * (1 + abs(0.5 * (w @ w - v @ v))):
                assert np.sign(margin) == np.sign(gap)

    def test_no_violations_random(self):
        assert sign_equivalence_violations(10_000, 8, seed=3) == 0

    def test_algebraic_identity(self):
        # the coded margin equals the true margin minus the error term
        rng = np.random.default_rng(4)
        for _ in range(100):
            u, v, w = rng.normal(size=(3, 6))
            eu, ev, ew = 0.01 * rng.normal(size=(3, 6))
            lhs = bisector_margin(u - eu, v - ev, w - ew)
            rhs = bisector_margin(u, v, w) - error_term(u, v, w, eu, ev, ew)
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


class TestTripleProtocol:
    def test_triples_are_near_neighbors(self):
        ds = gen_synthetic(300, 8, 3, seed=5)
        triples = build_triples(ds, 50, seed=1)
        assert triples.shape == (50, 3)
        for u, v, w in triples[:10]:
            assert u != v and u != w and v != w
            du = ((ds.data[u] - ds.data[v]) ** 2).sum()
            rng_d = ((ds.data[u] - ds.data) ** 2).sum(1)
            # v is u's nearest other point
            assert du <= np.partition(rng_d[rng_d > 0], 0)[0] + 1e-5

    def test_requested_count_honored(self):
        ds = gen_synthetic(100, 6, 2, seed=6)
        assert build_triples(ds, 250, seed=2).shape == (250, 3)


class TestCertification:
    def test_memorizing_codes_always_certified_and_agree(self):
        rng = np.random.default_rng(7)
        pts = VectorDataset(rng.normal(size=(16, 8)).astype(np.float32))
        p = PQProvider(pq_train(pts, m=2, bits=4, iters=10, seed=0))
        p.attach(pts)
        t = check_triple(p, pts.data[0], pts.data[1], pts.data[2])
        assert t.error == pytest.approx(0.0, abs=1e-6)
        assert t.certified and t.agree

    @pytest.mark.parametrize("which", ["pq", "sq", "pca", "flash"])
    def test_certified_implies_agree(self, which):
        ds = gen_synthetic(2000, 16, 8, seed=8)
        if which == "pq":
            prov = PQProvider(pq_train(ds, 4, 8, iters=10, seed=0))
        elif which == "sq":
            prov = SQProvider(sq_train(ds))
        elif which == "pca":
            prov = PCAProvider(pca_train(ds, alpha=0.9))
        else:
            prov = FlashProvider(flash_train(ds, d_f=8, m_f=4, seed=0))
        prov.attach(ds)
        triples = build_triples(ds, 500, seed=3)
        rep = certify(prov, ds, triples)
        assert rep.certified_and_disagree == 0
        assert rep.total == 500
        assert 0.0 <= rep.certified_fraction <= 1.0
