import numpy as np
import pytest

from flashann import _pycore, core
from flashann.builder import StrategyParams, build
from flashann.dataset import VectorDataset, brute_force_knn, gen_synthetic
from flashann.errors import ConfigError
from flashann.evaluation import SearchParams, search_batch
from flashann.flash import (
    QMAX,
    FlashModel,
    FlashProvider,
    dequantize_distance,
    encode_and_adt,
    flash_train,
    quantize_distance,
    saturation_rate,
    sdt_distance,
)
from flashann.graph import BuildParams
from flashann.providers.pca import pca_project

EXT = core.active_core() if core.HAVE_EXT else None


@pytest.fixture(scope="module")
def model_and_data():
    ds = gen_synthetic(1500, 24, 8, seed=30)
    model = flash_train(ds, d_f=12, m_f=4, seed=1)
    return ds, model


class TestTraining:
    def test_validation(self):
        ds = gen_synthetic(200, 8, 2, seed=0)
        with pytest.raises(ConfigError):
            flash_train(ds, d_f=9, m_f=2)
        with pytest.raises(ConfigError):
            flash_train(ds, d_f=4, m_f=8)
        with pytest.raises(ConfigError):
            flash_train(VectorDataset(ds.data[:50]), d_f=4, m_f=2)

    def test_planted_low_rank_projection(self):
        rng = np.random.default_rng(31)
        basis = np.linalg.qr(rng.normal(size=(16, 6)))[0]
        data = VectorDataset((rng.normal(size=(800, 6)) @ basis.T).astype(np.float32))
        model = flash_train(data, d_f=6, m_f=2, seed=0)
        # projection onto 6 components loses nothing: remaining spectrum ~ 0
        tail = model.pca.eigvals[6:]
        assert tail.max() <= 1e-6 * model.pca.eigvals[0]

    def test_sdt_diagonal_zero_when_min_is_self_distance(self, model_and_data):
        _, model = model_and_data
        assert model.dist_min == 0.0
        for i in range(model.m):
            assert (np.diag(model.sdt[i]) == 0).all()

    def test_sdt_symmetric(self, model_and_data):
        _, model = model_and_data
        for i in range(model.m):
            assert np.array_equal(model.sdt[i], model.sdt[i].T)

    def test_same_seed_identical_model(self):
        ds = gen_synthetic(600, 16, 4, seed=32)
        a = flash_train(ds, d_f=8, m_f=4, seed=5)
        b = flash_train(ds, d_f=8, m_f=4, seed=5)
        for x, y in [(a.cent, b.cent), (a.sdt, b.sdt), (a.pca.basis, b.pca.basis)]:
            assert x.tobytes() == y.tobytes()
        assert (a.dist_min, a.dist_max) == (b.dist_min, b.dist_max)

    def test_range_composition(self, model_and_data):
        ds, model = model_and_data
        # global max is the sum of per-subspace maxima: each SDT row stays
        # well below full scale, so batch sums fit the 8-bit lanes
        assert model.sdt.max() < QMAX


class TestQuantizer:
    def test_endpoints(self, model_and_data):
        _, model = model_and_data
        assert quantize_distance(model, model.dist_min) == 0
        assert quantize_distance(model, model.dist_max) == 255
        assert quantize_distance(model, model.dist_max * 2) == 255
        assert quantize_distance(model, -1.0) == 0

    def test_midpoint(self, model_and_data):
        _, model = model_and_data
        assert quantize_distance(model, model.dist_min + model.delta / 2) == 127

    def test_monotone(self, model_and_data):
        _, model = model_and_data
        rng = np.random.default_rng(33)
        d = np.sort(rng.uniform(-0.5 * model.delta, 1.5 * model.delta, 100_000))
        q = quantize_distance(model, d)
        assert (np.diff(q.astype(np.int32)) >= 0).all()

    def test_dequantized_error_bound(self, model_and_data):
        _, model = model_and_data
        rng = np.random.default_rng(34)
        d = rng.uniform(model.dist_min, model.dist_max, 10_000)
        q = quantize_distance(model, d)
        back = dequantize_distance(model, q)
        assert np.max(np.abs(d - back)) <= model.delta / 255

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_compiled_matches_python(self, model_and_data):
        _, model = model_and_data
        rng = np.random.default_rng(35)
        d = rng.uniform(-0.5 * model.delta, 1.5 * model.delta, 5000)
        d[:3] = (model.dist_min, model.dist_max, model.dist_min + model.delta / 2)
        a = _pycore.quantize_distance(d, model.dist_min, model.delta)
        b = EXT.quantize_distance(d, model.dist_min, model.delta)
        assert np.array_equal(a, b)

    def test_degenerate_range_rejected(self, model_and_data):
        _, model = model_and_data
        broken = FlashModel(pca=model.pca, m=model.m, dims=model.dims,
                            offs=model.offs, cent=model.cent, sdt=model.sdt,
                            dist_min=1.0, dist_max=1.0)
        with pytest.raises(ConfigError):
            quantize_distance(broken, 1.0)


class TestEncodeAndTable:
    def test_centroid_match_gives_zero_entry(self, model_and_data):
        ds, model = model_and_data
        # build a full-dimension vector whose projection hits centroid 5 of
        # subspace 0 exactly
        red = np.zeros(model.d)
        red[model.offs[0]: model.offs[0] + model.dims[0]] = model.cent[0, 5, : model.dims[0]]
        full = model.pca.mean + model.pca.basis[:, : model.d] @ red
        code, adt = encode_and_adt(model, full)
        assert code[0] == 5
        assert adt[0, 5] == 0

    def test_argmin_preserved_under_quantization(self, model_and_data):
        ds, model = model_and_data
        rng = np.random.default_rng(36)
        for _ in range(50):
            code, adt = encode_and_adt(model, ds.data[rng.integers(ds.n)])
            for i in range(model.m):
                assert adt[i, code[i]] == adt[i].min()

    def test_two_path_equality(self, model_and_data):
        # the fused encode+table routine equals running projection, raw
        # distances, argmin and quantization separately
        ds, model = model_and_data
        rng = np.random.default_rng(37)
        for _ in range(20):
            vec = ds.data[rng.integers(ds.n)]
            code, adt = encode_and_adt(model, vec)
            red = pca_project(model.pca, vec)
            for i in range(model.m):
                sub = red[model.offs[i]: model.offs[i] + model.dims[i]]
                d2 = ((model.cent[i, :, : model.dims[i]].astype(np.float64) - sub) ** 2).sum(1)
                assert code[i] == d2.argmin()
                assert np.array_equal(adt[i], quantize_distance(model, d2))

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_cores_agree_on_context(self, model_and_data):
        ds, model = model_and_data
        rng = np.random.default_rng(38)
        for _ in range(20):
            vec = ds.data[rng.integers(ds.n)]
            red = pca_project(model.pca, vec).astype(np.float32)
            pc, pa = _pycore.flash_encode_adt(model.cent, model.dims, model.offs,
                                              model.dist_min, model.delta, red)
            cc, ca = EXT.flash_encode_adt(model.cent, model.dims, model.offs,
                                          model.dist_min, model.delta, red)
            assert np.array_equal(pc, cc)
            assert np.array_equal(pa, ca)


class TestBatchKernels:
    def _cases(self, n, m=16, seed=0, saturating=False):
        rng = np.random.default_rng(seed)
        hi = 256 if saturating else 64
        adts = rng.integers(0, hi, size=(n, m, 16), dtype=np.uint8)
        codes = rng.integers(0, 16, size=(n, m, 16), dtype=np.uint8)
        codes[rng.random(size=codes.shape) < 0.05] = 0  # padded lanes use code 0
        return adts, codes

    def test_all_zero_codes(self):
        adt = np.zeros((4, 16), dtype=np.uint8)
        codes = np.zeros((4, 16), dtype=np.uint8)
        assert (_pycore.flash_batch_distance(adt, codes) == 0).all()

    def test_single_subspace_is_direct_lookup(self):
        rng = np.random.default_rng(39)
        adt = rng.integers(0, 256, size=(1, 16), dtype=np.uint8)
        codes = rng.integers(0, 16, size=(1, 16), dtype=np.uint8)
        out = _pycore.flash_batch_distance(adt, codes)
        assert np.array_equal(out, adt[0, codes[0]])

    def test_python_oracle_gather_loop(self):
        # independent per-lane gather used as the third path
        adts, codes = self._cases(200, m=8, seed=40, saturating=True)
        for a, c in zip(adts, codes):
            ref = np.empty(16, dtype=np.uint8)
            for lane in range(16):
                acc = 0
                for i in range(a.shape[0]):
                    acc = min(acc + int(a[i, c[i, lane]]), 255)
                ref[lane] = acc
            assert np.array_equal(_pycore.flash_batch_distance(a, c), ref)

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    @pytest.mark.parametrize("m", [1, 8, 16, 24])
    def test_all_kernels_bit_exact(self, m):
        adts, codes = self._cases(30_000, m=m, seed=41, saturating=True)
        ref = EXT.flash_batch_distance_many(adts, codes, core.KERNEL_IDS["scalar"])
        for name in EXT.available_kernels()[1:]:
            out = EXT.flash_batch_distance_many(adts, codes, core.KERNEL_IDS[name])
            assert np.array_equal(ref, out), name
        # python semantic definition agrees on a subsample
        for i in range(0, 30_000, 1000):
            assert np.array_equal(ref[i], _pycore.flash_batch_distance(adts[i], codes[i]))

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_multi_batch_blocks(self):
        rng = np.random.default_rng(42)
        m, nb = 16, 4
        adt = rng.integers(0, 256, size=(m, 16), dtype=np.uint8)
        flat = rng.integers(0, 16, size=nb * m * 16, dtype=np.uint8)
        for name in EXT.available_kernels():
            out = EXT.flash_batch_blocks(adt, flat, nb, core.KERNEL_IDS[name])
            for b in range(nb):
                expect = _pycore.flash_batch_distance(
                    adt, flat[b * m * 16: (b + 1) * m * 16].reshape(m, 16))
                assert np.array_equal(out[b * 16: (b + 1) * 16], expect), name


class TestSDT:
    def test_diag_and_symmetry(self, model_and_data):
        ds, model = model_and_data
        prov = FlashProvider(model)
        prov.attach(ds)
        codes = prov.core_arrays()["codes"]
        rng = np.random.default_rng(43)
        for _ in range(30):
            a, b = rng.integers(0, ds.n, 2)
            assert sdt_distance(model, codes[a], codes[a]) == 0
            assert sdt_distance(model, codes[a], codes[b]) == sdt_distance(model, codes[b], codes[a])
        with pytest.raises(ConfigError):
            sdt_distance(model, np.full(model.m, 16, dtype=np.uint8), codes[0])

    def test_float_oracle_bound(self, model_and_data):
        # pre-saturation table sums sit within the per-entry quantization
        # error of the float centroid-pair distances
        ds, model = model_and_data
        rng = np.random.default_rng(44)
        for _ in range(200):
            ca = rng.integers(0, 16, model.m)
            cb = rng.integers(0, 16, model.m)
            q_total = 0
            f_total = 0.0
            for i in range(model.m):
                q_total += int(model.sdt[i, ca[i], cb[i]])
                a = model.cent[i, ca[i], : model.dims[i]].astype(np.float64)
                b = model.cent[i, cb[i], : model.dims[i]].astype(np.float64)
                f_total += ((a - b) ** 2).sum()
            back = model.m * model.dist_min + q_total * model.delta / 255
            assert abs(back - f_total) <= model.m * model.delta / 255

    def test_comparability_bound(self, model_and_data):
        # whenever the float gap between two table sums exceeds twice the
        # accumulated quantization error, the quantized comparison agrees
        ds, model = model_and_data
        prov = FlashProvider(model)
        prov.attach(ds)
        pv = prov.core_arrays()
        rng = np.random.default_rng(45)
        checked = 0
        for _ in range(500):
            q = ds.data[rng.integers(ds.n)]
            red = pca_project(model.pca, q)
            x, y = rng.integers(0, ds.n, 2)
            fx = fy = 0.0
            qx = qy = 0
            code, adt = encode_and_adt(model, q)
            for i in range(model.m):
                sub = red[model.offs[i]: model.offs[i] + model.dims[i]]
                for tgt, acc_f, acc_q in ((x, "fx", "qx"), (y, "fy", "qy")):
                    cw = pv["codes"][tgt, i]
                    c = model.cent[i, cw, : model.dims[i]].astype(np.float64)
                    d = ((sub - c) ** 2).sum()
                    if acc_f == "fx":
                        fx += d
                        qx += int(adt[i, cw])
                    else:
                        fy += d
                        qy += int(adt[i, cw])
            if abs(fx - fy) > 2 * model.m * model.delta / 255:
                checked += 1
                assert (fx < fy) == (qx < qy)
        assert checked > 50

    def test_saturation_rare_on_trained_range(self, model_and_data):
        ds, model = model_and_data
        prov = FlashProvider(model)
        prov.attach(ds)
        rate = saturation_rate(model, prov.core_arrays()["codes"], 10_000, seed=0)
        assert rate <= 0.01


class TestFlashProvider:
    def test_single_vertex_graph_distance_is_table_sum(self, model_and_data):
        from flashann.graph import GraphIndex

        ds, model = model_and_data
        one = VectorDataset(ds.data[:1])
        prov = FlashProvider(model)
        prov.attach(one)
        g = GraphIndex(1, ds.dim, BuildParams(C=8, R=2, seed=0), "flash",
                       model.m, np.zeros(1, dtype=np.int32))
        g.entry_point, g.max_layer = 0, 0
        query = ds.data[5]
        ctx = prov.make_query_ctx(query)
        direct = sum(int(ctx.payload["adt"][i, prov.core_arrays()["codes"][0, i]])
                     for i in range(model.m))
        expected = float(min(direct, 255))
        assert prov.asym_distance(ctx, 0) == expected
        ids, dists, _ = search_batch(g, prov, query[None], SearchParams(ef=4, k=1))
        assert ids[0, 0] == 0 and dists[0, 0] == expected

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_kernel_paths_identical_ordering(self):
        ds = gen_synthetic(3000, 32, 8, seed=46)
        res = build(ds, "flash", BuildParams(C=64, R=8, seed=46),
                    StrategyParams(m_f=8, d_f=16), kernel="scalar")
        queries = ds.data[:100]
        outs = []
        for name in EXT.available_kernels():
            ids, dists, _ = search_batch(res.graph, res.provider, queries,
                                         SearchParams(ef=64, k=8), kernel=name)
            outs.append((name, ids.copy(), dists.copy()))
        for name, ids, dists in outs[1:]:
            assert np.array_equal(outs[0][1], ids), name
            assert np.array_equal(outs[0][2], dists), name

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_build_kernel_choice_same_graph(self):
        ds = gen_synthetic(1500, 24, 8, seed=47)
        sp = StrategyParams(m_f=8, d_f=16)
        a = build(ds, "flash", BuildParams(C=48, R=8, seed=47), sp, kernel="scalar")
        b = build(ds, "flash", BuildParams(C=48, R=8, seed=47), sp, kernel="auto")
        assert a.graph.base_blocks.tobytes() == b.graph.base_blocks.tobytes()

    @pytest.mark.skipif(EXT is None, reason="needs the compiled core")
    def test_rerank_recall_on_synthetic(self):
        # cluster populations sit below the rerank depth so the refinement
        # pass can resolve the quantization ties
        ds = gen_synthetic(10_000, 64, 128, seed=48)
        res = build(ds, "flash", BuildParams(C=128, R=16, seed=48),
                    StrategyParams(m_f=16, d_f=32))
        rng = np.random.default_rng(49)
        qidx = rng.choice(ds.n, 300, replace=False)
        queries = ds.data[qidx]
        gt = brute_force_knn(ds, VectorDataset(queries), 1)
        ids, _, _ = search_batch(res.graph, res.provider, queries,
                                 SearchParams(ef=2048, k=1, rerank_depth=100))
        assert (ids[:, 0] == gt.ids[:, 0]).mean() >= 0.95

    def test_lane_padding_never_reported(self):
        # vertices with fewer than 16 neighbors expose padded lanes; they
        # must not appear as candidates
        ds = gen_synthetic(200, 16, 2, seed=50)
        res = build(ds, "flash", BuildParams(C=16, R=4, seed=50),
                    StrategyParams(m_f=4, d_f=8), sample_size=200)
        ids, dists, _ = search_batch(res.graph, res.provider, ds.data[:10],
                                     SearchParams(ef=200, k=200))
        for row in ids:
            live = row[row >= 0]
            assert len(set(live.tolist())) == len(live)
            assert (live < ds.n).all()
