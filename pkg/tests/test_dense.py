import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clearir.corpus import Document
from clearir.dense import (
    DenseIndex,
    ExactSearcher,
    build_dense_index,
    load_dense_index,
    save_dense_index,
    search_dense,
)
from clearir.encoder import encode_document, init_model
from clearir.exceptions import FormatError, ParameterError, StaleIndexError

from .conftest import make_collection


def brute_force(index: DenseIndex, v_q, k):
    scores = [sum(float(x) * float(y) for x, y in zip(row, v_q)) for row in index.vectors]
    ranked = sorted(zip(index.doc_ids, scores), key=lambda e: (-e[1], e[0]))
    return ranked[:k]


def random_index(rng, n, dim, ids=None):
    vecs = rng.normal(size=(n, dim)).astype(np.float32)
    return DenseIndex(vecs, ids or [f"d{i:04d}" for i in range(n)], 0)


class TestBuild:
    def test_single_doc(self):
        m = init_model(6, 5, seed=1)
        d = Document("x", "", (1, 2))
        idx = build_dense_index(m, [d])
        assert idx.vectors.shape == (1, 6)
        np.testing.assert_array_equal(idx.vectors[0], encode_document(m, d).astype(np.float32))

    def test_rebuild_identical(self):
        rng = np.random.default_rng(0)
        docs, vocab = make_collection(rng, 50)
        m = init_model(8, len(vocab), seed=2)
        assert np.array_equal(build_dense_index(m, docs).vectors, build_dense_index(m, docs).vectors)

    def test_rows_match_per_doc_oracle(self):
        rng = np.random.default_rng(1)
        docs, vocab = make_collection(rng, 100)
        m = init_model(8, len(vocab), seed=3)
        idx = build_dense_index(m, docs)
        for i, d in enumerate(docs):
            # float32 storage: agreement with the float32-rounded encoding
            want = encode_document(m, d).astype(np.float32).astype(np.float64)
            np.testing.assert_allclose(idx.vectors[i].astype(np.float64), want, atol=1e-12, rtol=0)
            np.testing.assert_allclose(idx.vectors[i], encode_document(m, d), atol=1e-7)
        assert idx.model_fingerprint == m.fingerprint()


class TestSearch:
    def test_zero_query(self):
        idx = random_index(np.random.default_rng(2), 20, 4, ids=[f"d{i:02d}" for i in range(20)][::-1])
        got = search_dense(idx, np.zeros(4), 5)
        assert [d for d, _ in got] == ["d00", "d01", "d02", "d03", "d04"]
        assert all(s == 0.0 for _, s in got)

    def test_stored_row_ranks_first(self):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.normal(size=(32, 32)))
        idx = DenseIndex(q.T.astype(np.float32), [f"d{i}" for i in range(32)], 0)
        for i in range(32):
            assert search_dense(idx, q[:, i], 1)[0][0] == f"d{i}"

    def test_k_exceeds_n(self):
        idx = random_index(np.random.default_rng(4), 7, 3)
        v = np.array([0.3, -1.0, 2.0])
        got = search_dense(idx, v, 100)
        assert len(got) == 7
        assert [d for d, _ in got] == [d for d, _ in brute_force(idx, v, 7)]

    @pytest.mark.parametrize("block_rows", [1, 7, 64, 4096])
    def test_exact_against_full_scan(self, block_rows):
        rng = np.random.default_rng(5)
        idx = random_index(rng, 300, 8)
        searcher = ExactSearcher(block_rows)
        for _ in range(10):
            v = rng.normal(size=8)
            got = search_dense(idx, v, 25, searcher=searcher)
            want = brute_force(idx, v, 25)
            assert [d for d, _ in got] == [d for d, _ in want]
            np.testing.assert_allclose([s for _, s in got], [s for _, s in want], atol=1e-9, rtol=0)

    def test_ties_across_blocks(self):
        vecs = np.ones((10, 2), dtype=np.float32)
        ids = [f"d{i}" for i in (9, 3, 7, 1, 5, 0, 8, 2, 6, 4)]
        idx = DenseIndex(vecs, ids, 0)
        got = search_dense(idx, np.array([1.0, 1.0]), 4, searcher=ExactSearcher(3))
        assert [d for d, _ in got] == ["d0", "d1", "d2", "d3"]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scale_equivariance(self, seed, c):
        rng = np.random.default_rng(seed)
        idx = random_index(rng, 60, 5)
        v = rng.normal(size=5)
        a = [d for d, _ in search_dense(idx, v, 60)]
        b = [d for d, _ in search_dense(idx, c * v, 60)]
        assert a == b

    def test_stale_fingerprint(self):
        m = init_model(4, 3, seed=0)
        idx = build_dense_index(m, [Document("a", "", (0,))])
        search_dense(idx, np.zeros(4), 1, fingerprint=m.fingerprint())
        m.table[0, 0] += 1.0
        with pytest.raises(StaleIndexError):
            search_dense(idx, np.zeros(4), 1, fingerprint=m.fingerprint())

    def test_dimension_mismatch(self):
        idx = random_index(np.random.default_rng(0), 3, 4)
        with pytest.raises(ParameterError):
            search_dense(idx, np.zeros(5), 1)

    def test_bad_k(self):
        idx = random_index(np.random.default_rng(0), 3, 4)
        with pytest.raises(ParameterError):
            search_dense(idx, np.zeros(4), 0)

    def test_scores_independent_of_batch(self):
        idx = random_index(np.random.default_rng(9), 500, 16)
        v = np.random.default_rng(10).normal(size=16)
        full = idx.scores(v)
        for i in (0, 17, 499):
            assert idx.scores(v, [i])[0] == full[i]


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        idx = random_index(np.random.default_rng(6), 40, 5, ids=[f"döc{i}" for i in range(40)])
        idx.model_fingerprint = 0xDEADBEEF12345678
        p = tmp_path / "dense.cldx"
        save_dense_index(idx, p)
        raw = p.read_bytes()
        assert raw[:4] == b"CLDX"
        back = load_dense_index(p)
        assert back.doc_ids == idx.doc_ids
        assert back.model_fingerprint == idx.model_fingerprint
        assert np.array_equal(back.vectors, idx.vectors)
        save_dense_index(back, tmp_path / "again")
        assert (tmp_path / "again").read_bytes() == raw

    def test_corrupt(self, tmp_path):
        p = tmp_path / "dense"
        p.write_bytes(b"CLIX" + bytes(30))
        with pytest.raises(FormatError):
            load_dense_index(p)
        save_dense_index(random_index(np.random.default_rng(0), 4, 2), p)
        p.write_bytes(p.read_bytes()[:30])
        with pytest.raises(FormatError):
            load_dense_index(p)
