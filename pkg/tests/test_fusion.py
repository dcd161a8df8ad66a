import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clearir.corpus import Document, Qrels, Query, attach_tokens, build_vocabulary
from clearir.dense import DenseIndex, build_dense_index, search_dense
from clearir.encoder import encode_query, init_model
from clearir.exceptions import ParameterError
from clearir.fusion import (
    ClearRetriever,
    RetrievalConfig,
    clear_search,
    fuse_scores,
    fusion_candidates,
    write_run,
)
from clearir.lexical import BM25Retriever, bm25_score, build_index, search_lexical
from clearir.training import ResidualEncoder

from .conftest import make_collection, make_queries


def setup(seed=0, n=200, dim=8):
    rng = np.random.default_rng(seed)
    docs, vocab = make_collection(rng, n)
    index = build_index(docs, vocab)
    model = init_model(dim, len(vocab), seed=seed)
    dense = build_dense_index(model, docs)
    return rng, docs, vocab, index, model, dense


def oracle_fused(q, index, dense, model, cfg):
    """Score all N documents with the fused formula, then keep the union."""
    v_q = encode_query(model, q)
    lex = {d for d, _ in search_lexical(index, q, cfg.k_lex)}
    emb = {d for d, _ in search_dense(dense, v_q, cfg.k_emb)}
    rows = []
    for i, did in enumerate(index.doc_ids):
        s_lex = bm25_score(index, q, did)
        s_emb = sum(float(x) * float(y) for x, y in zip(dense.vectors[i], v_q))
        if did in lex | emb:
            rows.append((did, cfg.lambda_test * s_lex + s_emb))
    rows.sort(key=lambda e: (-e[1], e[0]))
    return rows[:cfg.k_final]


class TestFuseScores:
    def test_examples(self):
        assert fuse_scores(0.0, 3.25, 0.7) == 3.25
        assert fuse_scores(10, 2, 0.5) == 7.0
        assert fuse_scores(4.5, 0.0, 1.0) == 4.5


class TestClearSearch:
    def test_oracle(self):
        rng, docs, vocab, index, model, dense = setup()
        cfg = RetrievalConfig(lambda_test=0.5, k_lex=20, k_emb=20, k_final=30)
        for q in make_queries(rng, vocab, 20, oov=True):
            got = clear_search(q, index, dense, model, cfg)
            want = oracle_fused(q, index, dense, model, cfg)
            assert [d for d, _ in got] == [d for d, _ in want]
            np.testing.assert_allclose([s for _, s in got], [s for _, s in want], atol=1e-9, rtol=0)

    def test_lambda_zero_is_dense_over_union(self):
        rng, docs, vocab, index, model, dense = setup(1)
        cfg = RetrievalConfig(lambda_test=0.0, k_lex=15, k_emb=15, k_final=1000)
        for q in make_queries(rng, vocab, 10):
            cand, _, _ = fusion_candidates(q, index, dense, model, cfg)
            union = {index.doc_ids[i] for i in cand}
            dense_full = search_dense(dense, encode_query(model, q), index.n_docs)
            want = [(d, s) for d, s in dense_full if d in union]
            assert clear_search(q, index, dense, model, cfg) == want

    def test_dense_only_candidate_gets_lexical_score(self):
        texts = ["alpha beta", "alpha gamma", "delta", "epsilon"] + [f"pad{i}" for i in range(6)]
        vocab = build_vocabulary(texts)
        docs = attach_tokens([Document(f"d{i}", t) for i, t in enumerate(texts)], vocab)
        index = build_index(docs, vocab)
        model = init_model(2, len(vocab), seed=0)
        vecs = np.zeros((len(docs), 2), dtype=np.float32)
        vecs[1] = [1.0, 0.0]  # only d1 is near the query in embedding space
        dense = DenseIndex(vecs, [d.doc_id for d in docs], model.fingerprint())
        model.table[:] = 0.0
        model.table[model.qry_row] = [2.0, 0.0]
        dense.model_fingerprint = model.fingerprint()
        q = Query("q", "alpha beta")
        cfg = RetrievalConfig(lambda_test=0.5, k_lex=1, k_emb=1, k_final=10)
        assert [d for d, _ in search_lexical(index, q, 1)] == ["d0"]
        cand, s_lex, s_emb = fusion_candidates(q, index, dense, model, cfg)
        assert [index.doc_ids[i] for i in cand] == ["d0", "d1"]
        assert s_lex[1] == bm25_score(index, q, "d1") > 0
        got = dict(clear_search(q, index, dense, model, cfg))
        # pooled query vector is (QRY + alpha + beta) / 3 = (2/3, 0)
        assert got["d1"] == pytest.approx(0.5 * bm25_score(index, q, "d1") + 2 / 3, abs=1e-12)

    def test_union_completeness(self):
        rng, docs, vocab, index, model, dense = setup(2)
        cfg = RetrievalConfig(k_lex=10, k_emb=10, k_final=1000)
        for q in make_queries(rng, vocab, 10):
            got = {d for d, _ in clear_search(q, index, dense, model, cfg)}
            lex = {d for d, _ in search_lexical(index, q, 10)}
            emb = {d for d, _ in search_dense(dense, encode_query(model, q), 10)}
            assert got == lex | emb

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 10.0), st.integers(0, 500))
    def test_dominance(self, lam, seed):
        rng, docs, vocab, index, model, dense = setup(seed % 7, n=80, dim=4)
        cfg = RetrievalConfig(lambda_test=lam, k_lex=80, k_emb=80, k_final=80)
        q = make_queries(np.random.default_rng(seed), vocab, 1)[0]
        cand, s_lex, s_emb = fusion_candidates(q, index, dense, model, cfg)
        rank = {d: r for r, (d, _) in enumerate(clear_search(q, index, dense, model, cfg))}
        ids = [index.doc_ids[i] for i in cand]
        for a in range(len(ids)):
            for b in range(len(ids)):
                if s_lex[a] > s_lex[b] and s_emb[a] > s_emb[b]:
                    assert rank[ids[a]] < rank[ids[b]]

    def test_collection_mismatch(self):
        _, docs, vocab, index, model, dense = setup(3)
        other = DenseIndex(dense.vectors[:-1], dense.doc_ids[:-1], dense.model_fingerprint)
        with pytest.raises(ParameterError):
            clear_search(Query("q", "w1"), index, other, model)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            RetrievalConfig(k_final=0)


class TestRunFile:
    def test_format(self, tmp_path):
        p = tmp_path / "run.txt"
        write_run(p, {"q1": [("d3", 2.5), ("d1", 1.0 / 3)], "q2": [("d9", -0.1234567)]}, "tag")
        assert p.read_text() == (
            "q1 Q0 d3 1 2.500000 tag\n"
            "q1 Q0 d1 2 0.333333 tag\n"
            "q2 Q0 d9 1 -0.123457 tag\n"
        )


class TestEstimator:
    def test_fit_predict_and_params(self):
        rng = np.random.default_rng(4)
        docs, vocab = make_collection(rng, 60)
        queries = [Query(f"q{i}", " ".join(rng.choice(vocab.tokens, 2))) for i in range(6)]
        pairs = [(q.query_id, docs[i * 3].doc_id) for i, q in enumerate(queries)]
        qrels = Qrels()
        for q, d in pairs:
            qrels.add(q, d, 1)
        est = ClearRetriever(BM25Retriever(k1=1.0), ResidualEncoder(dim=4, epochs=1, learning_rate=0.01),
                             lambda_test=0.3, k_final=5)
        params = est.get_params()
        assert params["lambda_test"] == 0.3 and params["encoder__dim"] == 4 and params["lexical__k1"] == 1.0
        est.fit(docs, queries, pairs, qrels)
        assert est.lexical is not est.lexical_
        run = est.predict(queries)
        assert set(run) == {q.query_id for q in queries}
        assert all(len(r) <= 5 for r in run.values())
        again = ClearRetriever.from_parts(est.lexical_.index_, est.model_, est.dense_index_, lambda_test=0.3,
                                          k_final=5)
        assert again.predict(queries) == run
        assert est.search(queries[0], lambda_test=0.0)[:3] == [
            x for x in est.search_dense(queries[0], k=60)
            if x[0] in {d for d, _ in est.search(queries[0], lambda_test=0.0, k_final=1000)}][:3]
