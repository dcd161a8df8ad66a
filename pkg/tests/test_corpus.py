import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clearir.corpus import (
    OOV_ID,
    Document,
    Qrels,
    Query,
    attach_tokens,
    build_vocabulary,
    load_collection,
    load_pairs,
    load_qrels,
    load_queries,
    tokenize,
    write_qrels,
    write_tsv,
)
from clearir.exceptions import EmptyCollectionError, FormatError

from .conftest import random_texts


class TestTokenize:
    def test_examples(self):
        assert tokenize("Weather in Danville, CA") == ["weather", "in", "danville", "ca"]
        assert tokenize("") == []
        assert tokenize("BM25+RM3 scores: 0.555") == ["bm25", "rm3", "scores", "0", "555"]

    def test_unicode_and_underscore(self):
        assert tokenize("Café_Crème naïve") == ["café", "crème", "naïve"]

    @given(st.text())
    def test_idempotent_on_joined_output(self, s):
        toks = tokenize(s)
        assert tokenize(" ".join(toks)) == toks

    @given(st.text())
    def test_tokens_are_lowercase_alnum(self, s):
        for t in tokenize(s):
            assert t and all(c.isalnum() for c in t)
            assert t == t.lower()


class TestBuildVocabulary:
    def test_two_docs(self):
        v = build_vocabulary(["a b a", "b c"])
        assert v.tokens == ["a", "b", "c"]
        assert v.df_of("a") == 1 and v.df_of("b") == 2 and v.df_of("c") == 1
        assert v.doc_count == 2
        assert v.avg_doc_len == 2.5

    def test_single_doc(self):
        v = build_vocabulary(["x"])
        assert v.df_of("x") == 1 and v.doc_count == 1 and v.avg_doc_len == 1.0

    def test_empty_collection(self):
        with pytest.raises(EmptyCollectionError, match="empty collection"):
            build_vocabulary([])

    def test_ids_contiguous_first_occurrence(self):
        v = build_vocabulary(["z y", "x z"])
        assert [v.token_to_id[t] for t in ("z", "y", "x")] == [0, 1, 2]

    def test_shuffle_invariance(self):
        rng = np.random.default_rng(3)
        texts = random_texts(rng, 300)
        a = build_vocabulary(texts)
        shuffled = [texts[i] for i in rng.permutation(len(texts))]
        b = build_vocabulary(shuffled)
        assert a.doc_count == b.doc_count and a.total_length == b.total_length
        assert {t: a.df_of(t) for t in a.tokens} == {t: b.df_of(t) for t in b.tokens}
        assert a.avg_doc_len == b.avg_doc_len

    @settings(max_examples=50)
    @given(st.lists(st.text(alphabet="abc d", max_size=20), min_size=1, max_size=30))
    def test_length_identity(self, texts):
        v = build_vocabulary(texts)
        total = sum(len(tokenize(t)) for t in texts)
        assert v.total_length == total
        assert math.isclose(v.doc_count * v.avg_doc_len, total, rel_tol=2 ** -52, abs_tol=0)
        # df bounded by N, counted once per document
        for tok in v.tokens:
            assert 0 < v.df_of(tok) <= v.doc_count
            assert v.df_of(tok) == sum(tok in set(tokenize(t)) for t in texts)

    def test_oov_lookup(self):
        v = build_vocabulary(["a b"])
        assert v.encode("a zzz b") == (0, OOV_ID, 1)

    def test_attach_tokens(self):
        v = build_vocabulary(["a b"])
        (d,) = attach_tokens([Document("d", "B a q")], v)
        assert d.tokens == (1, 0, OOV_ID)


class TestLoaders:
    def test_collection_line(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("d1\thello world\nd2\t\n", encoding="utf-8")
        docs = load_collection(p)
        assert docs[0] == Document("d1", "hello world")
        assert docs[1] == Document("d2", "")

    def test_queries(self, tmp_path):
        p = tmp_path / "q.tsv"
        p.write_text("q1\twhat is bm25\n", encoding="utf-8")
        assert load_queries(p) == [Query("q1", "what is bm25")]

    def test_qrels_line(self, tmp_path):
        p = tmp_path / "qrels"
        p.write_text("q1 0 d7 2\nq1 0 d8 0\n", encoding="utf-8")
        qr = load_qrels(p)
        assert qr.grade("q1", "d7") == 2
        assert qr.grade("q1", "d8") == 0
        assert qr.grade("q1", "missing") == 0
        assert qr.relevant("q1") == {"d7"}

    def test_pairs_line(self, tmp_path):
        p = tmp_path / "pairs.tsv"
        p.write_text("q1\td9\n", encoding="utf-8")
        assert load_pairs(p) == [("q1", "d9")]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_collection(tmp_path / "nope.tsv")

    @pytest.mark.parametrize("content, lineno", [
        ("d1\tok\nbroken line without tab\n", 2),
        ("d1\tok\nd1\tdup\n", 2),
    ])
    def test_malformed_collection(self, tmp_path, content, lineno):
        p = tmp_path / "c.tsv"
        p.write_text(content, encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_collection(p)
        assert exc.value.lineno == lineno
        assert f":{lineno}:" in str(exc.value)

    @pytest.mark.parametrize("line", ["q1 0 d1", "q1 0 d1 x", "q1 0 d1 -1", "q1 0 d1 1 extra"])
    def test_malformed_qrels(self, tmp_path, line):
        p = tmp_path / "qrels"
        p.write_text("q0 0 d0 1\n" + line + "\n", encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_qrels(p)
        assert exc.value.lineno == 2

    def test_roundtrip(self, tmp_path):
        rows = [("d1", "alpha beta"), ("d2", "gamma")]
        write_tsv(tmp_path / "c.tsv", rows)
        assert [(d.doc_id, d.text) for d in load_collection(tmp_path / "c.tsv")] == rows
        qr = Qrels()
        qr.add("q1", "d1", 1)
        qr.add("q2", "d2", 3)
        write_qrels(tmp_path / "qrels", qr)
        assert load_qrels(tmp_path / "qrels") == qr
