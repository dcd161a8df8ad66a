"""BM25 over an inverted index.

Postings hold ``(internal doc id, tf)`` in ascending id order. Top-k search
walks the postings document-at-a-time and keeps a bounded min-heap.
"""
from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _varint
from ._validation import check_count, check_scalar
from .corpus import Document, Query, Vocabulary, attach_tokens, build_vocabulary
from .exceptions import FormatError, ParameterError, UndefinedTermError
from .ranking import ScoredList, id_order, top_k

__all__ = [
    "DEFAULT_K1",
    "DEFAULT_B",
    "InvertedIndex",
    "BM25Retriever",
    "build_index",
    "rsj_weight",
    "bm25_score",
    "score_documents",
    "search_lexical",
    "save_index",
    "load_index",
]

DEFAULT_K1 = 0.82
DEFAULT_B = 0.68

INDEX_MAGIC = b"CLIX"
INDEX_VERSION = 1


def rsj_weight(df_t: int, n_docs: int) -> float:
    """Robertson/Sparck Jones weight ``ln((N - df + 0.5) / (df + 0.5))``, floored at 0."""
    if df_t <= 0:
        raise UndefinedTermError("rsj weight is undefined for a term with df = 0")
    if df_t > n_docs:
        raise ParameterError(f"df ({df_t}) exceeds document count ({n_docs})")
    return max(0.0, math.log((n_docs - df_t + 0.5) / (df_t + 0.5)))


def _check_bm25_params(k1, b):
    check_scalar(k1, "k1", min_val=0.0, include_min=False)
    check_scalar(b, "b", min_val=0.0, max_val=1.0)


@dataclass
class InvertedIndex:
    vocab: Vocabulary
    doc_ids: list[str]
    doc_lengths: np.ndarray
    postings_docs: list[np.ndarray]
    postings_tfs: list[np.ndarray]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    # derived
    rsj: np.ndarray = field(init=False, repr=False)
    length_norm: np.ndarray = field(init=False, repr=False)
    order: np.ndarray = field(init=False, repr=False)
    doc_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        _check_bm25_params(self.k1, self.b)
        n = self.vocab.doc_count
        self.rsj = np.array([rsj_weight(int(df), n) for df in self.vocab.df], dtype=np.float64)
        avg = self.vocab.avg_doc_len
        dl = self.doc_lengths.astype(np.float64)
        if avg > 0:
            self.length_norm = self.k1 * ((1.0 - self.b) + self.b * dl / avg)
        else:
            # every document is empty; no posting will ever read this
            self.length_norm = np.full(len(dl), self.k1 * (1.0 - self.b))
        self.order = id_order(self.doc_ids)
        self.doc_index = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def with_params(self, k1=None, b=None) -> "InvertedIndex":
        """Same postings, different BM25 parameters."""
        return InvertedIndex(
            self.vocab, self.doc_ids, self.doc_lengths, self.postings_docs, self.postings_tfs,
            self.k1 if k1 is None else k1, self.b if b is None else b,
        )

    def query_terms(self, query) -> list[int]:
        """Deduplicated in-vocabulary term ids of ``query`` in ascending order."""
        if isinstance(query, Query):
            tokens = query.tokens if query.tokens else self.vocab.encode(query.text)
        elif isinstance(query, str):
            tokens = self.vocab.encode(query)
        else:
            tokens = query
        return sorted({int(t) for t in tokens if t >= 0})

    def tf(self, term: int, doc: int) -> int:
        docs = self.postings_docs[term]
        i = np.searchsorted(docs, doc)
        if i < len(docs) and docs[i] == doc:
            return int(self.postings_tfs[term][i])
        return 0

    def resolve(self, doc) -> int:
        if isinstance(doc, (int, np.integer)):
            return int(doc)
        if isinstance(doc, Document):
            doc = doc.doc_id
        try:
            return self.doc_index[doc]
        except KeyError:
            raise KeyError(f"unknown doc_id {doc!r}") from None


def build_index(docs, vocab: Vocabulary, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    """Build postings for ``docs`` (tokenized against ``vocab``)."""
    _check_bm25_params(k1, b)
    docs = list(docs)
    if len(docs) != vocab.doc_count:
        raise ParameterError(f"vocabulary describes {vocab.doc_count} documents, got {len(docs)}")
    per_term_docs: list[list[int]] = [[] for _ in range(len(vocab))]
    per_term_tfs: list[list[int]] = [[] for _ in range(len(vocab))]
    lengths = np.zeros(len(docs), dtype=np.int64)
    for i, doc in enumerate(docs):
        toks = doc.tokens if doc.tokens or not doc.text else vocab.encode(doc.text)
        lengths[i] = len(toks)
        counts: dict[int, int] = {}
        for t in toks:
            if t < 0:
                raise ParameterError(f"document {doc.doc_id!r} has a token outside the vocabulary")
            counts[t] = counts.get(t, 0) + 1
        for t in sorted(counts):
            per_term_docs[t].append(i)
            per_term_tfs[t].append(counts[t])
    if int(lengths.sum()) != vocab.total_length:
        raise ParameterError("documents do not match vocabulary statistics")
    return InvertedIndex(
        vocab,
        [d.doc_id for d in docs],
        lengths,
        [np.array(p, dtype=np.int64) for p in per_term_docs],
        [np.array(p, dtype=np.int64) for p in per_term_tfs],
        k1,
        b,
    )


def bm25_score(index: InvertedIndex, query, doc) -> float:
    """BM25 of one (query, document) pair; query terms are deduplicated."""
    d = index.resolve(doc)
    norm = index.length_norm[d]
    score = 0.0
    for t in index.query_terms(query):
        tf = index.tf(t, d)
        if tf:
            score += index.rsj[t] * (tf / (tf + norm))
    return float(score)


def score_documents(index: InvertedIndex, query, docs=None) -> np.ndarray:
    """BM25 scores of ``query`` for every document (or the given internal ids).

    Term-at-a-time accumulation in ascending term order, which reproduces
    :func:`bm25_score` bit for bit.
    """
    acc = np.zeros(index.n_docs, dtype=np.float64)
    for t in index.query_terms(query):
        pd = index.postings_docs[t]
        tf = index.postings_tfs[t].astype(np.float64)
        acc[pd] += index.rsj[t] * (tf / (tf + index.length_norm[pd]))
    return acc if docs is None else acc[np.asarray(docs, dtype=np.int64)]


def search_lexical(index: InvertedIndex, query, k: int) -> ScoredList:
    """Top-``k`` documents with positive BM25 score."""
    check_count(k, "k")
    terms = [t for t in index.query_terms(query) if index.rsj[t] > 0.0]
    cursors = []
    for t in terms:
        docs = index.postings_docs[t]
        if len(docs):
            cursors.append((int(docs[0]), t, 0))
    heapq.heapify(cursors)
    rsj, norm, order = index.rsj, index.length_norm, index.order
    heap: list[tuple[float, int, int]] = []  # (score, -order, doc); root is the current worst
    while cursors:
        doc = cursors[0][0]
        score = 0.0
        # cursors sharing this doc pop in ascending term order
        while cursors and cursors[0][0] == doc:
            _, t, pos = heapq.heappop(cursors)
            tf = int(index.postings_tfs[t][pos])
            score += rsj[t] * (tf / (tf + norm[doc]))
            pos += 1
            if pos < len(index.postings_docs[t]):
                heapq.heappush(cursors, (int(index.postings_docs[t][pos]), t, pos))
        if score <= 0.0:
            continue
        entry = (score, -int(order[doc]), doc)
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif entry > heap[0]:
            heapq.heapreplace(heap, entry)
    heap.sort(reverse=True)
    return [(index.doc_ids[d], float(s)) for s, _, d in heap]


def save_index(index: InvertedIndex, path):
    """Write the index to ``path``.

    Layout (little-endian)::

        b"CLIX" | u32 version | f64 k1 | f64 b | u32 n_docs | u32 n_terms
        n_docs x (u32 len, utf-8 doc_id)
        n_terms x (u32 len, utf-8 token)
        varints: n_terms x df, n_docs x doc_length
        per term: varint posting count, then (doc id delta, tf) varint pairs
    """
    vocab = index.vocab
    out = bytearray(INDEX_MAGIC)
    out += struct.pack("<IddII", INDEX_VERSION, index.k1, index.b, index.n_docs, len(vocab))
    for s in list(index.doc_ids) + list(vocab.tokens):
        raw = s.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    _varint.encode(vocab.df, out)
    _varint.encode(index.doc_lengths, out)
    for docs, tfs in zip(index.postings_docs, index.postings_tfs):
        _varint.encode([len(docs)], out)
        prev = 0
        flat = []
        for d, tf in zip(docs.tolist(), tfs.tolist()):
            flat.append(d - prev)
            flat.append(tf)
            prev = d
        _varint.encode(flat, out)
    with open(path, "wb") as fh:
        fh.write(out)


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != INDEX_MAGIC:
        raise FormatError("not a lexical index (bad magic)", path)
    try:
        version, k1, b, n_docs, n_terms = struct.unpack_from("<IddII", buf, 4)
        if version != INDEX_VERSION:
            raise FormatError(f"unsupported index version {version}", path)
        pos = 4 + struct.calcsize("<IddII")
        strings = []
        for _ in range(n_docs + n_terms):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            strings.append(buf[pos:pos + n].decode("utf-8"))
            pos += n
        df, pos = _varint.decode(buf, pos, n_terms)
        lengths, pos = _varint.decode(buf, pos, n_docs)
        p_docs, p_tfs = [], []
        for _ in range(n_terms):
            (count,), pos = _varint.decode(buf, pos, 1)
            flat, pos = _varint.decode(buf, pos, 2 * count)
            p_docs.append(np.cumsum(np.array(flat[0::2], dtype=np.int64)))
            p_tfs.append(np.array(flat[1::2], dtype=np.int64))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"corrupt index: {exc}", path) from None
    vocab = Vocabulary(strings[n_docs:], np.array(df, dtype=np.int64), n_docs, int(sum(lengths)))
    return InvertedIndex(vocab, strings[:n_docs], np.array(lengths, dtype=np.int64), p_docs, p_tfs, k1, b)


def _as_documents(X) -> list[Document]:
    docs = []
    for i, x in enumerate(X):
        if isinstance(x, Document):
            docs.append(x)
        elif isinstance(x, str):
            docs.append(Document(str(i), x))
        else:
            doc_id, text = x
            docs.append(Document(str(doc_id), text))
    return docs


class BM25Retriever(BaseEstimator):
    """BM25 retriever with an sklearn-style interface.

    Parameters
    ----------
    k1 : float
        Term-frequency saturation, > 0.
    b : float
        Length normalization strength in [0, 1].

    Attributes
    ----------
    vocabulary_ : Vocabulary
    index_ : InvertedIndex
    documents_ : list of Document
        The fitted collection with token ids attached.
    """

    def __init__(self, k1=DEFAULT_K1, b=DEFAULT_B):
        self.k1 = k1
        self.b = b

    def fit(self, X, y=None):
        """Index a collection.

        ``X`` holds :class:`Document` objects, ``(doc_id, text)`` pairs, or
        bare strings (ids become their positions).
        """
        _check_bm25_params(self.k1, self.b)
        docs = _as_documents(X)
        self.vocabulary_ = build_vocabulary(d.text for d in docs)
        self.documents_ = attach_tokens(docs, self.vocabulary_)
        self.index_ = build_index(self.documents_, self.vocabulary_, self.k1, self.b)
        return self

    @classmethod
    def from_index(cls, index: InvertedIndex, documents=None):
        est = cls(k1=index.k1, b=index.b)
        est.index_ = index
        est.vocabulary_ = index.vocab
        if documents is not None:
            est.documents_ = attach_tokens(documents, index.vocab)
        return est

    def search(self, query, k: int = 1000) -> ScoredList:
        check_is_fitted(self, "index_")
        return search_lexical(self.index_, query, k)

    def score_pairs(self, query, doc_ids) -> np.ndarray:
        check_is_fitted(self, "index_")
        idx = [self.index_.resolve(d) for d in doc_ids]
        return score_documents(self.index_, query, idx)

    def predict(self, queries, k: int = 1000) -> dict[str, ScoredList]:
        """Rank the collection for each :class:`Query`; returns ``{query_id: ranking}``."""
        check_is_fitted(self, "index_")
        return {q.query_id: search_lexical(self.index_, q, k) for q in queries}
