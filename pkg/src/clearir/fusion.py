"""Hybrid retrieval: union the lexical and dense candidates, rescore each with
both models, and rank by ``lambda_test * bm25 + dot``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_scalar
from .corpus import Qrels, Query, attach_tokens
from .dense import DenseIndex, build_dense_index, search_dense
from .encoder import EmbeddingModel, encode_query
from .exceptions import ParameterError
from .lexical import BM25Retriever, InvertedIndex, score_documents, search_lexical
from .ranking import ScoredList, top_k
from .training import ResidualEncoder

__all__ = ["RetrievalConfig", "fuse_scores", "fusion_candidates", "clear_search", "ClearRetriever",
           "write_run"]


@dataclass
class RetrievalConfig:
    lambda_test: float = 0.5
    k_lex: int = 1000
    k_emb: int = 1000
    k_final: int = 1000

    def __post_init__(self):
        check_scalar(self.lambda_test, "lambda_test")
        check_count(self.k_lex, "k_lex")
        check_count(self.k_emb, "k_emb")
        check_count(self.k_final, "k_final")


def fuse_scores(s_lex, s_emb, lambda_test):
    return lambda_test * s_lex + s_emb


def _check_same_collection(index: InvertedIndex, dense: DenseIndex):
    if list(index.doc_ids) != list(dense.doc_ids):
        raise ParameterError("lexical and dense indexes were built over different collections")


def _query(index: InvertedIndex, query) -> Query:
    if isinstance(query, str):
        query = Query("", query)
    return attach_tokens([query], index.vocab)[0]


def fusion_candidates(query, index: InvertedIndex, dense: DenseIndex, model: EmbeddingModel,
                      cfg: RetrievalConfig | None = None):
    """Union of both retrievers' top lists with exact component scores.

    Returns ``(internal ids, s_lex, s_emb)`` with ids ascending. A candidate
    found by only one retriever still receives its true score from the other.
    """
    cfg = cfg or RetrievalConfig()
    _check_same_collection(index, dense)
    q = _query(index, query)
    v_q = encode_query(model, q)
    lex = search_lexical(index, q, cfg.k_lex)
    emb = search_dense(dense, v_q, cfg.k_emb, model.fingerprint())
    ids = {index.doc_index[d] for d, _ in lex}
    ids.update(index.doc_index[d] for d, _ in emb)
    cand = np.array(sorted(ids), dtype=np.int64)
    return cand, score_documents(index, q, cand), dense.scores(v_q, cand)


def clear_search(query, index: InvertedIndex, dense: DenseIndex, model: EmbeddingModel,
                 cfg: RetrievalConfig | None = None) -> ScoredList:
    cfg = cfg or RetrievalConfig()
    cand, s_lex, s_emb = fusion_candidates(query, index, dense, model, cfg)
    fused = np.full(index.n_docs, -np.inf)
    fused[cand] = fuse_scores(s_lex, s_emb, cfg.lambda_test)
    best = top_k(fused, index.order, cfg.k_final, cand)
    return [(index.doc_ids[i], float(fused[i])) for i in best]


def write_run(path, run: dict[str, ScoredList], tag: str = "clear"):
    """TREC run file: ``qid Q0 docid rank score tag``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, ranking in run.items():
            for rank, (did, score) in enumerate(ranking, 1):
                fh.write(f"{qid} Q0 {did} {rank} {score:.6f} {tag}\n")


class ClearRetriever(BaseEstimator):
    """Lexical + embedding retriever composed from two estimators.

    Parameters
    ----------
    lexical : BM25Retriever, optional
        Unfitted template; cloned on fit. Defaults to ``BM25Retriever()``.
    encoder : ResidualEncoder, optional
        Unfitted template; cloned on fit. Defaults to ``ResidualEncoder()``.
    lambda_test : float
        Weight of the BM25 score in the fused score.
    k_lex, k_emb, k_final : int
        Depth of each component search and of the returned ranking.

    Attributes
    ----------
    lexical_ : fitted BM25Retriever
    encoder_ : fitted ResidualEncoder (absent when built from parts)
    model_ : EmbeddingModel
    dense_index_ : DenseIndex
    """

    def __init__(self, lexical=None, encoder=None, lambda_test=0.5, k_lex=1000, k_emb=1000, k_final=1000):
        self.lexical = lexical
        self.encoder = encoder
        self.lambda_test = lambda_test
        self.k_lex = k_lex
        self.k_emb = k_emb
        self.k_final = k_final

    def fit(self, documents, queries, pairs, qrels: Qrels | None = None):
        """Index ``documents``, train the encoder on ``pairs``, and build the dense index."""
        self.retrieval_config()
        self.lexical_ = clone(self.lexical if self.lexical is not None else BM25Retriever()).fit(documents)
        self.encoder_ = clone(self.encoder if self.encoder is not None else ResidualEncoder())
        self.encoder_.fit(queries, pairs, self.lexical_, qrels)
        self.model_ = self.encoder_.model_
        self.dense_index_ = build_dense_index(self.model_, self.lexical_.documents_)
        return self

    @classmethod
    def from_parts(cls, index: InvertedIndex, model: EmbeddingModel, dense: DenseIndex | None = None,
                   documents=None, **params):
        """Wrap already built indexes and a trained model."""
        est = cls(**params)
        est.lexical_ = BM25Retriever.from_index(index, documents)
        est.model_ = model
        if dense is None:
            if documents is None:
                raise ParameterError("documents are required to build the dense index")
            dense = build_dense_index(model, est.lexical_.documents_)
        _check_same_collection(index, dense)
        est.dense_index_ = dense
        return est

    def retrieval_config(self, **overrides) -> RetrievalConfig:
        params = dict(lambda_test=self.lambda_test, k_lex=self.k_lex, k_emb=self.k_emb, k_final=self.k_final)
        params.update(overrides)
        return RetrievalConfig(**params)

    def search(self, query, **overrides) -> ScoredList:
        check_is_fitted(self, "dense_index_")
        return clear_search(query, self.lexical_.index_, self.dense_index_, self.model_,
                            self.retrieval_config(**overrides))

    def search_dense(self, query, k=None) -> ScoredList:
        check_is_fitted(self, "dense_index_")
        q = _query(self.lexical_.index_, query)
        return search_dense(self.dense_index_, encode_query(self.model_, q), k or self.k_emb,
                            self.model_.fingerprint())

    def predict(self, queries, **overrides) -> dict[str, ScoredList]:
        """Fused rankings for each :class:`Query`, keyed by query id."""
        cfg = self.retrieval_config(**overrides)
        check_is_fitted(self, "dense_index_")
        index = self.lexical_.index_
        return {q.query_id: clear_search(q, index, self.dense_index_, self.model_, cfg) for q in queries}
