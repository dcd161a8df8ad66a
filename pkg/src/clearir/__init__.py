"""Hybrid BM25 + residual-trained embedding retrieval."""
from .corpus import Document, Qrels, Query, Vocabulary, build_vocabulary, tokenize
from .dense import DenseIndex, build_dense_index, search_dense
from .encoder import EmbeddingModel, encode_document, encode_query, init_model, score_emb
from .evaluation import evaluate, map_at_k, mrr_at_k, ndcg_at_k, recall_at_k
from .fusion import ClearRetriever, RetrievalConfig, clear_search, fuse_scores
from .lexical import BM25Retriever, InvertedIndex, bm25_score, build_index, search_lexical
from .training import ResidualEncoder, TrainConfig, residual_margin, train, triplet_loss

__version__ = "0.1.0"

__all__ = [
    "BM25Retriever",
    "ClearRetriever",
    "DenseIndex",
    "Document",
    "EmbeddingModel",
    "InvertedIndex",
    "Qrels",
    "Query",
    "ResidualEncoder",
    "RetrievalConfig",
    "TrainConfig",
    "Vocabulary",
    "bm25_score",
    "build_dense_index",
    "build_index",
    "build_vocabulary",
    "clear_search",
    "encode_document",
    "encode_query",
    "evaluate",
    "fuse_scores",
    "init_model",
    "map_at_k",
    "mrr_at_k",
    "ndcg_at_k",
    "recall_at_k",
    "residual_margin",
    "score_emb",
    "search_dense",
    "search_lexical",
    "tokenize",
    "train",
    "triplet_loss",
]
