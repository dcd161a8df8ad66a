"""Siamese bag-of-embeddings encoder.

One embedding table serves both sides. A text is encoded as the mean of its
special-token row and the rows of its in-vocabulary tokens; relevance is the
dot product of the two vectors.
"""
from __future__ import annotations

import hashlib
import math
import struct

import numpy as np

from ._validation import check_count
from .corpus import Document, Query
from .exceptions import FormatError, ParameterError

__all__ = [
    "EmbeddingModel",
    "init_model",
    "encode_query",
    "encode_document",
    "encode_tokens",
    "score_emb",
    "grad_encode",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"CLEM"
MODEL_VERSION = 1
DEFAULT_DIM = 128


class EmbeddingModel:
    """Embedding table of shape ``(vocab_size + 2, dim)``.

    The last two rows are the query and document marker tokens.
    """

    def __init__(self, table: np.ndarray, vocab_size: int, seed: int = 0):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != vocab_size + 2 or table.shape[1] < 1:
            raise ParameterError(f"table shape {table.shape} does not fit vocab_size={vocab_size}")
        self.table = table
        self.vocab_size = int(vocab_size)
        self.seed = int(seed)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def qry_row(self) -> int:
        return self.vocab_size

    @property
    def doc_row(self) -> int:
        return self.vocab_size + 1

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.table.copy(), self.vocab_size, self.seed)

    def fingerprint(self) -> int:
        """64-bit hash of the parameters as persisted (float32)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<II", self.dim, self.vocab_size))
        h.update(self.table.astype("<f4").tobytes())
        return int.from_bytes(h.digest(), "little")

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingModel)
            and self.vocab_size == other.vocab_size
            and np.array_equal(self.table, other.table)
        )


def init_model(dim: int, vocab_size: int, seed: int = 0) -> EmbeddingModel:
    """Uniform init in ``[-1/sqrt(dim), 1/sqrt(dim)]`` from a seeded generator."""
    check_count(dim, "dim")
    check_count(vocab_size, "vocab_size", min_val=0)
    bound = 1.0 / math.sqrt(dim)
    rng = np.random.default_rng(seed)
    table = rng.uniform(-bound, bound, size=(vocab_size + 2, dim))
    return EmbeddingModel(table, vocab_size, seed)


def pooled_rows(model: EmbeddingModel, tokens, special: int) -> np.ndarray:
    """Row ids averaged for a text: the marker row, then in-vocabulary tokens."""
    toks = np.asarray(tokens, dtype=np.int64)
    toks = toks[(toks >= 0) & (toks < model.vocab_size)]
    return np.concatenate(([special], toks))


def encode_tokens(model: EmbeddingModel, tokens, special: int) -> np.ndarray:
    return model.table[pooled_rows(model, tokens, special)].mean(axis=0)


def _tokens(item):
    return item.tokens if isinstance(item, (Query, Document)) else item


def encode_query(model: EmbeddingModel, query) -> np.ndarray:
    return encode_tokens(model, _tokens(query), model.qry_row)


def encode_document(model: EmbeddingModel, doc) -> np.ndarray:
    return encode_tokens(model, _tokens(doc), model.doc_row)


def score_emb(v_q, v_d) -> float:
    v_q = np.asarray(v_q, dtype=np.float64)
    v_d = np.asarray(v_d, dtype=np.float64)
    if v_q.shape != v_d.shape:
        raise ParameterError(f"dimension mismatch: {v_q.shape} vs {v_d.shape}")
    return float(v_q @ v_d)


def grad_encode(model: EmbeddingModel, query, pos, neg, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of a triplet objective w.r.t. the embedding table.

    ``upstream = (dL/ds_pos, dL/ds_neg)`` where ``s_pos``/``s_neg`` are the
    query's dot products with the positive and negative documents.

    Returns ``(rows, grads)``: the sorted unique touched row ids and a
    ``(len(rows), dim)`` array. Rows that occur more than once (repeated
    tokens, or shared between texts) accumulate.
    """
    g_pos, g_neg = (float(u) for u in upstream)
    rq = pooled_rows(model, _tokens(query), model.qry_row)
    rp = pooled_rows(model, _tokens(pos), model.doc_row)
    rn = pooled_rows(model, _tokens(neg), model.doc_row)
    t = model.table
    vq, vp, vn = t[rq].mean(axis=0), t[rp].mean(axis=0), t[rn].mean(axis=0)
    # dL/dv for each side, spread evenly over the pooled rows
    dq = (g_pos * vp + g_neg * vn) / len(rq)
    dp = (g_pos * vq) / len(rp)
    dn = (g_neg * vq) / len(rn)
    all_rows = np.concatenate((rq, rp, rn))
    rows, inverse = np.unique(all_rows, return_inverse=True)
    contrib = np.concatenate((
        np.broadcast_to(dq, (len(rq), model.dim)),
        np.broadcast_to(dp, (len(rp), model.dim)),
        np.broadcast_to(dn, (len(rn), model.dim)),
    ))
    grads = np.zeros((len(rows), model.dim))
    np.add.at(grads, inverse, contrib)
    return rows, grads


def save_model(model: EmbeddingModel, path):
    """``b"CLEM" | u32 version | u32 dim | u32 vocab_size | i64 seed | f32 table``, little-endian."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IIIq", MODEL_VERSION, model.dim, model.vocab_size, model.seed))
        fh.write(model.table.astype("<f4").tobytes())


def load_model(path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MODEL_MAGIC:
        raise FormatError("not an embedding model (bad magic)", path)
    head = struct.calcsize("<IIIq")
    version, dim, vocab_size, seed = struct.unpack_from("<IIIq", buf, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", path)
    expected = (vocab_size + 2) * dim * 4
    body = buf[4 + head:]
    if len(body) != expected:
        raise FormatError(f"table has {len(body)} bytes, expected {expected}", path)
    table = np.frombuffer(body, dtype="<f4").reshape(vocab_size + 2, dim).astype(np.float64)
    return EmbeddingModel(table, vocab_size, seed)
