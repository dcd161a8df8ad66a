"""Exact maximum-inner-product search over precomputed document vectors."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ._validation import check_count
from .encoder import EmbeddingModel, encode_document
from .exceptions import FormatError, ParameterError, StaleIndexError
from .ranking import ScoredList, id_order, top_k

__all__ = ["DenseIndex", "DenseSearcher", "ExactSearcher", "build_dense_index", "search_dense",
           "save_dense_index", "load_dense_index"]

DENSE_MAGIC = b"CLDX"
DENSE_VERSION = 1
BLOCK_ROWS = 4096


def _row_dots(mat, v_q) -> np.ndarray:
    # elementwise product + row sum: each row's result is independent of
    # how many rows are scored together
    return (mat.astype(np.float64) * v_q).sum(axis=1)


@dataclass
class DenseIndex:
    """Document vectors stored as float32; scores accumulate in float64."""

    vectors: np.ndarray
    doc_ids: list[str]
    model_fingerprint: int
    order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.doc_ids):
            raise ParameterError("vector rows must match doc_ids")
        self.order = id_order(self.doc_ids)

    @property
    def n_docs(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def scores(self, v_q, rows=None) -> np.ndarray:
        v_q = np.asarray(v_q, dtype=np.float64)
        if v_q.shape != (self.dim,):
            raise ParameterError(f"query vector has shape {v_q.shape}, index dim is {self.dim}")
        mat = self.vectors if rows is None else self.vectors[rows]
        return _row_dots(mat, v_q)


class DenseSearcher(Protocol):
    """Backend slot for top-k inner-product search over a :class:`DenseIndex`.

    Approximate backends may implement this; the bundled one is exact.
    """

    def search(self, index: DenseIndex, v_q: np.ndarray, k: int) -> ScoredList: ...


class ExactSearcher:
    """Blocked full scan; per-block top-k candidates merged exactly."""

    def __init__(self, block_rows: int = BLOCK_ROWS):
        self.block_rows = check_count(block_rows, "block_rows")

    def search(self, index: DenseIndex, v_q, k: int) -> ScoredList:
        v_q = np.asarray(v_q, dtype=np.float64)
        if v_q.shape != (index.dim,):
            raise ParameterError(f"query vector has shape {v_q.shape}, index dim is {index.dim}")
        all_scores = np.empty(index.n_docs)
        keep = []
        for start in range(0, index.n_docs, self.block_rows):
            stop = min(start + self.block_rows, index.n_docs)
            all_scores[start:stop] = _row_dots(index.vectors[start:stop], v_q)
            keep.append(top_k(all_scores, index.order, k, np.arange(start, stop)))
        if not keep:
            return []
        best = top_k(all_scores, index.order, k, np.concatenate(keep))
        return [(index.doc_ids[i], float(all_scores[i])) for i in best]


def build_dense_index(model: EmbeddingModel, docs) -> DenseIndex:
    docs = list(docs)
    vectors = np.zeros((len(docs), model.dim), dtype=np.float32)
    for i, doc in enumerate(docs):
        vectors[i] = encode_document(model, doc)
    return DenseIndex(vectors, [d.doc_id for d in docs], model.fingerprint())


def search_dense(index: DenseIndex, v_q, k: int, fingerprint: int | None = None,
                 searcher: DenseSearcher | None = None) -> ScoredList:
    """Exact top-``k`` documents by dot product with ``v_q``.

    When ``fingerprint`` is given it must match the fingerprint of the model
    the index was built with.
    """
    check_count(k, "k")
    if fingerprint is not None and fingerprint != index.model_fingerprint:
        raise StaleIndexError(
            f"dense index built for model {index.model_fingerprint:016x}, queried with {fingerprint:016x}"
        )
    return (searcher or ExactSearcher()).search(index, v_q, k)


def save_dense_index(index: DenseIndex, path):
    """``b"CLDX" | u32 version | u32 n | u32 dim | u64 fingerprint | f32 rows``
    followed by ``n x (u32 len, utf-8 doc_id)``; little-endian."""
    with open(path, "wb") as fh:
        fh.write(DENSE_MAGIC)
        fh.write(struct.pack("<IIIQ", DENSE_VERSION, index.n_docs, index.dim, index.model_fingerprint))
        fh.write(index.vectors.astype("<f4").tobytes())
        for d in index.doc_ids:
            raw = d.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)


def load_dense_index(path) -> DenseIndex:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != DENSE_MAGIC:
        raise FormatError("not a dense index (bad magic)", path)
    version, n, dim, fp = struct.unpack_from("<IIIQ", buf, 4)
    if version != DENSE_VERSION:
        raise FormatError(f"unsupported dense index version {version}", path)
    pos = 4 + struct.calcsize("<IIIQ")
    nbytes = n * dim * 4
    if len(buf) < pos + nbytes:
        raise FormatError("truncated vector block", path)
    vectors = np.frombuffer(buf[pos:pos + nbytes], dtype="<f4").reshape(n, dim)
    pos += nbytes
    ids = []
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            ids.append(buf[pos:pos + ln].decode("utf-8"))
            pos += ln
    except struct.error:
        raise FormatError("truncated doc id table", path) from None
    return DenseIndex(vectors.astype(np.float32), ids, fp)
