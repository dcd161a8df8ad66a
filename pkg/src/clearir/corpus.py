"""Collections, queries, relevance judgments and the shared vocabulary.

Both retrievers read the same token stream: lowercase runs of Unicode
letters and digits, with no stemming or stopword removal.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import EmptyCollectionError, FormatError

__all__ = [
    "OOV_ID",
    "Document",
    "Query",
    "Qrels",
    "Vocabulary",
    "tokenize",
    "build_vocabulary",
    "attach_tokens",
    "load_collection",
    "load_queries",
    "load_qrels",
    "load_pairs",
]

# Reserved id for tokens absent from the vocabulary. Ignored by BM25 and
# excluded from embedding pooling.
OOV_ID = -1

_ALNUM_RUN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercase alphanumeric runs.

    >>> tokenize("Weather in Danville, CA")
    ['weather', 'in', 'danville', 'ca']
    """
    return _ALNUM_RUN.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    tokens: tuple[int, ...] = ()


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    tokens: tuple[int, ...] = ()


@dataclass
class Vocabulary:
    """Token/id mapping plus the collection statistics BM25 needs.

    ``df[i]`` is the number of documents containing token ``i``;
    ``total_length`` is the summed token count over all documents.
    """

    tokens: list[str]
    df: np.ndarray
    doc_count: int
    total_length: int
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.df = np.asarray(self.df, dtype=np.int64)
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.token_to_id

    @property
    def avg_doc_len(self) -> float:
        return self.total_length / self.doc_count

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, OOV_ID)

    def encode(self, text: str) -> tuple[int, ...]:
        """Tokenize ``text`` and map every token to its id (``OOV_ID`` if unseen)."""
        get = self.token_to_id.get
        return tuple(get(t, OOV_ID) for t in tokenize(text))

    def df_of(self, token: str) -> int:
        i = self.token_to_id.get(token)
        return 0 if i is None else int(self.df[i])


def build_vocabulary(texts: Iterable[str]) -> Vocabulary:
    """Build the vocabulary and collection statistics from document texts.

    Ids are assigned in first-occurrence order over ``texts``. Document
    frequencies count each document at most once per token.

    Raises
    ------
    EmptyCollectionError
        If ``texts`` yields no documents.
    """
    token_to_id: dict[str, int] = {}
    df: list[int] = []
    n_docs = 0
    total = 0
    for text in texts:
        toks = tokenize(text)
        n_docs += 1
        total += len(toks)
        for tok in dict.fromkeys(toks):
            i = token_to_id.get(tok)
            if i is None:
                token_to_id[tok] = len(df)
                df.append(1)
            else:
                df[i] += 1
    if n_docs == 0:
        raise EmptyCollectionError()
    return Vocabulary(list(token_to_id), np.array(df, dtype=np.int64), n_docs, total)


def attach_tokens(items, vocab: Vocabulary):
    """Return copies of documents or queries with ``tokens`` filled from ``vocab``."""
    out = []
    for item in items:
        ids = vocab.encode(item.text)
        if isinstance(item, Document):
            out.append(Document(item.doc_id, item.text, ids))
        else:
            out.append(Query(item.query_id, item.text, ids))
    return out


class Qrels:
    """Graded relevance judgments; unjudged pairs have grade 0."""

    def __init__(self, judgments: dict[tuple[str, str], int] | None = None):
        self._by_query: dict[str, dict[str, int]] = {}
        for (qid, did), grade in (judgments or {}).items():
            self.add(qid, did, grade)

    def add(self, query_id: str, doc_id: str, grade: int):
        grade = int(grade)
        if grade < 0:
            raise ValueError(f"negative relevance grade {grade} for ({query_id}, {doc_id})")
        self._by_query.setdefault(query_id, {})[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._by_query.get(query_id, {}).get(doc_id, 0)

    def judged(self, query_id: str) -> dict[str, int]:
        return self._by_query.get(query_id, {})

    def relevant(self, query_id: str, min_grade: int = 1) -> set[str]:
        return {d for d, g in self.judged(query_id).items() if g >= min_grade}

    @property
    def query_ids(self) -> list[str]:
        return list(self._by_query)

    @property
    def judgments(self) -> dict[tuple[str, str], int]:
        return {(q, d): g for q, docs in self._by_query.items() for d, g in docs.items()}

    def __len__(self):
        return sum(len(v) for v in self._by_query.values())

    def __eq__(self, other):
        return isinstance(other, Qrels) and self.judgments == other.judgments


def _lines(path) -> Iterator[tuple[int, str]]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path}: no such file")
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def _read_tsv_pairs(path, what: str) -> Iterator[tuple[int, str, str]]:
    for lineno, line in _lines(path):
        key, sep, value = line.partition("\t")
        if not sep or not key:
            raise FormatError(f"expected '<id>\\t<{what}>'", path, lineno)
        yield lineno, key, value


def _check_unique(path, lineno, key, seen, kind):
    if key in seen:
        raise FormatError(f"duplicate {kind} {key!r} (first on line {seen[key]})", path, lineno)
    seen[key] = lineno


def load_collection(path) -> list[Document]:
    """Read ``doc_id<TAB>text`` records."""
    seen: dict[str, int] = {}
    docs = []
    for lineno, doc_id, text in _read_tsv_pairs(path, "text"):
        _check_unique(path, lineno, doc_id, seen, "doc_id")
        docs.append(Document(doc_id, text))
    return docs


def load_queries(path) -> list[Query]:
    """Read ``query_id<TAB>text`` records."""
    seen: dict[str, int] = {}
    queries = []
    for lineno, qid, text in _read_tsv_pairs(path, "text"):
        _check_unique(path, lineno, qid, seen, "query_id")
        queries.append(Query(qid, text))
    return queries


def load_qrels(path) -> Qrels:
    """Read TREC qrels: ``qid 0 docid grade`` separated by whitespace."""
    qrels = Qrels()
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields, got {len(parts)}", path, lineno)
        qid, _, did, grade = parts
        try:
            g = int(grade)
        except ValueError:
            raise FormatError(f"non-integer grade {grade!r}", path, lineno) from None
        if g < 0:
            raise FormatError(f"negative grade {g}", path, lineno)
        qrels.add(qid, did, g)
    return qrels


def load_pairs(path) -> list[tuple[str, str]]:
    """Read positive training pairs ``query_id<TAB>doc_id``."""
    pairs = []
    for lineno, qid, did in _read_tsv_pairs(path, "doc_id"):
        if not did or "\t" in did:
            raise FormatError("expected exactly two tab-separated fields", path, lineno)
        pairs.append((qid, did))
    return pairs


def write_tsv(path, rows: Sequence[tuple[str, str]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in rows:
            fh.write(f"{a}\t{b}\n")


def write_qrels(path, qrels: Qrels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (qid, did), g in qrels.judgments.items():
            fh.write(f"{qid} 0 {did} {g}\n")
