"""Synthetic vocabulary-mismatch collections.

The collection is split into topic clusters. Every topic owns a handful of
concepts and every concept has two disjoint surface forms: the query word
and a synonym. Documents of a *matched* topic are written with the query
words; documents of a *mismatched* topic only ever use the synonyms, so
exact matching cannot reach them. Each mismatched topic is paired with a
matched *decoy* topic whose documents carry its query words as homonyms,
which gives the lexical retriever confident wrong answers. A negative drawn
uniformly from the collection rarely lands in the decoy topic; one drawn
from the lexical top list usually does.

A query names a few concepts of one topic; the relevant documents are the
documents of that topic mentioning all of them.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, Qrels, Query, write_qrels, write_tsv

__all__ = ["SynthConfig", "SyntheticCorpus", "generate", "write_corpus"]

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 2000
    n_train_queries: int = 200
    n_eval_queries: int = 50
    n_topics: int = 30
    concepts_per_topic: int = 6
    concepts_per_doc: int = 4
    query_concepts: int = 3
    max_tf: int = 2
    # chance that a matched-topic document carries homonyms of
    # mismatched-topic query words, and how many
    homonym_rate: float = 0.8
    homonyms_per_doc: int = 3
    n_background: int = 300
    background_per_doc: tuple[int, int] = (4, 8)
    mismatch_fraction: float = 0.5


@dataclass
class SyntheticCorpus:
    documents: list[Document]
    train_queries: list[Query]
    eval_queries: list[Query]
    train_pairs: list[tuple[str, str]]
    train_qrels: Qrels
    eval_qrels: Qrels
    mismatch_queries: set[str] = field(default_factory=set)

    @property
    def eval_mismatch(self) -> list[str]:
        return [q.query_id for q in self.eval_queries if q.query_id in self.mismatch_queries]

    @property
    def eval_match(self) -> list[str]:
        return [q.query_id for q in self.eval_queries if q.query_id not in self.mismatch_queries]


def _words(rng, n: int) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def generate(seed: int = 0, cfg: SynthConfig | None = None) -> SyntheticCorpus:
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    n_concepts = cfg.n_topics * cfg.concepts_per_topic
    vocab = _words(rng, 2 * n_concepts + cfg.n_background)
    query_form = vocab[:n_concepts]
    synonym = vocab[n_concepts:2 * n_concepts]
    background = vocab[2 * n_concepts:]
    bg_p = 1.0 / np.arange(1, cfg.n_background + 1)
    bg_p /= bg_p.sum()

    n_mis_topics = int(round(cfg.mismatch_fraction * cfg.n_topics))
    topic_mismatch = np.zeros(cfg.n_topics, dtype=bool)
    topic_mismatch[rng.permutation(cfg.n_topics)[:n_mis_topics]] = True
    matched_topics = np.flatnonzero(~topic_mismatch)
    # query words of a mismatched topic double as homonyms in its decoy topic
    homonyms: dict[int, list[str]] = {int(t): [] for t in matched_topics}
    decoys = rng.permutation(matched_topics)
    if len(decoys):
        for j, t in enumerate(np.flatnonzero(topic_mismatch).tolist()):
            host = int(decoys[j % len(decoys)])
            homonyms[host].extend(query_form[t * cfg.concepts_per_topic:(t + 1) * cfg.concepts_per_topic])

    doc_topic = np.sort(np.arange(cfg.n_docs) % cfg.n_topics)
    doc_topic = doc_topic[rng.permutation(cfg.n_docs)]
    doc_concepts: list[frozenset[int]] = []
    documents = []
    for i, t in enumerate(doc_topic.tolist()):
        local = rng.choice(cfg.concepts_per_topic, size=cfg.concepts_per_doc, replace=False)
        concepts = t * cfg.concepts_per_topic + np.sort(local)
        forms = synonym if topic_mismatch[t] else query_form
        words = []
        for c in concepts.tolist():
            words.extend([forms[c]] * int(rng.integers(1, cfg.max_tf + 1)))
        pool = homonyms.get(t, [])
        if pool and rng.random() < cfg.homonym_rate:
            k = min(cfg.homonyms_per_doc, len(pool))
            words.extend(pool[j] for j in rng.choice(len(pool), size=k, replace=False).tolist())
        lo, hi = cfg.background_per_doc
        n_bg = int(rng.integers(lo, hi + 1))
        words.extend(background[k] for k in rng.choice(cfg.n_background, size=n_bg, p=bg_p).tolist())
        rng.shuffle(words)
        doc_concepts.append(frozenset(concepts.tolist()))
        documents.append(Document(f"D{i:05d}", " ".join(words)))

    # candidate intents: concept sets of one topic that some document covers
    by_kind: dict[bool, list[tuple[int, tuple[int, ...]]]] = {True: [], False: []}
    for t in range(cfg.n_topics):
        base = t * cfg.concepts_per_topic
        for combo in itertools.combinations(range(base, base + cfg.concepts_per_topic), cfg.query_concepts):
            by_kind[bool(topic_mismatch[t])].append((t, combo))
    n_q = cfg.n_train_queries + cfg.n_eval_queries
    n_mis_q = int(round(cfg.mismatch_fraction * n_q))
    chosen = []
    for kind, count in ((True, n_mis_q), (False, n_q - n_mis_q)):
        cands = by_kind[kind]
        picked = 0
        for j in rng.permutation(len(cands)).tolist():
            t, combo = cands[j]
            rel = [i for i in np.flatnonzero(doc_topic == t).tolist() if doc_concepts[i].issuperset(combo)]
            if rel:
                chosen.append((kind, combo, rel))
                picked += 1
                if picked == count:
                    break
        if picked < count:
            raise ValueError("not enough distinct query intents; enlarge the topic vocabulary")
    chosen = [chosen[j] for j in rng.permutation(len(chosen)).tolist()]

    queries, pairs, mismatch_ids = [], [], set()
    train_qrels, eval_qrels = Qrels(), Qrels()
    for j, (kind, combo, rel) in enumerate(chosen):
        words = [query_form[c] for c in combo]
        rng.shuffle(words)
        qid = f"Q{j:04d}"
        queries.append(Query(qid, " ".join(words)))
        if kind:
            mismatch_ids.add(qid)
        train = j < cfg.n_train_queries
        for i in rel:
            did = documents[i].doc_id
            (train_qrels if train else eval_qrels).add(qid, did, 1)
            if train:
                pairs.append((qid, did))
    return SyntheticCorpus(
        documents,
        queries[:cfg.n_train_queries],
        queries[cfg.n_train_queries:],
        pairs,
        train_qrels,
        eval_qrels,
        mismatch_ids,
    )


def write_corpus(corpus: SyntheticCorpus, out_dir):
    """Write the corpus as the standard TSV / qrels files; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "collection": os.path.join(out_dir, "collection.tsv"),
        "train_queries": os.path.join(out_dir, "train_queries.tsv"),
        "eval_queries": os.path.join(out_dir, "eval_queries.tsv"),
        "train_pairs": os.path.join(out_dir, "train_pairs.tsv"),
        "train_qrels": os.path.join(out_dir, "train_qrels.txt"),
        "eval_qrels": os.path.join(out_dir, "eval_qrels.txt"),
        "eval_mismatch": os.path.join(out_dir, "eval_mismatch.txt"),
    }
    write_tsv(paths["collection"], [(d.doc_id, d.text) for d in corpus.documents])
    write_tsv(paths["train_queries"], [(q.query_id, q.text) for q in corpus.train_queries])
    write_tsv(paths["eval_queries"], [(q.query_id, q.text) for q in corpus.eval_queries])
    write_tsv(paths["train_pairs"], corpus.train_pairs)
    write_qrels(paths["train_qrels"], corpus.train_qrels)
    write_qrels(paths["eval_qrels"], corpus.eval_qrels)
    with open(paths["eval_mismatch"], "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{q}\n" for q in corpus.eval_mismatch)
    return paths
