"""Ablation benchmark on the synthetic mismatch corpus.

Trains the encoder three ways (residual margin with lexical negatives,
constant margin with lexical negatives, residual margin with random
negatives), fuses each with BM25, and scores all of them plus BM25 alone.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

from .corpus import Qrels, attach_tokens
from .dense import build_dense_index
from .evaluation import mrr_at_k, recall_at_k
from .fusion import RetrievalConfig, clear_search
from .lexical import BM25Retriever, search_lexical
from .synth import SynthConfig, SyntheticCorpus, generate
from .training import TrainConfig, train

log = logging.getLogger(__name__)

VARIANTS = {"clear": "residual", "constant": "constant", "random_neg": "random_neg"}

# An embedding table trained from scratch needs a far larger step than
# fine-tuning a pretrained transformer; a small dim keeps capacity scarce,
# as it is for a real encoder facing a real collection.
BENCH_TRAIN = dict(learning_rate=0.01, epochs=10, dim=16, neg_pool_size=1000, batch_size=28)


@dataclass
class VariantResult:
    run: dict
    mrr10: float
    recall100: float
    recall100_mismatch: float


@dataclass
class AblationResult:
    seed: int
    results: dict[str, VariantResult] = field(default_factory=dict)

    def mrr(self, name) -> float:
        return self.results[name].mrr10


def _subset(qrels: Qrels, qids) -> Qrels:
    keep = set(qids)
    return Qrels({k: g for k, g in qrels.judgments.items() if k[0] in keep})


def _score(run, corpus: SyntheticCorpus) -> VariantResult:
    mism = _subset(corpus.eval_qrels, corpus.eval_mismatch)
    return VariantResult(
        run,
        mrr_at_k(run, corpus.eval_qrels, 10),
        recall_at_k(run, corpus.eval_qrels, 100),
        recall_at_k(run, mism, 100),
    )


def run_ablation(seed: int, synth: SynthConfig | None = None, retrieval: RetrievalConfig | None = None,
                 variants=tuple(VARIANTS), **train_overrides) -> AblationResult:
    corpus = generate(seed, synth)
    retrieval = retrieval or RetrievalConfig()
    bm25 = BM25Retriever().fit(corpus.documents)
    index = bm25.index_
    queries = attach_tokens(corpus.eval_queries, index.vocab)
    out = AblationResult(seed)
    out.results["bm25"] = _score({q.query_id: search_lexical(index, q, 1000) for q in queries}, corpus)
    params = dict(BENCH_TRAIN, seed=seed)
    params.update(train_overrides)
    cfg = TrainConfig(**params)
    for name in variants:
        model, report = train(bm25.documents_, corpus.train_queries, corpus.train_pairs, corpus.train_qrels,
                              index, cfg, VARIANTS[name])
        dense = build_dense_index(model, bm25.documents_)
        run = {q.query_id: clear_search(q, index, dense, model, retrieval) for q in queries}
        out.results[name] = _score(run, corpus)
        log.info("seed %d %s: mrr@10=%.4f (final loss %.4f)", seed, name, out.results[name].mrr10,
                 report.epochs[-1].mean_loss if report.epochs else float("nan"))
    return out


def summary(results: list[AblationResult]) -> str:
    names = list(results[0].results)
    lines = ["seed\t" + "\t".join(names)]
    for r in results:
        lines.append(f"{r.seed}\t" + "\t".join(f"{r.mrr(n):.4f}" for n in names))
    means = [sum(r.mrr(n) for r in results) / len(results) for n in names]
    lines.append("mean\t" + "\t".join(f"{m:.4f}" for m in means))
    return "\n".join(lines)
