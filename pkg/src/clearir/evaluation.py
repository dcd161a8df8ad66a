"""Rank metrics with trec_eval conventions.

Every metric averages over the queries that have at least one relevant
judgment; a query absent from the run contributes 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import Qrels, _lines, load_qrels
from .exceptions import FormatError, ParameterError
from .ranking import ScoredList

__all__ = [
    "mrr_at_k",
    "recall_at_k",
    "ndcg_at_k",
    "map_at_k",
    "read_run",
    "evaluate",
    "evaluate_run",
    "EvalReport",
    "DEFAULT_METRICS",
]

DEFAULT_METRICS = ("mrr@10", "recall@1000", "ndcg@10", "map@1000")


def _check_k(k):
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ParameterError(f"cutoff k must be a positive integer, got {k!r}")


def _doc_ids(ranking) -> list[str]:
    return [e[0] if isinstance(e, tuple) else e for e in ranking]


def _judged_queries(qrels: Qrels, min_grade: int = 1) -> list[str]:
    return [q for q in qrels.query_ids if qrels.relevant(q, min_grade)]


def _mean(values: dict[str, float]) -> float:
    return sum(values.values()) / len(values) if values else 0.0


def per_query_mrr(run, qrels: Qrels, k: int = 10) -> dict[str, float]:
    _check_k(k)
    out = {}
    for qid in _judged_queries(qrels):
        out[qid] = 0.0
        for rank, did in enumerate(_doc_ids(run.get(qid, []))[:k], 1):
            if qrels.grade(qid, did) > 0:
                out[qid] = 1.0 / rank
                break
    return out


def per_query_recall(run, qrels: Qrels, k: int = 1000) -> dict[str, float]:
    _check_k(k)
    out = {}
    for qid in _judged_queries(qrels):
        rel = qrels.relevant(qid)
        hit = rel.intersection(_doc_ids(run.get(qid, []))[:k])
        out[qid] = len(hit) / len(rel)
    return out


def per_query_ndcg(run, qrels: Qrels, k: int = 10) -> dict[str, float]:
    """Gain ``2**grade - 1``, discount ``log2(rank + 1)``."""
    _check_k(k)
    out = {}
    for qid in _judged_queries(qrels):
        dcg = sum(
            (2 ** qrels.grade(qid, did) - 1) / math.log2(rank + 1)
            for rank, did in enumerate(_doc_ids(run.get(qid, []))[:k], 1)
        )
        ideal = sorted(qrels.judged(qid).values(), reverse=True)[:k]
        idcg = sum((2 ** g - 1) / math.log2(rank + 1) for rank, g in enumerate(ideal, 1))
        out[qid] = dcg / idcg
    return out


def per_query_ap(run, qrels: Qrels, k: int = 1000, rel_cutoff: int = 1) -> dict[str, float]:
    """Average precision at ``k``; grades ``>= rel_cutoff`` count as relevant."""
    _check_k(k)
    out = {}
    for qid in _judged_queries(qrels, rel_cutoff):
        rel = qrels.relevant(qid, rel_cutoff)
        hits = 0
        total = 0.0
        for rank, did in enumerate(_doc_ids(run.get(qid, []))[:k], 1):
            if did in rel:
                hits += 1
                total += hits / rank
        out[qid] = total / len(rel)
    return out


def mrr_at_k(run, qrels: Qrels, k: int = 10) -> float:
    return _mean(per_query_mrr(run, qrels, k))


def recall_at_k(run, qrels: Qrels, k: int = 1000) -> float:
    return _mean(per_query_recall(run, qrels, k))


def ndcg_at_k(run, qrels: Qrels, k: int = 10) -> float:
    return _mean(per_query_ndcg(run, qrels, k))


def map_at_k(run, qrels: Qrels, k: int = 1000, rel_cutoff: int = 1) -> float:
    return _mean(per_query_ap(run, qrels, k, rel_cutoff))


_PER_QUERY = {
    "mrr": per_query_mrr,
    "recall": per_query_recall,
    "ndcg": per_query_ndcg,
    "map": per_query_ap,
}


def parse_metric(name: str) -> tuple[str, int]:
    base, sep, k = name.lower().partition("@")
    if base not in _PER_QUERY:
        raise ParameterError(f"unknown metric {name!r}; choose from {sorted(_PER_QUERY)}")
    if not sep:
        k = {"mrr": "10", "ndcg": "10"}.get(base, "1000")
    try:
        cutoff = int(k)
    except ValueError:
        raise ParameterError(f"bad cutoff in metric {name!r}") from None
    _check_k(cutoff)
    return base, cutoff


@dataclass
class EvalReport:
    aggregate: dict[str, float] = field(default_factory=dict)
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)

    def format(self, per_query: bool = False) -> str:
        lines = []
        if per_query:
            for metric, values in self.per_query.items():
                for qid in sorted(values):
                    lines.append(f"{metric}\t{qid}\t{values[qid]:.6f}")
        lines.extend(f"{m}\t{v:.6f}" for m, v in self.aggregate.items())
        return "\n".join(lines) + "\n"


def evaluate(run: dict[str, ScoredList], qrels: Qrels, metrics=DEFAULT_METRICS,
             map_rel_cutoff: int = 1) -> EvalReport:
    report = EvalReport()
    for name in metrics:
        base, k = parse_metric(name)
        label = f"{base}@{k}"
        if base == "map":
            values = per_query_ap(run, qrels, k, map_rel_cutoff)
        else:
            values = _PER_QUERY[base](run, qrels, k)
        report.per_query[label] = values
        report.aggregate[label] = _mean(values)
    return report


def read_run(path) -> dict[str, ScoredList]:
    """Read a TREC run; each query's entries are ordered by score, then doc id."""
    rows: dict[str, list[tuple[str, float]]] = {}
    seen = set()
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise FormatError(f"expected 6 fields, got {len(parts)}", path, lineno)
        qid, _, did, rank, score, _tag = parts
        try:
            int(rank)
            s = float(score)
        except ValueError:
            raise FormatError("rank must be an integer and score a number", path, lineno) from None
        if (qid, did) in seen:
            raise FormatError(f"duplicate document {did!r} for query {qid!r}", path, lineno)
        seen.add((qid, did))
        rows.setdefault(qid, []).append((did, s))
    return {q: sorted(r, key=lambda e: (-e[1], e[0])) for q, r in rows.items()}


def evaluate_run(run_path, qrels_path, metrics=DEFAULT_METRICS, map_rel_cutoff: int = 1) -> EvalReport:
    return evaluate(read_run(run_path), load_qrels(qrels_path), metrics, map_rel_cutoff)
