"""Ranked-list helpers shared by the retrievers.

A ranking is a list of ``(doc_id, score)`` sorted by score descending,
ties broken by ``doc_id`` ascending.
"""
from __future__ import annotations

import numpy as np

ScoredList = list[tuple[str, float]]


def id_order(doc_ids) -> np.ndarray:
    """Position of each doc id in ascending string order, for tie-breaking."""
    order = np.empty(len(doc_ids), dtype=np.int64)
    order[np.argsort(np.asarray(doc_ids, dtype=object), kind="stable")] = np.arange(len(doc_ids))
    return order


def top_k(scores: np.ndarray, order: np.ndarray, k: int, candidates: np.ndarray | None = None) -> np.ndarray:
    """Indices of the ``k`` best entries of ``scores`` under the ranking tie-break.

    Exact: every entry tied with the k-th score is considered before
    truncation, so the result never depends on partition internals.
    """
    if candidates is None:
        candidates = np.arange(len(scores))
    s = scores[candidates]
    if k < len(s):
        kth = np.partition(s, len(s) - k)[len(s) - k]
        keep = s >= kth
        candidates, s = candidates[keep], s[keep]
    sel = np.lexsort((order[candidates], -s))[:k]
    return candidates[sel]


def sort_entries(entries) -> ScoredList:
    return sorted(((d, float(s)) for d, s in entries), key=lambda e: (-e[1], e[0]))
