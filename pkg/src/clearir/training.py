"""Residual-margin training of the embedding encoder.

Negatives come from the lexical retriever's own top-ranked mistakes, and the
hinge margin grows or shrinks with how badly BM25 ranks the pair, so the
embedding spends its capacity on what exact matching misses.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_scalar
from .config import read_config
from .corpus import Document, Qrels, Query, attach_tokens
from .encoder import (
    DEFAULT_DIM,
    EmbeddingModel,
    encode_document,
    encode_query,
    grad_encode,
    init_model,
    score_emb,
)
from .exceptions import ParameterError, TrainingError
from .lexical import InvertedIndex, score_documents, search_lexical
from .ranking import ScoredList

__all__ = [
    "MODES",
    "TrainConfig",
    "AdamState",
    "TrainingTriplet",
    "TrainingReport",
    "EpochRecord",
    "sample_negative",
    "residual_margin",
    "triplet_loss",
    "constant_margin_loss",
    "adam_step",
    "train",
    "ResidualEncoder",
]

log = logging.getLogger(__name__)

MODES = ("residual", "constant", "random_neg")


@dataclass
class TrainConfig:
    xi: float = 1.0
    lambda_train: float = 0.1
    neg_pool_size: int = 1000
    learning_rate: float = 2e-5
    batch_size: int = 28
    epochs: int = 8
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dim: int = DEFAULT_DIM
    # constant-margin mode only; None means xi
    margin: float | None = None
    # chance a step draws its negative from the lexical pool rather than the
    # whole collection
    sample_prob: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        check_scalar(self.xi, "xi", min_val=0.0)
        check_scalar(self.lambda_train, "lambda_train")
        check_count(self.neg_pool_size, "neg_pool_size")
        check_scalar(self.learning_rate, "learning_rate", min_val=0.0, include_min=False)
        check_count(self.batch_size, "batch_size")
        check_count(self.epochs, "epochs", min_val=0)
        check_count(self.seed, "seed", min_val=0)
        check_scalar(self.adam_beta1, "adam_beta1", min_val=0.0, max_val=1.0, include_max=False)
        check_scalar(self.adam_beta2, "adam_beta2", min_val=0.0, max_val=1.0, include_max=False)
        check_scalar(self.adam_eps, "adam_eps", min_val=0.0, include_min=False)
        check_count(self.dim, "dim")
        if self.margin is not None:
            check_scalar(self.margin, "margin")
        check_scalar(self.sample_prob, "sample_prob", min_val=0.0, max_val=1.0)
        return self

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Read a flat ``key=value`` file; keyword overrides win."""
        known = {f.name: f.type for f in dataclasses.fields(cls)}
        values = read_config(path, known)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, model: EmbeddingModel) -> "AdamState":
        return cls(np.zeros_like(model.table), np.zeros_like(model.table), 0)


@dataclass
class TrainingTriplet:
    query: Query
    pos: Document
    neg: Document
    s_lex_pos: float
    s_lex_neg: float


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    active_hinge_fraction: float
    wall_seconds: float
    fallback_negatives: int = 0


@dataclass
class TrainingReport:
    mode: str
    epochs: list[EpochRecord] = field(default_factory=list)
    # per-triplet losses in training order
    loss_trace: list[float] = field(default_factory=list)

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(dataclasses.asdict(rec)) + "\n")


def _draw_excluding(n_docs: int, exclude: set[int], rng) -> int:
    if len(exclude) >= n_docs:
        raise TrainingError("every document in the collection is relevant; no negative exists")
    while True:
        d = int(rng.integers(n_docs))
        if d not in exclude:
            return d


def sample_negative(query_id: str, qrels: Qrels, lex_top: ScoredList, rng,
                    collection: list[str] | None = None, exclude=()) -> tuple[str, bool]:
    """Draw one negative for ``query_id``.

    Uniform over the entries of ``lex_top`` judged non-relevant. If none
    remain, fall back to a uniform draw over ``collection`` minus the
    relevant documents. Returns ``(doc_id, used_fallback)``.
    """
    relevant = {d for d, g in qrels.judged(query_id).items() if g > 0} | set(exclude)
    pool = [d for d, _ in lex_top if d not in relevant]
    if pool:
        return pool[int(rng.integers(len(pool)))], False
    if collection is None:
        raise TrainingError(f"no non-relevant lexical candidate for query {query_id!r} and no collection to fall back on")
    excl = {i for i, d in enumerate(collection) if d in relevant}
    return collection[_draw_excluding(len(collection), excl, rng)], True


def residual_margin(s_lex_pos: float, s_lex_neg: float, cfg: TrainConfig | None = None) -> float:
    cfg = cfg or TrainConfig()
    return cfg.xi - cfg.lambda_train * (s_lex_pos - s_lex_neg)


def _hinge(margin, s_pos, s_neg) -> float:
    return max(0.0, margin - s_pos + s_neg)


def _emb_scores(model, t: TrainingTriplet) -> tuple[float, float]:
    v_q = encode_query(model, t.query)
    return score_emb(v_q, encode_document(model, t.pos)), score_emb(v_q, encode_document(model, t.neg))


def triplet_loss(t: TrainingTriplet, model: EmbeddingModel, cfg: TrainConfig | None = None) -> float:
    """Hinge loss with the lexical-residual margin."""
    s_pos, s_neg = _emb_scores(model, t)
    return _hinge(residual_margin(t.s_lex_pos, t.s_lex_neg, cfg), s_pos, s_neg)


def constant_margin_loss(t: TrainingTriplet, model: EmbeddingModel, m: float | None = None) -> float:
    """Hinge loss with a fixed margin (``xi`` of the default config when ``m`` is None)."""
    s_pos, s_neg = _emb_scores(model, t)
    return _hinge(TrainConfig().xi if m is None else m, s_pos, s_neg)


def adam_step(model: EmbeddingModel, grads: tuple[np.ndarray, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[EmbeddingModel, AdamState]:
    """Bias-corrected Adam on the rows in ``grads``; updates in place.

    Rows absent from ``grads`` (or with an all-zero gradient) keep their
    parameters and their stale moments.
    """
    rows, g = grads
    rows = np.asarray(rows, dtype=np.int64)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (len(rows), model.dim):
        raise ParameterError(f"gradient shape {g.shape} does not match {len(rows)} rows x dim {model.dim}")
    if not np.all(np.isfinite(g)):
        bad = rows[~np.all(np.isfinite(g), axis=1)]
        raise TrainingError(f"non-finite gradient at step {state.step + 1} in rows {bad[:10].tolist()}")
    nz = np.any(g != 0.0, axis=1)
    rows, g = rows[nz], g[nz]
    if len(rows) == 0:
        return model, state
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * state.m[rows] + (1.0 - b1) * g
    v = b2 * state.v[rows] + (1.0 - b2) * (g * g)
    state.m[rows] = m
    state.v[rows] = v
    m_hat = m / (1.0 - b1 ** state.step)
    v_hat = v / (1.0 - b2 ** state.step)
    model.table[rows] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return model, state


def _accumulate(parts: list[tuple[np.ndarray, np.ndarray]], dim: int, scale: float):
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros((0, dim))
    all_rows = np.concatenate([r for r, _ in parts])
    rows, inverse = np.unique(all_rows, return_inverse=True)
    acc = np.zeros((len(rows), dim))
    np.add.at(acc, inverse, np.concatenate([g for _, g in parts]))
    return rows, acc * scale


def train(documents, queries, pairs, qrels: Qrels, index: InvertedIndex, cfg: TrainConfig | None = None,
          mode: str = "residual", model: EmbeddingModel | None = None) -> tuple[EmbeddingModel, TrainingReport]:
    """Train the encoder on positive ``(query_id, doc_id)`` pairs.

    ``mode`` selects the objective:

    - ``residual``: lexical-pool negatives, residual margin
    - ``constant``: lexical-pool negatives, fixed margin ``cfg.margin`` (or ``xi``)
    - ``random_neg``: negatives uniform over the collection, residual margin
    """
    cfg = (cfg or TrainConfig()).validate()
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if not pairs:
        raise TrainingError("no training pairs")
    vocab = index.vocab
    docs = attach_tokens(documents, vocab)
    if [d.doc_id for d in docs] != list(index.doc_ids):
        raise TrainingError("documents do not match the lexical index collection")
    q_by_id = {q.query_id: q for q in attach_tokens(queries, vocab)}
    resolved = []
    for n, (qid, did) in enumerate(pairs, 1):
        if qid not in q_by_id:
            raise TrainingError(f"pair {n} ({qid}\t{did}): unknown query id {qid!r}")
        if did not in index.doc_index:
            raise TrainingError(f"pair {n} ({qid}\t{did}): unknown doc id {did!r}")
        resolved.append((qid, index.doc_index[did]))

    if model is None:
        model = init_model(cfg.dim, len(vocab), cfg.seed)
    else:
        model = model.copy()
    report = TrainingReport(mode)
    if cfg.epochs == 0:
        return model, report

    rng = np.random.default_rng([cfg.seed, 1])
    n_docs = index.n_docs
    relevant: dict[str, set[int]] = {}
    for qid, d in resolved:
        relevant.setdefault(qid, set()).add(d)
    for qid in relevant:
        for did, g in qrels.judged(qid).items():
            if g > 0 and did in index.doc_index:
                relevant[qid].add(index.doc_index[did])

    # static lexical negative pools: (doc ids, bm25 scores), non-relevant only
    pools: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if mode != "random_neg":
        for qid in relevant:
            top = search_lexical(index, q_by_id[qid], cfg.neg_pool_size)
            ids = np.array([index.doc_index[d] for d, _ in top], dtype=np.int64)
            scores = np.array([s for _, s in top], dtype=np.float64)
            keep = np.array([i not in relevant[qid] for i in ids.tolist()], dtype=bool)
            pools[qid] = (ids[keep], scores[keep])

    margin_const = cfg.xi if cfg.margin is None else cfg.margin
    state = AdamState.zeros_like(model)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(resolved))
        losses: list[float] = []
        active = 0
        fallbacks = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            parts = []
            for j in batch:
                qid, pos = resolved[j]
                q = q_by_id[qid]
                neg, s_neg = None, None
                use_pool = mode != "random_neg"
                if use_pool and cfg.sample_prob < 1.0 and rng.random() >= cfg.sample_prob:
                    use_pool = False
                if use_pool:
                    ids, scores = pools[qid]
                    if len(ids):
                        k = int(rng.integers(len(ids)))
                        neg, s_neg = int(ids[k]), float(scores[k])
                    else:
                        fallbacks += 1
                if neg is None:
                    neg = _draw_excluding(n_docs, relevant[qid], rng)
                    s_neg = float(score_documents(index, q, [neg])[0])
                s_pos = float(score_documents(index, q, [pos])[0])
                t = TrainingTriplet(q, docs[pos], docs[neg], s_pos, s_neg)
                s_emb_pos, s_emb_neg = _emb_scores(model, t)
                if mode == "constant":
                    m = margin_const
                else:
                    m = residual_margin(s_pos, s_neg, cfg)
                loss = _hinge(m, s_emb_pos, s_emb_neg)
                losses.append(loss)
                if loss > 0.0:
                    active += 1
                    parts.append(grad_encode(model, q, t.pos, t.neg, (-1.0, 1.0)))
            grads = _accumulate(parts, model.dim, 1.0 / len(batch))
            adam_step(model, grads, state, cfg)
        rec = EpochRecord(epoch, float(np.mean(losses)), active / len(losses),
                          time.perf_counter() - t0, fallbacks)
        report.epochs.append(rec)
        report.loss_trace.extend(losses)
        log.info("epoch %d mode=%s loss=%.6f active=%.3f", epoch, mode, rec.mean_loss, rec.active_hinge_fraction)
    return model, report


class ResidualEncoder(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    Hyperparameters mirror :class:`TrainConfig`; ``mode`` picks the objective
    (``residual``, ``constant`` or ``random_neg``).

    Attributes
    ----------
    model_ : EmbeddingModel
    report_ : TrainingReport
    """

    def __init__(self, mode="residual", dim=DEFAULT_DIM, xi=1.0, lambda_train=0.1, margin=None,
                 neg_pool_size=1000, learning_rate=2e-5, batch_size=28, epochs=8, sample_prob=1.0,
                 adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8, seed=0):
        self.mode = mode
        self.dim = dim
        self.xi = xi
        self.lambda_train = lambda_train
        self.margin = margin
        self.neg_pool_size = neg_pool_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.sample_prob = sample_prob
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.seed = seed

    def config(self) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, queries, pairs, lexical, qrels: Qrels | None = None, documents=None):
        """Train against a fitted :class:`~clearir.lexical.BM25Retriever` (or a raw index).

        ``documents`` defaults to the retriever's fitted collection.
        """
        index = getattr(lexical, "index_", lexical)
        if documents is None:
            documents = lexical.documents_
        self.model_, self.report_ = train(documents, queries, pairs, qrels or Qrels(), index,
                                          self.config(), self.mode)
        return self

    def transform(self, X):
        """Document vectors for ``X`` (tokenized :class:`Document` objects), shape ``(n, dim)``."""
        check_is_fitted(self, "model_")
        return np.array([encode_document(self.model_, d) for d in X]).reshape(-1, self.model_.dim)

    def encode_queries(self, queries):
        check_is_fitted(self, "model_")
        return np.array([encode_query(self.model_, q) for q in queries]).reshape(-1, self.model_.dim)
