"""Command line front-end.

Subcommands: index, train, encode, search, sweep, eval, synth, bench.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import __version__
from .config import read_config
from .corpus import Qrels, attach_tokens, load_collection, load_pairs, load_qrels, load_queries
from .dense import build_dense_index, load_dense_index, save_dense_index, search_dense
from .encoder import encode_query, load_model, save_model
from .evaluation import DEFAULT_METRICS, evaluate, evaluate_run, parse_metric
from .exceptions import ClearError, ParameterError
from .fusion import RetrievalConfig, clear_search, write_run
from .lexical import BM25Retriever, load_index, save_index, search_lexical
from .training import MODES, TrainConfig, train

log = logging.getLogger("clearir")

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


def _load_lexical(path, k1=None, b=None):
    index = load_index(path)
    if k1 is not None or b is not None:
        index = index.with_params(k1, b)
    return index


def cmd_index(args):
    docs = load_collection(args.collection)
    est = BM25Retriever(k1=args.k1, b=args.b).fit(docs)
    save_index(est.index_, args.out)
    log.info("indexed %d documents, %d terms -> %s", est.index_.n_docs, len(est.vocabulary_), args.out)


def _train_config(args) -> TrainConfig:
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "dim": args.dim,
        "xi": args.xi,
        "lambda_train": args.lambda_train,
        "neg_pool_size": args.neg_pool_size,
        "margin": args.margin,
    }
    if args.config:
        return TrainConfig.from_file(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args):
    cfg = _train_config(args)
    index = _load_lexical(args.index)
    model, report = train(
        load_collection(args.collection),
        load_queries(args.queries),
        load_pairs(args.pairs),
        load_qrels(args.qrels) if args.qrels else Qrels(),
        index,
        cfg,
        args.mode,
    )
    save_model(model, args.out)
    if args.report:
        report.write(args.report)
    for rec in report.epochs:
        log.info("epoch %d loss %.6f active %.3f", rec.epoch, rec.mean_loss, rec.active_hinge_fraction)


def cmd_encode(args):
    model = load_model(args.model)
    docs = load_collection(args.collection)
    if args.index:
        vocab = load_index(args.index).vocab
    else:
        vocab = BM25Retriever().fit(docs).vocabulary_
    if len(vocab) != model.vocab_size:
        raise ParameterError(f"model vocabulary ({model.vocab_size}) does not match collection ({len(vocab)})")
    dense = build_dense_index(model, attach_tokens(docs, vocab))
    save_dense_index(dense, args.out)
    log.info("encoded %d documents -> %s", dense.n_docs, args.out)


def _retrieval_config(args) -> RetrievalConfig:
    values = {}
    if args.config:
        known = {f.name: f.type for f in dataclasses.fields(RetrievalConfig)}
        values.update(read_config(args.config, known))
    for key in ("lambda_test", "k_lex", "k_emb"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    if getattr(args, "k", None) is not None:
        values["k_final"] = args.k
    return RetrievalConfig(**values)


def _search_inputs(args):
    index = _load_lexical(args.index, args.k1, args.b)
    queries = attach_tokens(load_queries(args.queries), index.vocab)
    model = dense = None
    if not getattr(args, "lexical_only", False):
        model = load_model(args.model) if args.model else None
        dense = load_dense_index(args.dense) if args.dense else None
        if model is None or dense is None:
            raise ParameterError("--model and --dense are required unless --lexical-only is given")
    return index, queries, model, dense


def _run(index, queries, model, dense, cfg, which="clear"):
    if which == "lexical":
        return {q.query_id: search_lexical(index, q, cfg.k_final) for q in queries}
    if which == "dense":
        fp = model.fingerprint()
        return {q.query_id: search_dense(dense, encode_query(model, q), cfg.k_final, fp) for q in queries}
    return {q.query_id: clear_search(q, index, dense, model, cfg) for q in queries}


def cmd_search(args):
    if args.lexical_only and args.dense_only:
        raise ParameterError("--lexical-only and --dense-only are mutually exclusive")
    cfg = _retrieval_config(args)
    index, queries, model, dense = _search_inputs(args)
    which = "lexical" if args.lexical_only else "dense" if args.dense_only else "clear"
    run = _run(index, queries, model, dense, cfg, which)
    write_run(args.out, run, args.tag or which)
    log.info("wrote %s run for %d queries -> %s", which, len(run), args.out)


def cmd_sweep(args):
    base = _retrieval_config(args)
    index, queries, model, dense = _search_inputs(args)
    qrels = load_qrels(args.qrels)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(DEFAULT_GRID)
    base_metric, k = parse_metric(args.metric)
    label = f"{base_metric}@{k}"
    best = None
    out = [f"lambda_test\t{label}"]
    for lam in grid:
        cfg = dataclasses.replace(base, lambda_test=lam)
        value = evaluate(_run(index, queries, model, dense, cfg), qrels, [label]).aggregate[label]
        out.append(f"{lam:g}\t{value:.6f}")
        if best is None or value > best[1]:
            best = (lam, value)
    out.append(f"best\t{best[0]:g}")
    print("\n".join(out))


def cmd_eval(args):
    metrics = args.metrics.split(",") if args.metrics else list(DEFAULT_METRICS)
    report = evaluate_run(args.run, args.qrels, metrics, args.map_rel_cutoff)
    sys.stdout.write(report.format(per_query=args.per_query))


def cmd_synth(args):
    from .synth import SynthConfig, generate, write_corpus

    cfg = SynthConfig(n_docs=args.n_docs, n_train_queries=args.n_train, n_eval_queries=args.n_eval)
    paths = write_corpus(generate(args.seed, cfg), args.out_dir)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def cmd_bench(args):
    from .experiment import run_ablation, summary

    seeds = range(args.seed, args.seed + args.seeds)
    print(summary([run_ablation(s) for s in seeds]))


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (commands that sample)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="clearir", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("index", parents=[common], help="build the vocabulary and BM25 index")
    s.add_argument("--collection", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k1", type=float, default=0.82)
    s.add_argument("--b", type=float, default=0.68)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("train", parents=[common], help="train the embedding encoder")
    s.add_argument("--collection", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--qrels")
    s.add_argument("--index", required=True)
    s.add_argument("--out", required=True, help="model file")
    s.add_argument("--report", help="per-epoch JSON lines")
    s.add_argument("--config", help="key=value training config; flags win")
    s.add_argument("--mode", choices=MODES, default="residual")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--xi", type=float)
    s.add_argument("--lambda-train", type=float)
    s.add_argument("--neg-pool-size", type=int)
    s.add_argument("--margin", type=float, help="constant mode margin (default: xi)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("encode", parents=[common], help="build the dense document index")
    s.add_argument("--model", required=True)
    s.add_argument("--collection", required=True)
    s.add_argument("--index", help="lexical index whose vocabulary the model uses")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    def retrieval_flags(s):
        s.add_argument("--index", required=True)
        s.add_argument("--dense")
        s.add_argument("--model")
        s.add_argument("--queries", required=True)
        s.add_argument("--config", help="key=value retrieval config; flags win")
        s.add_argument("--lambda-test", type=float)
        s.add_argument("--k-lex", type=int)
        s.add_argument("--k-emb", type=int)
        s.add_argument("--k", type=int, help="depth of the returned ranking")
        s.add_argument("--k1", type=float, help="override the stored BM25 k1")
        s.add_argument("--b", type=float, help="override the stored BM25 b")

    s = sub.add_parser("search", parents=[common], help="retrieve and write a TREC run")
    retrieval_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--tag")
    s.add_argument("--lexical-only", action="store_true")
    s.add_argument("--dense-only", action="store_true")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("sweep", parents=[common], help="evaluate lambda_test over a grid")
    retrieval_flags(s)
    s.add_argument("--qrels", required=True)
    s.add_argument("--grid", help="comma-separated values (default 0.1..0.9)")
    s.add_argument("--metric", default="mrr@10")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("eval", parents=[common], help="score a run against qrels")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.add_argument("--metrics", help="comma-separated, e.g. mrr@10,ndcg@10")
    s.add_argument("-q", "--per-query", action="store_true")
    s.add_argument("--map-rel-cutoff", type=int, default=1)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", parents=[common], help="write the synthetic mismatch corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-docs", type=int, default=2000)
    s.add_argument("--n-train", type=int, default=200)
    s.add_argument("--n-eval", type=int, default=50)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bench", parents=[common], help="ablation benchmark on synthetic corpora")
    s.add_argument("--seeds", type=int, default=5)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    if args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except (ClearError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"clearir {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
