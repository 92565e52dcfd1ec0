"""Command-line entry point: ``qexpand <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .autograd import NumericFault
from .checkpoint import CheckpointError
from .classify import class_accuracy, read_labeled_tsv, train_classifier
from .dataset import (IngestReport, KeywordCache, build, ingest, pair_vocabulary_corpus,
                      read_examples, write_examples)
from .encoder import EmptyInputError, SentenceEncoder, extract_keywords
from .metrics import mean_average_precision, per_query_average_precision, preselect, \
    read_preselection_sets
from .model import (Expander, ModelConfig, Seq2SeqParams, TrainConfig, expand, gradcheck_error,
                    load_checkpoint, save_checkpoint, train, write_train_log)
from .retrieval import InvertedIndex, index_build, read_docs_jsonl, read_qrels, read_queries, \
    search, write_run
from .stats import paired_ttest
from .text import (STOPWORDS, EmbeddingParseError, build_vocab, load_embeddings,
                   random_embeddings, tokenize)

SCHEMA_VERSION = 1
DTYPES = {"test64": "float64", "fast32": "float32"}

log = logging.getLogger("qexpand")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit_json(obj, out=None) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _random_spec(value: str):
    """``random:SEED`` -> SEED, anything else -> None."""
    if value.startswith("random:"):
        try:
            return int(value.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad random seed in {value!r}") from None
    return None


def _load_encoder(spec: str, args, corpus) -> SentenceEncoder:
    seed = _random_spec(spec)
    if seed is None:
        return SentenceEncoder.load(spec)
    vocab = build_vocab(corpus)
    return SentenceEncoder.random(vocab, seed, hidden=args.enc_hidden, num_layers=args.enc_layers,
                                  emb_dim=args.emb_dim, dtype=DTYPES[args.precision])


def _ttest(a, b):
    # constant non-zero differences or fewer than two queries: no test
    try:
        res = paired_ttest(a, b)
    except ValueError:
        return None, None
    return res.t, res.p


# -- subcommands ---------------------------------------------------------


def cmd_build_dataset(args) -> int:
    report = IngestReport()
    pairs = ingest(args.pairs, args.format, report)
    encoder = _load_encoder(args.encoder, args, pair_vocabulary_corpus(pairs))
    if args.save_encoder:
        encoder.save(args.save_encoder)
    examples, stats = build(pairs, KeywordCache(encoder, STOPWORDS), args.min_len, args.max_len)
    write_examples(examples, args.out)
    if args.stats:
        Path(args.stats).write_text(stats.to_json())
    log.info("ingest: %d rejected, %d malformed", report.rejected, report.malformed)
    return 0


def cmd_keywords(args) -> int:
    tokens = tokenize(args.text)
    encoder = _load_encoder(args.encoder, args, [tokens])
    print(" ".join(extract_keywords(tokens, encoder, STOPWORDS, args.max_k)))
    return 0


def cmd_train(args) -> int:
    examples = read_examples(args.data)
    if not examples:
        raise ValueError(f"{args.data}: no training examples")
    vocab = build_vocab((list(e.source) + list(e.expansion) for e in examples),
                        args.min_freq, args.max_vocab)
    dtype = DTYPES[args.precision]
    seed = _random_spec(args.embeddings)
    if seed is None:
        emb = load_embeddings(args.embeddings, vocab, seed=args.seed, dtype=dtype)
    else:
        emb = random_embeddings(vocab, args.emb_dim, seed, dtype=dtype)
    config = ModelConfig(vocab_size=len(vocab), emb_dim=emb.dim, hidden=args.hidden,
                         enc_layers=args.layers, dec_layers=args.layers, dtype=dtype)
    params = Seq2SeqParams.init(config, seed=args.seed, embeddings=emb)
    cfg = TrainConfig(batch_size=args.batch, lr0=args.lr, decay=args.decay, dropout=args.dropout,
                      epochs=args.epochs, clip_norm=args.clip, seed=args.seed)
    params, logs = train(examples, cfg, params, vocab)
    save_checkpoint(params, args.out, vocab)
    if args.log:
        write_train_log(logs, args.log)
    return 0


def cmd_expand(args) -> int:
    if (args.query is None) == (args.queries is None):
        raise UsageError("give exactly one of --query or --queries")
    params, vocab = load_checkpoint(args.model)
    if vocab is None:
        raise ValueError(f"{args.model}: checkpoint carries no vocabulary")
    if args.query is not None:
        queries = [args.query]
    else:
        queries = Path(args.queries).read_text(encoding="utf-8").splitlines()
    for q in queries:
        try:
            words = expand(q, params, vocab, args.max_steps).expansion
        except EmptyInputError:
            words = []
        print(" ".join(words))
    return 0


def cmd_index(args) -> int:
    index = index_build(read_docs_jsonl(args.docs))
    Path(args.out).write_text(index.to_json())
    return 0


def _load_index(path) -> InvertedIndex:
    return InvertedIndex.from_json(Path(path).read_text(encoding="utf-8"))


def cmd_eval_ir(args) -> int:
    index = _load_index(args.index)
    queries = read_queries(args.queries)
    qrels = read_qrels(args.qrels)

    def run(transform):
        return {qid: search(transform(text), index, args.scheme, args.k, qid) for qid, text in queries}

    base = run(lambda t: t)
    aps, skipped = per_query_average_precision(base, qrels)
    result = {"metric": "MAP", "scheme": args.scheme, "value": mean_average_precision(base, qrels),
              "n": len(aps), "skipped": skipped}
    if args.run_out:
        write_run(base, args.run_out)
    if args.expander:
        expander = Expander.from_checkpoint(args.expander)
        expanded = run(expander)
        aps_qe, _ = per_query_average_precision(expanded, qrels)
        result["with_qe"] = {"metric": "MAP", "value": mean_average_precision(expanded, qrels),
                             "n": len(aps_qe)}
        keys = sorted(aps)
        result["t"], result["p_value"] = _ttest([aps_qe[k] for k in keys], [aps[k] for k in keys])
        result["expanded_queries"] = sum(1 for _, q in queries if expander.expansion(q))
        if args.run_out:
            write_run(expanded, args.run_out + ".qe")
    _emit_json(result, args.out)
    return 0


def cmd_eval_preselect(args) -> int:
    sets = read_preselection_sets(args.sets)
    base = preselect(sets, None, args.k, args.normalization)
    result = {"metric": f"accuracy@{args.k}", "value": base.accuracy, "coverage": base.coverage,
              "n": len(sets)}
    if args.expander:
        expander = Expander.from_checkpoint(args.expander)
        qe = preselect(sets, expander, args.k, args.normalization)
        result["with_qe"] = {"metric": f"accuracy@{args.k}", "value": qe.accuracy,
                             "coverage": qe.coverage, "n": len(sets)}
        _, result["p_value"] = _ttest(qe.per_query_accuracy, base.per_query_accuracy)
        _, result["coverage_p_value"] = _ttest(qe.per_query_coverage, base.per_query_coverage)
    _emit_json(result, args.out)
    return 0


def cmd_eval_classify(args) -> int:
    train_texts, train_labels = read_labeled_tsv(args.train)
    test_texts, test_labels = read_labeled_tsv(args.test)
    clf = train_classifier(train_texts, train_labels, epochs=args.epochs, lr=args.lr,
                           seed=args.seed)
    acc, correct = class_accuracy(clf, test_texts, test_labels)
    result = {"metric": "accuracy", "value": acc, "n": len(test_texts)}
    if args.expander:
        expander = Expander.from_checkpoint(args.expander)
        acc_qe, correct_qe = class_accuracy(clf, test_texts, test_labels, expander)
        result["with_qe"] = {"metric": "accuracy", "value": acc_qe, "n": len(test_texts)}
        _, result["p_value"] = _ttest(correct_qe, correct)
    _emit_json(result, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    err = gradcheck_error(args.hidden, args.vocab, args.seed)
    print(f"max relative error {err:.3e}")
    return 0 if err < 1e-4 else 3


# -- wiring --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--precision", choices=sorted(DTYPES), default="test64")
    common.add_argument("-v", "--verbose", action="store_true")

    enc_opts = argparse.ArgumentParser(add_help=False)
    enc_opts.add_argument("--enc-hidden", type=int, default=500)
    enc_opts.add_argument("--enc-layers", type=int, default=2)
    enc_opts.add_argument("--emb-dim", type=int, default=300)

    parser = _Parser(prog="qexpand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("build-dataset", parents=[common, enc_opts])
    p.add_argument("--pairs", required=True)
    p.add_argument("--format", choices=["jsonl", "tsv"], default="jsonl")
    p.add_argument("--encoder", required=True, help="checkpoint path or random:SEED")
    p.add_argument("--out", required=True)
    p.add_argument("--stats")
    p.add_argument("--save-encoder")
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=6)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("keywords", parents=[common, enc_opts])
    p.add_argument("--encoder", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--max-k", type=int)
    p.set_defaults(func=cmd_keywords)

    p = sub.add_parser("train", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True, help="embedding file or random:SEED")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--dropout", type=float, default=0.35)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--hidden", type=int, default=500)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--emb-dim", type=int, default=300, help="width of random:SEED embeddings")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--max-vocab", type=int, default=50_000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("expand", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--query")
    p.add_argument("--queries")
    p.add_argument("--max-steps", type=int, default=6)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("index", parents=[common])
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval-ir", parents=[common])
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--scheme", choices=["tfidf", "bm25"], default="bm25")
    p.add_argument("--expander")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--run-out", help="write TREC run file(s) with this path prefix")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval_ir)

    p = sub.add_parser("eval-preselect", parents=[common])
    p.add_argument("--sets", required=True)
    p.add_argument("--expander")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--normalization", choices=["min_k", "relevant"], default="min_k")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_preselect)

    p = sub.add_parser("eval-classify", parents=[common])
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--expander")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_classify)

    p = sub.add_parser("gradcheck", parents=[common])
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--vocab", type=int, default=24)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qexpand: error: {exc}", file=sys.stderr)
        return 1
    except NumericFault as exc:
        print(f"qexpand: numeric fault: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError, CheckpointError, EmbeddingParseError) as exc:
        print(f"qexpand: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
