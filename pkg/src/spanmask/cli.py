"""Command-line entry point: ``spanmask <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional, Sequence

from .analysis import (
    fn_change, improved_above_fraction, scatter_data, scatter_svg, trigger_coverage,
    write_coverage_csv, write_scatter_csv,
)
from .corpus import (
    Corpus, CorpusFormatError, CorpusInvariantError, Vocab, build_vocab, load_corpus, load_unlabeled,
    save_corpus, save_unlabeled,
)
from .evaluation import (
    DEFAULT_BIN_EDGES, binned_eval, format_table, micro_f1, read_report_csv, score_all, write_report_csv,
)
from .masking import DEFAULT_MASK_RATE, DEFAULT_MLM_RATE, DEFAULT_TOP_K, PhraseList, build_frequency_list
from .stats import significance_marker, welch_t_test
from .training import TrainingDiverged

log = logging.getLogger("spanmask")

THREADS_ENV = "SPANMASK_THREADS"


class UsageError(Exception):
    """Bad input detected by the CLI itself (exit code 1)."""


# ---------------------------------------------------------------------------
# helpers


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_labeled(paths: Sequence[str]) -> Corpus:
    docs = []
    for p in paths:
        docs += load_corpus(p).documents
    return Corpus(tuple(docs))


def _load_docs(paths: Sequence[str]):
    """Labeled ``.jsonl`` or unlabeled plain-text files, as a flat document list."""
    docs = []
    for p in paths:
        docs += load_corpus(p).documents if str(p).endswith(".jsonl") else load_unlabeled(p)
    return docs


def _encoder_config(args, vocab: Vocab):
    from .model import EncoderConfig

    overrides = dict(args.encoder or {})
    known = {f.name for f in fields(EncoderConfig)}
    if set(overrides) - known:
        raise UsageError(f"unknown encoder settings: {sorted(set(overrides) - known)}")
    overrides["vocab_size"] = len(vocab)
    return EncoderConfig(**overrides)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> None:
    from .synthgen import DomainSpec, generate_domain, preset

    if (args.preset is None) == (args.spec is None):
        raise UsageError("give exactly one of --preset or --spec")
    spec = preset(args.preset, args.seed) if args.preset else DomainSpec.load(args.spec)
    corpus, unlabeled = generate_domain(spec, args.n_sentences, args.n_unlabeled)
    out = _out_dir(args.out)
    save_corpus(corpus, out / "labeled.jsonl")
    save_unlabeled(unlabeled, out / "unlabeled.txt")
    spec.save(out / "spec.json")
    print(f"{spec.name}: {len(corpus)} labeled sentences, {len(unlabeled)} unlabeled documents -> {out}")


def cmd_build_vocab(args) -> None:
    vocab = build_vocab(_load_docs(args.inputs), args.max_size, args.domains)
    vocab.save(args.out)
    print(f"vocabulary of {len(vocab)} entries ({vocab.n_reserved} reserved) -> {args.out}")


def cmd_build_freq_list(args) -> None:
    corpus = _load_labeled(args.corpus)
    pl = build_frequency_list(corpus, args.top_k, mode=args.mode)
    pl.save_tsv(args.out)
    print(f"{len(pl)} phrases -> {args.out}")


def cmd_pretrain(args) -> None:
    from .training import PretrainConfig, load_checkpoint, pretrain_adaptive, save_checkpoint, write_metrics

    docs = _load_docs(args.unlabeled)
    init = None
    if args.init:
        init, vocab, _ = load_checkpoint(args.init)
    else:
        if not args.vocab:
            raise UsageError("--vocab is required without --init")
        vocab = Vocab.load(args.vocab)
    pc = PretrainConfig(
        epochs=args.epochs, chunk_len=args.chunk_len, mlm_rate=args.mlm_rate, sub_batch=args.sub_batch,
        accumulate=args.accumulate, lr=args.lr, random_replace=args.random_replace, max_steps=args.max_steps,
    )
    config = None if init is not None else _encoder_config(args, vocab)
    res = pretrain_adaptive(docs, vocab, config, pc, seed=args.seed, init=init)
    out = _out_dir(args.out)
    save_checkpoint(res.model, vocab, out / "model.ckpt", {"stage": "pretrain", "seed": args.seed, **asdict(pc)})
    write_metrics(res.history, out / "metrics.csv")
    for row in res.history:
        print(f"epoch {row['epoch']:>3}  L_MLM/token {row['L_MLM']:.4f}")


def cmd_train(args) -> None:
    from .training import TrainConfig, load_checkpoint, save_checkpoint, train, write_metrics

    corpus = _load_labeled(args.train)
    init = None
    if args.init:
        init, vocab, _ = load_checkpoint(args.init)
    else:
        if not args.vocab:
            raise UsageError("--vocab is required without --init")
        vocab = Vocab.load(args.vocab)
    phrase_list = PhraseList.load_tsv(args.freq_list) if args.freq_list else None
    tc = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, neg_entities=args.neg_entities,
        neg_relations=args.neg_relations, mask_rate=args.mask_rate, max_grad_norm=args.max_grad_norm,
    )
    config = None if init is not None else _encoder_config(args, vocab)
    res = train(corpus, vocab, config, tc, phrase_list=phrase_list, seed=args.seed, init=init)
    out = _out_dir(args.out)
    extra = {"stage": "train", "seed": args.seed, "masking": phrase_list is not None, **asdict(tc)}
    save_checkpoint(res.model, vocab, out / "model.ckpt", extra)
    write_metrics(res.history, out / "metrics.csv")
    for row in res.history:
        print(f"epoch {row['epoch']:>3}  L_Entity {row['L_Entity']:.4f}  L_Relation {row['L_Relation']:.4f}")


def cmd_predict(args) -> None:
    from .decode import Thresholds, predict_corpus
    from .training import load_checkpoint

    model, vocab, _ = load_checkpoint(args.model)
    corpus = _load_labeled([args.corpus])
    pred = predict_corpus(model, corpus, vocab, Thresholds(args.relation_threshold), args.batch_size)
    save_corpus(pred, args.out)
    n = sum(len(s.entities) for _, s in pred.sentences())
    print(f"{n} predicted entities over {len(pred)} sentences -> {args.out}")


def cmd_evaluate(args) -> None:
    gold, pred = _load_labeled([args.gold]), _load_labeled([args.pred])
    reports = micro_f1(score_all(gold, pred), seed=args.label)
    write_report_csv(reports, args.out)
    print(format_table(reports))


def cmd_bin_eval(args) -> None:
    gold, pred = _load_labeled([args.gold]), _load_labeled([args.pred])
    pl = PhraseList.load_tsv(args.freq_list)
    edges = [int(x) for x in args.bins.split(",")]
    if len(edges) < 2 or edges != sorted(edges) or edges[0] < 0:
        raise UsageError("--bins must be at least two ascending non-negative integers")
    reports = binned_eval(gold, pred, pl, edges, seed=args.label)
    write_report_csv(reports, args.out)
    print(format_table(reports))


def _metric(reports, metric: str) -> float:
    etype, _, kind = metric.rpartition("_")
    etype = {"trigger": "SSx"}.get(etype, etype)
    col = {"f1": "f1", "precision": "precision", "p": "precision", "recall": "recall", "r": "recall"}.get(kind)
    if col is None:
        raise UsageError(f"unknown metric {metric!r}; use <type>_f1, <type>_precision or <type>_recall")
    rows = [r for r in reports if r.type.lower() == etype.lower() and not r.bin]
    if len(rows) != 1:
        raise UsageError(f"metric {metric!r}: expected one unbinned {etype} row, found {len(rows)}")
    return getattr(rows[0], col)


def _seed_values(directory: str, metric: str) -> list[float]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise UsageError(f"{directory}: no report CSV files")
    return [_metric(read_report_csv(f), metric) for f in files]


def cmd_compare_seeds(args) -> None:
    a, b = _seed_values(args.a_dir, args.metric), _seed_values(args.b_dir, args.metric)
    t, p = welch_t_test(b, a, equal_var=args.equal_var)
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    mark = significance_marker(p, mb - ma)
    print(f"{args.metric}: A mean {ma:.4f} (n={len(a)})  B mean {mb:.4f} (n={len(b)})")
    print(f"t = {t:.4f}  p = {p:.6f}  {mark}".rstrip())
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["metric", "n_a", "n_b", "mean_a", "mean_b", "t", "p", "marker"])
            w.writerow([args.metric, len(a), len(b), f"{ma:.6f}", f"{mb:.6f}", f"{t:.6f}", f"{p:.8f}", mark])


def cmd_analyze_coverage(args) -> None:
    points = trigger_coverage(_load_labeled([args.source]), _load_labeled([args.target]), args.top_n)
    write_coverage_csv(points, args.out)
    for k in sorted({min(n, len(points)) for n in (10, 25, 50, 100, 200)}):
        pt = points[k - 1]
        print(f"top {k:>4}: source {pt.source:.3f}  target {pt.target:.3f}")


def cmd_analyze_scatter(args) -> None:
    source, gold = _load_labeled([args.source]), _load_labeled([args.gold])
    base, masked = _load_labeled([args.baseline_pred]), _load_labeled([args.masked_pred])
    rows = scatter_data(source, gold, fn_change(gold, base, masked, args.top_n))
    out = _out_dir(args.out)
    write_scatter_csv(rows, out / "scatter.csv")
    (out / "scatter.svg").write_text(scatter_svg(rows), encoding="utf-8")
    reduced = [r for r in rows if r.delta_fn < 0]
    print(f"{len(rows)} phrases; {len(reduced)} with reduced false negatives; "
          f"above-diagonal share {improved_above_fraction(rows):.3f}")


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    p.add_argument("--config", help="JSON file of flag defaults (keys are flag names with underscores)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spanmask", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate a synthetic labeled corpus and unlabeled pool")
    p.add_argument("--preset", choices=("target", "near", "far"))
    p.add_argument("--spec", help="DomainSpec JSON file")
    p.add_argument("--n-sentences", type=int, default=400)
    p.add_argument("--n-unlabeled", type=int, default=0, help="unlabeled sentences to generate")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("build-vocab", help="word vocabulary from labeled/unlabeled files")
    p.add_argument("inputs", nargs="+", help=".jsonl corpora or unlabeled text files")
    p.add_argument("--max-size", type=int, default=30000)
    p.add_argument("--domains", nargs="*", default=[], help="extra domain indicator tokens")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("build-freq-list", help="frequent source trigger phrases for masking")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--mode", choices=("pooled", "union"), default="pooled")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_freq_list)

    p = sub.add_parser("pretrain", help="adaptive MLM pretraining on unlabeled text")
    p.add_argument("unlabeled", nargs="+")
    p.add_argument("--vocab")
    p.add_argument("--init", help="continue from a checkpoint")
    p.add_argument("--epochs", type=int, default=16)
    p.add_argument("--chunk-len", type=int, default=64)
    p.add_argument("--mlm-rate", type=float, default=DEFAULT_MLM_RATE)
    p.add_argument("--sub-batch", type=int, default=32)
    p.add_argument("--accumulate", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--random-replace", action="store_true", help="80/10/10 MLM corruption")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pretrain, encoder=None)

    p = sub.add_parser("train", help="fine-tune the joint entity/relation model")
    p.add_argument("train", nargs="+", help="labeled .jsonl corpora")
    p.add_argument("--vocab")
    p.add_argument("--init", help="start from a (pretrained) checkpoint")
    p.add_argument("--freq-list", help="phrase list TSV; enables dynamic masking")
    p.add_argument("--mask-rate", type=float, default=DEFAULT_MASK_RATE)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=15)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--neg-entities", type=int, default=100)
    p.add_argument("--neg-relations", type=int, default=100)
    p.add_argument("--max-grad-norm", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train, encoder=None)

    p = sub.add_parser("predict", help="run a trained model over a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--relation-threshold", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", required=True, help="predictions .jsonl")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="micro P/R/F1 per entity type")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--label", default="", help="value for the report's seed column")
    p.add_argument("--out", required=True, help="report CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bin-eval", help="trigger scores per source-frequency rank bin")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--freq-list", required=True)
    p.add_argument("--bins", default=",".join(map(str, DEFAULT_BIN_EDGES)))
    p.add_argument("--label", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bin_eval)

    p = sub.add_parser("compare-seeds", help="two-sided t-test between two sets of seed reports")
    p.add_argument("a_dir", help="contrasting condition: directory of report CSVs, one per seed")
    p.add_argument("b_dir", help="tested condition")
    p.add_argument("--metric", default="trigger_f1")
    p.add_argument("--equal-var", action="store_true", help="pooled-variance Student test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_seeds)

    p = sub.add_parser("analyze-coverage", help="cumulative trigger coverage of top source phrases")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--top-n", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_coverage)

    p = sub.add_parser("analyze-scatter", help="positive-class ratios vs false-negative change")
    p.add_argument("--source", required=True, help="labeled source corpus")
    p.add_argument("--gold", required=True, help="labeled target test corpus")
    p.add_argument("--baseline-pred", required=True)
    p.add_argument("--masked-pred", required=True)
    p.add_argument("--top-n", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze_scatter)

    for p in sub.choices.values():
        _add_common(p)
    parser.commands = sub.choices
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        known = set(vars(args)) - {"func", "command", "config"}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"--config: unknown keys {sorted(unknown)}")
        # explicit flags win over the file
        parser.commands[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _set_threads() -> None:
    value = os.environ.get(THREADS_ENV)
    if value:
        import torch

        try:
            n = int(value)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer")
        torch.set_num_threads(n)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _set_threads()
        args.func(args)
    except CorpusInvariantError as exc:
        print(f"error: invariant violation: {exc}", file=sys.stderr)
        return 2
    except (UsageError, CorpusFormatError, TrainingDiverged, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
