"""Event extraction scoring: triggers, labeled arguments, span-only arguments.

* Triggers count as correct on exact (type, span) match.
* Labeled arguments need span, subtype and linked trigger span to match.
* Span-only arguments earn token-level credit: tokens shared by a predicted
  and a gold span with the same type and linked trigger. Each token position
  is credited at most once per gold occurrence, so one predicted span may
  collect credit from several gold spans.

Matching is one-to-one; duplicates beyond the gold multiplicity are false
positives.
"""
from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .corpus import Corpus, Sentence
from .masking import PhraseList
from .schema import LABELED_ARGUMENTS, SPAN_ONLY_ARGUMENTS, EntityType, Event

TYPE_ORDER = [t.value for t in EntityType]
DEFAULT_BIN_EDGES = (0, 20, 40, 60, 80, 100)


@dataclass
class ScoreCounts:
    """TP/FP/FN and gold unit count (NT) per entity type; additive."""

    counts: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0, 0]))

    def add(self, etype: str, tp: int = 0, fp: int = 0, fn: int = 0, nt: int = 0) -> None:
        c = self.counts[etype]
        c[0] += tp
        c[1] += fp
        c[2] += fn
        c[3] += nt

    def __iadd__(self, other: "ScoreCounts") -> "ScoreCounts":
        for k, (tp, fp, fn, nt) in other.counts.items():
            self.add(k, tp, fp, fn, nt)
        return self

    def get(self, etype: str) -> tuple[int, int, int]:
        tp, fp, fn, _ = self.counts.get(etype, (0, 0, 0, 0))
        return tp, fp, fn

    def nt(self, etype: str) -> int:
        return self.counts.get(etype, (0, 0, 0, 0))[3]

    def types(self) -> list[str]:
        return sorted(self.counts, key=lambda t: (TYPE_ORDER.index(t) if t in TYPE_ORDER else 99, t))

    def as_dict(self) -> dict:
        return {k: tuple(v) for k, v in self.counts.items()}


@dataclass(frozen=True)
class ScoreReport:
    type: str
    nt: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    bin: str = ""
    seed: str = ""


def prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def micro_f1(counts: ScoreCounts, bin: str = "", seed: str = "") -> list[ScoreReport]:
    out = []
    for t in counts.types():
        tp, fp, fn = counts.get(t)
        out.append(ScoreReport(t, counts.nt(t), tp, fp, fn, *prf(tp, fp, fn), bin=bin, seed=seed))
    return out


# ---------------------------------------------------------------------------
# per-sentence units


def _arg_units(events: Iterable[Event], types) -> list[tuple]:
    return [
        (a.type.value, a.subtype or "", a.start, a.end, ev.trigger.start, ev.trigger.end)
        for ev in events
        for a in ev.arguments
        if a.type in types
    ]


def sentence_trigger_counts(gold: Sequence[Event], pred: Sequence[Event]) -> tuple[int, int, int]:
    g = Counter(ev.trigger.span for ev in gold)
    p = Counter(ev.trigger.span for ev in pred)
    tp = sum((g & p).values())
    return tp, sum(p.values()) - tp, sum(g.values()) - tp


def sentence_labeled_counts(gold: Sequence[Event], pred: Sequence[Event]) -> ScoreCounts:
    out = ScoreCounts()
    g = Counter(_arg_units(gold, LABELED_ARGUMENTS))
    p = Counter(_arg_units(pred, LABELED_ARGUMENTS))
    for t in LABELED_ARGUMENTS:
        gt = Counter({k: v for k, v in g.items() if k[0] == t.value})
        pt = Counter({k: v for k, v in p.items() if k[0] == t.value})
        tp = sum((gt & pt).values())
        out.add(t.value, tp, sum(pt.values()) - tp, sum(gt.values()) - tp, sum(gt.values()))
    return out


def _token_cover(units: Iterable[tuple]) -> Counter:
    cover: Counter = Counter()
    for typ, _, s, e, ts, te in units:
        for i in range(s, e):
            cover[(typ, ts, te, i)] += 1
    return cover


def sentence_span_only_counts(gold: Sequence[Event], pred: Sequence[Event]) -> ScoreCounts:
    out = ScoreCounts()
    gu = _arg_units(gold, SPAN_ONLY_ARGUMENTS)
    pu = _arg_units(pred, SPAN_ONLY_ARGUMENTS)
    g, p = _token_cover(gu), _token_cover(pu)
    for t in SPAN_ONLY_ARGUMENTS:
        gt = Counter({k: v for k, v in g.items() if k[0] == t.value})
        pt = Counter({k: v for k, v in p.items() if k[0] == t.value})
        tp = sum((gt & pt).values())
        nt = sum(1 for u in gu if u[0] == t.value)
        out.add(t.value, tp, sum(pt.values()) - tp, sum(gt.values()) - tp, nt)
    return out


# ---------------------------------------------------------------------------
# corpus level


def aligned_sentences(gold: Corpus, pred: Corpus) -> list[tuple[Sentence, Sentence]]:
    """Pair up sentences; raises ValueError when the two corpora differ in shape."""
    gd = [(d.id, len(d.sentences)) for d in gold.documents]
    pd = [(d.id, len(d.sentences)) for d in pred.documents]
    if gd != pd:
        raise ValueError("gold and predicted corpora cover different sentence sets")
    pairs = []
    for dg, dp in zip(gold.documents, pred.documents):
        for sg, sp in zip(dg.sentences, dp.sentences):
            if len(sg) != len(sp):
                raise ValueError(f"token count mismatch in document {dg.id}")
            pairs.append((sg, sp))
    return pairs


def score_triggers(gold: Corpus, pred: Corpus) -> ScoreCounts:
    out = ScoreCounts()
    for sg, sp in aligned_sentences(gold, pred):
        ge, pe = sg.events(), sp.events()
        tp, fp, fn = sentence_trigger_counts(ge, pe)
        out.add(EntityType.SSX.value, tp, fp, fn, len(ge))
    return out


def score_labeled_args(gold: Corpus, pred: Corpus) -> ScoreCounts:
    out = ScoreCounts()
    for sg, sp in aligned_sentences(gold, pred):
        out += sentence_labeled_counts(sg.events(), sp.events())
    return out


def score_span_only_args(gold: Corpus, pred: Corpus) -> ScoreCounts:
    out = ScoreCounts()
    for sg, sp in aligned_sentences(gold, pred):
        out += sentence_span_only_counts(sg.events(), sp.events())
    return out


def score_all(gold: Corpus, pred: Corpus) -> ScoreCounts:
    out = score_triggers(gold, pred)
    out += score_labeled_args(gold, pred)
    out += score_span_only_args(gold, pred)
    return out


def _restrict(sent: Sentence, keep: set[str]) -> list[Event]:
    return [ev for ev in sent.events() if sent.span_text(ev.trigger.start, ev.trigger.end) in keep]


def trigger_counts_for(gold: Corpus, pred: Corpus, phrases: set[str]) -> ScoreCounts:
    """Trigger scoring restricted to triggers whose surface is in ``phrases``."""
    out = ScoreCounts()
    for sg, sp in aligned_sentences(gold, pred):
        ge, pe = _restrict(sg, phrases), _restrict(sp, phrases)
        tp, fp, fn = sentence_trigger_counts(ge, pe)
        out.add(EntityType.SSX.value, tp, fp, fn, len(ge))
    return out


def binned_eval(
    gold: Corpus,
    pred: Corpus,
    phrase_list: PhraseList,
    bin_edges: Sequence[int] = DEFAULT_BIN_EDGES,
    seed: str = "",
) -> list[ScoreReport]:
    """Trigger P/R/F1 per source-frequency rank bin ``[edges[i], edges[i+1])``."""
    if not len(phrase_list):
        raise ValueError("empty phrase list")
    out = []
    for lo, hi in zip(bin_edges, bin_edges[1:]):
        counts = trigger_counts_for(gold, pred, phrase_list.rank_slice(lo, hi))
        out += micro_f1(counts, bin=f"{lo}-{hi}", seed=seed)
    return out


# ---------------------------------------------------------------------------
# output


REPORT_FIELDS = ["type", "NT", "TP", "FP", "FN", "P", "R", "F1", "bin", "seed"]


def write_report_csv(reports: Sequence[ScoreReport], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in reports:
            w.writerow([r.type, r.nt, r.tp, r.fp, r.fn, f"{r.precision:.6f}", f"{r.recall:.6f}",
                        f"{r.f1:.6f}", r.bin, r.seed])


def read_report_csv(path) -> list[ScoreReport]:
    with open(path, newline="") as f:
        return [
            ScoreReport(row["type"], int(row["NT"]), int(row["TP"]), int(row["FP"]), int(row["FN"]),
                        float(row["P"]), float(row["R"]), float(row["F1"]), row["bin"], row["seed"])
            for row in csv.DictReader(f)
        ]


def format_table(reports: Sequence[ScoreReport], marks: Optional[dict] = None) -> str:
    """Fixed-width text table; ``marks`` maps type to a significance marker."""
    marks = marks or {}
    lines = [f"{'Entity':<16}{'NT':>7}{'P':>8}{'R':>8}{'F1':>8}{'':<4}{'bin':<8}"]
    for r in reports:
        lines.append(
            f"{r.type:<16}{r.nt:>7}{100 * r.precision:>8.1f}{100 * r.recall:>8.1f}"
            f"{100 * r.f1:>8.1f}{marks.get(r.type, ''):<4}{r.bin:<8}"
        )
    return "\n".join(l.rstrip() for l in lines)
