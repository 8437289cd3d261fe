"""Domain-discrepancy diagnostics: coverage curves, positive-class ratios, FN change."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from .corpus import Corpus, tokenize
from .evaluation import aligned_sentences
from .masking import trigger_surfaces
from .schema import EntityType


@dataclass(frozen=True)
class CoveragePoint:
    rank: int
    phrase: str
    source: float
    target: float


def trigger_coverage(source: Corpus, target: Corpus, top_n: int | None = None) -> list[CoveragePoint]:
    """Cumulative share of each domain's trigger instances covered by the top-k source phrases."""
    src, tgt = trigger_surfaces(source), trigger_surfaces(target)
    if not src or not tgt:
        raise ValueError("both corpora need gold triggers")
    ranked = sorted(src.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_n is not None:
        ranked = ranked[:top_n]
    ns, nt = sum(src.values()), sum(tgt.values())
    cs = ct = 0
    out = []
    for k, (phrase, n) in enumerate(ranked, 1):
        cs += n
        ct += tgt.get(phrase, 0)
        out.append(CoveragePoint(k, phrase, cs / ns, ct / nt))
    return out


def phrase_occurrences(corpus: Corpus, phrase: str) -> tuple[int, int]:
    """``(positive, total)`` occurrences of ``phrase`` as a contiguous token run.

    An occurrence is positive when a gold SSx entity spans exactly those tokens.
    """
    toks = tokenize(phrase)
    k = len(toks)
    pos = tot = 0
    if not k:
        return 0, 0
    for _, sent in corpus.sentences():
        surf = sent.surfaces
        trig = {e.span for e in sent.entities if e.type is EntityType.SSX}
        for i in range(len(surf) - k + 1):
            if surf[i: i + k] == toks:
                tot += 1
                pos += (i, i + k) in trig
    return pos, tot


def positive_class_ratio(corpus: Corpus, phrase: str) -> float:
    pos, tot = phrase_occurrences(corpus, phrase)
    if tot == 0:
        raise ValueError(f"phrase {phrase!r} does not occur in the corpus")
    return pos / tot


def _false_negatives_by_phrase(gold: Corpus, pred: Corpus) -> Counter:
    fn: Counter = Counter()
    for sg, sp in aligned_sentences(gold, pred):
        g = Counter(e.span for e in sg.entities if e.type is EntityType.SSX)
        p = Counter(e.span for e in sp.entities if e.type is EntityType.SSX)
        for span, n in (g - p).items():
            fn[sg.span_text(*span)] += n
    return fn


def fn_change(gold: Corpus, preds_baseline: Corpus, preds_masked: Corpus, top_n: int = 100) -> dict[str, int]:
    """Per-phrase ``FN_masked - FN_baseline`` for the ``top_n`` most frequent gold triggers."""
    freq = trigger_surfaces(gold)
    phrases = [p for p, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]]
    base = _false_negatives_by_phrase(gold, preds_baseline)
    masked = _false_negatives_by_phrase(gold, preds_masked)
    return {p: masked[p] - base[p] for p in phrases}


@dataclass(frozen=True)
class ScatterRow:
    phrase: str
    source_ratio: float
    target_ratio: float
    delta_fn: int
    above_diagonal: bool

    @property
    def change(self) -> str:
        if self.delta_fn < 0:
            return "reduced"
        return "no change" if self.delta_fn == 0 else "increased"


def scatter_data(source: Corpus, target: Corpus, deltas: dict[str, int]) -> list[ScatterRow]:
    """Rows for phrases that occur in both domains (ratios are undefined otherwise)."""
    rows = []
    for phrase, d in deltas.items():
        ps, ns = phrase_occurrences(source, phrase)
        pt, nt = phrase_occurrences(target, phrase)
        if ns == 0 or nt == 0:
            continue
        rs, rt = ps / ns, pt / nt
        rows.append(ScatterRow(phrase, rs, rt, d, rt > rs))
    return rows


def improved_above_fraction(rows: Sequence[ScatterRow]) -> float:
    """Share of phrases with reduced FNs that sit above the diagonal (NaN when none)."""
    improved = [r for r in rows if r.delta_fn < 0]
    if not improved:
        return float("nan")
    return sum(r.above_diagonal for r in improved) / len(improved)


def write_coverage_csv(points: Sequence[CoveragePoint], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "phrase", "source_coverage", "target_coverage"])
        for p in points:
            w.writerow([p.rank, p.phrase, f"{p.source:.6f}", f"{p.target:.6f}"])


def write_scatter_csv(rows: Sequence[ScatterRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["phrase", "source_ratio", "target_ratio", "delta_fn", "above_diagonal", "change"])
        for r in rows:
            w.writerow([r.phrase, f"{r.source_ratio:.6f}", f"{r.target_ratio:.6f}", r.delta_fn,
                        int(r.above_diagonal), r.change])


_COLORS = {"reduced": "#d62728", "no change": "#1f77b4", "increased": "#1f77b4"}


def scatter_svg(rows: Sequence[ScatterRow], size: int = 400) -> str:
    """SVG 1.1 scatter: x = source ratio, y = target ratio, area proportional to |dFN|."""
    m = 40
    span = size - 2 * m

    def xy(rs: float, rt: float) -> tuple[float, float]:
        return m + rs * span, size - m - rt * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}">',
        f'<rect x="{m}" y="{m}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{m}" y1="{size - m}" x2="{size - m}" y2="{m}" stroke="gray" stroke-dasharray="4 4"/>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">source positive ratio</text>',
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2})">target positive ratio</text>',
    ]
    for r in rows:
        x, y = xy(r.source_ratio, r.target_ratio)
        radius = 2.0 + 2.0 * abs(r.delta_fn) ** 0.5
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius:.2f}" fill="{_COLORS[r.change]}" '
            f'fill-opacity="0.6" class="{r.change.replace(" ", "-")}"><title>{escape(r.phrase)}</title></circle>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
