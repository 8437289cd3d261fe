"""Miniature transformer encoder with span-based entity and relation heads.

Span representation: max-pooled token vectors of the span, the sentence
context vector (the ``[CLS]`` position) and a span-width embedding. Pair
representation: both span representations plus the max-pooled vectors of
the tokens strictly between the two spans (zeros when adjacent).
"""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import enumerate_spans
from .schema import LABEL_INDEX, NUM_LABELS, Entity, Relation

LOGIT_CLAMP = 30.0


@dataclass
class EncoderConfig:
    vocab_size: int = 0
    layers: int = 2
    heads: int = 2
    hidden: int = 64
    ff: int = 128
    max_len: int = 128
    max_span_width: int = 10
    size_dim: int = 16
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError("hidden size must be divisible by the number of heads")

    @property
    def span_dim(self) -> int:
        return 2 * self.hidden + self.size_dim

    @property
    def pair_dim(self) -> int:
        return 2 * self.span_dim + self.hidden

    def to_dict(self) -> dict:
        return asdict(self)


# Full-scale encoder shape (Bio+Clinical BERT base). Never trained here.
BERT_BASE_PRESET = EncoderConfig(
    vocab_size=28996, layers=12, heads=12, hidden=768, ff=3072, max_len=512, size_dim=25,
)


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ff: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.norm1 = nn.LayerNorm(d)
        self.fc1 = nn.Linear(d, ff)
        self.fc2 = nn.Linear(ff, d)
        self.norm2 = nn.LayerNorm(d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_pad: torch.Tensor) -> torch.Tensor:
        B, L, d = x.shape
        h = self.heads
        q, k, v = self.qkv(x).view(B, L, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        scores = scores.masked_fill(key_pad[:, None, None, :], -1e9)
        att = self.drop(torch.softmax(scores, dim=-1))
        ctx = (att @ v).transpose(1, 2).reshape(B, L, d)
        x = self.norm1(x + self.drop(self.out(ctx)))
        return self.norm2(x + self.drop(self.fc2(F.gelu(self.fc1(x)))))


def _masked_max(h: torch.Tensor, b: torch.Tensor, lo: torch.Tensor, hi: torch.Tensor) -> torch.Tensor:
    """Max over positions ``[lo, hi)`` of sequence ``b``; zeros where empty."""
    L = h.shape[1]
    pos = torch.arange(L)
    inside = (pos[None, :] >= lo[:, None]) & (pos[None, :] < hi[:, None])
    vals = h[b].masked_fill(~inside[:, :, None], float("-inf")).amax(dim=1)
    empty = ~inside.any(dim=1)
    return torch.where(empty[:, None], torch.zeros_like(vals), vals)


class SpanModel(nn.Module):
    def __init__(self, config: EncoderConfig, n_labels: int = NUM_LABELS):
        super().__init__()
        c = config
        self.config = c
        self.n_labels = n_labels
        self.tok = nn.Embedding(c.vocab_size, c.hidden)
        self.pos = nn.Embedding(c.max_len, c.hidden)
        self.emb_norm = nn.LayerNorm(c.hidden)
        self.layers = nn.ModuleList(EncoderLayer(c.hidden, c.heads, c.ff, c.dropout) for _ in range(c.layers))
        self.size_emb = nn.Embedding(c.max_span_width, c.size_dim)
        self.entity_head = nn.Linear(c.span_dim, n_labels)
        self.relation_head = nn.Linear(c.pair_dim, 1)
        self.mlm_head = nn.Linear(c.hidden, c.vocab_size)
        self.drop = nn.Dropout(c.dropout)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for name, p in self.named_parameters():
            if "norm" in name:
                nn.init.ones_(p) if name.endswith("weight") else nn.init.zeros_(p)
            elif name.endswith("bias"):
                nn.init.zeros_(p)
            else:
                nn.init.normal_(p, std=0.02)

    # -- encoder -------------------------------------------------------------
    def encode(self, ids: torch.Tensor, key_pad: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-token vectors ``[B, L, d]`` and the context vector ``[B, d]``."""
        L = ids.shape[1]
        if L > self.config.max_len:
            raise ValueError(f"sequence length {L} exceeds max_len {self.config.max_len}")
        x = self.tok(ids) + self.pos(torch.arange(L))[None]
        x = self.drop(self.emb_norm(x))
        for layer in self.layers:
            x = layer(x, key_pad)
        return x, x[:, 0]

    # -- heads ---------------------------------------------------------------
    def span_repr(self, h, ctx, b, start, end) -> torch.Tensor:
        """Spans are in sentence token coordinates; position 0 holds [CLS]."""
        pooled = _masked_max(h, b, start + 1, end + 1)
        return torch.cat([pooled, ctx[b], self.size_emb(end - start - 1)], dim=-1)

    def pair_repr(self, h, ctx, b, hs, he, ts, te) -> torch.Tensor:
        head = self.span_repr(h, ctx, b, hs, he)
        tail = self.span_repr(h, ctx, b, ts, te)
        lo = torch.minimum(he, te)
        hi = torch.maximum(hs, ts)
        # between-context only for disjoint spans; lo >= hi yields zeros
        between = _masked_max(h, b, lo + 1, hi + 1)
        return torch.cat([head, tail, between], dim=-1)

    def entity_logits(self, span_repr: torch.Tensor) -> torch.Tensor:
        return self.entity_head(self.drop(span_repr))

    def relation_logits(self, pair_repr: torch.Tensor) -> torch.Tensor:
        return self.relation_head(self.drop(pair_repr)).squeeze(-1)

    def mlm_logits(self, h: torch.Tensor) -> torch.Tensor:
        return self.mlm_head(h)


def classify_entity(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(logits, dim=-1)


def classify_relation(logit: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))


def entity_ce(logits: torch.Tensor, labels: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    if logits.shape[0] == 0:
        return logits.sum() if reduction == "sum" else logits.new_zeros(0)
    return F.cross_entropy(logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP), labels, reduction=reduction)


def relation_bce(logits: torch.Tensor, targets: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    if logits.shape[0] == 0:
        return logits.sum() if reduction == "sum" else logits.new_zeros(0)
    return F.binary_cross_entropy_with_logits(
        logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP), targets, reduction=reduction
    )


# ---------------------------------------------------------------------------
# batches


@dataclass
class Example:
    """One sentence prepared for the joint objective (merged label space)."""

    key: str
    ids: list[int]
    entities: list[Entity]
    relations: list[Relation]


@dataclass
class JointBatch:
    ids: torch.Tensor
    key_pad: torch.Tensor
    span_b: torch.Tensor
    span_start: torch.Tensor
    span_end: torch.Tensor
    span_label: torch.Tensor
    pair_b: torch.Tensor
    pair_hs: torch.Tensor
    pair_he: torch.Tensor
    pair_ts: torch.Tensor
    pair_te: torch.Tensor
    pair_label: torch.Tensor
    dtype: torch.dtype = torch.float64


def pad_sequences(seqs: Sequence[Sequence[int]], cls_id: int, pad_id: int, prefix: bool = True):
    """Prepend ``[CLS]`` (when ``prefix``) and right-pad. Returns ids and pad mask."""
    rows = [([cls_id] if prefix else []) + list(s) for s in seqs]
    L = max(len(r) for r in rows)
    ids = torch.full((len(rows), L), pad_id, dtype=torch.long)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = torch.tensor(r, dtype=torch.long)
    return ids, ids == pad_id


def sample_negatives(
    n_tokens: int,
    entities: Sequence[Entity],
    relations: Sequence[Relation],
    n_ent: int,
    n_rel: int,
    seed,
    max_span_width: int = 10,
) -> tuple[list[tuple[int, int]], list[tuple[str, str]]]:
    """Uniform samples without replacement of non-gold spans and unlinked trigger-argument pairs."""
    rng = random.Random(seed)
    gold_spans = {e.span for e in entities}
    span_pool = [(c.start, c.end) for c in enumerate_spans(n_tokens, max_span_width) if (c.start, c.end) not in gold_spans]
    spans = rng.sample(span_pool, min(n_ent, len(span_pool)))
    linked = {(r.head, r.tail) for r in relations}
    triggers = [e for e in entities if e.type.is_trigger]
    args = [e for e in entities if not e.type.is_trigger]
    pair_pool = [(t.id, a.id) for t in triggers for a in args if (t.id, a.id) not in linked]
    pairs = rng.sample(pair_pool, min(n_rel, len(pair_pool)))
    return spans, pairs


def build_joint_batch(
    examples: Sequence[Example],
    cls_id: int,
    pad_id: int,
    *,
    n_ent: int = 100,
    n_rel: int = 100,
    neg_seed: str = "0",
    max_span_width: int = 10,
    dtype: torch.dtype = torch.float64,
) -> JointBatch:
    ids, key_pad = pad_sequences([ex.ids for ex in examples], cls_id, pad_id)
    sb, ss, se, sl = [], [], [], []
    pb, phs, phe, pts, pte, pl = [], [], [], [], [], []
    for b, ex in enumerate(examples):
        neg_spans, neg_pairs = sample_negatives(
            len(ex.ids), ex.entities, ex.relations, n_ent, n_rel, f"{neg_seed}:{ex.key}", max_span_width
        )
        seen = set()
        for e in ex.entities:
            if e.span in seen or e.end - e.start > max_span_width:
                continue
            seen.add(e.span)
            sb.append(b), ss.append(e.start), se.append(e.end), sl.append(LABEL_INDEX[e.label])
        for s, t in neg_spans:
            sb.append(b), ss.append(s), se.append(t), sl.append(0)
        by_id = {e.id: e for e in ex.entities}
        pos_pairs = [(r.head, r.tail, 1.0) for r in ex.relations if r.head in by_id and r.tail in by_id]
        for h, t, y in pos_pairs + [(h, t, 0.0) for h, t in neg_pairs]:
            H, T = by_id[h], by_id[t]
            if max(H.end - H.start, T.end - T.start) > max_span_width:
                continue
            pb.append(b), phs.append(H.start), phe.append(H.end), pts.append(T.start), pte.append(T.end), pl.append(y)
    L = lambda xs: torch.tensor(xs, dtype=torch.long)
    return JointBatch(
        ids, key_pad, L(sb), L(ss), L(se), L(sl),
        L(pb), L(phs), L(phe), L(pts), L(pte), torch.tensor(pl, dtype=dtype), dtype,
    )


def joint_terms(model: SpanModel, batch: JointBatch) -> tuple[torch.Tensor, torch.Tensor]:
    """``(L_Entity, L_Relation)``, each a sum over the batch."""
    h, ctx = model.encode(batch.ids, batch.key_pad)
    reps = model.span_repr(h, ctx, batch.span_b, batch.span_start, batch.span_end)
    l_ent = entity_ce(model.entity_logits(reps), batch.span_label)
    if batch.pair_b.numel():
        pr = model.pair_repr(h, ctx, batch.pair_b, batch.pair_hs, batch.pair_he, batch.pair_ts, batch.pair_te)
        l_rel = relation_bce(model.relation_logits(pr), batch.pair_label)
    else:
        l_rel = h.new_zeros(())
    return l_ent, l_rel


def joint_loss(model: SpanModel, batch: JointBatch) -> torch.Tensor:
    l_ent, l_rel = joint_terms(model, batch)
    return l_ent + l_rel


def joint_loss_terms(model: SpanModel, batch: JointBatch) -> torch.Tensor:
    """Unreduced L_Joint: one entry per span, then one per pair."""
    h, ctx = model.encode(batch.ids, batch.key_pad)
    reps = model.span_repr(h, ctx, batch.span_b, batch.span_start, batch.span_end)
    terms = [entity_ce(model.entity_logits(reps), batch.span_label, reduction="none")]
    if batch.pair_b.numel():
        pr = model.pair_repr(h, ctx, batch.pair_b, batch.pair_hs, batch.pair_he, batch.pair_ts, batch.pair_te)
        terms.append(relation_bce(model.relation_logits(pr), batch.pair_label, reduction="none"))
    return torch.cat(terms)


@dataclass
class MLMBatch:
    ids: torch.Tensor
    key_pad: torch.Tensor
    rows: torch.Tensor
    cols: torch.Tensor
    targets: torch.Tensor


def build_mlm_batch(masked: Sequence[Sequence[int]], positions: Sequence[Sequence[int]],
                    originals: Sequence[Sequence[int]], pad_id: int) -> MLMBatch:
    """Sequences already carry their start/indicator tokens; no prefix added."""
    L = max(len(s) for s in masked)
    ids = torch.full((len(masked), L), pad_id, dtype=torch.long)
    for i, s in enumerate(masked):
        ids[i, : len(s)] = torch.tensor(list(s), dtype=torch.long)
    rows = [i for i, p in enumerate(positions) for _ in p]
    cols = [j for p in positions for j in p]
    tg = [t for o in originals for t in o]
    L_ = lambda xs: torch.tensor(xs, dtype=torch.long)
    return MLMBatch(ids, ids == pad_id, L_(rows), L_(cols), L_(tg))


def mlm_loss(model: SpanModel, batch: MLMBatch, reduction: str = "sum") -> torch.Tensor:
    """Cross entropy over masked positions, summed unless ``reduction="none"``."""
    if batch.rows.numel() == 0:
        return torch.zeros(() if reduction == "sum" else 0, dtype=model.tok.weight.dtype)
    h, _ = model.encode(batch.ids, batch.key_pad)
    logits = model.mlm_logits(h[batch.rows, batch.cols])
    return F.cross_entropy(logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP), batch.targets, reduction=reduction)


# ---------------------------------------------------------------------------
# gradient check


def gradient_check(
    model: nn.Module,
    loss_fn: Callable[[nn.Module], torch.Tensor],
    epsilon: float = 1e-5,
    n_params: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between autograd and central finite differences.

    ``loss_fn`` may return a scalar or a vector of per-term losses whose sum
    is the objective. For a vector the central difference is taken term by
    term and summed with ``math.fsum``, which keeps cancellation error at the
    scale of a single term rather than of the whole sum.

    Parameters are drawn at random among entries with a nonzero analytic
    gradient (unused parameters and embedding rows are trivially zero on both sides).
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params = [p for p in model.parameters() if p.requires_grad]
    if any(p.dtype != torch.float64 for p in params):
        raise ValueError("gradient_check needs float64 parameters")
    was_training = model.training
    model.eval()
    model.zero_grad()
    loss_fn(model).sum().backward()
    cands = []
    for pi, p in enumerate(params):
        if p.grad is None:
            continue
        nz = torch.nonzero(p.grad.reshape(-1)).reshape(-1).tolist()
        cands += [(pi, j) for j in nz]
    rng = random.Random(seed)
    picks = rng.sample(cands, min(n_params, len(cands)))
    worst = 0.0
    with torch.no_grad():
        for pi, j in picks:
            flat = params[pi].view(-1)
            analytic = float(params[pi].grad.view(-1)[j])
            old = float(flat[j])
            flat[j] = old + epsilon
            up = loss_fn(model).reshape(-1).tolist()
            flat[j] = old - epsilon
            down = loss_fn(model).reshape(-1).tolist()
            flat[j] = old
            numeric = math.fsum(u - d for u, d in zip(up, down)) / (2 * epsilon)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
    model.zero_grad()
    model.train(was_training)
    return worst
