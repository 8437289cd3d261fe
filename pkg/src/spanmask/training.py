"""Fine-tuning on the joint objective, adaptive MLM pretraining, checkpoints."""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .corpus import Corpus, Document, Vocab
from .masking import DEFAULT_MASK_RATE, DEFAULT_MLM_RATE, PhraseList, apply_dynamic_mask, mlm_mask
from .model import (
    EncoderConfig, Example, SpanModel, build_joint_batch, build_mlm_batch, joint_terms, mlm_loss,
)
from .schema import merge_sentence

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SPANMASK"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 15
    lr: float = 1e-3
    neg_entities: int = 100
    neg_relations: int = 100
    mask_rate: float = DEFAULT_MASK_RATE
    max_grad_norm: Optional[float] = 1.0


@dataclass
class PretrainConfig:
    epochs: int = 16
    chunk_len: int = 64
    mlm_rate: float = DEFAULT_MLM_RATE
    sub_batch: int = 32
    accumulate: int = 1
    lr: float = 1e-3
    random_replace: bool = False
    max_steps: Optional[int] = None


@dataclass
class TrainResult:
    model: SpanModel
    vocab: Vocab
    history: list[dict] = field(default_factory=list)


def new_model(config: EncoderConfig, seed: int) -> SpanModel:
    torch.manual_seed(seed)
    return SpanModel(config).to(torch.float64)


def _examples(corpus: Corpus, vocab: Vocab) -> list[Example]:
    out = []
    for key, sent in corpus.sentences():
        ents, rels = merge_sentence(sent.entities, sent.relations)
        out.append(Example(key, vocab.encode(sent.surfaces), ents, rels))
    return out


@contextmanager
def _single_thread():
    """Pin intra-op parallelism so float reductions, and hence parameters, do not depend on the host."""
    before = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(before)


def _check_finite(value: float, what: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite {what} ({value}) at epoch {epoch}, step {step}")


def train(
    corpus: Corpus,
    vocab: Vocab,
    config: Optional[EncoderConfig] = None,
    train_config: Optional[TrainConfig] = None,
    *,
    phrase_list: Optional[PhraseList] = None,
    seed: int = 0,
    init: Optional[SpanModel] = None,
) -> TrainResult:
    """Fine-tune on the merged-label joint objective with Adam.

    With ``phrase_list`` set, the training sentences are re-masked every
    epoch via :func:`apply_dynamic_mask` (rate ``train_config.mask_rate``).
    """
    with _single_thread():
        return _train(corpus, vocab, config, train_config or TrainConfig(), phrase_list, seed, init)


def _train(corpus, vocab, config, tc, phrase_list, seed, init) -> TrainResult:
    if init is not None:
        model = init
        config = model.config
    else:
        config = config or EncoderConfig()
        if config.vocab_size == 0:
            config = EncoderConfig(**{**asdict(config), "vocab_size": len(vocab)})
        model = new_model(config, seed)
    # dropout and shuffling draw from this seed regardless of masking
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr)
    n = len(corpus)
    history = []
    step = 0
    for epoch in range(tc.epochs):
        view = corpus
        if phrase_list is not None:
            view, _ = apply_dynamic_mask(corpus, phrase_list, tc.mask_rate, epoch, seed)
        examples = _examples(view, vocab)
        order = np.random.default_rng([seed, epoch]).permutation(n)
        model.train()
        tot_e = tot_r = 0.0
        for i in range(0, n, tc.batch_size):
            batch = build_joint_batch(
                [examples[j] for j in order[i: i + tc.batch_size]],
                vocab.cls_id, vocab.pad_id,
                n_ent=tc.neg_entities, n_rel=tc.neg_relations,
                neg_seed=f"{seed}:{epoch}", max_span_width=config.max_span_width,
            )
            l_ent, l_rel = joint_terms(model, batch)
            loss = l_ent + l_rel
            _check_finite(loss.item(), "L_Joint", epoch, step)
            opt.zero_grad()
            loss.backward()
            if tc.max_grad_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tc.max_grad_norm)
            opt.step()
            step += 1
            tot_e += l_ent.item()
            tot_r += l_rel.item()
        row = {"epoch": epoch + 1, "L_Entity": tot_e / n, "L_Relation": tot_r / n, "L_Joint": (tot_e + tot_r) / n}
        log.info("epoch %d  L_Entity %.4f  L_Relation %.4f", epoch + 1, row["L_Entity"], row["L_Relation"])
        history.append(row)
    model.eval()
    return TrainResult(model, vocab, history)


# ---------------------------------------------------------------------------
# adaptive pretraining


def chunk_tokens(ids: Sequence[int], length: int) -> list[list[int]]:
    return [list(ids[i: i + length]) for i in range(0, len(ids), length)]


def pretraining_sequences(docs: Sequence[Document], vocab: Vocab, chunk_len: int) -> list[list[int]]:
    """Each document's tokens chunked, each chunk prefixed with ``[CLS]`` and its domain indicator."""
    seqs = []
    for doc in docs:
        ids = vocab.encode(s for sent in doc.sentences for s in sent.surfaces)
        dom = vocab.domain_id(doc.domain)
        seqs += [[vocab.cls_id, dom] + c for c in chunk_tokens(ids, chunk_len)]
    return seqs


def pretrain_adaptive(
    docs: Sequence[Document],
    vocab: Vocab,
    config: Optional[EncoderConfig] = None,
    pretrain_config: Optional[PretrainConfig] = None,
    *,
    seed: int = 0,
    init: Optional[SpanModel] = None,
) -> TrainResult:
    """Continue MLM training on unlabeled text with gradient accumulation."""
    with _single_thread():
        return _pretrain(docs, vocab, config, pretrain_config or PretrainConfig(), seed, init)


def _pretrain(docs, vocab, config, pc, seed, init) -> TrainResult:
    seqs = pretraining_sequences(docs, vocab, pc.chunk_len)
    if not seqs:
        raise ValueError("pretraining corpus is empty")
    if init is not None:
        model = init
    else:
        config = config or EncoderConfig()
        if config.vocab_size == 0:
            config = EncoderConfig(**{**asdict(config), "vocab_size": len(vocab)})
        model = new_model(config, seed)
    torch.manual_seed(seed)
    protected = set(range(vocab.n_reserved)) - {vocab.unk_id}
    opt = torch.optim.Adam(model.parameters(), lr=pc.lr)
    history = []
    step = 0
    for epoch in range(pc.epochs):
        order = np.random.default_rng([seed, epoch, 1]).permutation(len(seqs))
        model.train()
        total, n_masked = 0.0, 0
        subs = [order[i: i + pc.sub_batch] for i in range(0, len(order), pc.sub_batch)]
        for g in range(0, len(subs), pc.accumulate):
            opt.zero_grad()
            for sub in subs[g: g + pc.accumulate]:
                masked, pos, orig = [], [], []
                for j in sub:
                    m, p, o = mlm_mask(
                        seqs[j], pc.mlm_rate, [seed, epoch, int(j)], mask_id=vocab.mask_id,
                        protected=protected, random_replace=pc.random_replace,
                        vocab_size=len(vocab), first_word_id=vocab.n_reserved,
                    )
                    masked.append(m), pos.append(p), orig.append(o)
                loss = mlm_loss(model, build_mlm_batch(masked, pos, orig, vocab.pad_id))
                _check_finite(loss.item(), "L_MLM", epoch, step)
                if loss.requires_grad:
                    loss.backward()
                total += loss.item()
                n_masked += sum(len(p) for p in pos)
            opt.step()
            step += 1
            if pc.max_steps is not None and step >= pc.max_steps:
                break
        history.append({"epoch": epoch + 1, "L_MLM": total / max(n_masked, 1)})
        log.info("pretrain epoch %d  L_MLM/token %.4f", epoch + 1, history[-1]["L_MLM"])
        if pc.max_steps is not None and step >= pc.max_steps:
            break
    model.eval()
    return TrainResult(model, vocab, history)


# ---------------------------------------------------------------------------
# checkpoints and metrics


def save_checkpoint(model: SpanModel, vocab: Vocab, path, extra: Optional[dict] = None) -> None:
    """Versioned binary: magic, version, JSON header, little-endian float64 arrays."""
    state = model.state_dict()
    header = {
        "config": model.config.to_dict(),
        "vocab": vocab.to_dict(),
        "params": [[k, list(v.shape)] for k, v in state.items()],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for v in state.values():
            f.write(v.detach().cpu().numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[SpanModel, Vocab, dict]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, n = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16: 16 + n].decode("utf-8"))
    model = SpanModel(EncoderConfig(**header["config"])).to(torch.float64)
    off = 16 + n
    state = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float64))
        off += 8 * count
    model.load_state_dict(state)
    model.eval()
    return model, Vocab.from_dict(header["vocab"]), header.get("extra", {})


def write_metrics(history: Sequence[dict], path) -> None:
    if not history:
        return
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(history[0]), lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
