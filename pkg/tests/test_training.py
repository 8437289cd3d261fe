import hashlib

import pytest
import torch

from spanmask.corpus import build_vocab, make_document
from spanmask.masking import PhraseList, build_frequency_list
from spanmask.model import EncoderConfig
from spanmask.synthgen import generate_domain, preset
from spanmask.training import (
    PretrainConfig, TrainConfig, TrainingDiverged, _check_finite, chunk_tokens, load_checkpoint,
    pretrain_adaptive, pretraining_sequences, save_checkpoint, train, write_metrics,
)

SMALL = EncoderConfig(hidden=32, ff=64, layers=1)


def param_hash(model) -> str:
    h = hashlib.sha256()
    for v in model.state_dict().values():
        h.update(v.detach().numpy().tobytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def data():
    c, _ = generate_domain(preset("target"), 50)
    return c, build_vocab(c.documents, 500)


def test_training_reduces_loss(data):
    c, v = data
    hist = train(c, v, SMALL, TrainConfig(epochs=10), seed=0).history
    assert hist[-1]["L_Joint"] < hist[0]["L_Joint"]


def test_zero_rate_masking_equals_no_masking(data):
    c, v = data
    tc = TrainConfig(epochs=2, mask_rate=0.0)
    a = train(c, v, SMALL, tc, seed=3).model
    b = train(c, v, SMALL, tc, seed=3, phrase_list=build_frequency_list(c)).model
    assert param_hash(a) == param_hash(b)


def test_same_seed_bit_identical(data):
    c, v = data
    tc = TrainConfig(epochs=2)
    pl = build_frequency_list(c)
    a = train(c, v, SMALL, tc, seed=1, phrase_list=pl).model
    b = train(c, v, SMALL, tc, seed=1, phrase_list=pl).model
    d = train(c, v, SMALL, tc, seed=2, phrase_list=pl).model
    assert param_hash(a) == param_hash(b) != param_hash(d)


def test_thread_count_does_not_change_params(data):
    c, v = data
    tc = TrainConfig(epochs=1)
    before = torch.get_num_threads()
    try:
        torch.set_num_threads(1)
        a = param_hash(train(c, v, SMALL, tc, seed=4).model)
        torch.set_num_threads(2)
        b = param_hash(train(c, v, SMALL, tc, seed=4).model)
    finally:
        torch.set_num_threads(before)
    assert a == b


def test_masking_changes_trajectory(data):
    c, v = data
    tc = TrainConfig(epochs=1)
    a = train(c, v, SMALL, tc, seed=0).model
    b = train(c, v, SMALL, tc, seed=0, phrase_list=PhraseList((("pain", 1), ("fatigue", 1)))).model
    assert param_hash(a) != param_hash(b)


def test_chunking():
    assert [len(c) for c in chunk_tokens(list(range(130)), 64)] == [64, 64, 2]


def test_pretraining_sequences_layout():
    doc = make_document("u1", "far", " ".join(["cough"] * 130))
    v = build_vocab([doc], 20)
    seqs = pretraining_sequences([doc], v, 64)
    assert [len(s) for s in seqs] == [66, 66, 4]
    assert all(s[:2] == [v.cls_id, v.domain_id("far")] for s in seqs)


def test_pretrain_loss_decreases_one_document():
    doc = make_document("u1", "far", " ".join(f"w{i % 17} . patient reports cough" for i in range(30)))
    v = build_vocab([doc], 100)
    hist = pretrain_adaptive([doc], v, SMALL, PretrainConfig(epochs=2, mlm_rate=0.3), seed=0).history
    assert hist[1]["L_MLM"] < hist[0]["L_MLM"]


def test_memorization_recovery():
    texts = ["patient denies cough and fever today", "mild chest pain for two days",
             "wife has nausea after meals", "return if dizziness develops at night", "chronic fatigue noted on exam"]
    docs = [make_document(f"m{i}", "far", t) for i, t in enumerate(texts)]
    v = build_vocab(docs, 100)
    pc = PretrainConfig(epochs=200, sub_batch=5, max_steps=200)
    m = pretrain_adaptive(docs, v, EncoderConfig(dropout=0.0), pc, seed=0).model
    ok = tot = 0
    with torch.no_grad():
        for s in pretraining_sequences(docs, v, 64):
            for i in range(2, len(s)):
                x = list(s)
                x[i] = v.mask_id
                ids = torch.tensor([x])
                h, _ = m.encode(ids, ids == v.pad_id)
                ok += int(m.mlm_logits(h[0, i]).argmax()) == s[i]
                tot += 1
    assert ok / tot >= 0.9


def test_pretrain_empty_rejected():
    v = build_vocab([make_document("a", "far", "cough")], 10)
    with pytest.raises(ValueError):
        pretrain_adaptive([], v)


def test_non_finite_loss_raises():
    with pytest.raises(TrainingDiverged, match="epoch 3"):
        _check_finite(float("nan"), "L_Joint", 3, 17)


def test_checkpoint_round_trip(tmp_path, data):
    c, v = data
    m = train(c, v, SMALL, TrainConfig(epochs=1), seed=0).model
    save_checkpoint(m, v, tmp_path / "a.ckpt", {"seed": 0})
    m2, v2, extra = load_checkpoint(tmp_path / "a.ckpt")
    assert v2 == v and extra == {"seed": 0} and param_hash(m2) == param_hash(m)
    save_checkpoint(m2, v2, tmp_path / "b.ckpt", {"seed": 0})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")


def test_write_metrics(tmp_path):
    write_metrics([{"epoch": 1, "L_MLM": 0.5}, {"epoch": 2, "L_MLM": 0.25}], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "epoch,L_MLM\n1,0.5\n2,0.25\n"
