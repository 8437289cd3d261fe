import math
import random
from collections import Counter

import pytest

from helpers import E, corpus, sentence
from spanmask.corpus import MASK
from spanmask.masking import (
    PhraseList, apply_dynamic_mask, build_frequency_list, keep_phrase, mlm_mask,
    phrase_list_from_counts, trigger_surfaces,
)
from spanmask.synthgen import generate_domain, preset


def test_frequency_list_filters():
    counts = Counter({"pain": 50, "nausea": 30, ".": 40, "a": 20, "chest pain": 25})
    assert phrase_list_from_counts(counts, 3).surfaces == ["pain", "nausea"]
    assert phrase_list_from_counts(counts, 0).surfaces == []


def test_keep_phrase():
    assert keep_phrase("pain") and not keep_phrase("x") and not keep_phrase("--") and not keep_phrase("a b")


def test_frequency_list_matches_recount():
    c, _ = generate_domain(preset("far"), 400)
    counts: Counter = Counter()
    for doc in c.documents:
        for s in doc.sentences:
            for e in s.entities:
                if e.type is E.SSX:
                    counts[" ".join(t.surface for t in s.tokens[e.start:e.end])] += 1
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    expected = [(p, n) for p, n in top if " " not in p and len(p) > 1]
    assert list(build_frequency_list(c, 10).phrases) == expected


def test_union_mode_includes_each_domain_top():
    a = sentence("cough", [("T1", E.SSX, 0, 1)])
    b = sentence("fever", [("T1", E.SSX, 0, 1)])
    from spanmask.corpus import Corpus
    from helpers import document
    c = Corpus((document("x", [a, a, a], "far"), document("y", [b], "near")))
    assert build_frequency_list(c, 1, mode="pooled").surfaces == ["cough"]
    assert build_frequency_list(c, 1, mode="union").surfaces == ["cough", "fever"]


def test_phrase_list_tsv(tmp_path):
    pl = PhraseList((("pain", 5), ("cough", 2)))
    pl.save_tsv(tmp_path / "l.tsv")
    assert PhraseList.load_tsv(tmp_path / "l.tsv") == pl


def _matched_corpus(n_sent=250):
    s = sentence("cough and pain and cough , fever today", [("T1", E.SSX, 0, 1)])
    return corpus(*[s] * n_sent)


PL = PhraseList((("cough", 1), ("pain", 1), ("fever", 1)))


def test_rate_zero_and_one():
    c = _matched_corpus(10)
    _, plan = apply_dynamic_mask(c, PL, 0.0, 0, 0)
    assert not plan.positions and plan.matched == 40
    masked, plan = apply_dynamic_mask(c, PL, 1.0, 0, 0)
    assert len(plan.positions) == 40
    for _, s in masked.sentences():
        assert [t.surface == MASK for t in s.tokens] == [True, False, True, False, True, False, True, False]


def test_rate_in_binomial_bounds():
    c = _matched_corpus(250)
    _, plan = apply_dynamic_mask(c, PL, 0.8, 3, 11)
    assert plan.matched == 1000
    assert abs(len(plan.positions) - 800) <= 3 * math.sqrt(1000 * 0.8 * 0.2)


def test_deterministic_and_epoch_dependent():
    c = _matched_corpus(20)
    a = apply_dynamic_mask(c, PL, 0.8, 1, 5)
    b = apply_dynamic_mask(c, PL, 0.8, 1, 5)
    assert a == b
    rng = random.Random(0)
    for _ in range(100):
        seed, e = rng.randrange(10**6), rng.randrange(100)
        p1 = apply_dynamic_mask(c, PL, 0.8, e, seed)[1].positions
        p2 = apply_dynamic_mask(c, PL, 0.8, e + 1, seed)[1].positions
        assert p1 != p2


def test_labels_preserved_and_only_listed_tokens_masked():
    c, _ = generate_domain(preset("far"), 200)
    pl = build_frequency_list(c, 5)
    masked, plan = apply_dynamic_mask(c, pl, 0.8, 0, 0)
    assert plan.positions
    for (_, g), (_, m) in zip(c.sentences(), masked.sentences()):
        assert g.entities is m.entities and g.relations is m.relations
        for tg, tm in zip(g.tokens, m.tokens):
            assert tm == tg or (tm.surface == MASK and tg.surface in pl.surfaces and tm.start == tg.start)


def test_bad_rate():
    with pytest.raises(ValueError):
        apply_dynamic_mask(_matched_corpus(1), PL, 1.5, 0, 0)


def test_mlm_rate_bounds():
    ids = list(range(10, 10010))
    assert mlm_mask(ids, 0.0, 0, mask_id=3)[1] == []
    out, idx, orig = mlm_mask(ids, 1.0, 0, mask_id=3, protected={10, 11})
    assert len(idx) == 9998 and out[0] == 10 and set(out[2:]) == {3}
    _, idx, orig = mlm_mask(ids, 0.15, 7, mask_id=3)
    assert abs(len(idx) - 1500) <= 3 * math.sqrt(10000 * 0.15 * 0.85)
    assert orig == [ids[i] for i in idx]


def test_mlm_random_replace_split():
    ids = [50] * 20000
    out, idx, _ = mlm_mask(ids, 1.0, 0, mask_id=3, random_replace=True, vocab_size=60, first_word_id=4)
    kinds = Counter("mask" if o == 3 else "keep" if o == 50 else "rand" for o in out)
    # a random draw equal to the original token counts as keep
    assert abs(kinds["mask"] / 20000 - 0.8) < 0.02
    assert abs(kinds["rand"] / 20000 - 0.1 * 55 / 56) < 0.02
    assert all(4 <= o < 60 for o in out if o != 3)


def test_trigger_surfaces_multiword():
    s = sentence("chest pain today", [("T1", E.SSX, 0, 2)])
    assert trigger_surfaces(corpus(s)) == {"chest pain": 1}
