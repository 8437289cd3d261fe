import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from helpers import E, random_corpus
from spanmask.corpus import (
    CorpusFormatError, CorpusInvariantError, build_vocab, enumerate_spans, load_corpus,
    load_unlabeled, make_document, save_corpus, save_unlabeled, span_count, split_sentences, tokenize,
)
from spanmask.synthgen import generate_domain, preset

FIXTURE_SENTENCES = [
    ("Denies fever.", ["denies", "fever", "."]),
    ("chest-wall pain", ["chest", "-", "wall", "pain"]),
    ("No cough, no fever.", ["no", "cough", ",", "no", "fever", "."]),
    ("Pt c/o SOB x2 days", ["pt", "c", "/", "o", "sob", "x2", "days"]),
    ("BP 120/80", ["bp", "120", "/", "80"]),
    ("Temp 38.5C", ["temp", "38", ".", "5c"]),
    ("Mother's cough", ["mother", "'", "s", "cough"]),
    ("  spaced   out  ", ["spaced", "out"]),
    ("(mild) nausea", ["(", "mild", ")", "nausea"]),
    ("pain: 7/10", ["pain", ":", "7", "/", "10"]),
    ("No N/V/D.", ["no", "n", "/", "v", "/", "d", "."]),
    ("HEADACHE!!", ["headache", "!", "!"]),
    ("f/u in 2 wks", ["f", "/", "u", "in", "2", "wks"]),
    ("left-sided weakness", ["left", "-", "sided", "weakness"]),
    ("s/p chemo #3", ["s", "/", "p", "chemo", "#", "3"]),
    ("covid-19 +", ["covid", "-", "19", "+"]),
    ("O2 sat 95%", ["o2", "sat", "95", "%"]),
    ("r/o PE", ["r", "/", "o", "pe"]),
    ("fatigue; insomnia", ["fatigue", ";", "insomnia"]),
    ("", []),
]


def test_split_two_sentences():
    assert split_sentences("No cough. Denies fever.") == [(0, 9), (10, 23)]


def test_split_empty():
    assert split_sentences("") == []


def test_split_lines():
    text = "Patient seen today\nno cough\n\n  denies fever  "
    assert [text[a:b] for a, b in split_sentences(text)] == ["Patient seen today", "no cough", "denies fever"]


def test_tokenize_fixtures():
    for text, toks in FIXTURE_SENTENCES:
        assert tokenize(text) == toks, text


@given(st.text(max_size=60))
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


def test_vocab_tie_broken_lexicographically():
    docs = [make_document("x", "d", "a a a b b b c")]
    v = build_vocab(docs, max_size=5 + 2)
    assert v.itos[v.n_reserved:] == ["a", "b"]


def test_vocab_stable():
    c, _ = generate_domain(preset("target"), 60)
    assert build_vocab(c.documents, 100) == build_vocab(c.documents, 100)


def test_unk_rate_matches_tail_mass():
    c, _ = generate_domain(preset("far"), 300)
    counts = Counter(s for _, sent in c.sentences() for s in sent.surfaces)
    v = build_vocab(c.documents, 40)
    kept = set(v.itos)
    tail = sum(n for w, n in counts.items() if w not in kept) / sum(counts.values())
    ids = [i for _, sent in c.sentences() for i in v.encode(sent.surfaces)]
    assert ids.count(v.unk_id) / len(ids) == pytest.approx(tail, abs=1e-12)


@pytest.mark.parametrize("n,w,expected", [(3, 2, 5), (1, 10, 1), (12, 10, 75)])
def test_span_counts(n, w, expected):
    assert len(enumerate_spans(n, w)) == expected == span_count(n, w)


def test_span_count_closed_form_random():
    rng = random.Random(0)
    for _ in range(1000):
        n, w = rng.randint(0, 40), rng.randint(1, 15)
        m = min(n, w)
        assert len(enumerate_spans(n, w)) == m * n - m * (m - 1) // 2


def test_enumerate_spans_rejects_zero_width():
    with pytest.raises(ValueError):
        enumerate_spans(3, 0)


def test_jsonl_round_trip(tmp_path):
    c, _ = generate_domain(preset("target"), 40)
    p = tmp_path / "c.jsonl"
    save_corpus(c, p)
    assert load_corpus(p) == c
    save_corpus(load_corpus(p), tmp_path / "d.jsonl")
    assert p.read_bytes() == (tmp_path / "d.jsonl").read_bytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jsonl_round_trip_random(tmp_path_factory, seed):
    c = random_corpus(random.Random(seed))
    p = tmp_path_factory.mktemp("rt") / "c.jsonl"
    save_corpus(c, p)
    assert load_corpus(p, check=False) == c


def _golden_line():
    return {
        "id": "g1", "domain": "d", "text": "Denies cough. Chest pain",
        "sentences": [
            {"token_ranges": [[0, 6], [7, 12], [12, 13]],
             "entities": [{"id": "T1", "type": "SSx", "subtype": None, "start": 1, "end": 2},
                          {"id": "T2", "type": "Assertion", "subtype": "absent", "start": 1, "end": 2}],
             "relations": [{"head": "T1", "tail": "T2"}]},
            {"token_ranges": [[14, 19], [20, 24]],
             "entities": [{"id": "T1", "type": "SSx", "subtype": None, "start": 1, "end": 2},
                          {"id": "T2", "type": "Anatomy", "subtype": None, "start": 0, "end": 1}],
             "relations": [{"head": "T1", "tail": "T2"}]},
        ],
    }


def test_golden_counts(tmp_path):
    p = tmp_path / "g.jsonl"
    p.write_text(json.dumps(_golden_line()) + "\n")
    c = load_corpus(p)
    ents = Counter(e.type for _, s in c.sentences() for e in s.entities)
    assert ents == {E.SSX: 2, E.ASSERTION: 1, E.ANATOMY: 1}
    assert sum(len(s.relations) for _, s in c.sentences()) == 2
    assert c.documents[0].sentences[1].surfaces == ["chest", "pain"]


def test_span_past_sentence_names_line(tmp_path):
    bad = _golden_line()
    bad["sentences"][1]["entities"][0]["end"] = 5
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(_golden_line()) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(CorpusInvariantError, match="line 2"):
        load_corpus(p)


def test_malformed_json_names_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(_golden_line()) + "\n{not json\n")
    with pytest.raises(CorpusFormatError, match="line 2"):
        load_corpus(p)


def test_unlabeled_round_trip(tmp_path):
    docs = [make_document("a", "far", "No cough. Denies fever."), make_document("b", "near", "pain today")]
    p = tmp_path / "u.txt"
    save_unlabeled(docs, p)
    back = load_unlabeled(p)
    assert [(d.domain, d.text) for d in back] == [("far", "No cough. Denies fever."), ("near", "pain today")]
    assert [len(d.sentences) for d in back] == [2, 1]
