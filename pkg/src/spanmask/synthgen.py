"""Template-based clinical-style corpora with exact gold annotation.

Each labeled sentence is either a symptom sentence (one or two events built
from an assertion template plus optional arguments), a negative-context
sentence (a symptom word used in a non-trigger role, such as a clinic name)
or filler. Symptom words are drawn from a ranked lexicon with Zipf weights,
so two specs with different lexicon orders or negative-context rates give a
controllable domain shift.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import positive_class_ratio, trigger_coverage
from .corpus import Corpus, Document, Sentence, Token, make_document
from .schema import Entity, EntityType, Relation

ASSERTION_TEMPLATES: dict[str, tuple[str, ...]] = {
    "present": ("patient reports {E} .", "complains of {E} .", "{E} noted on exam .",
                "positive for {E} .", "endorses {E} ."),
    "absent": ("denies {E} .", "no {E} .", "negative for {E} .", "without {E} ."),
    "possible": ("possible {E} .", "question of {E} .", "may have {E} ."),
    "conditional": ("{E} only when walking .", "{E} with exertion .", "{E} after meals ."),
    "hypothetical": ("return if {E} develops .", "call for any {E} .", "monitor for {E} ."),
    "not patient": ("wife has {E} .", "mother with {E} .", "family history of {E} ."),
}
# oncology-clinic phrasing used by the cancer-like domains on top of the shared bank
ONCOLOGY_TEMPLATES: dict[str, tuple[str, ...]] = {
    "present": ("ongoing {E} since last cycle .", "reports grade two {E} .",
                "{E} persists after chemotherapy .", "experiencing {E} at home ."),
    "absent": ("{E} has not recurred .", "no further {E} reported .", "free of {E} this cycle ."),
    "possible": ("{E} likely related to treatment .", "suspect {E} from radiation ."),
    "conditional": ("{E} on infusion days .", "{E} after each cycle ."),
    "hypothetical": ("watch for {E} after infusion .", "counseled on {E} risk ."),
    "not patient": ("sister had {E} during treatment .", "husband reports his own {E} ."),
}
NEGATIVE_TEMPLATES = (
    "{W} clinic appointment scheduled .",
    "{W} screening questionnaire completed .",
    "reviewed {W} protocol with staff .",
    "{W} precautions discussed .",
    "referred to {W} service .",
    "patient reports {W} clinic called back .",
    "denies need for {W} medication refill .",
    "no {W} team consult needed today .",
    "complains of {W} pump alarm at night .",
    "discussed {W} diary with patient .",
)
FILLER = (
    "patient seen in clinic today .", "vital signs stable .", "follow up in two weeks .",
    "labs reviewed with patient .", "medications reconciled .", "plan discussed at length .",
)
SEVERITY_WORDS = {"mild": ("mild",), "moderate": ("moderate",), "severe": ("severe",)}
CHANGE_WORDS = {
    "worsened": ("worsened", "worsening"), "improved": ("improved", "improving"),
    "resolved": ("resolved",), "no change": ("unchanged", "stable"),
}
CHARACTERISTICS = ("sharp", "dull", "dry", "productive", "burning", "diffuse")
FREQUENCY = ("occasional", "chronic", "daily", "constant", "frequent")
ANATOMY = ("chest", "lower back", "left leg", "abdomen", "right arm", "neck", "pelvis")
DURATION = ("for two days", "for one week", "for three months", "since yesterday", "for several weeks")

DEFAULT_ASSERTION_WEIGHTS = {
    "present": 0.42, "absent": 0.33, "possible": 0.07,
    "conditional": 0.06, "hypothetical": 0.07, "not patient": 0.05,
}
DEFAULT_ARGUMENT_PROBS = {
    "Anatomy": 0.25, "Duration": 0.15, "Severity": 0.15,
    "Change": 0.12, "Characteristics": 0.12, "Frequency": 0.1,
}


@dataclass
class DomainSpec:
    name: str
    lexicon: list[str]
    zipf_exponent: float = 1.0
    assertion_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ASSERTION_WEIGHTS))
    negative_context_prob: float = 0.1
    phrase_negative_prob: dict[str, float] = field(default_factory=dict)
    extra_templates: dict[str, list[str]] = field(default_factory=dict)
    argument_probs: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ARGUMENT_PROBS))
    conjunction_prob: float = 0.15
    filler_prob: float = 0.1
    sentences_per_doc: int = 5
    seed: int = 0

    def check(self) -> None:
        if not self.lexicon:
            raise ValueError(f"{self.name}: empty lexicon")
        if len(set(self.lexicon)) != len(self.lexicon):
            raise ValueError(f"{self.name}: duplicate lexicon entries")
        probs = [self.negative_context_prob, self.conjunction_prob, self.filler_prob,
                 *self.phrase_negative_prob.values(), *self.argument_probs.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"{self.name}: probabilities must lie in [0, 1]")
        if (set(self.assertion_weights) | set(self.extra_templates)) - set(ASSERTION_TEMPLATES):
            raise ValueError(f"{self.name}: unknown assertion subtype")
        if any(t.count("{E}") != 1 for ts in self.extra_templates.values() for t in ts):
            raise ValueError(f"{self.name}: templates need exactly one {{E}} slot")
        if self.zipf_exponent < 0 or self.sentences_per_doc < 1:
            raise ValueError(f"{self.name}: bad zipf exponent or document size")

    def templates(self, subtype: str) -> tuple[str, ...]:
        return ASSERTION_TEMPLATES[subtype] + tuple(self.extra_templates.get(subtype, ()))

    def negative_prob(self, word: str) -> float:
        return self.phrase_negative_prob.get(word, self.negative_context_prob)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DomainSpec":
        spec = cls(**json.loads(Path(path).read_text()))
        spec.check()
        return spec


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


class _SentenceBuilder:
    def __init__(self):
        self.words: list[str] = []
        self.entities: list[Entity] = []
        self.relations: list[Relation] = []

    def add(self, text: str) -> tuple[int, int]:
        toks = text.split()
        start = len(self.words)
        self.words += toks
        return start, len(self.words)

    def entity(self, etype: EntityType, span: tuple[int, int], subtype: Optional[str] = None) -> str:
        eid = f"T{len(self.entities) + 1}"
        self.entities.append(Entity(eid, etype, span[0], span[1], subtype))
        return eid

    def link(self, head: str, tail: str) -> None:
        self.relations.append(Relation(head, tail))


class _Generator:
    def __init__(self, spec: DomainSpec, rng: np.random.Generator):
        spec.check()
        self.spec = spec
        self.rng = rng
        self.weights = zipf_weights(len(spec.lexicon), spec.zipf_exponent)
        subs = list(spec.assertion_weights)
        w = np.array([spec.assertion_weights[s] for s in subs], dtype=np.float64)
        self.subtypes, self.subtype_w = subs, w / w.sum()

    def choice(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def symptom(self) -> str:
        return self.spec.lexicon[int(self.rng.choice(len(self.weights), p=self.weights))]

    def _chunk(self, sb: _SentenceBuilder, word: str, post: bool) -> tuple[str, list[tuple[str, str]], Optional[str]]:
        """Emit one event's words. Returns (trigger id, argument links, anatomy id)."""
        p = self.spec.argument_probs
        r = self.rng.random(6)
        links: list[tuple[str, str]] = []
        if r[0] < p.get("Frequency", 0):
            links.append(("arg", sb.entity(EntityType.FREQUENCY, sb.add(self.choice(FREQUENCY)))))
        if r[1] < p.get("Severity", 0):
            sev = self.choice(list(SEVERITY_WORDS))
            links.append(("arg", sb.entity(EntityType.SEVERITY, sb.add(self.choice(SEVERITY_WORDS[sev])), sev)))
        if r[2] < p.get("Characteristics", 0):
            links.append(("arg", sb.entity(EntityType.CHARACTERISTICS, sb.add(self.choice(CHARACTERISTICS)))))
        tspan = sb.add(word)
        tid = sb.entity(EntityType.SSX, tspan)
        anat = None
        if post:
            if r[3] < p.get("Anatomy", 0):
                sb.add("in the")
                anat = sb.entity(EntityType.ANATOMY, sb.add(self.choice(ANATOMY)))
            if r[4] < p.get("Duration", 0):
                links.append(("arg", sb.entity(EntityType.DURATION, sb.add(self.choice(DURATION)))))
            if r[5] < p.get("Change", 0):
                chg = self.choice(list(CHANGE_WORDS))
                sb.add("that is")
                links.append(("arg", sb.entity(EntityType.CHANGE, sb.add(self.choice(CHANGE_WORDS[chg])), chg)))
        return tid, links, anat

    def symptom_sentence(self, sb: _SentenceBuilder, word: str) -> None:
        sub = self.subtypes[int(self.rng.choice(len(self.subtypes), p=self.subtype_w))]
        template = self.choice(self.spec.templates(sub))
        words = [word]
        if self.rng.random() < self.spec.conjunction_prob:
            other = self.symptom()
            if other != word and self.rng.random() >= self.spec.negative_prob(other):
                words.append(other)
        before, after = template.split("{E}")
        if before.strip():
            sb.add(before)
        events = []
        for k, w in enumerate(words):
            if k:
                sb.add("or" if sub == "absent" else "and")
            events.append(self._chunk(sb, w, post=k == len(words) - 1))
        anat = events[-1][2]
        for tid, links, _ in events:
            t = next(e for e in sb.entities if e.id == tid)
            aid = sb.entity(EntityType.ASSERTION, t.span, sub)
            sb.link(tid, aid)
            for _, a in links:
                sb.link(tid, a)
            if anat is not None:
                sb.link(tid, anat)
        if after.strip():
            sb.add(after)

    def sentence(self) -> _SentenceBuilder:
        sb = _SentenceBuilder()
        if self.rng.random() < self.spec.filler_prob:
            sb.add(self.choice(FILLER))
            return sb
        word = self.symptom()
        if self.rng.random() < self.spec.negative_prob(word):
            before, after = self.choice(NEGATIVE_TEMPLATES).split("{W}")
            sb.add(f"{before} {word} {after}")
            return sb
        self.symptom_sentence(sb, word)
        return sb


def _document(doc_id: str, domain: str, builders: list[_SentenceBuilder]) -> Document:
    parts, sents, pos = [], [], 0
    for sb in builders:
        toks = []
        words = list(sb.words)
        for i, w in enumerate(words):
            shown = w.capitalize() if i == 0 else w
            if parts:
                pos += 1
            parts.append(shown)
            toks.append(Token(w, pos, pos + len(w)))
            pos += len(w)
        sents.append(Sentence(tuple(toks), tuple(sb.entities), tuple(sb.relations)))
    return Document(doc_id, domain, " ".join(parts), tuple(sents))


def generate_domain(
    spec: DomainSpec, n_sentences: int, n_unlabeled: int = 0
) -> tuple[Corpus, list[Document]]:
    """Labeled corpus of ``n_sentences`` plus an unlabeled document pool."""
    if n_sentences <= 0:
        raise ValueError("n_sentences must be positive")
    spec.check()
    gen = _Generator(spec, np.random.default_rng([spec.seed, 0]))
    builders = [gen.sentence() for _ in range(n_sentences)]
    k = spec.sentences_per_doc
    docs = tuple(
        _document(f"{spec.name}-{i // k:05d}", spec.name, builders[i: i + k])
        for i in range(0, n_sentences, k)
    )
    ugen = _Generator(spec, np.random.default_rng([spec.seed, 1]))
    unlabeled = []
    for i in range(0, n_unlabeled, k):
        d = _document("u", spec.name, [ugen.sentence() for _ in range(min(k, n_unlabeled - i))])
        unlabeled.append(make_document(f"{spec.name}-u{i // k:05d}", spec.name, d.text))
    return Corpus(docs), unlabeled


@dataclass(frozen=True)
class ShiftSummary:
    lexicon_overlap: float
    coverage_overlap: float
    mean_ratio_gap: float
    shared_phrases: int


def shift_summary(source_spec: DomainSpec, target_spec: DomainSpec, source: Corpus, target: Corpus,
                  top_n: int = 100) -> ShiftSummary:
    a, b = set(source_spec.lexicon), set(target_spec.lexicon)
    jaccard = len(a & b) / len(a | b)
    curve = trigger_coverage(source, target, top_n)
    gaps = []
    for w in sorted(a & b):
        try:
            gaps.append(positive_class_ratio(target, w) - positive_class_ratio(source, w))
        except ValueError:
            continue
    return ShiftSummary(jaccard, curve[-1].target, float(np.mean(gaps)) if gaps else 0.0, len(gaps))


def make_shift_pair(
    source_spec: DomainSpec, target_spec: DomainSpec, n_source: int = 400, n_target: int = 300,
    n_unlabeled: int = 0,
) -> tuple[Corpus, Corpus, ShiftSummary]:
    source, _ = generate_domain(source_spec, n_source, n_unlabeled)
    target, _ = generate_domain(target_spec, n_target)
    return source, target, shift_summary(source_spec, target_spec, source, target)


# ---------------------------------------------------------------------------
# presets

COVID_LIKE = [
    "cough", "pain", "fever", "fatigue", "congestion", "nausea", "chills", "neuropathy",
    "myalgias", "constipation", "headache", "numbness", "rhinorrhea", "edema", "anosmia",
    "dyspnea", "wheezing", "malaise", "sneezing", "ageusia", "diarrhea", "dizziness",
    "vomiting", "rash", "swelling", "insomnia", "anxiety", "bruising", "tingling", "anorexia",
]
CANCER_LIKE = [
    "pain", "fatigue", "neuropathy", "nausea", "constipation", "edema", "numbness", "swelling",
    "insomnia", "tingling", "anorexia", "bruising", "anxiety", "dizziness", "vomiting", "diarrhea",
    "cough", "fever", "rash", "headache", "chills", "dyspnea", "wheezing", "malaise", "congestion",
    "hematuria", "dysuria", "incontinence", "nocturia", "urgency",
]
LUNG_OVARIAN_LIKE = [
    "pain", "fatigue", "cough", "nausea", "dyspnea", "constipation", "edema", "neuropathy",
    "swelling", "numbness", "insomnia", "anorexia", "dizziness", "vomiting", "diarrhea",
    "tingling", "bruising", "fever", "wheezing", "anxiety", "hematuria", "dysuria", "chills",
    "headache", "incontinence", "rash", "malaise", "urgency", "congestion", "nocturia",
]
# frequent far-source words that mostly appear in clinic names, screenings and protocols
_FAR_NEGATIVE = {w: 0.85 for w in (
    "pain", "fatigue", "nausea", "neuropathy", "constipation", "numbness", "edema",
)}


def _oncology() -> dict[str, list[str]]:
    return {k: list(v) for k, v in ONCOLOGY_TEMPLATES.items()}


def preset(name: str, seed: int = 0) -> DomainSpec:
    """Shipped specs: ``target``, ``near`` and ``far`` sources."""
    if name == "target":
        return DomainSpec("target", list(CANCER_LIKE), 1.0, negative_context_prob=0.05,
                          extra_templates=_oncology(), seed=seed + 101)
    if name == "near":
        return DomainSpec("near", list(LUNG_OVARIAN_LIKE), 1.0, negative_context_prob=0.1,
                          extra_templates=_oncology(), seed=seed + 202)
    if name == "far":
        return DomainSpec(
            "far", list(COVID_LIKE), 1.1, negative_context_prob=0.1,
            phrase_negative_prob=dict(_FAR_NEGATIVE), seed=seed + 303,
        )
    raise KeyError(f"unknown preset {name!r}")


PRESETS = ("target", "near", "far")
