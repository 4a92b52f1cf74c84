"""Synthetic agreement grammars used to train the fixture checkpoint.

One English-like grammar plus three parametric toy languages. Every
generator returns grammatical sentences; the minimal-pair builders return
(good, bad, annotation) triples where the annotation marks the first noun
and the first verb of the good sentence for lexical-substitution controls.
"""

import random
from dataclasses import dataclass, field

# ---------------------------------------------------------------------------
# English-like grammar
# ---------------------------------------------------------------------------

GENDERED = [
    ("boy", "boys", "m"), ("girl", "girls", "f"), ("man", "men", "m"),
    ("woman", "women", "f"), ("king", "kings", "m"), ("queen", "queens", "f"),
    ("actor", "actors", "m"), ("actress", "actresses", "f"),
    ("waiter", "waiters", "m"), ("waitress", "waitresses", "f"),
    ("brother", "brothers", "m"), ("sister", "sisters", "f"),
]
ANIMALS = [
    ("dog", "dogs"), ("cat", "cats"), ("horse", "horses"), ("bird", "birds"),
    ("teacher", "teachers"), ("doctor", "doctors"), ("student", "students"),
    ("child", "children"),
]
THINGS = [
    ("book", "books"), ("car", "cars"), ("tree", "trees"), ("house", "houses"),
    ("table", "tables"), ("river", "rivers"), ("box", "boxes"),
    ("chair", "chairs"), ("window", "windows"), ("lamp", "lamps"),
]
ADJS = ["big", "small", "old", "young", "red", "quiet", "happy", "tall"]
VI = [("sleeps", "sleep"), ("runs", "run"), ("smiles", "smile"),
      ("laughs", "laugh"), ("waits", "wait"), ("sings", "sing"),
      ("arrives", "arrive"), ("falls", "fall")]
# transitive verbs that accept any object
VT = [("sees", "see"), ("likes", "like"), ("finds", "find"),
      ("watches", "watch"), ("helps", "help"), ("follows", "follow"),
      ("visits", "visit"), ("remembers", "remember")]
# transitive verbs that require an animate subject and take inanimate objects
VT_AGENT = [("reads", "read"), ("opens", "open"), ("breaks", "break"),
            ("cleans", "clean"), ("paints", "paint"), ("buys", "buy")]
PREPS = ["near", "behind", "beside", "under"]
DET_ANY = ["the"]
DET_SG = ["this", "that", "a", "every"]
DET_PL = ["these", "those", "some", "many"]
DEMONSTRATIVE = {"sg": ["this", "that"], "pl": ["these", "those"]}
DEM_SWAP = {"this": "these", "that": "those", "these": "this", "those": "that"}
REFL = {"m": "himself", "f": "herself", "pl": "themselves"}


@dataclass
class Word:
    text: str
    kind: str  # "noun" | "verb" | "other"


@dataclass
class Sent:
    words: list = field(default_factory=list)
    topic: tuple = None  # (number, gender) of the subject, for follow-ups

    def add(self, text, kind="other"):
        self.words.append(Word(text, kind))
        return self

    def extend(self, other):
        self.words.extend(other.words)
        return self

    def render(self):
        out = ""
        for i, w in enumerate(self.words):
            t = w.text
            if i == 0:
                t = t[0].upper() + t[1:]
            if w.text == ".":
                out += "."
            else:
                out += (" " if out else "") + t
        return out

    def first_span(self, kind):
        """Character span of the first word of the given kind in render()."""
        pos = 0
        for i, w in enumerate(self.words):
            t = w.text
            if i == 0:
                t = t[0].upper() + t[1:]
            if w.text == ".":
                pos += 1
                continue
            if i > 0:
                pos += 1
            if w.kind == kind:
                return pos, pos + len(t), w.text
            pos += len(t)
        return None


def _num(rng):
    return "sg" if rng.random() < 0.5 else "pl"


def _det(rng, num):
    pool = DET_ANY + (DET_SG if num == "sg" else DET_PL)
    return rng.choice(pool)


def _noun(entry, num):
    return entry[0] if num == "sg" else entry[1]


def _verb(entry, num):
    return entry[0] if num == "sg" else entry[1]


def np_simple(rng, pool, num, adj_p=0.3, det=None):
    s = Sent()
    entry = rng.choice(pool)
    s.add(det if det else _det(rng, num))
    if rng.random() < adj_p:
        s.add(rng.choice(ADJS))
    s.add(_noun(entry, num), "noun")
    return s, entry


def np_subject(rng, pool, num, mod_p=0.35):
    s, entry = np_simple(rng, pool, num)
    if rng.random() < mod_p:
        if rng.random() < 0.5:
            pp, _ = np_simple(rng, THINGS + ANIMALS, _num(rng), adj_p=0.1)
            s.add(rng.choice(PREPS)).extend(pp)
        else:
            s.add("that").add(_verb(rng.choice(VT), num), "verb")
            obj, _ = np_simple(rng, ANIMALS + THINGS, _num(rng), adj_p=0.1)
            s.extend(obj)
    return s, entry


def en_sentence(rng):
    num = _num(rng)
    r = rng.random()
    if r < 0.2:
        entry = rng.choice(GENDERED)
        subj, _ = np_subject(rng, [entry], num)
        refl = REFL["pl"] if num == "pl" else REFL[entry[2]]
        s = subj.add(_verb(rng.choice(VT), num), "verb").add(refl).add(".")
        s.topic = (num, entry[2])
        return s
    subj, entry = np_subject(rng, GENDERED + ANIMALS, num)
    gender = entry[2] if len(entry) > 2 else None
    if r < 0.45:
        s = subj.add(_verb(rng.choice(VI), num), "verb").add(".")
    elif r < 0.7:
        obj, _ = np_simple(rng, GENDERED + ANIMALS + THINGS, _num(rng))
        s = subj.add(_verb(rng.choice(VT), num), "verb").extend(obj).add(".")
    elif r < 0.85:
        obj, _ = np_simple(rng, THINGS, _num(rng))
        s = subj.add(_verb(rng.choice(VT_AGENT), num), "verb").extend(obj).add(".")
    else:
        s = subj.add("is" if num == "sg" else "are").add(rng.choice(ADJS)).add(".")
    s.topic = (num, gender)
    return s


PRONOUN = {"m": "he", "f": "she", None: "it"}


def en_followup(rng, topic):
    """A short sentence whose pronoun refers back to the previous subject."""
    num, gender = topic
    pron = "they" if num == "pl" else PRONOUN[gender]
    return Sent().add(pron).add(_verb(rng.choice(VI), num), "verb").add(".")


def _subject_for_pair(rng, num, pool=None):
    s, _ = np_simple(rng, pool or (GENDERED + ANIMALS), num, adj_p=0.2)
    return s


def _demonstrative_object(rng, with_adj, swap_det):
    """Returns (good_np, bad_np) that differ in the head noun or determiner."""
    num = _num(rng)
    entry = rng.choice(ANIMALS + THINGS + GENDERED)
    det = rng.choice(DEMONSTRATIVE[num])
    other = "pl" if num == "sg" else "sg"
    good, bad = Sent(), Sent()
    if swap_det:
        good.add(det)
        bad.add(DEM_SWAP[det])
        # bad determiner disagrees with the noun
        noun_num = num
    else:
        good.add(det)
        bad.add(det)
        noun_num = num
    if with_adj:
        adj = rng.choice(ADJS)
        good.add(adj)
        bad.add(adj)
    good.add(_noun(entry, noun_num), "noun")
    bad.add(_noun(entry, noun_num if swap_det else other), "noun")
    return good, bad


def pair_det_noun(rng, with_adj=False, swap_det=False):
    num = _num(rng)
    subj = _subject_for_pair(rng, num)
    verb = _verb(rng.choice(VT), num)
    g_obj, b_obj = _demonstrative_object(rng, with_adj, swap_det)
    g = Sent(list(subj.words)).add(verb, "verb").extend(g_obj).add(".")
    b = Sent(list(subj.words)).add(verb, "verb").extend(b_obj).add(".")
    return g, b


def pair_sv_simple(rng):
    num = _num(rng)
    other = "pl" if num == "sg" else "sg"
    subj = _subject_for_pair(rng, num)
    if rng.random() < 0.5:
        v = rng.choice(VI)
        g = Sent(list(subj.words)).add(_verb(v, num), "verb").add(".")
        b = Sent(list(subj.words)).add(_verb(v, other), "verb").add(".")
    else:
        v = rng.choice(VT)
        obj, _ = np_simple(rng, ANIMALS + THINGS, _num(rng), adj_p=0.1)
        g = Sent(list(subj.words)).add(_verb(v, num), "verb").extend(obj).add(".")
        b = Sent(list(subj.words)).add(_verb(v, other), "verb").extend(obj).add(".")
    return g, b


def pair_sv_distractor_pp(rng):
    num = _num(rng)
    other = "pl" if num == "sg" else "sg"
    subj = _subject_for_pair(rng, num)
    pp, _ = np_simple(rng, THINGS + ANIMALS, other, adj_p=0.0, det="the")
    subj.add(rng.choice(PREPS)).extend(pp)
    v = rng.choice(VI)
    g = Sent(list(subj.words)).add(_verb(v, num), "verb").add(".")
    b = Sent(list(subj.words)).add(_verb(v, other), "verb").add(".")
    return g, b


def pair_sv_distractor_rc(rng):
    num = _num(rng)
    other = "pl" if num == "sg" else "sg"
    subj = _subject_for_pair(rng, num)
    subj.add("that").add(_verb(rng.choice(VT), num), "verb")
    obj, _ = np_simple(rng, ANIMALS + THINGS, other, adj_p=0.0, det="the")
    subj.extend(obj)
    v = rng.choice(VI)
    g = Sent(list(subj.words)).add(_verb(v, num), "verb").add(".")
    b = Sent(list(subj.words)).add(_verb(v, other), "verb").add(".")
    return g, b


def pair_anaphor_gender(rng):
    entry = rng.choice(GENDERED)
    subj, _ = np_simple(rng, [entry], "sg", adj_p=0.2)
    verb = _verb(rng.choice(VT), "sg")
    wrong = "herself" if entry[2] == "m" else "himself"
    g = Sent(list(subj.words)).add(verb, "verb").add(REFL[entry[2]]).add(".")
    b = Sent(list(subj.words)).add(verb, "verb").add(wrong).add(".")
    return g, b


def pair_anaphor_number(rng):
    entry = rng.choice(GENDERED)
    num = _num(rng)
    subj, _ = np_simple(rng, [entry], num, adj_p=0.2)
    verb = _verb(rng.choice(VT), num)
    good = REFL["pl"] if num == "pl" else REFL[entry[2]]
    bad = REFL[entry[2]] if num == "pl" else REFL["pl"]
    g = Sent(list(subj.words)).add(verb, "verb").add(good).add(".")
    b = Sent(list(subj.words)).add(verb, "verb").add(bad).add(".")
    return g, b


def pair_transitive(rng):
    num = _num(rng)
    subj = _subject_for_pair(rng, num)
    obj, _ = np_simple(rng, GENDERED + ANIMALS, _num(rng), adj_p=0.1)
    g = Sent(list(subj.words)).add(_verb(rng.choice(VT), num), "verb").extend(obj).add(".")
    b = Sent(list(subj.words)).add(_verb(rng.choice(VI), num), "verb").extend(obj).add(".")
    return g, b


def pair_intransitive(rng):
    num = _num(rng)
    subj = _subject_for_pair(rng, num)
    g = Sent(list(subj.words)).add(_verb(rng.choice(VI), num), "verb").add(".")
    b = Sent(list(subj.words)).add(_verb(rng.choice(VT), num), "verb").add(".")
    return g, b


def pair_animate_subject(rng):
    num = _num(rng)
    good_subj, _ = np_simple(rng, GENDERED + ANIMALS[4:], num, adj_p=0.2)
    bad_subj, _ = np_simple(rng, THINGS, num, adj_p=0.2)
    verb = _verb(rng.choice(VT_AGENT), num)
    obj, _ = np_simple(rng, THINGS, _num(rng), adj_p=0.1)
    g = Sent(list(good_subj.words)).add(verb, "verb").extend(obj).add(".")
    b = Sent(list(bad_subj.words)).add(verb, "verb").extend(obj).add(".")
    return g, b


EN_PHENOMENA = [
    ("determiner_noun_agreement_1", "determiner_noun_agreement",
     lambda r: pair_det_noun(r)),
    ("determiner_noun_agreement_with_adjective_1", "determiner_noun_agreement",
     lambda r: pair_det_noun(r, with_adj=True)),
    ("determiner_noun_agreement_2", "determiner_noun_agreement",
     lambda r: pair_det_noun(r, swap_det=True)),
    ("regular_plural_subject_verb_agreement_1", "subject_verb_agreement",
     pair_sv_simple),
    ("distractor_agreement_relational_noun", "subject_verb_agreement",
     pair_sv_distractor_pp),
    ("distractor_agreement_relative_clause", "subject_verb_agreement",
     pair_sv_distractor_rc),
    ("anaphor_gender_agreement", "anaphor_agreement", pair_anaphor_gender),
    ("anaphor_number_agreement", "anaphor_agreement", pair_anaphor_number),
    ("transitive", "argument_structure", pair_transitive),
    ("intransitive", "argument_structure", pair_intransitive),
    ("animate_subject_trans", "argument_structure", pair_animate_subject),
]


def en_nouns():
    out = set()
    for e in GENDERED + ANIMALS + THINGS:
        out.add(e[0])
        out.add(e[1])
    return sorted(out)


def en_verbs():
    out = set()
    for e in VI + VT + VT_AGENT:
        out.add(e[0])
        out.add(e[1])
    return sorted(out)


# ---------------------------------------------------------------------------
# Parametric toy languages
# ---------------------------------------------------------------------------

@dataclass
class ToyLanguage:
    code: str
    order: str          # "SVO" | "SOV"
    adj_after: bool
    noun_pl: str        # plural suffix
    verb_sg: str
    verb_pl: str
    det_sg: str
    det_pl: str
    seed: int
    nouns: list = field(default_factory=list)
    vi: list = field(default_factory=list)
    vt: list = field(default_factory=list)
    adjs: list = field(default_factory=list)
    pron: dict = field(default_factory=dict)

    def build_lexicon(self):
        rng = random.Random(self.seed)
        cons = "bdfgklmnprstvz"
        vows = "aeiou"
        seen = set()

        def word(syl):
            while True:
                w = "".join(rng.choice(cons) + rng.choice(vows) for _ in range(syl))
                w = w + rng.choice(cons)
                if w not in seen:
                    seen.add(w)
                    return w

        self.nouns = [word(1) for _ in range(12)]
        self.vi = [word(2) for _ in range(6)]
        self.vt = [word(2) for _ in range(6)]
        self.adjs = [word(1) for _ in range(5)]
        self.pron = {"sg": word(1), "pl": word(1)}
        return self

    def noun(self, stem, num):
        return stem + (self.noun_pl if num == "pl" else "")

    def verb(self, stem, num):
        return stem + (self.verb_pl if num == "pl" else self.verb_sg)

    def np(self, rng, num, adj_p=0.3, det_override=None, noun_override=None):
        s = Sent()
        s.add(det_override or (self.det_pl if num == "pl" else self.det_sg))
        adj = rng.choice(self.adjs) if rng.random() < adj_p else None
        stem = rng.choice(self.nouns)
        n = noun_override or self.noun(stem, num)
        if adj and not self.adj_after:
            s.add(adj)
        s.add(n, "noun")
        if adj and self.adj_after:
            s.add(adj)
        return s

    def clause(self, subj, verb, obj):
        s = Sent(list(subj.words))
        if obj is None:
            return s.add(verb, "verb").add(".")
        if self.order == "SOV":
            return s.extend(obj).add(verb, "verb").add(".")
        return s.add(verb, "verb").extend(obj).add(".")

    def sentence(self, rng):
        num = _num(rng)
        subj = self.np(rng, num)
        if rng.random() < 0.45:
            s = self.clause(subj, self.verb(rng.choice(self.vi), num), None)
        else:
            obj = self.np(rng, _num(rng), adj_p=0.2)
            s = self.clause(subj, self.verb(rng.choice(self.vt), num), obj)
        s.topic = (num, None)
        return s

    def followup(self, rng, topic):
        num = topic[0]
        return Sent().add(self.pron[num]).add(self.verb(rng.choice(self.vi), num), "verb").add(".")

    def pair_sv(self, rng):
        num = _num(rng)
        other = "pl" if num == "sg" else "sg"
        subj = self.np(rng, num, adj_p=0.2)
        if rng.random() < 0.5:
            stem = rng.choice(self.vi)
            return (self.clause(subj, self.verb(stem, num), None),
                    self.clause(subj, self.verb(stem, other), None))
        stem = rng.choice(self.vt)
        obj = self.np(rng, _num(rng), adj_p=0.1)
        return (self.clause(subj, self.verb(stem, num), obj),
                self.clause(subj, self.verb(stem, other), obj))

    def pair_det_noun(self, rng):
        num = _num(rng)
        subj_num = _num(rng)
        subj = self.np(rng, subj_num, adj_p=0.1)
        stem = rng.choice(self.nouns)
        verb = self.verb(rng.choice(self.vt), subj_num)
        det = self.det_pl if num == "pl" else self.det_sg
        good_obj = self.np(rng, num, adj_p=0.0, noun_override=self.noun(stem, num))
        wrong = "sg" if num == "pl" else "pl"
        bad_obj = self.np(rng, num, adj_p=0.0, det_override=det,
                          noun_override=self.noun(stem, wrong))
        return self.clause(subj, verb, good_obj), self.clause(subj, verb, bad_obj)

    def pair_transitive(self, rng):
        num = _num(rng)
        subj = self.np(rng, num, adj_p=0.2)
        obj = self.np(rng, _num(rng), adj_p=0.1)
        return (self.clause(subj, self.verb(rng.choice(self.vt), num), obj),
                self.clause(subj, self.verb(rng.choice(self.vi), num), obj))

    def pair_word_order(self, rng):
        num = _num(rng)
        subj = self.np(rng, num, adj_p=0.2)
        obj = self.np(rng, _num(rng), adj_p=0.1)
        verb = self.verb(rng.choice(self.vt), num)
        good = self.clause(subj, verb, obj)
        flipped = ToyLanguage(**{**self.__dict__, "order": "SVO" if self.order == "SOV" else "SOV"})
        bad = flipped.clause(subj, verb, obj)
        return good, bad

    def phenomena(self):
        c = self.code
        return [
            (f"{c}_subject_verb_agreement", "subject_verb_agreement", self.pair_sv),
            (f"{c}_determiner_noun_agreement", "determiner_noun_agreement", self.pair_det_noun),
            (f"{c}_transitive", "argument_structure", self.pair_transitive),
            (f"{c}_word_order", "word_order", self.pair_word_order),
        ]


TOY_LANGUAGES = [
    ToyLanguage("qaa", "SVO", False, "i", "a", "an", "lo", "li", seed=11),
    ToyLanguage("qab", "SOV", True, "en", "et", "ut", "ka", "ke", seed=12),
    ToyLanguage("qac", "SVO", True, "s", "o", "on", "di", "de", seed=13),
]
for _lang in TOY_LANGUAGES:
    _lang.build_lexicon()

# Typological feature vectors (binary), columns documented in FEATURE_NAMES.
FEATURE_NAMES = ["S_SVO", "S_SOV", "S_ADJ_BEFORE_NOUN", "S_ADJ_AFTER_NOUN",
                 "S_DET_BEFORE_NOUN", "S_PLURAL_SUFFIX", "S_VERB_AGREES_NUMBER",
                 "S_REFLEXIVE"]
FEATURES = {
    "en": [1, 0, 1, 0, 1, 1, 1, 1],
    "qaa": [1, 0, 1, 0, 1, 1, 1, 0],
    "qab": [0, 1, 0, 1, 1, 1, 1, 0],
    "qac": [1, 0, 0, 1, 1, 1, 1, 0],
}
