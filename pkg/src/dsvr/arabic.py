"""Verbatim Arabic transcript normalization and the symbol vocabulary.

The normalizer rewrites orthographic transcripts into verbatim,
pronunciation-faithful form for dialectal speech: elided alifs are
dropped, the definite article is rewritten as pronounced, silent
sun-letter lam is removed, hamza carriers and alif variants collapse to
plain forms, and tanwin is expanded to what is actually said. Short
vowels present in the input are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EncodingError, UnmappedCharacterError, ValidationError

FATHA = "َ"
DAMMA = "ُ"
KASRA = "ِ"
TANWIN_FATH = "ً"
TANWIN_DAMM = "ٌ"
TANWIN_KASR = "ٍ"
SHADDA = "ّ"
SUKUN = "ْ"

SHORT_VOWELS = FATHA + DAMMA + KASRA
TANWIN_TO_VOWEL = {TANWIN_FATH: FATHA, TANWIN_DAMM: DAMMA, TANWIN_KASR: KASRA}
MARKS = set(SHORT_VOWELS) | set(TANWIN_TO_VOWEL) | {SHADDA, SUKUN}

HAMZA = "ء"          # ء
ALIF = "ا"           # ا
ALIF_MADDA = "آ"     # آ
ALIF_MAQSURA = "ى"   # ى
TEH_MARBUTA = "ة"    # ة
LAM = "ل"            # ل
NOON = "ن"           # ن

#: Hamza written on a carrier letter collapses to the bare hamza.
HAMZA_FORMS = {
    "أ": HAMZA,  # أ
    "إ": HAMZA,  # إ
    "ؤ": HAMZA,  # ؤ
    "ئ": HAMZA,  # ئ
}

BASE_CONSONANTS = "بتثجحخدذرزسشصضطظعغفقكلمنهوي"

#: Letters for sounds outside the classical inventory (g, v, p, ...).
SPECIAL_LETTERS = "چڤپگڟ"

#: Letters that assimilate a preceding definite-article lam.
SUN_LETTERS = set("تثدذرزسشصضطظلن")

#: Letters that never act as the onset of a consonant cluster.
_VOWEL_LETTERS = {ALIF, ALIF_MADDA, ALIF_MAQSURA}

LETTERS = (
    set(BASE_CONSONANTS)
    | set(SPECIAL_LETTERS)
    | set(HAMZA_FORMS)
    | {HAMZA, ALIF, ALIF_MADDA, ALIF_MAQSURA, TEH_MARBUTA}
)

_ALLOWED = LETTERS | MARKS


@dataclass(frozen=True)
class VerbatimTranscript:
    """A normalized transcript: single-spaced, no leading/trailing space."""

    utt_id: str
    text: str

    def __post_init__(self):
        if self.text != " ".join(self.text.split()):
            raise ValidationError(
                f"{self.utt_id}: transcript not in canonical spacing: {self.text!r}"
            )


class _Unit:
    """One letter (or space) plus the diacritics attached to it."""

    __slots__ = ("kind", "char", "marks")

    def __init__(self, kind, char, marks=""):
        self.kind = kind
        self.char = char
        self.marks = marks

    def flat(self):
        return self.char + self.marks


def _parse_units(s):
    units = []
    for ch in s:
        if ch == " ":
            units.append(_Unit("space", ch))
        elif ch in MARKS:
            if units and units[-1].kind == "letter":
                units[-1].marks += ch
            else:
                # orphan mark with no carrier; keep it as-is
                units.append(_Unit("mark", ch))
        else:
            units.append(_Unit("letter", ch))
    return units


def _flatten(units):
    return "".join(u.flat() for u in units)


def _letter_indices(units):
    return [i for i, u in enumerate(units) if u.kind == "letter"]


def _has_space_between(units, i, j):
    return any(units[t].kind == "space" for t in range(i + 1, j))


def _is_vocalized(unit):
    return any(m in SHORT_VOWELS or m in TANWIN_TO_VOWEL for m in unit.marks)


def _drop_cluster_alifs(units):
    """Delete non-initial bare alif standing before a consonant cluster.

    A cluster is the next two letters (spaces and diacritics are
    transparent, so elision applies across word boundaries) where the
    first is an unvocalized consonant — or any shadda-bearing consonant,
    which is an underlying geminate — and the second is a consonant.
    All deletions are decided against the same input state.
    """
    letters = _letter_indices(units)
    if not letters:
        return units
    doomed = set()
    for pos, ui in enumerate(letters):
        if units[ui].char != ALIF or pos == 0:
            continue
        if pos + 1 >= len(letters):
            continue
        first = units[letters[pos + 1]]
        if first.char in _VOWEL_LETTERS:
            continue
        if SHADDA in first.marks:
            doomed.add(ui)
            continue
        if _is_vocalized(first):
            continue
        if pos + 2 >= len(letters):
            continue
        second = units[letters[pos + 2]]
        if second.char in _VOWEL_LETTERS:
            continue
        doomed.add(ui)
    if not doomed:
        return units
    return [u for i, u in enumerate(units) if i not in doomed]


def _rewrite_article(units):
    """Phrase-initial ال before a moon letter becomes ءَل (as pronounced)."""
    letters = _letter_indices(units)
    if len(letters) < 3:
        return units
    a, l, nxt = letters[0], letters[1], letters[2]
    if units[a].char != ALIF or units[l].char != LAM:
        return units
    if _has_space_between(units, a, l) or _has_space_between(units, l, nxt):
        return units
    if units[nxt].char in SUN_LETTERS:
        return units
    units[a] = _Unit("letter", HAMZA, FATHA)
    return units


def _drop_sun_lam(units):
    """Delete the silent article lam in word-initial ال + sun letter.

    Word-internal (lexical) lam is never touched: the alif must start a
    word, and the whole trigram must sit inside one word.
    """
    letters = _letter_indices(units)
    doomed = set()
    for pos in range(len(letters) - 2):
        a, l, s = letters[pos], letters[pos + 1], letters[pos + 2]
        if units[a].char != ALIF or units[l].char != LAM:
            continue
        if units[s].char not in SUN_LETTERS:
            continue
        if _has_space_between(units, a, s):
            continue
        word_initial = pos == 0 or _has_space_between(units, letters[pos - 1], a)
        if word_initial:
            doomed.add(l)
    if not doomed:
        return units
    return [u for i, u in enumerate(units) if i not in doomed]


def _expand_tanwin(s):
    """Tanwin is pronounced: a bare short vowel phrase-finally, vowel + ن elsewhere."""
    out = []
    n = len(s)
    for i, ch in enumerate(s):
        vowel = TANWIN_TO_VOWEL.get(ch)
        if vowel is None:
            out.append(ch)
        elif i + 1 == n or s[i + 1] == " ":
            out.append(vowel)
        else:
            out.append(vowel + NOON)
    return "".join(out)


def _cascade_once(s):
    units = _parse_units(s)
    units = _drop_cluster_alifs(units)
    units = _rewrite_article(units)
    units = _drop_sun_lam(units)
    out = []
    for u in units:
        if u.char == ALIF_MADDA:
            out.append(_Unit("letter", HAMZA))
            out.append(_Unit("letter", ALIF, u.marks))
            continue
        if u.char in HAMZA_FORMS:
            u.char = HAMZA_FORMS[u.char]
        elif u.char == ALIF_MAQSURA:
            u.char = ALIF
        out.append(u)
    s = _flatten(out)
    s = _expand_tanwin(s)
    return " ".join(s.split())


_MAX_PASSES = 16


def normalize_verbatim(raw: str, utt_id: str = "") -> VerbatimTranscript:
    """Normalize a raw orthographic transcript into verbatim form.

    Characters outside the Arabic letter/diacritic inventory (Latin,
    digits, punctuation, tatweel, ...) are rejected with their positions
    in the original string. Whitespace runs collapse to single spaces.
    The rewrite cascade is applied until it reaches a fixed point, so
    the result is idempotent under re-normalization.
    """
    bad = [(i, ch) for i, ch in enumerate(raw) if not (ch.isspace() or ch in _ALLOWED)]
    if bad:
        raise UnmappedCharacterError(bad)
    text = " ".join(raw.split())
    for _ in range(_MAX_PASSES):
        rewritten = _cascade_once(text)
        if rewritten == text:
            break
        text = rewritten
    else:  # pragma: no cover - the rule set converges well before this
        raise ValidationError(f"{utt_id}: normalization did not converge: {raw!r}")
    return VerbatimTranscript(utt_id=utt_id, text=text)


_STRIPPABLE = SHORT_VOWELS + SUKUN + SHADDA


def strip_diacritics(t):
    """Remove short vowels, sukun, and shadda; base letters are untouched.

    Accepts a :class:`VerbatimTranscript` or a plain string and returns
    the same kind.
    """
    if isinstance(t, VerbatimTranscript):
        bare = "".join(ch for ch in t.text if ch not in _STRIPPABLE)
        return VerbatimTranscript(utt_id=t.utt_id, text=bare)
    return "".join(ch for ch in t if ch not in _STRIPPABLE)


@dataclass(frozen=True)
class Vocabulary:
    """Output symbol inventory. ``symbols[0]`` is the blank token."""

    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(self.symbols) < 2:
            raise ValidationError("vocabulary needs a blank plus at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError("vocabulary symbols must be unique")
        blank = self.symbols[0]
        if not blank or blank in _ALLOWED or blank == " ":
            raise ValidationError(f"blank token {blank!r} must not be an output character")
        for sym in self.symbols[1:]:
            if len(sym) != 1:
                raise ValidationError(f"non-blank symbol must be one character: {sym!r}")
        object.__setattr__(
            self, "_index", {sym: i for i, sym in enumerate(self.symbols)}
        )

    @property
    def blank_id(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)


DEFAULT_BLANK = "<blank>"


def default_vocabulary() -> Vocabulary:
    """The stock 39-symbol inventory: blank, space, the three short
    vowels, 27 base consonants, ا, ء, and the five special letters."""
    symbols = (
        (DEFAULT_BLANK, " ", FATHA, DAMMA, KASRA)
        + tuple(BASE_CONSONANTS)
        + (ALIF, HAMZA)
        + tuple(SPECIAL_LETTERS)
    )
    return Vocabulary(symbols)


def encode(text: str, vocab: Vocabulary):
    """Map transcript characters to symbol ids; unknown characters fail."""
    index = vocab._index
    ids = []
    for pos, ch in enumerate(text):
        idx = index.get(ch)
        if idx is None or idx == 0:
            raise EncodingError(
                f"character {ch!r} at position {pos} is not in the vocabulary",
                position=pos,
                symbol=ch,
            )
        ids.append(idx)
    return ids


def decode(ids, vocab: Vocabulary, utt_id: str = "") -> VerbatimTranscript:
    """Map symbol ids back to a transcript; blank or out-of-range ids fail.

    Spacing is canonicalized (runs collapsed, ends trimmed) so the
    result always satisfies the transcript invariants; on the output of
    ``encode`` this is the identity.
    """
    chars = []
    for pos, idx in enumerate(ids):
        idx = int(idx)
        if idx == vocab.blank_id:
            raise EncodingError(f"blank id at position {pos} cannot be decoded", position=pos)
        if not 0 <= idx < len(vocab):
            raise EncodingError(f"id {idx} at position {pos} out of range", position=pos)
        chars.append(vocab.symbols[idx])
    return VerbatimTranscript(utt_id=utt_id, text=" ".join("".join(chars).split()))


def load_vocabulary(path) -> Vocabulary:
    """Read a vocabulary file: one symbol per line, first line is the blank."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    symbols = []
    for lineno, line in enumerate(lines, 1):
        if line == "":
            raise ValidationError(f"{path}:{lineno}: empty vocabulary line")
        symbols.append(line)
    return Vocabulary(tuple(symbols))


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sym in vocab.symbols:
            fh.write(sym + "\n")
