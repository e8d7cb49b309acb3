"""Deterministic text normalization.

The pipeline is fixed: NFC normalize, case/accent fold through a frozen
table (no locale-dependent casing), strip everything outside [a-z0-9'],
tokenize, drop stopwords, lemmatize, then re-check the stopword list on the
lemmatized forms. Output tokens are lowercase ASCII over [a-z0-9'] with
apostrophes only in interior positions, and the whole map is idempotent:
preprocessing the joined output of a previous run reproduces it.

Stopword list and lemma lexicon are newline-delimited data files bundled
with the package; both can be overridden with alternative files.
"""

from __future__ import annotations

import functools
import unicodedata
from importlib import resources
from pathlib import Path

# Frozen simple-fold table: ASCII uppercase plus Latin-1 Supplement and
# Latin Extended-A letters mapped to lowercase ASCII. Typographic single
# quotes fold to the plain apostrophe so contractions survive tokenization.
# Anything not covered here and not already in [a-z0-9'] becomes a space.
_FOLD = {
    "À": "a", "Á": "a", "Â": "a", "Ã": "a", "Ä": "a", "Å": "a",
    "Æ": "ae", "Ç": "c", "È": "e", "É": "e", "Ê": "e", "Ë": "e",
    "Ì": "i", "Í": "i", "Î": "i", "Ï": "i", "Ð": "d", "Ñ": "n",
    "Ò": "o", "Ó": "o", "Ô": "o", "Õ": "o", "Ö": "o", "Ù": "u",
    "Ú": "u", "Û": "u", "Ü": "u", "Ý": "y", "Þ": "th", "ß": "ss",
    "à": "a", "á": "a", "â": "a", "ã": "a", "ä": "a", "å": "a",
    "æ": "ae", "ç": "c", "è": "e", "é": "e", "ê": "e", "ë": "e",
    "ì": "i", "í": "i", "î": "i", "ï": "i", "ð": "d", "ñ": "n",
    "ò": "o", "ó": "o", "ô": "o", "õ": "o", "ö": "o", "ù": "u",
    "ú": "u", "û": "u", "ü": "u", "ý": "y", "þ": "th", "ÿ": "y",
    "Ā": "a", "ā": "a", "Ă": "a", "ă": "a", "Ą": "a", "ą": "a",
    "Ć": "c", "ć": "c", "Ĉ": "c", "ĉ": "c", "Ċ": "c", "ċ": "c",
    "Č": "c", "č": "c", "Ď": "d", "ď": "d", "Ē": "e", "ē": "e",
    "Ĕ": "e", "ĕ": "e", "Ė": "e", "ė": "e", "Ę": "e", "ę": "e",
    "Ě": "e", "ě": "e", "Ĝ": "g", "ĝ": "g", "Ğ": "g", "ğ": "g",
    "Ġ": "g", "ġ": "g", "Ģ": "g", "ģ": "g", "Ĥ": "h", "ĥ": "h",
    "Ĩ": "i", "ĩ": "i", "Ī": "i", "ī": "i", "Ĭ": "i", "ĭ": "i",
    "Į": "i", "į": "i", "İ": "i", "ı": "i", "Ĵ": "j", "ĵ": "j",
    "Ķ": "k", "ķ": "k", "Ĺ": "l", "ĺ": "l", "Ļ": "l", "ļ": "l",
    "Ľ": "l", "ľ": "l", "Ł": "l", "ł": "l", "Ń": "n", "ń": "n",
    "Ņ": "n", "ņ": "n", "Ň": "n", "ň": "n", "Ŋ": "n", "ŋ": "n",
    "Ō": "o", "ō": "o", "Ŏ": "o", "ŏ": "o", "Ő": "o", "ő": "o",
    "Œ": "oe", "œ": "oe", "Ŕ": "r", "ŕ": "r", "Ŗ": "r", "ŗ": "r",
    "Ř": "r", "ř": "r", "Ś": "s", "ś": "s", "Ŝ": "s", "ŝ": "s",
    "Ş": "s", "ş": "s", "Š": "s", "š": "s", "Ţ": "t", "ţ": "t",
    "Ť": "t", "ť": "t", "Ũ": "u", "ũ": "u", "Ū": "u", "ū": "u",
    "Ŭ": "u", "ŭ": "u", "Ů": "u", "ů": "u", "Ű": "u", "ű": "u",
    "Ų": "u", "ų": "u", "Ŵ": "w", "ŵ": "w", "Ŷ": "y", "ŷ": "y",
    "Ÿ": "y", "Ź": "z", "ź": "z", "Ż": "z", "ż": "z", "Ž": "z",
    "ž": "z",
    "‘": "'", "’": "'",
}

_KEEP = set("abcdefghijklmnopqrstuvwxyz0123456789'")
_UPPER_OFFSET = ord("a") - ord("A")


def _load_lines(path: Path) -> list[str]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out


@functools.lru_cache(maxsize=None)
def load_stopwords(path: str | None = None) -> frozenset[str]:
    if path is None:
        src = resources.files("absa").joinpath("data/stopwords.txt")
        with resources.as_file(src) as p:
            return frozenset(_load_lines(p))
    return frozenset(_load_lines(Path(path)))


@functools.lru_cache(maxsize=None)
def load_lemmas(path: str | None = None) -> dict[str, str]:
    if path is None:
        src = resources.files("absa").joinpath("data/lemmas.tsv")
        with resources.as_file(src) as p:
            lines = _load_lines(p)
    else:
        lines = _load_lines(Path(path))
    lex = {}
    for line in lines:
        form, _, lemma = line.partition("\t")
        lex[form] = lemma
    return lex


def fold_text(text: str) -> str:
    """NFC normalize, then apply the frozen case/accent fold and replace
    every character outside [a-z0-9'] with a space."""
    text = unicodedata.normalize("NFC", text)
    out = []
    for ch in text:
        if "A" <= ch <= "Z":
            out.append(chr(ord(ch) + _UPPER_OFFSET))
        elif ch in _KEEP:
            out.append(ch)
        else:
            out.append(_FOLD.get(ch, " "))
    return "".join(out)


def _lemma_step(word: str, lexicon: dict[str, str], known: frozenset[str]) -> str:
    hit = lexicon.get(word)
    if hit is not None:
        return hit
    if word.endswith("ies"):
        return word[:-3] + "y"
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("s") and len(word) > 3 and not word.endswith("ss"):
        return word[:-1]
    for suffix in ("ing", "ed"):
        if word.endswith(suffix):
            stem = word[: -len(suffix)]
            if len(stem) >= 3 and stem in known:
                return lexicon.get(stem, stem)
    return word


def lemmatize(word: str, lexicon: dict[str, str] | None = None) -> str:
    """Lexicon lookup first, then suffix rules, iterated to a fixed point.

    Iteration makes chained forms land on the same lemma a second pass
    would produce, which keeps the whole preprocessing map idempotent.
    Each rewrite either consults the lexicon (whose values are fixed
    points) or strictly shortens the word, so this terminates.
    """
    if lexicon is None:
        lexicon = load_lemmas()
    known = _lexicon_forms(lexicon)
    for _ in range(8):
        nxt = _lemma_step(word, lexicon, known)
        if nxt == word:
            return word
        word = nxt
    return word


_FORMS_CACHE: dict[int, tuple[dict, frozenset]] = {}


def _lexicon_forms(lexicon: dict[str, str]) -> frozenset[str]:
    # "appears in the lexicon" means either side of a lexicon entry.
    # Cached by identity; the cache holds a strong reference so ids stay valid.
    entry = _FORMS_CACHE.get(id(lexicon))
    if entry is None or entry[0] is not lexicon:
        entry = (lexicon, frozenset(lexicon) | frozenset(lexicon.values()))
        _FORMS_CACHE[id(lexicon)] = entry
    return entry[1]


def preprocess(text: str, stopwords: frozenset[str] | None = None,
               lexicon: dict[str, str] | None = None) -> list[str]:
    """Normalize raw text to a token list.

    Empty input gives an empty list. Every output token is non-empty,
    lowercase over [a-z0-9'], has no boundary apostrophes and is not a
    stopword (checked again after lemmatization, since a lemma may fall
    onto the stopword list even when its inflected form did not).
    """
    if stopwords is None:
        stopwords = load_stopwords()
    if lexicon is None:
        lexicon = load_lemmas()
    tokens = []
    for raw in fold_text(text).split():
        raw = raw.strip("'")
        if not raw or raw in stopwords:
            continue
        lemma = lemmatize(raw, lexicon).strip("'")
        if lemma and lemma not in stopwords:
            tokens.append(lemma)
    return tokens
