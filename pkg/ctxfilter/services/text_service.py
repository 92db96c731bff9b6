"""
Text substrate shared by every measure: tokenization, answer normalization and
rule-based sentence splitting. All functions are pure.
"""

import re
import string
import unicodedata
from typing import List, NamedTuple

# Runs of letters/digits; everything else (whitespace, punctuation, symbols, "_") separates.
_TOKEN_RE = re.compile(r"[^\W_]+")
_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_ASCII_PUNCT = set(string.punctuation)

_TERMINATORS = re.compile(r"[.!?]+[\"')\]”’]*")
_OPENERS = set("\"'([“‘")

ABBREVIATIONS = {
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "ft.",
    "gen.", "gov.", "capt.", "sgt.", "col.", "lt.", "rev.", "hon.",
    "inc.", "ltd.", "co.", "corp.", "bros.", "no.", "vol.", "fig.", "approx.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "u.s.", "u.k.", "u.n.", "a.m.", "p.m.",
    "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
}


class SentenceFragment(NamedTuple):
    sentence_index: int
    char_start: int
    char_end: int


def tokenize(text: str) -> List[str]:
    """Lowercased letter/digit runs; punctuation and whitespace are dropped."""
    return _TOKEN_RE.findall(text.lower())


def count_tokens(text: str) -> int:
    return len(tokenize(text))


def _is_punctuation(ch: str) -> bool:
    # ASCII punctuation includes symbols such as $ and +; Unicode adds curly quotes and dashes
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if not _is_punctuation(ch))
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def _is_abbreviation(text: str, punct_start: int) -> bool:
    word_start = punct_start
    while word_start > 0 and not text[word_start - 1].isspace():
        word_start -= 1
    word = text[word_start:punct_start + 1].lstrip("".join(_OPENERS)).lower()
    if word in ABBREVIATIONS:
        return True
    # initials such as the "F." in "John F. Kennedy"
    return len(word) == 2 and word[0].isalpha() and text[punct_start - 1].isupper()


def split_sentences(text: str) -> List[SentenceFragment]:
    """
    Splits text at [.!?] (plus closing quotes/brackets) followed by whitespace and
    an uppercase or opening character. Abbreviations and initials never end a
    sentence. Fragments exclude surrounding whitespace, so the text is rebuilt by
    interleaving fragments with the whitespace between them.
    """
    fragments: List[SentenceFragment] = []
    pos = 0
    n = len(text)

    def _emit(start: int, end: int):
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            fragments.append(SentenceFragment(len(fragments), start, end))

    for match in _TERMINATORS.finditer(text):
        end = match.end()
        nxt = end
        while nxt < n and text[nxt].isspace():
            nxt += 1
        if nxt == end or nxt >= n:
            continue
        if not (text[nxt].isupper() or text[nxt] in _OPENERS):
            continue
        if match.group().startswith(".") and match.group().rstrip("\"')]”’") == ".":
            if _is_abbreviation(text, match.start()):
                continue
        _emit(pos, end)
        pos = end

    _emit(pos, n)
    return fragments
