"""Lexicon-based dual-polarity scoring.

Each message gets a positive strength ``p`` in [1, 5] and a negative strength
``n`` in [-5, -1]. Terms come from a pluggable lexicon; a negator within the two
tokens before a term flips its sign and a booster directly before it shifts the
magnitude by one.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ContractError, LexiconError

TERMS_FILE = "terms.tsv"
NEGATORS_FILE = "negators.txt"
BOOSTERS_FILE = "boosters.tsv"

NEGATION_WINDOW = 2

_WORD = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    DISCARDED = "discarded"

    @property
    def sign(self):
        """+1 / -1 / 0; None for discarded messages."""
        return {"positive": 1, "negative": -1, "neutral": 0}.get(self.value)


def classify_polarity(p, n) -> Polarity:
    if not (isinstance(p, int) and isinstance(n, int)) or not (1 <= p <= 5 and -5 <= n <= -1):
        raise ContractError(f"score ({p!r}, {n!r}) outside [1,5] x [-5,-1]")
    total = p + n
    if total > 0:
        return Polarity.POSITIVE
    if total < 0:
        return Polarity.NEGATIVE
    # equal magnitudes: high-arousal ties do not fit the one-dimensional reading
    return Polarity.NEUTRAL if p < 4 else Polarity.DISCARDED


@dataclass(frozen=True)
class SentimentScore:
    p: int
    n: int
    polarity: Polarity = None

    def __post_init__(self):
        expected = classify_polarity(self.p, self.n)
        if self.polarity is not None and Polarity(self.polarity) is not expected:
            raise ContractError(f"polarity {self.polarity} inconsistent with ({self.p}, {self.n})")
        object.__setattr__(self, "polarity", expected)

    @property
    def s(self):
        return self.polarity.sign


NEUTRAL_SCORE = SentimentScore(1, -1)


@dataclass(frozen=True)
class Lexicon:
    terms: dict = field(default_factory=dict)       # exact token -> strength
    wildcards: dict = field(default_factory=dict)   # prefix -> strength
    negators: frozenset = frozenset()
    boosters: dict = field(default_factory=dict)    # token -> +1 / -1

    def __len__(self):
        return len(self.terms) + len(self.wildcards)

    def lookup(self, token):
        """Strength for ``token``: exact match, else longest wildcard prefix."""
        hit = self.terms.get(token)
        if hit is not None:
            return hit
        if self.wildcards:
            for end in range(len(token), 0, -1):
                hit = self.wildcards.get(token[:end])
                if hit is not None:
                    return hit
        return None

    def patterns(self):
        return list(self.terms) + [w + "*" for w in self.wildcards]


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def _parse_int(text, path, lineno):
    try:
        return int(text.strip())
    except ValueError:
        raise LexiconError(f"not an integer: {text.strip()!r}", path, lineno) from None


def load_lexicon(term_file, negator_file=None, booster_file=None) -> Lexicon:
    terms, wildcards = {}, {}
    for lineno, line in _data_lines(term_file):
        parts = line.split("\t")
        if len(parts) != 2:
            raise LexiconError("expected 'pattern<TAB>strength'", term_file, lineno)
        pattern = parts[0].strip().lower()
        strength = _parse_int(parts[1], term_file, lineno)
        if not (2 <= abs(strength) <= 5):
            raise LexiconError(f"strength {strength} outside [-5,-2] U [2,5]", term_file, lineno)
        if not pattern or pattern == "*":
            raise LexiconError("empty pattern", term_file, lineno)
        if pattern.endswith("*"):
            table, key = wildcards, pattern[:-1]
        else:
            table, key = terms, pattern
        if key in table:
            raise LexiconError(f"duplicate pattern {pattern!r}", term_file, lineno)
        table[key] = strength

    lex = Lexicon(terms, wildcards)
    negators = set()
    if negator_file is not None:
        for lineno, line in _data_lines(negator_file):
            token = line.strip().lower()
            if lex.lookup(token) is not None:
                raise LexiconError(f"negator {token!r} is also a scored term", negator_file, lineno)
            negators.add(token)
    boosters = {}
    if booster_file is not None:
        for lineno, line in _data_lines(booster_file):
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError("expected 'token<TAB>+1|-1'", booster_file, lineno)
            token = parts[0].strip().lower()
            mod = _parse_int(parts[1], booster_file, lineno)
            if mod not in (-1, 1):
                raise LexiconError(f"booster modifier must be +1 or -1, got {mod}", booster_file, lineno)
            if lex.lookup(token) is not None or token in negators:
                raise LexiconError(f"booster {token!r} overlaps terms or negators", booster_file, lineno)
            if token in boosters:
                raise LexiconError(f"duplicate booster {token!r}", booster_file, lineno)
            boosters[token] = mod
    return Lexicon(terms, wildcards, frozenset(negators), boosters)


def load_lexicon_dir(directory) -> Lexicon:
    """Load ``terms.tsv`` plus optional ``negators.txt`` / ``boosters.tsv``."""
    d = Path(directory)
    if not d.is_dir():
        raise LexiconError("lexicon directory not found", d)
    terms = d / TERMS_FILE
    if not terms.is_file():
        raise LexiconError(f"missing {TERMS_FILE}", d)
    neg = d / NEGATORS_FILE
    boost = d / BOOSTERS_FILE
    return load_lexicon(terms, neg if neg.is_file() else None, boost if boost.is_file() else None)


def default_lexicon_dir() -> Path:
    """Small English demo lexicon shipped with the package."""
    return Path(__file__).parent / "data" / "lexicon"


def tokenize(text, lexicon=None):
    """Lowercase word tokens; whitespace-delimited lexicon symbols
    (emoticons such as ``:)``) are kept whole."""
    tokens = []
    for chunk in text.lower().split():
        if lexicon is not None and not chunk.isalnum() and lexicon.lookup(chunk) is not None:
            tokens.append(chunk)
            continue
        tokens.extend(_WORD.findall(chunk))
    return tokens


def score_message(lexicon: Lexicon, text: str) -> SentimentScore:
    tokens = tokenize(text or "", lexicon)
    p, n = 1, -1
    for i, tok in enumerate(tokens):
        strength = lexicon.lookup(tok)
        if strength is None:
            continue
        magnitude = abs(strength)
        if i > 0 and tokens[i - 1] in lexicon.boosters:
            magnitude = min(5, max(2, magnitude + lexicon.boosters[tokens[i - 1]]))
        sign = 1 if strength > 0 else -1
        if any(t in lexicon.negators for t in tokens[max(0, i - NEGATION_WINDOW):i]):
            sign = -sign
        if sign > 0:
            p = max(p, magnitude)
        else:
            n = min(n, -magnitude)
    return SentimentScore(p, n)


def score_corpus(corpus, lexicon):
    """Return a copy of ``corpus`` with every message scored."""
    return corpus.with_messages(
        m.with_score(score_message(lexicon, m.text)) for m in corpus.messages
    )
