"""Regex tokenizer for article and comment text.

Token classes, tried in this order at every position:

1. HTML tags without whitespace (``<br>``, ``</div>``, ``<br/>``)
2. URLs: ``http://`` or ``https://`` followed by non-whitespace
3. ``#redirect``
4. wiki markup: ``[[ ]] {{ }} == ''' '' |``
5. maximal alphanumeric runs
6. any other single non-whitespace character

Everything is lowercased. Alphanumeric runs made of a short unit repeated
several times ("hihihi") are split into the repeated unit.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

MIN_REPEAT_LENGTH = 6
MIN_UNIT_LENGTH = 2
MIN_REPEATS = 3

WIKI_MARKUP = ("[[", "]]", "{{", "}}", "==", "'''", "''", "|", "#redirect")

_TOKEN_RE = re.compile(
    r"""
      (?P<tag></?[^\W\d_][^\W_]*/?>)
    | (?P<url>https?://\S+)
    | (?P<redirect>\#redirect)
    | (?P<markup>\[\[|\]\]|\{\{|\}\}|==|'''|''|\|)
    | (?P<word>[^\W_]+)
    | (?P<punct>\S)
    """,
    re.VERBOSE | re.IGNORECASE,
)


def split_repetition(word: str) -> list[str]:
    """Split ``word`` into its repeating unit if it is a long repetition.

    >>> split_repetition("hihihi")
    ['hi', 'hi', 'hi']
    >>> split_repetition("couscous")
    ['couscous']
    """
    n = len(word)
    if n < MIN_REPEAT_LENGTH:
        return [word]
    for p in range(1, n // MIN_REPEATS + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            # p is the smallest period
            if p >= MIN_UNIT_LENGTH:
                return [word[:p]] * (n // p)
            return [word]
    return [word]


def tokenize(text: str | bytes) -> list[str]:
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    out: list[str] = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group().lower()
        if m.lastgroup == "word":
            out.extend(split_repetition(tok))
        else:
            out.append(tok)
    return out


@dataclass(frozen=True)
class TokenCounts:
    """Multiset of tokens; counts are always >= 1."""

    counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def total_tokens(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, token: str) -> int:
        return self.counts.get(token, 0)

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)


def count_tokens(tokens: Iterable[str]) -> TokenCounts:
    return TokenCounts(dict(Counter(tokens)))
