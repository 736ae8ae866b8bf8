"""Synthetic revision-history corpus in the dump format.

Each page starts with an article created by a registered user, followed by a
sequence of edit events. Anonymous events are legitimate or vandalism with
probability ``vandalism_rate``; every vandalism event is immediately undone by
an exact revert from a registered user. The sidecar file records, per page,
the ground-truth label of each anonymous event in order, which is what
ingestion should recover.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO
from xml.sax.saxutils import escape

import numpy as np

_BASE_SYLLABLES = ("ka", "lo", "mi", "ran", "te", "vor", "sel", "du", "pa", "no", "ri", "tan",
                   "be", "gor", "li", "ma", "sun", "el", "ost", "ur", "fen", "ha", "qui", "zo")
_VANDAL_WORDS = ("poop", "lol", "stupid", "suck", "gay", "dumb", "butt", "fart", "idiot", "ugly",
                 "haha", "yo", "crap", "loser", "noob", "pwned", "boring", "hello", "whatever", "omg")
_REPEAT_UNITS = ("ha", "lol", "hi", "fun", "blah", "no", "yay", "he")
_LEGIT_COMMENTS = ("copyedit", "fix typo", "added reference", "expand section", "wikify",
                   "update figures", "grammar", "clarify wording", "added info", "cleanup")
_VANDAL_COMMENTS = ("", "", "", "", "lol", "hi", "update", "fixed")
_HEADINGS = ("History", "Geography", "Culture", "Economy", "Overview", "Reception")


@dataclass
class SynthParams:
    vocab_size: int = 3000
    zipf_a: float = 1.1
    events_per_page: int = 16
    article_words: tuple[int, int] = (40, 90)
    anonymous_share: float = 0.85


def _make_vocab(rng: np.random.Generator, n: int) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < n:
        k = int(rng.integers(2, 5))
        w = "".join(_BASE_SYLLABLES[i] for i in rng.integers(0, len(_BASE_SYLLABLES), size=k))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


class _Generator:
    def __init__(self, rate: float, params: SynthParams, seed: int):
        self.rng = np.random.default_rng(seed)
        self.rate = rate
        self.p = params
        self.vocab = _make_vocab(self.rng, params.vocab_size)
        ranks = np.arange(1, params.vocab_size + 1, dtype=np.float64)
        w = ranks ** -params.zipf_a
        self.word_p = w / w.sum()

    def words(self, n: int) -> list[str]:
        return [self.vocab[i] for i in self.rng.choice(len(self.vocab), size=n, p=self.word_p)]

    def ip(self) -> str:
        return ".".join(str(int(x)) for x in self.rng.integers(1, 255, size=4))

    def article(self, topic: str) -> list[list[str]]:
        """Sections as word lists; rendering adds markup."""
        lo, hi = self.p.article_words
        body = []
        for h in self.rng.choice(len(_HEADINGS), size=int(self.rng.integers(1, 3)), replace=False):
            body.append([f"=={_HEADINGS[h]}=="] + self.words(int(self.rng.integers(lo // 2, hi // 2))))
        intro = [f"'''{topic}'''", "is", "a"] + self.words(int(self.rng.integers(lo // 2, hi // 2)))
        links = ["==External", "links==", f"*[http://www.{topic}.org/ {topic}]"]
        return [intro] + body + [links]

    @staticmethod
    def render(sections: list[list[str]]) -> str:
        out = []
        for sec in sections:
            words = []
            for i, w in enumerate(sec):
                if i and i % 11 == 0 and not w.startswith("="):
                    words.append(w + ".")
                elif i and i % 7 == 0 and not w.startswith(("=", "[")):
                    words.append(f"[[{w}]],")
                else:
                    words.append(w)
            if words:
                out.append(" ".join(words))
        return "\n\n".join(out)

    def _pick_section(self, sections) -> int:
        return int(self.rng.integers(0, len(sections) - 1))  # never the links section

    def legit_edit(self, sections) -> tuple[list[list[str]], str, bool]:
        s = [list(x) for x in sections]
        r = self.rng.random()
        sec = s[self._pick_section(s)]
        if r < 0.45:
            pos = int(self.rng.integers(min(1, len(sec)), len(sec) + 1))
            sec[pos:pos] = self.words(int(self.rng.integers(1, 8)))
        elif r < 0.65 and len(sec) > 4:
            for _ in range(int(self.rng.integers(1, 3))):
                del sec[int(self.rng.integers(1, len(sec)))]
        elif r < 0.85 and len(sec) > 2:
            for _ in range(int(self.rng.integers(1, 4))):
                sec[int(self.rng.integers(1, len(sec)))] = self.words(1)[0]
        elif r < 0.93:
            s[-1].append(f"*[http://www.{self.words(1)[0]}.com/ {self.words(1)[0]}]")
        else:
            # restructuring: a large legitimate removal
            if len(sec) > 8:
                a = int(self.rng.integers(1, len(sec) // 2))
                del sec[a:a + len(sec) // 3]
            else:
                sec.extend(self.words(5))
        comment = _LEGIT_COMMENTS[int(self.rng.integers(len(_LEGIT_COMMENTS)))] if self.rng.random() < 0.7 else ""
        return s, comment, bool(self.rng.random() < 0.2)

    def vandal_edit(self, sections) -> tuple[list[list[str]], str, bool]:
        s = [list(x) for x in sections]
        r = self.rng.random()
        sec = s[self._pick_section(s)]
        if r < 0.40:
            pos = int(self.rng.integers(min(1, len(sec)), len(sec) + 1))
            k = int(self.rng.integers(1, 5))
            junk = [_VANDAL_WORDS[i] for i in self.rng.integers(0, len(_VANDAL_WORDS), size=k)]
            if self.rng.random() < 0.3:
                junk = [w.upper() + "!!!" for w in junk]
            sec[pos:pos] = junk
        elif r < 0.55:
            unit = _REPEAT_UNITS[int(self.rng.integers(len(_REPEAT_UNITS)))]
            pos = int(self.rng.integers(min(1, len(sec)), len(sec) + 1))
            sec[pos:pos] = [unit * int(self.rng.integers(3, 9))]
        elif r < 0.70:
            blank = [[] for _ in s]
            if self.rng.random() >= 0.5:
                junk = _VANDAL_WORDS[int(self.rng.integers(len(_VANDAL_WORDS)))]
                blank[0] = [junk] * int(self.rng.integers(1, 4))
            s = blank
        elif r < 0.80:
            s[-1].append(f"*[http://www.{self.words(1)[0]}-deals.biz/ cheap]")
        elif r < 0.90 and len(sec) > 2:
            i = int(self.rng.integers(1, len(sec)))
            sec[i] = _VANDAL_WORDS[int(self.rng.integers(len(_VANDAL_WORDS)))]
        else:
            # subtle: indistinguishable from a small legitimate change
            pos = int(self.rng.integers(min(1, len(sec)), len(sec) + 1))
            sec[pos:pos] = self.words(int(self.rng.integers(1, 3)))
        comment = _VANDAL_COMMENTS[int(self.rng.integers(len(_VANDAL_COMMENTS)))] if self.rng.random() < 0.3 else ""
        return s, comment, bool(self.rng.random() < 0.03)


def _revision_xml(fh: IO[str], rev_id: int, ts: datetime, editor: str, anonymous: bool,
                  comment: str, minor: bool, text: str) -> None:
    fh.write("    <revision>\n")
    fh.write(f"      <id>{rev_id}</id>\n")
    fh.write(f"      <timestamp>{ts.strftime('%Y-%m-%dT%H:%M:%SZ')}</timestamp>\n")
    tag = "ip" if anonymous else "username"
    fh.write(f"      <contributor><{tag}>{escape(editor)}</{tag}></contributor>\n")
    if minor:
        fh.write("      <minor/>\n")
    if comment:
        fh.write(f"      <comment>{escape(comment)}</comment>\n")
    fh.write(f"      <text xml:space=\"preserve\">{escape(text)}</text>\n")
    fh.write("    </revision>\n")


def synth_corpus(n_pages: int, vandalism_rate: float, out: IO[str], sidecar: IO[str] | None = None,
                 params: SynthParams | None = None, seed: int = 0) -> dict:
    """Write a synthetic dump to ``out``; returns summary counts.

    Sidecar lines are JSON objects ``{"page_id": .., "labels": [..]}`` with
    one entry per anonymous event, ``"vandalism"`` or ``"legitimate"``.
    """
    if n_pages < 1:
        raise ValueError("n_pages must be positive")
    if not 0 <= vandalism_rate < 1:
        raise ValueError("vandalism_rate must lie in [0, 1)")
    params = params or SynthParams()
    g = _Generator(vandalism_rate, params, seed)
    rng = g.rng
    rev_id = 1
    t = datetime(2004, 1, 1, tzinfo=timezone.utc)
    n_events = n_vandal = 0
    out.write('<mediawiki xmlns="http://www.mediawiki.org/xml/export-0.3/">\n')
    for page_id in range(1, n_pages + 1):
        topic = g.words(1)[0]
        out.write(f"  <page>\n    <title>{topic.title()}</title>\n    <id>{page_id}</id>\n")
        sections = g.article(topic)
        text = g.render(sections)

        def emit(editor, anonymous, comment, minor, txt):
            nonlocal rev_id, t
            t += timedelta(minutes=int(rng.integers(1, 60 * 24 * 5)))
            _revision_xml(out, rev_id, t, editor, anonymous, comment, minor, txt)
            rev_id += 1

        emit(f"User{int(rng.integers(1, 500))}", False, "new article", False, text)
        truth: list[str] = []
        last_ip = None
        for _ in range(params.events_per_page):
            if rng.random() >= params.anonymous_share:
                sections, comment, minor = g.legit_edit(sections)
                new = g.render(sections)
                if new != text:
                    text = new
                    emit(f"User{int(rng.integers(1, 500))}", False, comment, minor, text)
                    last_ip = None
                continue
            ip = g.ip()
            while ip == last_ip:
                ip = g.ip()
            vandal = rng.random() < vandalism_rate
            n_revs = 1 + int(rng.random() < (0.12 if vandal else 0.2))
            work = sections
            staged = []
            for _r in range(n_revs):
                work, comment, minor = (g.vandal_edit if vandal else g.legit_edit)(work)
                staged.append((comment, minor, g.render(work)))
            if staged[-1][2] == text or any(s[2] == text for s in staged):
                continue  # a no-op or self-cancelling run; skip the event
            for comment, minor, txt in staged:
                emit(ip, True, comment, minor, txt)
            truth.append("vandalism" if vandal else "legitimate")
            n_events += 1
            if vandal:
                n_vandal += 1
                emit("RevertBot", False, f"Reverted edits by [[Special:Contributions/{ip}]]", False, text)
                last_ip = None
            else:
                sections, text = work, staged[-1][2]
                last_ip = ip
        out.write("  </page>\n")
        if sidecar is not None:
            sidecar.write(json.dumps({"page_id": page_id, "labels": truth}) + "\n")
    out.write("</mediawiki>\n")
    return {"pages": n_pages, "anonymous_events": n_events, "vandalism_events": n_vandal}
