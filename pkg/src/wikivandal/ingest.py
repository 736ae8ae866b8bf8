"""Revision-history ingestion: streaming dump parser, revert labeling, cases.

Only edits by anonymous (IPv4) editors become cases. Consecutive revisions by
the same anonymous editor are collapsed into one case, labeled vandalism when
every collapsed revision was reverted away.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import ipaddress
import json
import logging
import xml.parsers.expat
from collections import deque
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import IO, Iterable, Iterator

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 10
VANDALISM = "vandalism"
LEGITIMATE = "legitimate"

_CHUNK = 1 << 16


class DumpParseError(ValueError):
    """Malformed XML in a revision dump."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


def parse_ipv4(value: str | None) -> ipaddress.IPv4Address | None:
    if not value:
        return None
    try:
        return ipaddress.IPv4Address(value.strip())
    except ValueError:
        return None


@dataclass(frozen=True)
class RawRevision:
    revision_id: int
    timestamp: str
    editor: str
    anonymous: bool
    comment: str = ""
    minor: bool = False
    text: str = ""

    @property
    def ip_octet1(self) -> int | None:
        ip = parse_ipv4(self.editor) if self.anonymous else None
        return None if ip is None else ip.packed[0]


@dataclass
class Page:
    page_id: int
    revisions: list[RawRevision] = field(default_factory=list)


@dataclass(frozen=True)
class RevisionCase:
    page_id: int
    prev_text: str
    cur_text: str
    comment: str
    ip_octet1: int
    minor: bool
    merged_count: int
    label: str

    @property
    def is_vandalism(self) -> bool:
        return self.label == VANDALISM

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "RevisionCase":
        return cls(**json.loads(line))


def _timestamp_key(ts: str) -> datetime:
    # fromisoformat on 3.10 does not accept a trailing "Z"
    if ts.endswith("Z"):
        ts = ts[:-1] + "+00:00"
    return datetime.fromisoformat(ts)


def open_dump(path_or_stream) -> IO[bytes]:
    """Open a dump file or binary stream, decompressing gzip transparently."""
    if isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__"):
        raw = open(path_or_stream, "rb")
    else:
        raw = path_or_stream
    if not hasattr(raw, "peek"):
        raw = io.BufferedReader(raw)
    if raw.peek(2)[:2] == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=raw)
    return raw


class DumpParser:
    """Serial-access parser over a MediaWiki-style history dump.

    Pages are yielded one at a time; at most one page's revisions are held in
    memory. ``skipped`` counts revisions dropped for a missing ``<text>`` or
    ``<timestamp>``.
    """

    def __init__(self) -> None:
        self.skipped = 0

    def parse(self, stream) -> Iterator[Page]:
        stream = open_dump(stream)
        ready: deque[Page] = deque()
        stack: list[str] = []
        page: Page | None = None
        rev: dict | None = None
        buf: list[str] = []

        def start(name, attrs):
            nonlocal page, rev
            stack.append(name)
            buf.clear()
            if name == "page":
                page = Page(page_id=-1)
            elif name == "revision" and page is not None:
                rev = {}
            elif rev is not None and name == "minor":
                rev["minor"] = True
            elif rev is not None and name == "text":
                rev["text"] = ""

        def end(name):
            nonlocal page, rev
            text = "".join(buf)
            buf.clear()
            stack.pop()
            parent = stack[-1] if stack else None
            if name == "page" and page is not None:
                page.revisions.sort(key=lambda r: _timestamp_key(r.timestamp))
                ready.append(page)
                page = None
            elif name == "revision" and rev is not None:
                self._finish_revision(page, rev)
                rev = None
            elif rev is not None:
                if name == "id" and parent == "revision":
                    rev["id"] = int(text.strip())
                elif name in ("timestamp", "comment", "text"):
                    rev[name] = text
                elif name in ("username", "ip") and parent == "contributor":
                    rev[name] = text
            elif page is not None and name == "id" and parent == "page":
                page.page_id = int(text.strip())

        def chars(data):
            buf.append(data)

        read = getattr(stream, "read1", stream.read)
        parser = xml.parsers.expat.ParserCreate()
        parser.buffer_text = True
        parser.StartElementHandler = start
        parser.EndElementHandler = end
        parser.CharacterDataHandler = chars

        try:
            while True:
                chunk = read(_CHUNK)
                if not chunk:
                    parser.Parse(b"", True)
                    break
                parser.Parse(chunk, False)
                while ready:
                    yield ready.popleft()
        except xml.parsers.expat.ExpatError as err:
            raise DumpParseError(xml.parsers.expat.ErrorString(err.code),
                                 parser.ErrorByteIndex) from err
        while ready:
            yield ready.popleft()

    def _finish_revision(self, page: Page | None, rev: dict) -> None:
        if page is None:
            return
        if "text" not in rev or not rev.get("timestamp"):
            self.skipped += 1
            log.warning("page %s: revision %s missing text/timestamp, skipped",
                        page.page_id, rev.get("id"))
            return
        ip = rev.get("ip")
        anonymous = ip is not None and parse_ipv4(ip) is not None
        editor = ip.strip() if anonymous else (rev.get("username") or ip or "")
        page.revisions.append(
            RawRevision(
                revision_id=rev.get("id", -1),
                timestamp=rev["timestamp"].strip(),
                editor=editor,
                anonymous=anonymous,
                comment=rev.get("comment", ""),
                minor=rev.get("minor", False),
                text=rev["text"],
            )
        )


def parse_dump(stream) -> Iterator[Page]:
    return DumpParser().parse(stream)


@dataclass(frozen=True)
class RevertFlags:
    is_revert: bool = False
    damaging: bool = False


def _content_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def detect_reverts(revisions: list[RawRevision], window: int = DEFAULT_WINDOW) -> list[RevertFlags]:
    """Flag reverts and the revisions they undo.

    Revision k is a revert when the most recent earlier revision i with
    identical text lies within ``window`` revisions and at least one
    revision separates them; every revision strictly between i and k is
    flagged damaging. An identical immediate predecessor is a null edit.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    n = len(revisions)
    hashes = [_content_hash(r.text) for r in revisions]
    revert = [False] * n
    damaging = [False] * n
    for k in range(n):
        for i in range(k - 1, max(-1, k - window - 1), -1):
            if hashes[i] == hashes[k] and revisions[i].text == revisions[k].text:
                if k - i >= 2:
                    revert[k] = True
                    for j in range(i + 1, k):
                        damaging[j] = True
                break
    return [RevertFlags(r, d) for r, d in zip(revert, damaging)]


def build_cases(page: Page, flags: list[RevertFlags] | None = None,
                window: int = DEFAULT_WINDOW) -> list[RevisionCase]:
    revs = page.revisions
    if flags is None:
        flags = detect_reverts(revs, window)
    cases: list[RevisionCase] = []
    k = 1  # the page-creation revision has no predecessor
    while k < len(revs):
        rev = revs[k]
        if not rev.anonymous:
            k += 1
            continue
        end = k
        while end + 1 < len(revs) and revs[end + 1].anonymous and revs[end + 1].editor == rev.editor:
            end += 1
        prev_text, cur_text = revs[k - 1].text, revs[end].text
        if prev_text != cur_text:
            run = range(k, end + 1)
            vandal = all(flags[j].damaging for j in run)
            cases.append(
                RevisionCase(
                    page_id=page.page_id,
                    prev_text=prev_text,
                    cur_text=cur_text,
                    comment=revs[end].comment,
                    ip_octet1=revs[end].ip_octet1,
                    minor=revs[end].minor,
                    merged_count=len(run),
                    label=VANDALISM if vandal else LEGITIMATE,
                )
            )
        k = end + 1
    return cases


def ingest(stream, window: int = DEFAULT_WINDOW, parser: DumpParser | None = None) -> Iterator[RevisionCase]:
    parser = parser or DumpParser()
    for page in parser.parse(stream):
        yield from build_cases(page, window=window)


def write_cases(cases: Iterable[RevisionCase], fh: IO[str]) -> int:
    n = 0
    for case in cases:
        fh.write(case.to_json())
        fh.write("\n")
        n += 1
    return n


def read_cases(fh: IO[str]) -> Iterator[RevisionCase]:
    for line in fh:
        if line.strip():
            yield RevisionCase.from_json(line)
