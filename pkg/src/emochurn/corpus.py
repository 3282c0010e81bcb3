"""Message corpora: the normalized record type, archive parsers for Bugzilla
exports and mbox files, JSONL persistence and summary statistics.
"""
from __future__ import annotations

import email
import email.header
import hashlib
import heapq
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from email import policy
from email.utils import parseaddr, parsedate_to_datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ChannelError, ContractError, ParseError
from .sentiment import SentimentScore

DAY = 86400


class Channel(str, Enum):
    BUG_TRACKER = "bug"
    MAILING_LIST = "ml"


@dataclass(frozen=True)
class Message:
    message_id: str
    author: str
    timestamp: int
    discussion_id: str
    channel: Channel
    text: str = ""
    score: Optional[SentimentScore] = None

    def __post_init__(self):
        if not self.message_id:
            raise ContractError("message_id must be non-empty")
        if not self.author:
            raise ContractError(f"{self.message_id}: author must be non-empty")
        if not self.discussion_id:
            raise ContractError(f"{self.message_id}: discussion_id must be non-empty")
        if not (isinstance(self.timestamp, (int, np.integer)) and self.timestamp >= 0):
            raise ContractError(f"{self.message_id}: timestamp must be a non-negative integer")
        object.__setattr__(self, "timestamp", int(self.timestamp))
        object.__setattr__(self, "channel", Channel(self.channel))
        if any(line.lstrip().startswith(">") for line in self.text.split("\n")):
            raise ContractError(f"{self.message_id}: text still contains quoted lines")

    @property
    def day(self) -> int:
        """UTC day index (days since the epoch)."""
        return self.timestamp // DAY

    def with_score(self, score):
        return replace(self, score=score)

    def to_record(self) -> dict:
        rec = {
            "id": self.message_id,
            "author": self.author,
            "ts": self.timestamp,
            "disc": self.discussion_id,
            "chan": self.channel.value,
            "text": self.text,
        }
        if self.score is not None:
            rec["p"] = self.score.p
            rec["n"] = self.score.n
        return rec

    @classmethod
    def from_record(cls, rec):
        score = None
        if rec.get("p") is not None and rec.get("n") is not None:
            score = SentimentScore(int(rec["p"]), int(rec["n"]))
        return cls(
            message_id=str(rec["id"]),
            author=str(rec["author"]),
            timestamp=int(rec["ts"]),
            discussion_id=str(rec["disc"]),
            channel=Channel(rec["chan"]),
            text=rec.get("text", ""),
            score=score,
        )


def _sort_key(m):
    return (m.timestamp, m.message_id)


@dataclass(frozen=True)
class Corpus:
    messages: tuple
    channel: Optional[Channel] = None
    observation_window: Optional[tuple] = None

    def __post_init__(self):
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if any(_sort_key(a) > _sort_key(b) for a, b in zip(msgs, msgs[1:])):
            raise ContractError("corpus messages must be sorted by timestamp")
        ids = {m.message_id for m in msgs}
        if len(ids) != len(msgs):
            raise ContractError("message ids must be unique within a corpus")
        channels = {m.channel for m in msgs}
        if len(channels) > 1:
            raise ChannelError("a corpus holds messages from a single channel")
        if self.channel is None and channels:
            object.__setattr__(self, "channel", channels.pop())
        elif self.channel is not None:
            object.__setattr__(self, "channel", Channel(self.channel))
            if channels and channels != {self.channel}:
                raise ChannelError(f"messages are not from channel {self.channel.value}")
        if self.observation_window is None and msgs:
            object.__setattr__(self, "observation_window", (msgs[0].timestamp, msgs[-1].timestamp))
        if self.observation_window is not None and msgs:
            lo, hi = self.observation_window
            if msgs[0].timestamp < lo or msgs[-1].timestamp > hi:
                raise ContractError("message timestamps fall outside the observation window")

    @classmethod
    def from_messages(cls, messages: Iterable[Message], channel=None, window=None):
        return cls(tuple(sorted(messages, key=_sort_key)), channel, window)

    @classmethod
    def merge(cls, *corpora):
        """Sort-merge corpora parsed independently (e.g. one per archive file)."""
        channel = next((c.channel for c in corpora if c.channel is not None), None)
        merged = heapq.merge(*(c.messages for c in corpora), key=_sort_key)
        return cls(tuple(merged), channel)

    def with_messages(self, messages):
        return Corpus.from_messages(messages, self.channel, self.observation_window)

    def __len__(self):
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    @property
    def is_scored(self):
        return all(m.score is not None for m in self.messages)

    def discussions(self):
        """Mapping discussion_id -> list of messages in time order."""
        out = {}
        for m in self.messages:
            out.setdefault(m.discussion_id, []).append(m)
        return out


@dataclass(frozen=True)
class SummaryStats:
    message_count: int
    discussion_count: int
    contributor_count: int
    window: Optional[tuple]


def corpus_summary(corpus) -> SummaryStats:
    msgs = list(corpus)
    if not msgs:
        return SummaryStats(0, 0, 0, None)
    ts = [m.timestamp for m in msgs]
    return SummaryStats(
        len(msgs),
        len({m.discussion_id for m in msgs}),
        len({m.author for m in msgs}),
        (min(ts), max(ts)),
    )


# -- persistence -----------------------------------------------------------

def dumps_jsonl(corpus) -> bytes:
    lines = [json.dumps(m.to_record(), ensure_ascii=False) for m in corpus.messages]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def write_jsonl(corpus, path):
    Path(path).write_bytes(dumps_jsonl(corpus))


def loads_jsonl(data, channel=None) -> Corpus:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    msgs = []
    for lineno, line in enumerate(data.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            msgs.append(Message.from_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"corpus line {lineno}: {exc}") from exc
    return Corpus.from_messages(msgs, channel)


def read_jsonl(path, channel=None) -> Corpus:
    return loads_jsonl(Path(path).read_bytes(), channel)


# -- parsing ---------------------------------------------------------------

@dataclass
class RecordError:
    record: str
    reason: str
    severity: str = "error"     # "warning" records are kept, "error" records dropped


@dataclass
class ParseResult:
    messages: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.messages)

    def __len__(self):
        return len(self.messages)

    def corpus(self, channel=None) -> Corpus:
        return Corpus.from_messages(self.messages, channel)


def strip_quoted_lines(raw: str) -> str:
    """Drop every line whose first non-blank character is ``>``."""
    return "\n".join(line for line in raw.split("\n") if not line.lstrip().startswith(">"))


_REPLY_PREFIX = re.compile(r"^\s*(?:(?:re|fwd?|aw)\s*(?:\[\d+\])?\s*:\s*|\[[^\]]*\]\s*)", re.I)


def normalize_subject(subject) -> str:
    """Thread key: reply/forward prefixes and ``[list]`` tags removed,
    whitespace collapsed, lowercased."""
    s = subject or ""
    while True:
        stripped = _REPLY_PREFIX.sub("", s, count=1)
        if stripped == s:
            break
        s = stripped
    s = " ".join(s.split()).lower()
    return s or "(no subject)"


def parse_timestamp(text) -> int:
    """UTC epoch seconds from ISO-8601, Bugzilla ``YYYY-MM-DD HH:MM:SS +ZZZZ``
    or RFC 2822 dates. Naive values are taken as UTC."""
    if isinstance(text, (int, float)):
        return int(text)
    s = str(text).strip()
    dt = None
    iso = s[:-1] + "+00:00" if s.endswith("Z") else s
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        for fmt in ("%Y-%m-%d %H:%M:%S %z", "%Y-%m-%d %H:%M %z", "%Y%m%dT%H:%M:%S"):
            try:
                dt = datetime.strptime(s, fmt)
                break
            except ValueError:
                continue
    if dt is None:
        try:
            dt = parsedate_to_datetime(s)
        except (TypeError, ValueError, IndexError):
            dt = None
    if dt is None:
        raise ValueError(f"unparseable timestamp {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _read_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    if isinstance(stream, (str, Path)):
        return Path(stream).read_bytes()
    return stream.read()


def _decode_utf8(data):
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("invalid UTF-8", exc.start) from None


def _comment_message(bug_id, index, comment, result):
    ref = f"bug {bug_id} comment {index}"
    author = comment.get("author") or comment.get("creator")
    when = comment.get("creation_time") or comment.get("time")
    if not author:
        result.errors.append(RecordError(ref, "missing author"))
        return
    if not when:
        result.errors.append(RecordError(ref, "missing creation_time"))
        return
    try:
        ts = parse_timestamp(when)
    except ValueError as exc:
        result.errors.append(RecordError(ref, str(exc)))
        return
    cid = comment.get("id", comment.get("count", index))
    result.messages.append(Message(
        message_id=f"bz-{bug_id}-{cid}",
        author=str(author).strip().lower(),
        timestamp=ts,
        discussion_id=str(bug_id),
        channel=Channel.BUG_TRACKER,
        text=strip_quoted_lines(comment.get("text") or ""),
    ))


def _iter_json_bugs(doc):
    bugs = doc.get("bugs") if isinstance(doc, dict) else doc
    if isinstance(bugs, dict):  # native REST shape: {"bugs": {"17": {"comments": [...]}}}
        for bug_id, body in bugs.items():
            yield bug_id, (body or {}).get("comments", [])
    elif isinstance(bugs, list):
        for bug in bugs:
            yield (bug or {}).get("id", bug.get("bug_id") if bug else None), (bug or {}).get("comments", [])
    else:
        raise ParseError("expected a 'bugs' list or mapping")


def _parse_bugzilla_json(data, result):
    text = _decode_utf8(data)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", len(text[:exc.pos].encode("utf-8"))) from None
    for pos, (bug_id, comments) in enumerate(_iter_json_bugs(doc)):
        if bug_id is None or str(bug_id).strip() == "":
            result.errors.append(RecordError(f"bug #{pos}", "missing bug id"))
            continue
        for index, comment in enumerate(comments or []):
            _comment_message(str(bug_id).strip(), index, comment or {}, result)


def _xml_offset(data, position):
    line, col = position
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[:line - 1]) + col


def _parse_bugzilla_xml(data, result):
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}", _xml_offset(data, exc.position)) from None
    bugs = [root] if root.tag == "bug" else root.iter("bug")
    for pos, bug in enumerate(bugs):
        bug_id = (bug.findtext("bug_id") or "").strip()
        if not bug_id:
            result.errors.append(RecordError(f"bug #{pos}", "missing bug id"))
            continue
        for index, desc in enumerate(bug.iter("long_desc")):
            who = desc.find("who")
            comment = {
                "author": (who.text or "").strip() if who is not None else None,
                "creation_time": (desc.findtext("bug_when") or "").strip() or None,
                "text": desc.findtext("thetext") or "",
                "id": (desc.findtext("commentid") or "").strip() or index,
            }
            _comment_message(bug_id, index, comment, result)


def parse_bugzilla_export(stream, format="json") -> ParseResult:
    """Parse a Bugzilla comment export (``format`` is ``json`` or ``xml``).

    Comments missing author, time or bug id are reported in ``errors`` and
    skipped; a malformed document raises :class:`ParseError` with the byte
    offset.
    """
    data = _read_bytes(stream)
    result = ParseResult()
    if format == "json":
        _parse_bugzilla_json(data, result)
    elif format == "xml":
        _parse_bugzilla_xml(data, result)
    else:
        raise ContractError(f"unknown Bugzilla export format {format!r}")
    result.messages.sort(key=_sort_key)
    return result


_FROM_ESCAPED = re.compile(rb"^>+From ")


def split_mbox(data: bytes):
    """Raw message blobs of an mbox archive (``From `` separator lines)."""
    blobs, current, prev_blank = [], None, True
    for line in data.splitlines(keepends=True):
        if line.startswith(b"From ") and prev_blank:
            if current is not None:
                blobs.append(b"".join(current))
            current = []
        elif current is not None:
            if _FROM_ESCAPED.match(line):
                line = line[1:]
            current.append(line)
        prev_blank = line.strip() == b""
    if current is not None:
        blobs.append(b"".join(current))
    return blobs


_TAG = re.compile(r"<[^>]+>")


def _decode_part(part):
    payload = part.get_payload(decode=True) or b""
    charset = part.get_content_charset() or "us-ascii"
    try:
        return payload.decode(charset), False
    except (LookupError, UnicodeDecodeError):
        return payload.decode("utf-8", errors="replace"), True


def _mail_body(msg):
    plain, html = [], []
    for part in msg.walk():
        if part.is_multipart() or part.get_content_maintype() != "text":
            continue
        if part.get_content_disposition() == "attachment":
            continue
        if part.get_content_subtype() == "plain":
            plain.append(part)
        elif part.get_content_subtype() == "html":
            html.append(part)
    lossy = False
    texts = []
    for part in plain or html[:1]:
        text, bad = _decode_part(part)
        lossy |= bad
        if part.get_content_subtype() == "html":
            text = _TAG.sub("", text)
        texts.append(text)
    return "\n".join(texts), lossy


def parse_mbox(stream) -> ParseResult:
    """Parse an mbox archive into mailing-list messages threaded by subject."""
    data = _read_bytes(stream)
    result = ParseResult()
    seen = set()
    for index, blob in enumerate(split_mbox(data)):
        ref = f"mail #{index}"
        try:
            msg = email.message_from_bytes(blob, policy=policy.compat32)
        except Exception as exc:  # email parser is lenient; this is a last resort
            result.errors.append(RecordError(ref, f"unparseable message: {exc}"))
            continue
        raw_from = msg.get("From")
        raw_date = msg.get("Date")
        if not raw_from:
            result.errors.append(RecordError(ref, "missing From header"))
            continue
        if not raw_date:
            result.errors.append(RecordError(ref, "missing Date header"))
            continue
        name, addr = parseaddr(str(raw_from))
        author = (addr or name).strip().lower()
        if not author:
            result.errors.append(RecordError(ref, "empty From header"))
            continue
        try:
            ts = parse_timestamp(str(raw_date))
        except ValueError as exc:
            result.errors.append(RecordError(ref, str(exc)))
            continue
        mid = str(msg.get("Message-ID") or "").strip().strip("<>")
        if not mid:
            mid = "mbox-" + hashlib.sha1(blob).hexdigest()[:16]
        if mid in seen:
            result.errors.append(RecordError(ref, f"duplicate Message-ID {mid}"))
            continue
        seen.add(mid)
        subject = _header_text(msg.get("Subject"))
        body, lossy = _mail_body(msg)
        if lossy:
            result.errors.append(RecordError(mid, "undecodable charset; decoded lossily", "warning"))
        result.messages.append(Message(
            message_id=mid,
            author=author,
            timestamp=ts,
            discussion_id=normalize_subject(subject),
            channel=Channel.MAILING_LIST,
            text=strip_quoted_lines(body),
        ))
    result.messages.sort(key=_sort_key)
    return result


def _header_text(value):
    if value is None:
        return ""
    try:
        parts = email.header.decode_header(str(value))
        return "".join(
            p.decode(cs or "utf-8", errors="replace") if isinstance(p, bytes) else p
            for p, cs in parts
        )
    except (LookupError, ValueError):
        return str(value)


# -- bug-tracker performance -------------------------------------------------

@dataclass(frozen=True)
class ResponsePoint:
    day: int
    bugs_opened_per_day: float
    median_first_reply_days: Optional[float]


def bug_response_metrics(corpus, window_days=30):
    """Per UTC day ``d``: mean bugs opened per day over days (d - W, d] and the
    median delay from each such bug's first comment to its second."""
    if corpus.channel is not Channel.BUG_TRACKER:
        raise ChannelError("bug response metrics need a bug-tracker corpus")
    if window_days < 1:
        raise ContractError("window_days must be >= 1")
    threads = corpus.discussions()
    if not threads:
        return []
    opened = np.array(sorted(ms[0].day for ms in threads.values()))
    replies = sorted(
        (ms[0].day, (ms[1].timestamp - ms[0].timestamp) / DAY)
        for ms in threads.values() if len(ms) >= 2
    )
    reply_days = np.array([d for d, _ in replies], dtype=np.int64)
    reply_delay = np.array([x for _, x in replies], dtype=float)
    points = []
    for d in range(int(opened[0]), int(opened[-1]) + 1):
        lo = d - window_days + 1
        n_open = np.searchsorted(opened, d, "right") - np.searchsorted(opened, lo, "left")
        a, b = np.searchsorted(reply_days, lo, "left"), np.searchsorted(reply_days, d, "right")
        med = float(np.median(reply_delay[a:b])) if b > a else None
        points.append(ResponsePoint(d, float(n_open / window_days), med))
    return points
