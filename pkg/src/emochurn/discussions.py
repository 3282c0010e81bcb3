"""Collective emotions of discussions.

Discussions are compared with the channel-wide polarity ratios by three
one-proportion tests (neutral, positive, negative) and sorted into six
classes. Also here: ternary-plot coordinates, the moving-average emotion
series and proportion comparisons between two partitions of a corpus.
"""
from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import parse_timestamp
from .errors import ContractError, InsufficientDataError, UndefinedTestError
from .sentiment import Polarity
from .stats import one_proportion_test, two_proportion_test

MOVING_AVERAGE_DAYS = 30
SQRT3_2 = math.sqrt(3.0) / 2.0


class EmotionClass(str, Enum):
    NEUTRAL = "neutral"
    UNDEREMOTIONAL = "underemotional"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    BIPOLAR = "bipolar"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Skipped:
    reason: str


@dataclass(frozen=True)
class BaselineRatios:
    P: float
    N: float
    U: float

    def __post_init__(self):
        for v in (self.P, self.N, self.U):
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"baseline ratio {v} outside [0, 1]")
        if abs(self.P + self.N + self.U - 1.0) > 1e-9:
            raise ContractError("baseline ratios must sum to 1")


def _scored(messages):
    for m in messages:
        if m.score is None:
            raise ContractError(f"message {m.message_id} is not scored")
        if m.score.polarity is not Polarity.DISCARDED:
            yield m


@dataclass(frozen=True)
class Discussion:
    discussion_id: str
    messages: tuple
    counts: tuple = field(init=False)   # (n_pos, n_neg, n_neu)

    def __post_init__(self):
        msgs = tuple(_scored(self.messages))
        object.__setattr__(self, "messages", msgs)
        pol = [m.score.polarity for m in msgs]
        object.__setattr__(self, "counts", (
            pol.count(Polarity.POSITIVE), pol.count(Polarity.NEGATIVE), pol.count(Polarity.NEUTRAL)))

    @property
    def size(self):
        return len(self.messages)

    @property
    def ratios(self):
        if not self.messages:
            raise UndefinedTestError(f"discussion {self.discussion_id} has no usable messages")
        m = self.size
        return tuple(c / m for c in self.counts)


def build_discussions(corpus):
    """Discussions of a scored corpus, discarded-polarity messages removed."""
    return [Discussion(did, tuple(ms)) for did, ms in corpus.discussions().items()]


def compute_baseline(corpus) -> BaselineRatios:
    """Channel-wide message ratios of positive, negative and neutral polarity."""
    pol = [m.score.polarity for m in _scored(corpus.messages)]
    total = len(pol)
    if total == 0:
        raise InsufficientDataError("baseline needs at least one non-discarded message")
    pos = pol.count(Polarity.POSITIVE) / total
    neg = pol.count(Polarity.NEGATIVE) / total
    return BaselineRatios(pos, neg, 1.0 - pos - neg)


def ternary_xy(P, N, U):
    """Barycentric embedding: positive at (0, 0), negative at (1, 0),
    neutral at the apex (1/2, sqrt(3)/2)."""
    return N + U / 2.0, SQRT3_2 * U


def discussion_ratios(discussion):
    P, N, U = discussion.ratios
    return P, N, U, ternary_xy(P, N, U)


def _rejects(count, size, base, alpha):
    """Two-sided test of count/size against ``base``; returns (rejected, sign)."""
    res = one_proportion_test(count, size, base, "two_sided")
    diff = count / size - base
    return res.p_value < alpha, (diff > 0) - (diff < 0)


def classify_discussion(discussion, baseline, alpha=0.05, min_messages=20):
    """Emotion class of one discussion, or :class:`Skipped` when it is too small."""
    m = discussion.size
    if m < min_messages:
        return Skipped(f"{m} messages < min_messages={min_messages}")
    n_pos, n_neg, n_neu = discussion.counts
    rejected, sign = _rejects(n_neu, m, baseline.U, alpha)
    if not rejected or sign == 0:
        return EmotionClass.NEUTRAL
    if sign > 0:
        return EmotionClass.UNDEREMOTIONAL
    pos_rej, pos_sign = _rejects(n_pos, m, baseline.P, alpha)
    neg_rej, neg_sign = _rejects(n_neg, m, baseline.N, alpha)
    positive = pos_rej and pos_sign > 0
    negative = neg_rej and neg_sign > 0
    if positive and negative:
        return EmotionClass.BIPOLAR
    if positive:
        return EmotionClass.POSITIVE
    if negative:
        return EmotionClass.NEGATIVE
    return EmotionClass.UNDETERMINED


@dataclass
class ClassificationTable:
    baseline: BaselineRatios
    classes: dict = field(default_factory=dict)    # discussion_id -> EmotionClass
    skipped: dict = field(default_factory=dict)    # discussion_id -> reason
    rows: list = field(default_factory=list)       # ternary plot rows of classified discussions

    def frequencies(self):
        freq = {c.value: 0 for c in EmotionClass}
        for c in self.classes.values():
            freq[c.value] += 1
        return freq

    def __len__(self):
        return len(self.classes)


TERNARY_COLUMNS = ["discussion_id", "class", "size", "P", "N", "U", "x", "y"]


def classify_corpus(corpus, baseline=None, alpha=0.05, min_messages=20) -> ClassificationTable:
    if baseline is None:
        baseline = compute_baseline(corpus)
    if any(not 0.0 < v < 1.0 for v in (baseline.P, baseline.N, baseline.U)):
        raise UndefinedTestError(f"degenerate baseline {baseline}; every polarity must occur")
    table = ClassificationTable(baseline)
    for disc in build_discussions(corpus):
        outcome = classify_discussion(disc, baseline, alpha, min_messages)
        if isinstance(outcome, Skipped):
            table.skipped[disc.discussion_id] = outcome.reason
            continue
        table.classes[disc.discussion_id] = outcome
        P, N, U, (x, y) = discussion_ratios(disc)
        table.rows.append({
            "discussion_id": disc.discussion_id, "class": outcome.value, "size": disc.size,
            "P": P, "N": N, "U": U, "x": x, "y": y,
        })
    return table


def write_ternary_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TERNARY_COLUMNS)
        w.writeheader()
        w.writerows(table.rows)


def write_classes_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["discussion_id", "class", "reason"])
        for did, c in table.classes.items():
            w.writerow([did, c.value, ""])
        for did, reason in table.skipped.items():
            w.writerow([did, "skipped", reason])


# -- moving average ------------------------------------------------------------

@dataclass(frozen=True)
class SeriesPoint:
    day: int
    p: float
    n: float
    s: float
    count: int


@dataclass
class EmotionSeries:
    window_days: int
    points: list

    def as_arrays(self):
        return {k: np.array([getattr(pt, k) for pt in self.points]) for k in ("day", "p", "n", "s", "count")}


def emotion_timeseries(corpus, window_days=MOVING_AVERAGE_DAYS) -> EmotionSeries:
    """Daily means over the trailing ``window_days`` UTC days (t - T, t].

    ``n`` is reported sign-flipped (a positive mean negativity); days whose
    window holds no usable message emit no point.
    """
    if window_days < 1 or window_days != int(window_days):
        raise ContractError("window_days must be a whole number of days >= 1")
    window_days = int(window_days)
    msgs = list(_scored(corpus.messages))
    if not msgs:
        return EmotionSeries(window_days, [])
    days = np.array([m.day for m in msgs], dtype=np.int64)
    d0 = int(days.min())
    span = int(days.max()) - d0 + window_days
    idx = days - d0

    def daily(values):
        return np.bincount(idx, weights=values, minlength=span)

    cnt = np.bincount(idx, minlength=span).astype(float)
    sp = daily(np.array([m.score.p for m in msgs], dtype=float))
    sn = daily(np.array([m.score.n for m in msgs], dtype=float))
    ss = daily(np.array([m.score.s for m in msgs], dtype=float))

    def trailing(x):
        c = np.concatenate([[0.0], np.cumsum(x)])
        hi = np.arange(1, span + 1)
        lo = np.maximum(hi - window_days, 0)
        return c[hi] - c[lo]

    wc, wp, wn, ws = trailing(cnt), trailing(sp), trailing(sn), trailing(ss)
    points = [
        SeriesPoint(d0 + i, float(wp[i] / wc[i]), float(-wn[i] / wc[i]), float(ws[i] / wc[i]), int(wc[i]))
        for i in range(span) if wc[i] > 0
    ]
    return EmotionSeries(window_days, points)


def write_series_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "p", "n", "s"])
        for pt in series.points:
            date = datetime.date(1970, 1, 1) + datetime.timedelta(days=pt.day)
            w.writerow([date.isoformat(), repr(float(pt.p)), repr(float(pt.n)), repr(float(pt.s))])


# -- partition comparisons -------------------------------------------------------

@dataclass(frozen=True)
class PeriodPartition:
    """Two named sets of [start, end) timestamp ranges."""
    periods: dict

    def __post_init__(self):
        if len(self.periods) != 2:
            raise ContractError("a period partition needs exactly two named sides")

    @property
    def labels(self):
        return tuple(self.periods)

    def split(self, corpus):
        sides = []
        for ranges in self.periods.values():
            sides.append([m for m in corpus.messages
                          if any(lo <= m.timestamp < hi for lo, hi in ranges)])
        return sides


@dataclass(frozen=True)
class AuthorPartition:
    """Discussions without vs with a given author, counting their messages.

    ``within`` optionally restricts both sides to messages in [start, end).
    """
    author: str
    within: Optional[tuple] = None

    @property
    def labels(self):
        return (f"without {self.author}", f"with {self.author}")

    def split(self, corpus):
        msgs = corpus.messages
        if self.within is not None:
            lo, hi = self.within
            msgs = [m for m in msgs if lo <= m.timestamp < hi]
        joined = {m.discussion_id for m in msgs if m.author == self.author}
        return ([m for m in msgs if m.discussion_id not in joined],
                [m for m in msgs if m.discussion_id in joined])


def load_periods(path) -> PeriodPartition:
    """``{"name": [[start, end], ...], "other": [...]}`` with ISO dates or epoch seconds."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    periods = {}
    for name, ranges in raw.items():
        if ranges and not isinstance(ranges[0], (list, tuple)):
            ranges = [ranges]
        periods[name] = [(parse_timestamp(a), parse_timestamp(b)) for a, b in ranges]
    return PeriodPartition(periods)


@dataclass(frozen=True)
class PartitionComparison:
    polarity: str          # "N", "U" or "P"
    labels: tuple
    proportions: tuple
    counts: tuple          # ((k1, n1), (k2, n2))
    result: object         # TestResult

    def hypothesis(self):
        op = {"greater": ">", "less": "<", "two_sided": "<>"}[self.result.alternative]
        a, b = self.labels
        return f"{self.polarity}_{{{a}}} {op} {self.polarity}_{{{b}}}"


_CLASS_OF = {"N": Polarity.NEGATIVE, "U": Polarity.NEUTRAL, "P": Polarity.POSITIVE}


def compare_partitions(corpus, partition, alpha=0.05):
    """Two-proportion tests between the partition's sides for N, U and P.

    The alternative is one-sided in the direction of the data when the
    two-sided test rejects at ``alpha``, otherwise two-sided.
    """
    side_a, side_b = (list(_scored(s)) for s in partition.split(corpus))
    if not side_a or not side_b:
        raise UndefinedTestError("both partition sides need usable messages")
    out = []
    for key in ("N", "U", "P"):
        cls = _CLASS_OF[key]
        k1 = sum(m.score.polarity is cls for m in side_a)
        k2 = sum(m.score.polarity is cls for m in side_b)
        n1, n2 = len(side_a), len(side_b)
        res = two_proportion_test(k1, n1, k2, n2, "two_sided")
        if res.p_value < alpha and k1 / n1 != k2 / n2:
            res = two_proportion_test(k1, n1, k2, n2, "greater" if k1 / n1 > k2 / n2 else "less")
        out.append(PartitionComparison(key, partition.labels, (k1 / n1, k2 / n2),
                                       ((k1, n1), (k2, n2)), res))
    return out


def write_comparisons_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["polarity", "p_value", "alternative", "hypothesis", "estimate", "prop_a", "prop_b"])
        for r in rows:
            w.writerow([r.polarity, repr(float(r.result.p_value)), r.result.alternative, r.hypothesis(),
                        repr(float(r.result.estimate)), repr(float(r.proportions[0])), repr(float(r.proportions[1]))])
