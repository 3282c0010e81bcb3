"""Contributor activity: interevent times, the distribution of each
contributor's longest silence, and ACT/INA labelling of message intervals.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import DAY
from .errors import ContractError, InsufficientDataError
from .stats import log_binned_histogram, powerlaw_mle

INACTIVITY_DAYS = 30


class IntervalLabel(str, Enum):
    ACT = "ACT"
    INA = "INA"


class OneTimeContributor(InsufficientDataError):
    """Raised for a timeline with a single event; such contributors are discarded."""


@dataclass(frozen=True)
class ContributorTimeline:
    author: str
    times: np.ndarray          # epoch seconds, strictly increasing
    channel: object = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        if t.size == 0:
            raise ContractError("a timeline needs at least one event")
        if np.any(np.diff(t) <= 0):
            raise ContractError("timeline times must be strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return int(self.times.size)


@dataclass(frozen=True)
class LabeledInterval:
    author: str
    start_time: int
    gap_days: float
    label: IntervalLabel

    def to_record(self):
        return {"author": self.author, "start": self.start_time,
                "gap_days": self.gap_days, "label": self.label.value}

    @classmethod
    def from_record(cls, rec):
        return cls(rec["author"], int(rec["start"]), float(rec["gap_days"]), IntervalLabel(rec["label"]))


def build_timelines(corpus):
    """One timeline per author (sorted by author); equal timestamps collapse."""
    times = {}
    for m in corpus.messages:
        times.setdefault(m.author, set()).add(m.timestamp)
    return [ContributorTimeline(a, np.array(sorted(times[a]), dtype=np.int64), corpus.channel)
            for a in sorted(times)]


def interevent_times(timeline):
    """Gaps between consecutive events, in days."""
    if len(timeline) < 2:
        raise OneTimeContributor(f"{timeline.author} has a single message")
    return np.diff(timeline.times) / DAY


def label_intervals(timeline, threshold_days=INACTIVITY_DAYS):
    """ACT when the gap to the next message is shorter than the threshold,
    INA otherwise; the last message opens no interval."""
    gaps = interevent_times(timeline)
    return [
        LabeledInterval(timeline.author, int(t), float(g),
                        IntervalLabel.ACT if g < threshold_days else IntervalLabel.INA)
        for t, g in zip(timeline.times[:-1], gaps)
    ]


def label_corpus(corpus, threshold_days=INACTIVITY_DAYS):
    """Labelled intervals for every contributor with at least two messages.

    Returns ``(intervals, n_one_time)``.
    """
    out, one_time = [], 0
    for tl in build_timelines(corpus):
        if len(tl) < 2:
            one_time += 1
            continue
        out.extend(label_intervals(tl, threshold_days))
    return out, one_time


def ina_prior(intervals):
    if not intervals:
        raise InsufficientDataError("no intervals")
    return sum(iv.label is IntervalLabel.INA for iv in intervals) / len(intervals)


@dataclass
class ActivityFit:
    histogram: object
    alpha: float
    n_used: int
    xmin: float
    boundary: float
    boundary_detected: bool
    boundary_hint: float
    fitted_density: np.ndarray     # bin-averaged fitted power-law density per histogram bin

    def summary(self):
        return {"alpha": self.alpha, "n_used": self.n_used, "xmin": self.xmin,
                "boundary": self.boundary, "boundary_detected": self.boundary_detected,
                "boundary_hint": self.boundary_hint}


def _powerlaw_mass(lo, hi, alpha):
    # integral of x^-alpha over [lo, hi]
    if abs(alpha - 1.0) < 1e-12:
        return np.log(hi / lo)
    return (lo ** (1 - alpha) - hi ** (1 - alpha)) / (alpha - 1)


def max_interevent_analysis(timelines, xmin=None, boundary_hint=INACTIVITY_DAYS,
                            bins_per_decade=10, min_timelines=10):
    """Distribution of per-contributor maximum interevent time (days).

    The power law is fitted to samples in [xmin, boundary_hint] (xmin defaults
    to the smallest maximum gap). The boundary between the two activity
    regimes is the lower edge of the first bin at or above xmin from which
    the empirical density stays below half of the fitted density; if no bin
    qualifies it falls back to ``boundary_hint``.
    """
    tau_max = np.array([interevent_times(tl).max() for tl in timelines if len(tl) >= 2])
    if tau_max.size < min_timelines:
        raise InsufficientDataError(
            f"{tau_max.size} timelines with >= 2 events, need {min_timelines}")
    if xmin is None:
        xmin = float(tau_max.min())
    hist = log_binned_histogram(tau_max, bins_per_decade)
    xmax = boundary_hint if boundary_hint > xmin else None
    alpha, n_used = powerlaw_mle(tau_max, xmin, xmax=xmax)

    lo, hi = hist.bin_edges[:-1], hist.bin_edges[1:]
    head_norm = _powerlaw_mass(xmin, xmax if xmax is not None else math.inf, alpha)
    frac = n_used / tau_max.size
    fitted = frac * _powerlaw_mass(lo, hi, alpha) / head_norm / (hi - lo)

    boundary, detected = float(boundary_hint), False
    below = hist.densities < 0.5 * fitted
    candidates = np.flatnonzero(lo >= xmin)
    for i in candidates:
        if below[i:].all():
            boundary, detected = float(lo[i]), True
            break
    return ActivityFit(hist, float(alpha), int(n_used), float(xmin), boundary, detected,
                       float(boundary_hint), fitted)


def write_intervals_jsonl(intervals, path):
    with open(path, "w", encoding="utf-8") as fh:
        for iv in intervals:
            fh.write(json.dumps(iv.to_record()) + "\n")


def read_intervals_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [LabeledInterval.from_record(json.loads(line)) for line in fh if line.strip()]


def write_histogram(fit, csv_path, sidecar_path=None):
    h = fit.histogram
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        for lo, hi, c, d in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts, h.densities):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(d))])
    if sidecar_path is None:
        sidecar_path = Path(csv_path).with_suffix(".json")
    Path(sidecar_path).write_text(json.dumps(fit.summary(), indent=2), encoding="utf-8")
