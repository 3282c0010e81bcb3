"""Synthetic corpora with planted ground truth, used as test oracles.

Two layouts are produced:

* discussion layout (default): discussions with exponential reply delays and
  message polarities drawn from ``polarity_probs`` or, when
  ``class_mixture`` is given, composed to land in a planted emotion class;
* churn layout (``churn`` set): per-contributor message sequences whose gaps
  follow a planted rule, INA iff the mean negativity magnitude of the
  contributor's messages in the lookback window exceeds a threshold.

Message text is built from words of the bundled demo lexicon so that
rescoring the text reproduces the planted scores. Ground truth is kept in
parallel records (``SyntheticCorpus.truth``), never inside the corpus.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .activity import ContributorTimeline
from .corpus import DAY, Channel, Corpus, Message, dumps_jsonl
from .errors import ConfigError
from .sentiment import SentimentScore

POSITIVE_WORDS = {2: "good", 3: "great", 4: "excellent", 5: "amazing"}
NEGATIVE_WORDS = {2: "bad", 3: "ugly", 4: "awful", 5: "hate"}
FILLER = ("the", "patch", "build", "log", "ebuild", "version", "update", "see", "attached",
          "for", "with", "on", "package", "mirror", "keyword", "arch")

CLASS_NAMES = ("neutral", "underemotional", "positive", "negative", "bipolar", "undetermined")

# shifts of the neutral share, in standard errors of the neutral proportion
_SHIFT = {"underemotional": 4.0, "positive": -4.0, "negative": -4.0,
          "bipolar": -6.0, "undetermined": -2.6}


@dataclass
class ChurnPlan:
    target_prior: float = 0.088
    threshold: float = 1.9
    lookback_days: float = 5.0
    inactivity_days: float = 30.0
    messages_per_contributor: int = 21
    label_noise: float = 0.0
    min_active_gap_days: float = 0.6
    inactive_gap_mean_days: float = 45.0
    positive_prob: float = 0.0        # chance a message carries p = 2 instead of p = 1


@dataclass
class SynthConfig:
    n_contributors: int = 50
    n_discussions: int = 100
    channel: str = "bug"
    start: int = 1_009_843_200          # 2002-01-01 UTC
    span_days: float = 365.0
    polarity_probs: tuple = (0.28, 0.16, 0.56)     # positive, negative, neutral
    discussion_size: tuple = (1, 40)                # inclusive
    reply_rate: float = 1.0                         # replies per day within a discussion
    class_mixture: Optional[dict] = None
    prescored: bool = True
    churn: Optional[ChurnPlan] = None

    def validate(self):
        if self.n_contributors < 1:
            raise ConfigError("n_contributors must be >= 1")
        if self.churn is None and self.n_discussions < 1:
            raise ConfigError("n_discussions must be >= 1")
        probs = np.asarray(self.polarity_probs, dtype=float)
        if probs.shape != (3,) or np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1) > 1e-9:
            raise ConfigError("polarity_probs must be three probabilities summing to 1")
        lo, hi = self.discussion_size
        if not 1 <= lo <= hi:
            raise ConfigError("discussion_size must satisfy 1 <= min <= max")
        if self.reply_rate <= 0 or self.span_days <= 0:
            raise ConfigError("reply_rate and span_days must be positive")
        Channel(self.channel)
        if self.class_mixture is not None:
            unknown = set(self.class_mixture) - set(CLASS_NAMES)
            if unknown:
                raise ConfigError(f"unknown discussion classes {sorted(unknown)}")
            fr = np.array(list(self.class_mixture.values()), dtype=float)
            if np.any(fr < 0) or abs(fr.sum() - 1) > 1e-9:
                raise ConfigError("class_mixture fractions must be >= 0 and sum to 1")
        c = self.churn
        if c is not None:
            if not 0.0 < c.target_prior < 1.0:
                raise ConfigError("target_prior must lie in (0, 1)")
            if not 0.0 <= c.label_noise < 1.0:
                raise ConfigError("label_noise must lie in [0, 1)")
            if not 0.0 <= c.positive_prob <= 1.0:
                raise ConfigError("positive_prob must lie in [0, 1]")
            if not 1.0 <= c.threshold < 5.0:
                raise ConfigError("threshold must lie in [1, 5)")
            if c.messages_per_contributor < 1:
                raise ConfigError("messages_per_contributor must be >= 1")
            if not 0 < c.min_active_gap_days and c.lookback_days + 1 < c.inactivity_days:
                raise ConfigError("need 0 < min_active_gap and lookback + 1 < inactivity")
            if c.min_active_gap_days >= c.inactivity_days:
                raise ConfigError("min_active_gap_days must be below inactivity_days")
        return self

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        churn = d.pop("churn", None)
        for key in ("polarity_probs", "discussion_size"):
            if key in d:
                d[key] = tuple(d[key])
        cfg = cls(**d)
        if churn is not None:
            cfg.churn = ChurnPlan(**churn)
        return cfg

    def to_dict(self):
        return asdict(self)


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    truth: list = field(default_factory=list)     # one record per message, corpus order

    def truth_by_id(self):
        return {r["id"]: r for r in self.truth}

    def dumps_truth(self) -> bytes:
        return "".join(json.dumps(r) + "\n" for r in self.truth).encode("utf-8")

    def write(self, path, truth_path=None):
        path = Path(path)
        path.write_bytes(dumps_jsonl(self.corpus))
        if truth_path is None:
            truth_path = path.with_name(path.stem + ".truth.jsonl")
        Path(truth_path).write_bytes(self.dumps_truth())
        return truth_path


def message_text(rng, p, n):
    """Filler text plus one lexicon word per non-default strength."""
    words = list(rng.choice(FILLER, size=int(rng.integers(3, 8))))
    if p > 1:
        words.insert(int(rng.integers(0, len(words) + 1)), POSITIVE_WORDS[p])
    if n < -1:
        words.insert(int(rng.integers(0, len(words) + 1)), NEGATIVE_WORDS[-n])
    return " ".join(words)


def _score_for(rng, polarity):
    if polarity == "positive":
        return (2 if rng.random() < 0.7 else 3), -1
    if polarity == "negative":
        return 1, (-2 if rng.random() < 0.7 else -3)
    return (1, -1) if rng.random() < 0.9 else (2, -2)


def _largest_remainder(fractions, total):
    fr = np.asarray(fractions, dtype=float) * total
    base = np.floor(fr).astype(int)
    rem = total - base.sum()
    order = np.argsort(-(fr - base), kind="stable")
    base[order[:rem]] += 1
    return base


def class_profile(cls, baseline, size):
    """Target (P, N, U) shares for a discussion of ``size`` messages planted in ``cls``."""
    P, N, U = baseline
    if cls == "neutral":
        return np.array([P, N, U])
    sd = lambda q: math.sqrt(q * (1 - q) / size)  # noqa: E731
    dU = _SHIFT[cls] * sd(U)
    if cls == "underemotional":
        newU = min(1.0, U + dU)
        scale = (1 - newU) / (P + N) if P + N > 0 else 0.0
        out = [P * scale, N * scale, newU]
    elif cls == "positive":
        out = [P - dU, N, U + dU]
    elif cls == "negative":
        out = [P, N - dU, U + dU]
    elif cls == "bipolar":
        out = [P - dU / 2, N - dU / 2, U + dU]
    else:  # undetermined: spread the neutral drop evenly in standard-error units
        sp, sn = sd(P), sd(N)
        out = [P - dU * sp / (sp + sn), N - dU * sn / (sp + sn), U + dU]
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def _discussion_layout(cfg, rng):
    channel = Channel(cfg.channel)
    names = [f"dev{i:05d}" for i in range(cfg.n_contributors)]
    polarities = ("positive", "negative", "neutral")
    if cfg.class_mixture:
        keys = list(cfg.class_mixture)
        alloc = _largest_remainder([cfg.class_mixture[k] for k in keys], cfg.n_discussions)
        planted = [k for k, c in zip(keys, alloc) for _ in range(c)]
        rng.shuffle(planted)
    else:
        planted = [None] * cfg.n_discussions
    lo, hi = cfg.discussion_size
    msgs, truth = [], []
    for d, cls in enumerate(planted):
        size = int(rng.integers(lo, hi + 1))
        if cls is None:
            pols = rng.choice(3, size=size, p=cfg.polarity_probs)
        else:
            counts = _largest_remainder(class_profile(cls, cfg.polarity_probs, size), size)
            pols = np.repeat(np.arange(3), counts)
            rng.shuffle(pols)
        t = cfg.start + rng.uniform(0, cfg.span_days) * DAY
        for j, k in enumerate(pols):
            if j > 0:
                t += rng.exponential(1.0 / cfg.reply_rate) * DAY
            p, n = _score_for(rng, polarities[k])
            mid = f"s{d:06d}-{j:04d}"
            author = names[int(rng.integers(cfg.n_contributors))]
            msgs.append(Message(mid, author, int(round(t)), f"d{d:06d}", channel,
                                message_text(rng, p, n), SentimentScore(p, n) if cfg.prescored else None))
            truth.append({"id": mid, "author": author, "p": p, "n": n,
                          "polarity": polarities[k], "discussion_class": cls})
    return msgs, truth


def _feasible_values(window_abs, label_ina, threshold, choices):
    s, c = sum(window_abs), len(window_abs)
    if label_ina:
        return [v for v in choices if (s + v) / (c + 1) > threshold]
    return [v for v in choices if (s + v) / (c + 1) <= threshold]


def _churn_layout(cfg, rng):
    plan = cfg.churn
    channel = Channel(cfg.channel)
    span = int(round(plan.lookback_days * DAY))
    ina_gap_min = int(math.ceil(plan.inactivity_days * DAY))
    act_gap_max = ina_gap_min - 1
    msgs, truth = [], []
    log_lo = math.log(plan.min_active_gap_days)
    log_hi = math.log(plan.inactivity_days)
    for a in range(cfg.n_contributors):
        author = f"dev{a:05d}"
        m = plan.messages_per_contributor
        planted = rng.random(m - 1) < plan.target_prior
        flips = rng.random(m - 1) < plan.label_noise
        t = int(round(cfg.start + rng.uniform(0, cfg.span_days) * DAY))
        history = []   # (ts, |n|) of this author
        for j in range(m):
            window = [v for ts, v in history if ts >= t - span]
            if j < m - 1:
                want_ina = bool(planted[j])
                if want_ina:
                    options = _feasible_values(window, True, plan.threshold, range(1, 6))
                    v = int(rng.choice(options))
                else:
                    options = _feasible_values(window, False, plan.threshold, (1, 2))
                    weights = np.array([0.75 if o == 1 else 0.25 for o in options])
                    v = int(rng.choice(options, p=weights / weights.sum()))
            else:
                want_ina = None
                v = 1
            p = 2 if rng.random() < plan.positive_prob else 1
            n = -v
            mid = f"u{a:05d}-{j:05d}"
            disc = f"t{int(rng.integers(max(cfg.n_discussions, 1))):05d}"
            msgs.append(Message(mid, author, t, disc, channel, message_text(rng, p, n),
                                SentimentScore(p, n) if cfg.prescored else None))
            true_ina = None if want_ina is None else bool(want_ina ^ flips[j])
            truth.append({"id": mid, "author": author, "p": p, "n": n,
                          "planted_label": None if want_ina is None else ("INA" if want_ina else "ACT"),
                          "true_label": None if true_ina is None else ("INA" if true_ina else "ACT"),
                          "noisy": None if want_ina is None else bool(flips[j])})
            history.append((t, v))
            if j == m - 1:
                break
            if true_ina:
                gap = ina_gap_min + int(round(rng.exponential(plan.inactive_gap_mean_days) * DAY))
            else:
                nxt_ina = j + 1 < m - 1 and bool(planted[j + 1])
                gap = None
                for _ in range(50):
                    g = int(round(math.exp(rng.uniform(log_lo, log_hi)) * DAY))
                    g = min(max(g, 1), act_gap_max)
                    win = [v2 for ts, v2 in history if ts >= t + g - span]
                    if j + 1 == m - 1 or _feasible_values(
                            win, nxt_ina, plan.threshold, range(1, 6) if nxt_ina else (1, 2)):
                        gap = g
                        break
                if gap is None:
                    gap = span + DAY // 2     # empty window: every label is reachable
            t += gap
    return msgs, truth


def generate_synthetic_corpus(config: SynthConfig, seed: int) -> SyntheticCorpus:
    """Deterministic synthetic corpus for ``(config, seed)``."""
    config.validate()
    rng = np.random.default_rng(seed)
    if config.churn is not None:
        msgs, truth = _churn_layout(config, rng)
    else:
        msgs, truth = _discussion_layout(config, rng)
    corpus = Corpus.from_messages(msgs, Channel(config.channel))
    order = {m.message_id: i for i, m in enumerate(corpus.messages)}
    truth.sort(key=lambda r: order[r["id"]])
    return SyntheticCorpus(corpus, truth)


def load_config(path) -> SynthConfig:
    return SynthConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def generate_activity_timelines(n, alpha=1.8, boundary=30.0, xmin=1.0, tail_scale=8.0, seed=0):
    """Timelines whose maximum gap mixes a power-law head on [xmin, boundary]
    with an exponential tail beyond it, the tail weight chosen so the density
    is continuous at the boundary. Returns ``(timelines, tau_max_days)``."""
    rng = np.random.default_rng(seed)
    b = 1.0 - alpha
    norm = (boundary ** b - xmin ** b) / b
    head_density = boundary ** (-alpha) / norm
    w = tail_scale * head_density / (1.0 + tail_scale * head_density)
    tail = rng.random(n) < w
    u = rng.random(n)
    head = (xmin ** b + u * (boundary ** b - xmin ** b)) ** (1.0 / b)
    tau = np.where(tail, boundary + rng.exponential(tail_scale, n), head)
    timelines = []
    for i, tm in enumerate(tau):
        first = int(round(tm * DAY))
        second = max(1, int(round(tm * rng.random() * DAY)))
        second = min(second, first)
        timelines.append(ContributorTimeline(f"dev{i:06d}", np.array([0, first, first + second])))
    return timelines, tau
