"""Inactivity risk from recent emotional expression.

Each labelled interval gets the mean positivity ``P_u`` and negativity ``N_u``
of its author's messages over a short lookback window. From these we build
conditional densities, a binned posterior P(INA | feature) and threshold
predictors, evaluated by bootstrapped precision and recall. A streaming
variant scores messages as they arrive.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .activity import IntervalLabel, LabeledInterval
from .corpus import DAY
from .errors import ContractError, InsufficientDataError, ReorderError, UndefinedTestError
from .stats import bootstrap_indices, gaussian_kde, wilcoxon_rank_sum, wilson_interval

LOOKBACK_DAYS = 5
BANDWIDTH = 0.35
N_BINS = 5
THETA_ABSOLUTE = 1.9
THETA_DEVIATION = 0.8
BOOTSTRAP_REPS = 20

FEATURE_RANGES = {"P_u": (1.0, 5.0), "N_u": (-5.0, -1.0)}
KDE_STEP = 0.01

MODES = ("absolute", "deviation")
BASELINES = ("causal", "global")


@dataclass(frozen=True)
class FeatureVector:
    interval: LabeledInterval
    P_u: float
    N_u: float
    baseline_P: Optional[float] = None
    baseline_N: Optional[float] = None

    @property
    def label(self):
        return self.interval.label

    @property
    def key(self):
        return (self.interval.author, self.interval.start_time)

    def to_record(self):
        rec = self.interval.to_record()
        rec.update({"P_u": self.P_u, "N_u": self.N_u,
                    "base_P": self.baseline_P, "base_N": self.baseline_N})
        return rec

    @classmethod
    def from_record(cls, rec):
        return cls(LabeledInterval.from_record(rec), float(rec["P_u"]), float(rec["N_u"]),
                   rec.get("base_P"), rec.get("base_N"))


def extract_features(corpus, intervals, lookback_days=LOOKBACK_DAYS, baseline="causal"):
    """Features for each interval from its author's scored messages.

    The window is [t - lookback, t] and includes the interval's own message.
    Baselines are the author's mean scores up to t (``causal``) or over the
    whole history (``global``). All scored messages count, including those
    whose polarity is discarded.
    """
    if baseline not in BASELINES:
        raise ContractError(f"baseline must be one of {BASELINES}")
    per_author = {}
    for m in corpus.messages:
        if m.score is None:
            raise ContractError(f"message {m.message_id} is not scored")
        per_author.setdefault(m.author, []).append((m.timestamp, m.score.p, m.score.n))
    arrays = {}
    for author, rows in per_author.items():
        a = np.array(rows, dtype=np.int64)
        ts = a[:, 0]
        cp = np.concatenate([[0], np.cumsum(a[:, 1])])
        cn = np.concatenate([[0], np.cumsum(a[:, 2])])
        arrays[author] = (ts, cp, cn)

    span = int(round(lookback_days * DAY))
    out = []
    for iv in intervals:
        if iv.author not in arrays:
            raise ContractError(f"interval author {iv.author!r} has no messages")
        ts, cp, cn = arrays[iv.author]
        t = iv.start_time
        lo = int(np.searchsorted(ts, t - span, "left"))
        hi = int(np.searchsorted(ts, t, "right"))
        k = hi - lo
        if k <= 0:
            raise ContractError(f"no message of {iv.author!r} at interval start {t}")
        P_u = float(cp[hi] - cp[lo]) / k
        N_u = float(cn[hi] - cn[lo]) / k
        if baseline == "causal":
            bP, bN = float(cp[hi]) / hi, float(cn[hi]) / hi
        else:
            bP, bN = float(cp[-1]) / ts.size, float(cn[-1]) / ts.size
        out.append(FeatureVector(iv, P_u, N_u, bP, bN))
    return out


def _values_by_label(features, name):
    vals = {IntervalLabel.ACT: [], IntervalLabel.INA: []}
    for f in features:
        vals[IntervalLabel(f.label)].append(getattr(f, name))
    return {k: np.asarray(v, dtype=float) for k, v in vals.items()}


def conditional_densities(features, bandwidth=BANDWIDTH):
    """KDEs of P_u and N_u given each label: ``{(feature, label): Density}``."""
    out = {}
    for name, (lo, hi) in FEATURE_RANGES.items():
        groups = _values_by_label(features, name)
        for label, values in groups.items():
            if values.size == 0:
                raise UndefinedTestError(f"no {label.value} intervals; density of {name} undefined")
            out[(name, label.value)] = gaussian_kde(values, bandwidth, (lo, hi, KDE_STEP))
    return out


def wilcoxon_conditionals(features):
    """Rank-sum test of INA vs ACT values, per feature."""
    out = {}
    for name in FEATURE_RANGES:
        g = _values_by_label(features, name)
        out[name] = wilcoxon_rank_sum(g[IntervalLabel.INA], g[IntervalLabel.ACT])
    return out


@dataclass
class PosteriorBins:
    feature: str
    edges: np.ndarray
    counts: np.ndarray
    ina_counts: np.ndarray
    estimates: np.ndarray      # nan where unsupported
    ci_lo: np.ndarray
    ci_hi: np.ndarray

    @property
    def supported(self):
        return self.counts > 0

    def bin_of(self, value):
        i = int(np.searchsorted(self.edges, value, "right")) - 1
        return min(max(i, 0), len(self.counts) - 1)

    def estimate_for(self, value):
        i = self.bin_of(value)
        return float(self.estimates[i]) if self.supported[i] else None

    def to_dict(self):
        def clean(a):
            return [None if not np.isfinite(x) else float(x) for x in a]
        return {"feature": self.feature, "edges": [float(e) for e in self.edges],
                "counts": [int(c) for c in self.counts],
                "ina_counts": [int(c) for c in self.ina_counts],
                "estimates": clean(self.estimates), "ci_lo": clean(self.ci_lo),
                "ci_hi": clean(self.ci_hi),
                "supported": [bool(s) for s in self.supported]}

    @classmethod
    def from_dict(cls, d):
        def arr(xs):
            return np.array([np.nan if x is None else x for x in xs], dtype=float)
        return cls(d["feature"], np.array(d["edges"], dtype=float),
                   np.array(d["counts"], dtype=np.int64), np.array(d["ina_counts"], dtype=np.int64),
                   arr(d["estimates"]), arr(d["ci_lo"]), arr(d["ci_hi"]))


def posterior_inactive(features, bins=N_BINS, confidence=0.95):
    """Empirical P(INA | feature in bin) with Wilson intervals, per feature.

    Per bin this is count(INA and bin) / count(bin), i.e. Bayes' rule with
    every term estimated from counts. Bins without support are flagged and
    carry nan.
    """
    if bins < 2:
        raise ContractError("posterior needs at least 2 bins")
    if not features:
        raise InsufficientDataError("posterior of an empty feature set")
    ina = np.array([IntervalLabel(f.label) is IntervalLabel.INA for f in features])
    out = {}
    for name, (lo, hi) in FEATURE_RANGES.items():
        x = np.array([getattr(f, name) for f in features], dtype=float)
        edges = np.linspace(lo, hi, bins + 1)
        idx = np.clip(np.searchsorted(edges, x, "right") - 1, 0, bins - 1)
        counts = np.bincount(idx, minlength=bins)
        k = np.bincount(idx, weights=ina.astype(float), minlength=bins).astype(np.int64)
        est = np.full(bins, np.nan)
        cil = np.full(bins, np.nan)
        cih = np.full(bins, np.nan)
        for b in np.flatnonzero(counts):
            est[b] = k[b] / counts[b]
            cil[b], cih[b] = wilson_interval(int(k[b]), int(counts[b]), confidence)
        out[name] = PosteriorBins(name, edges, counts, k, est, cil, cih)
    return out


def _default_theta(mode):
    return THETA_ABSOLUTE if mode == "absolute" else THETA_DEVIATION


@dataclass
class ChurnModel:
    mode: str = "absolute"
    theta: float = THETA_ABSOLUTE
    prior_ina: float = float("nan")
    densities: dict = field(default_factory=dict)      # (feature, label) -> Density
    posterior: dict = field(default_factory=dict)      # feature -> PosteriorBins
    bandwidth: float = BANDWIDTH
    lookback_days: float = LOOKBACK_DAYS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}")

    def to_dict(self):
        return {
            "mode": self.mode, "theta": self.theta, "prior_ina": self.prior_ina,
            "bandwidth": self.bandwidth, "lookback_days": self.lookback_days,
            "posterior": {k: v.to_dict() for k, v in self.posterior.items()},
            "densities": {f"{f}|{lab}": {"grid": d.grid.tolist(), "values": d.values.tolist()}
                          for (f, lab), d in self.densities.items()},
        }

    @classmethod
    def from_dict(cls, d):
        from .stats import Density

        dens = {}
        for key, v in d.get("densities", {}).items():
            f, lab = key.split("|")
            dens[(f, lab)] = Density(np.array(v["grid"]), np.array(v["values"]))
        return cls(d["mode"], float(d["theta"]), float(d["prior_ina"]), dens,
                   {k: PosteriorBins.from_dict(v) for k, v in d.get("posterior", {}).items()},
                   float(d.get("bandwidth", BANDWIDTH)), float(d.get("lookback_days", LOOKBACK_DAYS)))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_model(features, mode="absolute", theta=None, bandwidth=BANDWIDTH, bins=N_BINS,
              lookback_days=LOOKBACK_DAYS) -> ChurnModel:
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}")
    if not features:
        raise InsufficientDataError("cannot fit a model without features")
    prior = sum(IntervalLabel(f.label) is IntervalLabel.INA for f in features) / len(features)
    if not 0.0 < prior < 1.0:
        raise InsufficientDataError("both ACT and INA intervals are needed to fit a model")
    return ChurnModel(
        mode=mode,
        theta=_default_theta(mode) if theta is None else float(theta),
        prior_ina=prior,
        densities=conditional_densities(features, bandwidth),
        posterior=posterior_inactive(features, bins),
        bandwidth=bandwidth,
        lookback_days=lookback_days,
    )


def predict_one(P_u, N_u, mode, theta, baseline_P=None, baseline_N=None):
    if mode == "absolute":
        risky = abs(N_u) > theta or abs(P_u) > theta
    elif mode == "deviation":
        if baseline_P is None or baseline_N is None:
            raise ContractError("deviation mode needs contributor baselines")
        risky = abs(N_u - baseline_N) > theta or abs(P_u - baseline_P) > theta
    else:
        raise ContractError(f"mode must be one of {MODES}")
    return IntervalLabel.INA if risky else IntervalLabel.ACT


def predict(features, model):
    """Threshold predictor; ``model`` is a :class:`ChurnModel` or any object
    with ``mode`` and ``theta``."""
    return [predict_one(f.P_u, f.N_u, model.mode, model.theta, f.baseline_P, f.baseline_N)
            for f in features]


# -- evaluation ------------------------------------------------------------------

@dataclass
class ClassScores:
    prior: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    precision_reps: int      # replicates where precision was defined
    recall_reps: int


@dataclass
class PrecisionRecallReport:
    reps: int
    seed: int
    classes: dict            # "ACT"/"INA" -> ClassScores

    def to_dict(self):
        return {"reps": self.reps, "seed": self.seed,
                "classes": {k: vars(v) for k, v in self.classes.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["reps"], d["seed"], {k: ClassScores(**v) for k, v in d["classes"].items()})


def _mean_std(values):
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def evaluate(predicted, truth, reps=BOOTSTRAP_REPS, seed=7, bootstrap=True):
    """Per-class precision and recall over ``reps`` bootstrap resamples.

    A replicate in which a class is never predicted (precision) or never
    true (recall) is excluded for that metric; the number of replicates
    used is reported. With ``bootstrap=False`` every replicate is the
    original sample.
    """
    if len(predicted) != len(truth):
        raise ContractError("predicted and truth differ in length")
    if len(truth) == 0:
        raise ContractError("nothing to evaluate")
    if reps < 1:
        raise ContractError("reps must be >= 1")
    pred_ina = np.array([IntervalLabel(p) is IntervalLabel.INA for p in predicted])
    true_ina = np.array([IntervalLabel(t) is IntervalLabel.INA for t in truth])
    n = true_ina.size
    if bootstrap:
        samples = bootstrap_indices(n, reps, seed)
    else:
        samples = (np.arange(n) for _ in range(reps))
    prec = {"ACT": [], "INA": []}
    rec = {"ACT": [], "INA": []}
    for idx in samples:
        p, t = pred_ina[idx], true_ina[idx]
        for name, pp, tt in (("INA", p, t), ("ACT", ~p, ~t)):
            tp = int(np.sum(pp & tt))
            if pp.any():
                prec[name].append(tp / int(pp.sum()))
            if tt.any():
                rec[name].append(tp / int(tt.sum()))
    classes = {}
    for name, prior in (("ACT", 1.0 - true_ina.mean()), ("INA", float(true_ina.mean()))):
        pm, ps = _mean_std(prec[name])
        rm, rs = _mean_std(rec[name])
        classes[name] = ClassScores(float(prior), pm, ps, rm, rs, len(prec[name]), len(rec[name]))
    return PrecisionRecallReport(reps, seed, classes)


def sweep_thresholds(features, thetas, mode="absolute"):
    """INA precision and recall on the full sample for each threshold.
    Reports the curve only; choosing a threshold is left to the caller."""
    truth = [f.label for f in features]
    rows = []
    for theta in thetas:
        pred = [predict_one(f.P_u, f.N_u, mode, theta, f.baseline_P, f.baseline_N) for f in features]
        rep = evaluate(pred, truth, reps=1, bootstrap=False)
        ina = rep.classes["INA"]
        rows.append({"theta": float(theta), "precision": ina.precision_mean, "recall": ina.recall_mean})
    return rows


def write_features_jsonl(features, path):
    with open(path, "w", encoding="utf-8") as fh:
        for f in features:
            fh.write(json.dumps(f.to_record()) + "\n")


def read_features_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [FeatureVector.from_record(json.loads(line)) for line in fh if line.strip()]


# -- streaming ---------------------------------------------------------------------

@dataclass(frozen=True)
class Alert:
    author: str
    timestamp: int
    P_u: float
    N_u: float
    label: IntervalLabel
    posterior_P: Optional[float]
    posterior_N: Optional[float]

    @property
    def at_risk(self):
        return self.label is IntervalLabel.INA

    def to_record(self):
        return {"author": self.author, "ts": self.timestamp, "P_u": self.P_u, "N_u": self.N_u,
                "label": self.label.value, "posterior_P": self.posterior_P,
                "posterior_N": self.posterior_N}


class _AuthorState:
    __slots__ = ("window", "wp", "wn", "count", "tp", "tn", "last")

    def __init__(self):
        self.window = deque()      # (ts, p, n)
        self.wp = self.wn = 0
        self.count = self.tp = self.tn = 0
        self.last = None

    def to_dict(self):
        return {"window": [list(w) for w in self.window], "count": self.count,
                "tp": self.tp, "tn": self.tn, "last": self.last}

    @classmethod
    def from_dict(cls, d):
        s = cls()
        for ts, p, n in d["window"]:
            s.window.append((ts, p, n))
            s.wp += p
            s.wn += n
        s.count, s.tp, s.tn, s.last = d["count"], d["tp"], d["tn"], d["last"]
        return s


class StreamPredictor:
    """Per-contributor rolling features and causal baselines over a message stream.

    Events of one contributor must arrive in non-decreasing timestamp order.
    Integer score sums keep the features bit-identical to the batch path.
    """

    def __init__(self, model, lookback_days=None):
        self.model = model
        self.lookback_days = model.lookback_days if lookback_days is None else lookback_days
        self._span = int(round(self.lookback_days * DAY))
        self._states = {}

    def process(self, message) -> Alert:
        if message.score is None:
            raise ContractError(f"message {message.message_id} is not scored")
        t, p, n = message.timestamp, message.score.p, message.score.n
        st = self._states.get(message.author)
        if st is None:
            st = self._states[message.author] = _AuthorState()
        if st.last is not None and t < st.last:
            raise ReorderError(f"{message.author}: event at {t} after {st.last}")
        st.last = t
        st.window.append((t, p, n))
        st.wp += p
        st.wn += n
        st.count += 1
        st.tp += p
        st.tn += n
        while st.window[0][0] < t - self._span:
            _, op, on = st.window.popleft()
            st.wp -= op
            st.wn -= on
        k = len(st.window)
        P_u, N_u = st.wp / k, st.wn / k
        label = predict_one(P_u, N_u, self.model.mode, self.model.theta,
                            st.tp / st.count, st.tn / st.count)
        post = self.model.posterior
        return Alert(message.author, t, P_u, N_u, label,
                     post["P_u"].estimate_for(P_u) if "P_u" in post else None,
                     post["N_u"].estimate_for(N_u) if "N_u" in post else None)

    def run(self, messages):
        for m in messages:
            yield self.process(m)

    def state_dict(self):
        return {"lookback_days": self.lookback_days,
                "authors": {a: s.to_dict() for a, s in sorted(self._states.items())}}

    def load_state_dict(self, d):
        if float(d.get("lookback_days", self.lookback_days)) != float(self.lookback_days):
            raise ContractError("saved state was built with a different lookback window")
        self._states = {a: _AuthorState.from_dict(s) for a, s in d["authors"].items()}

    def save_state(self, path):
        Path(path).write_text(json.dumps(self.state_dict()), encoding="utf-8")

    def load_state(self, path):
        self.load_state_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def stream_predict(messages, model, state=None):
    """Generator of alerts; ``state`` is an optional :class:`StreamPredictor`
    to continue from."""
    predictor = state if state is not None else StreamPredictor(model)
    yield from predictor.run(messages)
