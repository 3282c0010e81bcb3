"""End-to-end pipeline, configuration and report emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import activity, churn, discussions
from .corpus import Channel, Corpus, corpus_summary, parse_bugzilla_export, parse_mbox, read_jsonl, write_jsonl
from .errors import ConfigError, EmochurnError, InsufficientDataError, StageError, UndefinedTestError
from .sentiment import Polarity, default_lexicon_dir, load_lexicon_dir, score_corpus
from .synth import SynthConfig, generate_synthetic_corpus

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("ingest", "score", "classify", "timeseries", "activity", "features", "fit", "evaluate")
ARTIFACTS = {
    "ingest": "corpus.jsonl",
    "score": "scored.jsonl",
    "classify": "classes.csv",
    "timeseries": "series.csv",
    "activity": "intervals.jsonl",
    "features": "features.jsonl",
    "fit": "model.json",
    "evaluate": "report.json",
}
INPUT_FORMATS = ("auto", "jsonl", "bugzilla-json", "bugzilla-xml", "mbox", "synth")
SUMMARY_SECTIONS = ("Corpus statistics", "Polarity ratios", "Discussion classes",
                    "Partition comparisons", "Activity fit", "Predictor precision and recall")


@dataclass
class PipelineConfig:
    channel: str = "bug"
    lexicon_dir: Optional[str] = None        # None: bundled demo lexicon
    theta_absolute: float = churn.THETA_ABSOLUTE
    theta_deviation: float = churn.THETA_DEVIATION
    mode: Optional[str] = None               # None: absolute for bug tracker, deviation for mailing list
    moving_average_days: int = discussions.MOVING_AVERAGE_DAYS
    inactivity_days: float = activity.INACTIVITY_DAYS
    lookback_days: float = churn.LOOKBACK_DAYS
    alpha: float = 0.05
    min_messages: int = 20
    bins: int = churn.N_BINS
    bandwidth: float = churn.BANDWIDTH
    reps: int = churn.BOOTSTRAP_REPS
    seed: int = 7
    baseline: str = "causal"
    input_format: str = "auto"
    xmin: Optional[float] = None
    periods: Optional[str] = None            # periods.json for the partition comparison
    split_author: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            Channel(self.channel)
        except ValueError:
            raise ConfigError(f"unknown channel {self.channel!r}") from None
        for name in ("moving_average_days", "inactivity_days", "lookback_days", "bandwidth"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.bins < 2 or self.reps < 1 or self.jobs < 1 or self.min_messages < 1:
            raise ConfigError("bins >= 2, reps >= 1, jobs >= 1 and min_messages >= 1 are required")
        if self.mode not in (None,) + churn.MODES:
            raise ConfigError(f"mode must be one of {churn.MODES}")
        if self.baseline not in churn.BASELINES:
            raise ConfigError(f"baseline must be one of {churn.BASELINES}")
        if self.input_format not in INPUT_FORMATS:
            raise ConfigError(f"input_format must be one of {INPUT_FORMATS}")
        if self.periods and self.split_author:
            raise ConfigError("periods and split_author are mutually exclusive")
        return self

    @property
    def effective_mode(self):
        if self.mode:
            return self.mode
        return "absolute" if Channel(self.channel) is Channel.BUG_TRACKER else "deviation"

    @property
    def theta(self):
        return self.theta_absolute if self.effective_mode == "absolute" else self.theta_deviation

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**mapping)


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object")
    return data.get("pipeline", data)


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Defaults, then the config file, then explicit overrides (None values ignored)."""
    merged = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig.from_mapping(merged)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _detect_format(path):
    name = str(path).lower()
    if name.endswith(".jsonl"):
        return "jsonl"
    if name.endswith(".xml"):
        return "bugzilla-xml"
    if name.endswith((".mbox", ".mbx")):
        return "mbox"
    if name.endswith(".json"):
        return "bugzilla-json"
    raise ConfigError(f"cannot infer the input format of {path}; set input_format")


def ingest_paths(paths, fmt="auto", channel=None, seed=0, jobs=1):
    """Parse every input and merge into one corpus. Returns ``(corpus, record_errors)``."""

    def one(path):
        f = _detect_format(path) if fmt == "auto" else fmt
        if f == "jsonl":
            return read_jsonl(path), []
        if f == "synth":
            cfg = SynthConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
            return generate_synthetic_corpus(cfg, seed).corpus, []
        with open(path, "rb") as fh:
            if f == "mbox":
                res = parse_mbox(fh)
                return res.corpus(Channel.MAILING_LIST), res.errors
            res = parse_bugzilla_export(fh, "xml" if f == "bugzilla-xml" else "json")
            return res.corpus(Channel.BUG_TRACKER), res.errors

    paths = [Path(p) for p in paths]
    if not paths:
        raise ConfigError("no inputs given")
    for p in paths:
        if not p.exists():
            raise ConfigError(f"input not found: {p}")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(one, paths))
    errors = [e for _, errs in parts for e in errs]
    corpus = parts[0][0] if len(parts) == 1 else Corpus.merge(*(c for c, _ in parts))
    if channel is not None and corpus.channel is not None and corpus.channel is not Channel(channel):
        raise ConfigError(f"inputs are {corpus.channel.value} data but channel is {channel}")
    return corpus, errors


@dataclass
class ReportBundle:
    out_dir: Path
    manifest: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    @classmethod
    def load(cls, out_dir):
        out_dir = Path(out_dir)
        manifest, report = {}, {}
        if (out_dir / "manifest.json").is_file():
            manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        if (out_dir / ARTIFACTS["evaluate"]).is_file():
            report = json.loads((out_dir / ARTIFACTS["evaluate"]).read_text(encoding="utf-8"))
        return cls(out_dir, manifest, report)

    def missing(self):
        listed = self.manifest.get("artifacts", {})
        return [name for name in ARTIFACTS.values()
                if name not in listed or not (self.out_dir / name).is_file()]


def _finite(x):
    return None if x is None or x != x else float(x)


def _partition(cfg):
    if cfg.periods:
        return discussions.load_periods(cfg.periods)
    if cfg.split_author:
        return discussions.AuthorPartition(cfg.split_author)
    return None


def run_pipeline(config: PipelineConfig, inputs, out_dir) -> ReportBundle:
    """Run every stage, writing one artifact per stage plus ``manifest.json``.

    On failure raises :class:`StageError` whose manifest lists the
    artifacts completed so far (also written to disk).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config.to_dict(), "inputs": {}, "artifacts": {}}
    report = {}
    state = {}

    def record(stage):
        name = ARTIFACTS[stage]
        manifest["artifacts"][name] = {"stage": stage, "sha256": sha256_file(out / name)}

    def write_manifest():
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")

    def ingest():
        for p in inputs:
            if Path(p).is_file():
                manifest["inputs"][Path(p).name] = sha256_file(p)
        corpus, errors = ingest_paths(inputs, config.input_format, config.channel, config.seed, config.jobs)
        write_jsonl(corpus, out / ARTIFACTS["ingest"])
        s = corpus_summary(corpus)
        report["corpus"] = {"channel": corpus.channel.value if corpus.channel else config.channel,
                            "messages": s.message_count, "discussions": s.discussion_count,
                            "contributors": s.contributor_count,
                            "window": list(s.window) if s.window else None,
                            "record_errors": len(errors)}
        state["corpus"] = corpus

    def score():
        lex_dir = config.lexicon_dir or default_lexicon_dir()
        lexicon = load_lexicon_dir(lex_dir)
        scored = score_corpus(state["corpus"], lexicon)
        write_jsonl(scored, out / ARTIFACTS["score"])
        counts = {p: 0 for p in Polarity}
        for m in scored:
            counts[m.score.polarity] += 1
        used = counts[Polarity.POSITIVE] + counts[Polarity.NEGATIVE] + counts[Polarity.NEUTRAL]
        report["polarity"] = {
            "counts": {p.value: c for p, c in counts.items()},
            "ratios": None if used == 0 else {
                "positive": counts[Polarity.POSITIVE] / used,
                "negative": counts[Polarity.NEGATIVE] / used,
                "neutral": counts[Polarity.NEUTRAL] / used,
            },
        }
        state["scored"] = scored

    def classify():
        scored = state["scored"]
        try:
            table = discussions.classify_corpus(scored, alpha=config.alpha, min_messages=config.min_messages)
        except UndefinedTestError as exc:
            table = None
            report["classes"] = {"error": str(exc)}
        path = out / ARTIFACTS["classify"]
        if table is None:
            path.write_text("discussion_id,class,reason\n", encoding="utf-8")
        else:
            discussions.write_classes_csv(table, path)
            discussions.write_ternary_csv(table, out / "ternary.csv")
            b = table.baseline
            report["classes"] = {"baseline": {"P": b.P, "N": b.N, "U": b.U},
                                 "frequencies": table.frequencies(), "classified": len(table),
                                 "skipped": len(table.skipped)}
        partition = _partition(config)
        rows = []
        if partition is not None:
            try:
                rows = discussions.compare_partitions(scored, partition, config.alpha)
            except UndefinedTestError as exc:
                report["comparisons"] = {"error": str(exc)}
        if rows:
            report["comparisons"] = {"labels": list(rows[0].labels), "rows": [
                {"polarity": r.polarity, "hypothesis": r.hypothesis(), "p_value": r.result.p_value,
                 "alternative": r.result.alternative, "estimate": r.result.estimate,
                 "prop_a": r.proportions[0], "prop_b": r.proportions[1]} for r in rows]}
        report.setdefault("comparisons", None)

    def timeseries():
        series = discussions.emotion_timeseries(state["scored"], config.moving_average_days)
        discussions.write_series_csv(series, out / ARTIFACTS["timeseries"])

    def activity_stage():
        corpus = state["scored"]
        intervals, one_time = activity.label_corpus(corpus, config.inactivity_days)
        activity.write_intervals_jsonl(intervals, out / ARTIFACTS["activity"])
        act = {"intervals": len(intervals), "one_time_contributors": one_time,
               "prior_ina": activity.ina_prior(intervals) if intervals else None}
        try:
            fit = activity.max_interevent_analysis(activity.build_timelines(corpus), config.xmin,
                                                   config.inactivity_days)
            activity.write_histogram(fit, out / "hist.csv", out / "hist.json")
            act["fit"] = fit.summary()
        except InsufficientDataError as exc:
            act["fit"] = {"error": str(exc)}
        report["activity"] = act
        state["intervals"] = intervals

    def features():
        feats = churn.extract_features(state["scored"], state["intervals"], config.lookback_days,
                                       config.baseline)
        churn.write_features_jsonl(feats, out / ARTIFACTS["features"])
        state["features"] = feats

    def fit():
        feats = state["features"]
        model = churn.fit_model(feats, config.effective_mode, config.theta, config.bandwidth,
                                config.bins, config.lookback_days)
        model.save(out / ARTIFACTS["fit"])
        tests = churn.wilcoxon_conditionals(feats)
        report["model"] = {"mode": model.mode, "theta": model.theta, "prior_ina": model.prior_ina,
                           "wilcoxon": {k: v.to_dict() for k, v in tests.items()},
                           "posterior": {k: v.to_dict() for k, v in model.posterior.items()}}
        state["model"] = model

    def evaluate():
        feats = state["features"]
        pred = churn.predict(feats, state["model"])
        rep = churn.evaluate(pred, [f.label for f in feats], config.reps, config.seed)
        report["evaluation"] = rep.to_dict()
        (out / ARTIFACTS["evaluate"]).write_text(
            json.dumps(_clean(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    steps = dict(zip(STAGES, (ingest, score, classify, timeseries, activity_stage, features, fit, evaluate)))
    for stage in STAGES:
        log.info("stage %s", stage)
        try:
            steps[stage]()
        except Exception as exc:
            manifest["failed_stage"] = stage
            write_manifest()
            raise StageError(stage, exc, manifest) from exc
        record(stage)
    write_manifest()
    return ReportBundle(out, manifest, _clean(report))


def _clean(obj):
    """JSON-safe copy: NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj


class IncompleteBundleError(EmochurnError):
    def __init__(self, missing):
        super().__init__("bundle is missing artifacts: " + ", ".join(missing))
        self.missing = missing


def fmt(x):
    """Number formatting shared by the summary and the machine tables."""
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    return f"{x:.6g}"


def _report_tables(rep):
    """Ordered ``{section: (columns, rows)}`` built from ``report.json`` content."""
    tables = {}
    c = rep.get("corpus") or {}
    tables["Corpus statistics"] = (["channel", "messages", "discussions", "contributors"],
                                   [[c.get("channel"), c.get("messages"), c.get("discussions"),
                                     c.get("contributors")]])
    pol = (rep.get("polarity") or {}).get("ratios")
    tables["Polarity ratios"] = (["positive", "negative", "neutral"],
                                 [[pol["positive"], pol["negative"], pol["neutral"]]] if pol else [])
    cl = rep.get("classes") or {}
    freq = cl.get("frequencies") or {}
    total = sum(freq.values())
    tables["Discussion classes"] = (["class", "count", "fraction"],
                                    [[k, v, v / total] for k, v in freq.items()] if total else [])
    comp = rep.get("comparisons") or {}
    tables["Partition comparisons"] = (["polarity", "hypothesis", "p_value", "estimate"],
                                       [[r["polarity"], r["hypothesis"], r["p_value"], r["estimate"]]
                                        for r in comp.get("rows", [])])
    act = rep.get("activity") or {}
    fit = act.get("fit") or {}
    rows = []
    if "alpha" in fit:
        rows = [[act.get("intervals"), act.get("prior_ina"), fit["alpha"], fit["boundary"],
                 fit["boundary_detected"]]]
    tables["Activity fit"] = (["intervals", "prior_ina", "alpha", "boundary_days", "boundary_detected"], rows)
    ev = (rep.get("evaluation") or {}).get("classes") or {}
    tables["Predictor precision and recall"] = (
        ["class", "prior", "precision_mean", "precision_std", "recall_mean", "recall_std"],
        [[k, v["prior"], v["precision_mean"], v["precision_std"], v["recall_mean"], v["recall_std"]]
         for k, v in sorted(ev.items())])
    return tables


_EMPTY_NOTE = {
    "Discussion classes": "no qualifying discussions",
    "Partition comparisons": "no partition configured",
    "Activity fit": "not enough contributors for a fit",
    "Polarity ratios": "no usable messages",
    "Predictor precision and recall": "no evaluation",
}


def _slug(section):
    return section.lower().replace(" ", "_")


def emit_report(bundle) -> Path:
    """Write ``summary.md`` and one CSV per summary section into the bundle dir."""
    if not isinstance(bundle, ReportBundle):
        bundle = ReportBundle.load(bundle)
    missing = bundle.missing()
    if missing:
        raise IncompleteBundleError(missing)
    out = bundle.out_dir
    tables = _report_tables(bundle.report)
    lines = ["# Emotion and churn analysis summary", ""]
    for section in SUMMARY_SECTIONS:
        cols, rows = tables[section]
        lines += [f"## {section}", ""]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
        (out / f"{_slug(section)}.csv").write_text(buf.getvalue(), encoding="utf-8")
        if not rows:
            lines += [f"_{_EMPTY_NOTE.get(section, 'no data')}_", ""]
            continue
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "---|" * len(cols))
        for r in rows:
            lines.append("| " + " | ".join(fmt(v) if not isinstance(v, str) else v for v in r) + " |")
        lines.append("")
    lines.append(f"Artifacts: {', '.join(sorted(bundle.manifest['artifacts']))}")
    path = out / "summary.md"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
