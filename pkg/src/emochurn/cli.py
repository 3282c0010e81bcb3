"""Command-line entry point: ``emochurn SUBCOMMAND ...``.

Exit codes: 0 success, 2 input error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import activity, churn, discussions, stats
from .corpus import Channel, Message, parse_bugzilla_export, read_jsonl, write_jsonl
from .errors import (ChannelError, ConfigError, ContractError, EmochurnError, LexiconError,
                     ParseError, ReorderError, StageError)
from .fetch import fetch_bugzilla
from .pipeline import emit_report, ingest_paths, load_config, run_pipeline
from .sentiment import default_lexicon_dir, load_lexicon_dir, score_corpus, score_message
from .synth import generate_synthetic_corpus, load_config as load_synth_config

log = logging.getLogger("emochurn")

EXIT_OK, EXIT_INPUT, EXIT_STAGE = 0, 2, 3


def _write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _bug_range(text):
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("expected LOW..HIGH") from None


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(a):
    fmt = {"bugzilla-json": "bugzilla-json", "bugzilla-xml": "bugzilla-xml", "mbox": "mbox"}[a.format]
    corpus, errors = ingest_paths(a.inputs, fmt, jobs=a.jobs)
    write_jsonl(corpus, a.out)
    for e in errors:
        log.warning("%s: %s", e.severity, e.reason)
    print(f"{len(corpus)} messages, {len(errors)} record errors -> {a.out}")


def cmd_fetch(a):
    res = fetch_bugzilla(a.base_url, a.bugs, rate_limit=a.rps, max_retries=a.retries, timeout=a.timeout)
    Path(a.out).write_bytes(res.export)
    for e in res.errors:
        log.warning("%s", e)
    print(f"fetched {len(res.fetched)} bugs, {len(res.errors)} failures -> {a.out}")
    if a.parse:
        corpus = parse_bugzilla_export(res.export).corpus(Channel.BUG_TRACKER)
        write_jsonl(corpus, a.parse)


def cmd_synth(a):
    syn = generate_synthetic_corpus(load_synth_config(a.config), a.seed)
    truth = syn.write(a.out, a.truth)
    print(f"{len(syn.corpus)} messages -> {a.out} (truth: {truth})")


def _lexicon(path):
    return load_lexicon_dir(path or default_lexicon_dir())


def cmd_score(a):
    scored = score_corpus(read_jsonl(a.corpus), _lexicon(a.lexicon_dir))
    write_jsonl(scored, a.out)
    print(f"scored {len(scored)} messages -> {a.out}")


_STATS = {
    "prop1": lambda d: stats.one_proportion_test(**d).to_dict(),
    "prop2": lambda d: stats.two_proportion_test(**d).to_dict(),
    "ranksum": lambda d: stats.wilcoxon_rank_sum(**d).to_dict(),
    "wilson": lambda d: dict(zip(("lo", "hi"), stats.wilson_interval(**d))),
    "powerlaw": lambda d: dict(zip(("alpha", "n"), stats.powerlaw_mle(**d))),
    "kde": lambda d: (lambda k: {"grid": k.grid.tolist(), "values": k.values.tolist()})(
        stats.gaussian_kde(**d)),
    "hist": lambda d: (lambda h: {"bin_edges": h.bin_edges.tolist(), "counts": h.counts.tolist(),
                                  "densities": h.densities.tolist()})(stats.log_binned_histogram(**d)),
}


def cmd_stats(a):
    raw = Path(a.input).read_text(encoding="utf-8") if a.input else sys.stdin.read()
    try:
        args = json.loads(raw)
    except ValueError as exc:
        raise ConfigError(f"stats input is not JSON: {exc}") from exc
    if not isinstance(args, dict):
        raise ConfigError("stats input must be a JSON object of keyword arguments")
    try:
        out = _STATS[a.test](args)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for {a.test}: {exc}") from exc
    print(json.dumps(out, indent=2))


def cmd_classify(a):
    table = discussions.classify_corpus(read_jsonl(a.corpus), alpha=a.alpha, min_messages=a.min_messages)
    discussions.write_classes_csv(table, a.out)
    if a.ternary:
        discussions.write_ternary_csv(table, a.ternary)
    print(json.dumps(table.frequencies()))


def cmd_timeseries(a):
    series = discussions.emotion_timeseries(read_jsonl(a.corpus), a.window)
    discussions.write_series_csv(series, a.out)
    print(f"{len(series.points)} days -> {a.out}")


def cmd_compare(a):
    corpus = read_jsonl(a.corpus)
    if a.periods:
        part = discussions.load_periods(a.periods)
    else:
        part = discussions.AuthorPartition(a.split_author.lower())
    rows = discussions.compare_partitions(corpus, part, a.alpha)
    discussions.write_comparisons_csv(rows, a.out)
    for r in rows:
        print(f"{r.hypothesis()}\tp={r.result.p_value:.3g}\testimate={r.result.estimate:.3f}")


def cmd_activity(a):
    corpus = read_jsonl(a.corpus)
    intervals, one_time = activity.label_corpus(corpus, a.threshold)
    activity.write_intervals_jsonl(intervals, a.out)
    print(f"{len(intervals)} intervals, {one_time} one-time contributors discarded")
    if intervals:
        print(f"INA prior {activity.ina_prior(intervals):.4f}")
    if a.hist:
        fit = activity.max_interevent_analysis(activity.build_timelines(corpus), a.xmin, a.threshold)
        activity.write_histogram(fit, a.hist)
        print(json.dumps(fit.summary()))


def cmd_features(a):
    feats = churn.extract_features(read_jsonl(a.corpus), activity.read_intervals_jsonl(a.intervals),
                                   a.lookback, a.baseline)
    churn.write_features_jsonl(feats, a.out)
    print(f"{len(feats)} feature vectors -> {a.out}")


def cmd_fit(a):
    feats = churn.read_features_jsonl(a.features)
    model = churn.fit_model(feats, a.mode, a.theta, a.bandwidth, a.bins)
    model.save(a.out)
    print(f"prior_ina={model.prior_ina:.4f} -> {a.out}")


def cmd_predict(a):
    feats = churn.read_features_jsonl(a.features)
    theta = a.theta if a.theta is not None else churn._default_theta(a.mode)
    labels = [churn.predict_one(f.P_u, f.N_u, a.mode, theta, f.baseline_P, f.baseline_N) for f in feats]
    _write_jsonl(({"author": f.interval.author, "start": f.interval.start_time, "label": lab.value}
                  for f, lab in zip(feats, labels)), a.out)
    print(f"{sum(lab is activity.IntervalLabel.INA for lab in labels)} of {len(labels)} predicted INA")


def cmd_evaluate(a):
    preds = {(r["author"], int(r["start"])): r["label"] for r in _read_jsonl(a.preds)}
    truth = activity.read_intervals_jsonl(a.truth)
    missing = [iv for iv in truth if (iv.author, iv.start_time) not in preds]
    if missing or len(preds) != len(truth):
        raise ConfigError(f"predictions and truth do not align ({len(preds)} vs {len(truth)} intervals)")
    pred = [preds[(iv.author, iv.start_time)] for iv in truth]
    rep = churn.evaluate(pred, [iv.label for iv in truth], a.reps, a.seed)
    Path(a.out).write_text(json.dumps(rep.to_dict(), indent=2), encoding="utf-8")
    for name, c in rep.classes.items():
        print(f"{name}: precision {c.precision_mean:.3f} ± {c.precision_std:.3f}, "
              f"recall {c.recall_mean:.3f} ± {c.recall_std:.3f}")


def cmd_watch(a):
    model = churn.ChurnModel.load(a.model)
    predictor = churn.StreamPredictor(model)
    if a.state and Path(a.state).is_file():
        predictor.load_state(a.state)
    lexicon = None
    n_alerts = 0
    with open(a.inputs, encoding="utf-8") as src, open(a.out, "a", encoding="utf-8") as dst:
        for line in src:
            if not line.strip():
                continue
            msg = Message.from_record(json.loads(line))
            if msg.score is None:
                lexicon = lexicon or _lexicon(a.lexicon_dir)
                msg = msg.with_score(score_message(lexicon, msg.text))
            alert = predictor.process(msg)
            if alert.at_risk or a.all:
                dst.write(json.dumps(alert.to_record()) + "\n")
                n_alerts += 1
    if a.state:
        predictor.save_state(a.state)
    print(f"{n_alerts} alerts -> {a.out}")


_RUN_FLAGS = ("channel", "lexicon_dir", "theta_absolute", "theta_deviation", "mode", "alpha",
              "min_messages", "bins", "bandwidth", "reps", "seed", "baseline", "input_format",
              "lookback_days", "inactivity_days", "moving_average_days", "xmin", "periods",
              "split_author", "jobs")


def cmd_run(a):
    cfg = load_config(a.config, {k: getattr(a, k) for k in _RUN_FLAGS})
    missing = [p for p in a.inputs if not Path(p).exists()]
    if missing:
        raise ConfigError(f"input not found: {', '.join(missing)}")
    bundle = run_pipeline(cfg, a.inputs, a.out_dir)
    summary = emit_report(bundle)
    print(f"{len(bundle.manifest['artifacts'])} artifacts, summary -> {summary}")


def cmd_report(a):
    print(f"summary -> {emit_report(a.bundle)}")


# -- parser ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="emochurn", description="Emotion and contributor churn analysis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse Bugzilla exports or mbox archives into corpus JSONL")
    s.add_argument("--format", required=True, choices=("bugzilla-json", "bugzilla-xml", "mbox"))
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fetch", help="download bug comments over the Bugzilla REST API")
    s.add_argument("--base-url", required=True)
    s.add_argument("--bugs", type=_bug_range, required=True, help="LOW..HIGH inclusive")
    s.add_argument("--rps", type=float, default=1.0, help="requests per second")
    s.add_argument("--retries", type=int, default=3)
    s.add_argument("--timeout", type=float, default=30.0)
    s.add_argument("--out", default="export.json")
    s.add_argument("--parse", metavar="CORPUS", help="also write the parsed corpus JSONL here")
    s.set_defaults(func=cmd_fetch)

    s = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("score", help="score message polarity with a lexicon")
    s.add_argument("--corpus", required=True)
    s.add_argument("--lexicon-dir")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("stats", help="run one statistics primitive on JSON keyword arguments")
    s.add_argument("test", choices=sorted(_STATS))
    s.add_argument("--in", dest="input", help="JSON file (default: stdin)")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("classify", help="classify discussions by collective emotion")
    s.add_argument("--corpus", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--min-messages", type=int, default=20)
    s.add_argument("--out", required=True)
    s.add_argument("--ternary")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("timeseries", help="moving-average emotion series")
    s.add_argument("--corpus", required=True)
    s.add_argument("--window", type=int, default=discussions.MOVING_AVERAGE_DAYS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_timeseries)

    s = sub.add_parser("compare", help="proportion tests between two partitions")
    s.add_argument("--corpus", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--periods")
    g.add_argument("--split-author")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("activity", help="label intervals and fit the longest-gap distribution")
    s.add_argument("--corpus", required=True)
    s.add_argument("--threshold", type=float, default=activity.INACTIVITY_DAYS)
    s.add_argument("--xmin", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--hist")
    s.set_defaults(func=cmd_activity)

    s = sub.add_parser("features", help="lookback emotion features per interval")
    s.add_argument("--corpus", required=True, help="scored corpus")
    s.add_argument("--intervals", required=True)
    s.add_argument("--lookback", type=float, default=churn.LOOKBACK_DAYS)
    s.add_argument("--baseline", choices=churn.BASELINES, default="causal")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("fit", help="fit conditional densities and posterior bins")
    s.add_argument("--features", required=True)
    s.add_argument("--bandwidth", type=float, default=churn.BANDWIDTH)
    s.add_argument("--bins", type=int, default=churn.N_BINS)
    s.add_argument("--mode", choices=churn.MODES, default="absolute")
    s.add_argument("--theta", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="threshold predictor over feature vectors")
    s.add_argument("--mode", choices=churn.MODES, default="absolute")
    s.add_argument("--theta", type=float)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="bootstrap precision and recall")
    s.add_argument("--preds", required=True)
    s.add_argument("--truth", required=True, help="intervals JSONL")
    s.add_argument("--reps", type=int, default=churn.BOOTSTRAP_REPS)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("watch", help="streaming predictions over message events")
    s.add_argument("--model", required=True)
    s.add_argument("--state")
    s.add_argument("--in", dest="inputs", required=True, help="message JSONL")
    s.add_argument("--out", required=True, help="alerts JSONL (appended)")
    s.add_argument("--lexicon-dir", help="for events without p/n")
    s.add_argument("--all", action="store_true", help="write every prediction, not only INA")
    s.set_defaults(func=cmd_watch)

    s = sub.add_parser("run", help="run the whole pipeline")
    s.add_argument("--config")
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--channel", choices=[c.value for c in Channel])
    s.add_argument("--lexicon-dir")
    s.add_argument("--theta-absolute", type=float)
    s.add_argument("--theta-deviation", type=float)
    s.add_argument("--mode", choices=churn.MODES)
    s.add_argument("--alpha", type=float)
    s.add_argument("--min-messages", type=int)
    s.add_argument("--bins", type=int)
    s.add_argument("--bandwidth", type=float)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--baseline", choices=churn.BASELINES)
    s.add_argument("--input-format")
    s.add_argument("--lookback-days", type=float)
    s.add_argument("--inactivity-days", type=float)
    s.add_argument("--moving-average-days", type=int)
    s.add_argument("--xmin", type=float)
    s.add_argument("--periods")
    s.add_argument("--split-author")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="write summary.md and tables for a bundle directory")
    s.add_argument("--bundle", required=True)
    s.set_defaults(func=cmd_report)
    return p


_INPUT_ERRORS = (ConfigError, ParseError, LexiconError, ChannelError, ContractError, ReorderError,
                 FileNotFoundError, IsADirectoryError, json.JSONDecodeError, KeyError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        done = ", ".join(exc.manifest.get("artifacts", {})) or "none"
        print(f"completed artifacts: {done}", file=sys.stderr)
        return EXIT_INPUT if exc.stage == "ingest" and isinstance(exc.cause, _INPUT_ERRORS) else EXIT_STAGE
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EmochurnError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
