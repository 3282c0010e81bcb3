import csv
import json
import re
import shutil

import pytest

from emochurn import activity, churn, discussions
from emochurn.cli import main
from emochurn.errors import ConfigError, StageError
from emochurn.pipeline import (ARTIFACTS, SUMMARY_SECTIONS, IncompleteBundleError, PipelineConfig,
                               ReportBundle, emit_report, fmt, load_config, run_pipeline)

SYNTH = {"n_contributors": 80, "churn": {"positive_prob": 0.3}}


@pytest.fixture
def synth_input(tmp_path):
    p = tmp_path / "synth.json"
    p.write_text(json.dumps(SYNTH))
    return p


def _run(cfg, inputs, out):
    cfg.input_format = "synth"
    return run_pipeline(cfg, [str(p) for p in inputs], out)


def test_defaults_match_literals():
    c = PipelineConfig()
    assert (c.theta_absolute, c.theta_deviation) == (1.9, 0.8)
    assert (c.moving_average_days, c.inactivity_days, c.lookback_days) == (30, 30, 5)
    assert (c.alpha, c.bins, c.bandwidth, c.reps, c.min_messages) == (0.05, 5, 0.35, 20, 20)
    assert (churn.THETA_ABSOLUTE, churn.THETA_DEVIATION, churn.LOOKBACK_DAYS, churn.BANDWIDTH) == (1.9, 0.8, 5, 0.35)
    assert (activity.INACTIVITY_DAYS, discussions.MOVING_AVERAGE_DAYS, churn.BOOTSTRAP_REPS) == (30, 30, 20)
    assert c.effective_mode == "absolute" and c.theta == 1.9
    ml = PipelineConfig(channel="ml")
    assert ml.effective_mode == "deviation" and ml.theta == 0.8


@pytest.mark.parametrize("bad", [dict(alpha=1.0), dict(lookback_days=0), dict(channel="irc"), dict(bins=1),
                                 dict(mode="loud"), dict(periods="p.json", split_author="x")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        PipelineConfig(**bad)


def test_config_precedence(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text("[pipeline]\nalpha = 0.01\nbins = 7\nreps = 5\n")
    c = load_config(f, {"bins": 4, "reps": None})
    assert (c.alpha, c.bins, c.reps, c.bandwidth) == (0.01, 4, 5, 0.35)
    j = tmp_path / "cfg.json"
    j.write_text('{"seed": 3}')
    assert load_config(j).seed == 3
    j.write_text('{"sed": 3}')
    with pytest.raises(ConfigError):
        load_config(j)


def test_pipeline_artifacts_reproducible(tmp_path, synth_input):
    a = _run(PipelineConfig(), [synth_input], tmp_path / "a")
    b = _run(PipelineConfig(), [synth_input], tmp_path / "b")
    assert set(a.manifest["artifacts"]) == set(ARTIFACTS.values())
    assert len(a.manifest["artifacts"]) == 8
    assert a.manifest == b.manifest
    assert [s["stage"] for s in a.manifest["artifacts"].values()]


def test_pipeline_missing_lexicon(tmp_path, synth_input):
    cfg = PipelineConfig(lexicon_dir=str(tmp_path / "nope"))
    with pytest.raises(StageError) as e:
        _run(cfg, [synth_input], tmp_path / "out")
    assert e.value.stage == "score"
    assert set(e.value.manifest["artifacts"]) == {"corpus.jsonl"}
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["failed_stage"] == "score"


def test_report_sections_and_csv_round_trip(tmp_path, synth_input):
    bundle = _run(PipelineConfig(), [synth_input], tmp_path / "b")
    summary = emit_report(bundle).read_text()
    heads = re.findall(r"^## (.+)$", summary, re.M)
    assert heads == list(SUMMARY_SECTIONS)
    for section in SUMMARY_SECTIONS:
        path = tmp_path / "b" / (section.lower().replace(" ", "_") + ".csv")
        rows = list(csv.reader(path.open()))
        for r in rows[1:]:
            assert "| " + " | ".join(r) + " |" in summary
    ev = bundle.report["evaluation"]["classes"]["INA"]
    rows = list(csv.DictReader((tmp_path / "b" / "predictor_precision_and_recall.csv").open()))
    ina = next(r for r in rows if r["class"] == "INA")
    assert float(ina["precision_mean"]) == pytest.approx(ev["precision_mean"], rel=1e-5)


def test_report_empty_classes(tmp_path, synth_input):
    bundle = _run(PipelineConfig(min_messages=10_000), [synth_input], tmp_path / "b")
    summary = emit_report(bundle).read_text()
    assert "no qualifying discussions" in summary
    assert "no partition configured" in summary


def test_report_incomplete_bundle(tmp_path, synth_input):
    _run(PipelineConfig(), [synth_input], tmp_path / "b")
    (tmp_path / "b" / "model.json").unlink()
    with pytest.raises(IncompleteBundleError) as e:
        emit_report(tmp_path / "b")
    assert e.value.missing == ["model.json"]
    assert main(["report", "--bundle", str(tmp_path / "b")]) == 3
    assert ReportBundle.load(tmp_path / "b").missing() == ["model.json"]


def test_fmt():
    assert (fmt(None), fmt(3), fmt(0.123456789), fmt(True)) == ("NA", "3", "0.123457", "True")


def test_cli_exit_codes(tmp_path, synth_input, capsys):
    out = tmp_path / "b"
    assert main(["run", "--in", str(synth_input), "--input-format", "synth", "--out-dir", str(out)]) == 0
    assert (out / "summary.md").is_file()
    assert main(["run", "--in", str(tmp_path / "missing.jsonl"), "--out-dir", str(out)]) == 2
    assert main(["run", "--in", str(synth_input), "--input-format", "synth", "--out-dir", str(tmp_path / "c"),
                 "--lexicon-dir", str(tmp_path / "nolex")]) == 3
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = [")
    assert main(["run", "--config", str(bad), "--in", str(synth_input), "--out-dir", str(out)]) == 2
    assert "completed artifacts: corpus.jsonl" in capsys.readouterr().err


def test_cli_run_flags_override_config(tmp_path, synth_input):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('input_format = "synth"\nreps = 3\nseed = 1\n')
    out = tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--in", str(synth_input), "--out-dir", str(out), "--reps", "4"]) == 0
    conf = json.loads((out / "manifest.json").read_text())["config"]
    assert (conf["reps"], conf["seed"], conf["input_format"]) == (4, 1, "synth")


def test_cli_stage_chain(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(SYNTH))
    p = lambda name: str(tmp_path / name)
    steps = [
        ["synth", "--config", str(cfg), "--seed", "2", "--out", p("c.jsonl")],
        ["score", "--corpus", p("c.jsonl"), "--out", p("s.jsonl")],
        ["classify", "--corpus", p("s.jsonl"), "--out", p("classes.csv"), "--ternary", p("t.csv")],
        ["timeseries", "--corpus", p("s.jsonl"), "--out", p("series.csv")],
        ["activity", "--corpus", p("s.jsonl"), "--out", p("i.jsonl"), "--hist", p("h.csv"), "--xmin", "1"],
        ["features", "--corpus", p("s.jsonl"), "--intervals", p("i.jsonl"), "--out", p("f.jsonl")],
        ["fit", "--features", p("f.jsonl"), "--out", p("m.json")],
        ["predict", "--features", p("f.jsonl"), "--out", p("pred.jsonl")],
        ["evaluate", "--preds", p("pred.jsonl"), "--truth", p("i.jsonl"), "--out", p("ev.json"), "--reps", "5"],
        ["watch", "--model", p("m.json"), "--in", p("s.jsonl"), "--out", p("alerts.jsonl"), "--state", p("st.json"), "--all"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    assert (tmp_path / "c.truth.jsonl").is_file() and (tmp_path / "h.json").is_file()
    ev = json.loads((tmp_path / "ev.json").read_text())
    assert ev["reps"] == 5 and set(ev["classes"]) == {"ACT", "INA"}
    preds = {(r["author"], r["start"]): r["label"] for r in map(json.loads, open(p("pred.jsonl")))}
    alerts = {(r["author"], r["ts"]): r["label"] for r in map(json.loads, open(p("alerts.jsonl")))}
    assert all(alerts[k] == v for k, v in preds.items())
    # replaying the same events on the saved state is out of order
    assert main(["watch", "--model", p("m.json"), "--in", p("s.jsonl"), "--out", p("alerts.jsonl"), "--state", p("st.json")]) == 2
    shutil.copy(p("pred.jsonl"), p("short.jsonl"))
    with open(p("short.jsonl"), "a") as fh:
        fh.write(json.dumps({"author": "ghost", "start": 1, "label": "ACT"}) + "\n")
    assert main(["evaluate", "--preds", p("short.jsonl"), "--truth", p("i.jsonl"), "--out", p("x.json")]) == 2


def test_cli_ingest_mbox(tmp_path):
    box = tmp_path / "a.mbox"
    box.write_bytes(b"From a Mon Jan  4 10:00:00 2010\nFrom: a@x.org\nDate: Mon, 4 Jan 2010 10:00:00 +0000\n"
                    b"Subject: hi\nMessage-ID: <1@x>\n\nhello great work\n")
    assert main(["ingest", "--format", "mbox", "--in", str(box), "--out", str(tmp_path / "c.jsonl")]) == 0
    rec = json.loads((tmp_path / "c.jsonl").read_text())
    assert rec["author"] == "a@x.org" and rec["chan"] == "ml"


def test_cli_stats(tmp_path, capsys):
    f = tmp_path / "a.json"
    f.write_text('{"successes": 1, "trials": 2}')
    assert main(["stats", "wilson", "--in", str(f)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lo"] == pytest.approx(0.0945, abs=5e-4)
    f.write_text('{"bogus": 1}')
    assert main(["stats", "wilson", "--in", str(f)]) == 2
