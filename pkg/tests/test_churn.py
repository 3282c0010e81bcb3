import numpy as np
import pytest

from conftest import corpus_of, msg
from emochurn.activity import IntervalLabel, LabeledInterval, label_corpus
from emochurn.churn import (ChurnModel, FeatureVector, StreamPredictor, conditional_densities, evaluate,
                            extract_features, fit_model, posterior_inactive, predict, predict_one,
                            read_features_jsonl, stream_predict, sweep_thresholds, wilcoxon_conditionals,
                            write_features_jsonl)
from emochurn.corpus import DAY
from emochurn.errors import ContractError, InsufficientDataError, ReorderError, UndefinedTestError
from emochurn.synth import ChurnPlan, SynthConfig, generate_synthetic_corpus

ACT, INA = IntervalLabel.ACT, IntervalLabel.INA


def fv(P, N, label, author="u", start=0, bP=None, bN=None):
    return FeatureVector(LabeledInterval(author, start, 40.0 if label is INA else 1.0, label), P, N, bP, bN)


def churn_corpus(n=60, seed=0, **plan):
    plan.setdefault("positive_prob", 0.3)
    return generate_synthetic_corpus(SynthConfig(n_contributors=n, churn=ChurnPlan(**plan)), seed)


def test_features_single_and_pair():
    c = corpus_of([msg("1", "a", 0, p=4, n=-2, days=True), msg("2", "a", 40, p=2, n=-1, days=True)])
    ivs, _ = label_corpus(c)
    (f,) = extract_features(c, ivs)
    assert (f.P_u, f.N_u, f.baseline_P, f.baseline_N) == (4, -2, 4, -2)
    c = corpus_of([msg("1", "a", 0, p=2, n=-1, days=True), msg("2", "a", 4.9, p=4, n=-3, days=True),
                   msg("3", "a", 50, p=1, n=-1, days=True)])
    ivs, _ = label_corpus(c)
    f = extract_features(c, ivs)[1]
    assert (f.P_u, f.N_u) == (3, -2)


def test_features_window_excludes_older():
    c = corpus_of([msg("1", "a", 0, p=5, n=-5, days=True), msg("2", "a", 5.01, p=1, n=-1, days=True),
                   msg("3", "a", 9, p=1, n=-1, days=True)])
    ivs, _ = label_corpus(c)
    f = extract_features(c, ivs)[1]
    assert (f.P_u, f.N_u) == (1, -1)
    assert (f.baseline_P, f.baseline_N) == (3, -3)
    g = extract_features(c, ivs, baseline="global")[1]
    assert g.baseline_P == pytest.approx(7 / 3)


def test_features_need_scores():
    c = corpus_of([msg("1", "a", 0), msg("2", "a", 1)])
    ivs, _ = label_corpus(c)
    with pytest.raises(ContractError):
        extract_features(c, ivs)


def test_density_symmetry_and_peak():
    vals = np.random.default_rng(1).uniform(-5, -1, 200)
    feats = [fv(2.0, v, ACT) for v in vals] + [fv(2.0, v, INA) for v in vals]
    d = conditional_densities(feats)
    assert np.max(np.abs(d[("N_u", "ACT")].values - d[("N_u", "INA")].values)) <= 1e-9
    peaked = conditional_densities([fv(2.0, -3.0, INA)] * 20 + [fv(2.0, -1.5, ACT)] * 20)[("N_u", "INA")]
    assert peaked.grid[np.argmax(peaked.values)] == pytest.approx(-3.0, abs=0.011)
    with pytest.raises(UndefinedTestError):
        conditional_densities([fv(2.0, -1.0, ACT)])


def test_density_bimodal():
    rng = np.random.default_rng(2)
    ina = np.concatenate([rng.normal(-1.8, 0.1, 500), rng.normal(-4.0, 0.1, 500)])
    d = conditional_densities([fv(2.0, v, INA) for v in ina] + [fv(2.0, -2.5, ACT)])[("N_u", "INA")]
    v, g = d.values, d.grid
    peaks = [g[i] for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
    assert len(peaks) == 2
    assert peaks[0] == pytest.approx(-4.0, abs=0.35) and peaks[1] == pytest.approx(-1.8, abs=0.35)


def test_wilcoxon_shift_and_null():
    rng = np.random.default_rng(3)
    base = rng.normal(-2.5, 0.5, 10_000)
    shifted = rng.normal(-3.0, 0.5, 10_000)
    feats = [fv(2.0, v, ACT) for v in base] + [fv(2.0, v, INA) for v in shifted]
    assert wilcoxon_conditionals(feats)["N_u"].p_value < 1e-15
    same = [fv(2.0, v, ACT) for v in base[:300]] + [fv(2.0, v, INA) for v in base[:300]]
    assert wilcoxon_conditionals(same)["N_u"].p_value == pytest.approx(1.0)


def _posterior_identity(post, prior):
    for b in post.values():
        s = b.supported
        total = np.sum(b.counts[s] * b.estimates[s]) / np.sum(b.counts[s])
        assert abs(total - prior) <= 1e-9


def test_posterior_total_probability_and_wilson():
    feats = [fv(1.5, -1.5, ACT)] * 8 + [fv(1.5, -2.3, INA), fv(1.5, -2.3, ACT)]
    post = posterior_inactive(feats)
    _posterior_identity(post, 0.1)
    nb = post["N_u"]
    i = nb.bin_of(-2.3)
    assert nb.estimates[i] == 0.5
    assert (nb.ci_lo[i], nb.ci_hi[i]) == (pytest.approx(0.0945, abs=5e-4), pytest.approx(0.9055, abs=5e-4))
    assert not nb.supported[nb.bin_of(-4.5)] and nb.estimate_for(-4.5) is None
    with pytest.raises(InsufficientDataError):
        posterior_inactive([])


def test_posterior_null_calibration():
    hits = total = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        lab = rng.random(3000) < 0.088
        feats = [fv(float(p), float(n), INA if l else ACT)
                 for p, n, l in zip(rng.uniform(1, 5, 3000), rng.uniform(-5, -1, 3000), lab)]
        prior = lab.mean()
        for b in posterior_inactive(feats).values():
            for i in np.flatnonzero(b.supported):
                total += 1
                hits += b.ci_lo[i] <= prior <= b.ci_hi[i]
    assert hits / total >= 0.9


def test_posterior_planted_rule():
    syn = churn_corpus(200, seed=4, threshold=1.9)
    ivs, _ = label_corpus(syn.corpus)
    nb = posterior_inactive(extract_features(syn.corpus, ivs))["N_u"]
    # edges -5,-4.2,-3.4,-2.6,-1.8,-1: only the last bin straddles 1.9
    assert nb.supported[:3].any()
    assert np.all(nb.estimates[:3][nb.supported[:3]] == 1.0)


@pytest.mark.parametrize("args,label", [
    ((1.0, -2.5, "absolute", 1.9), INA),
    ((1.5, -1.5, "absolute", 1.9), ACT),
    ((3.0, -1.0, "deviation", 0.8, 2.0, -1.0), INA),
    ((2.5, -1.5, "deviation", 0.8, 2.0, -1.0), ACT),
])
def test_predict_examples(args, label):
    assert predict_one(*args) is label


def test_predict_deviation_needs_baseline():
    with pytest.raises(ContractError):
        predict_one(2, -1, "deviation", 0.8)


def test_predict_monotone_in_negativity():
    for P in (1.0, 1.5, 2.5):
        labels = [predict_one(P, -n, "absolute", 1.9) for n in np.linspace(1, 5, 81)]
        first = labels.index(INA)
        assert all(l is INA for l in labels[first:])


def test_evaluate_identity_and_all_act():
    truth = [INA] * 88 + [ACT] * 912
    rep = evaluate(truth, truth)
    for k in ("ACT", "INA"):
        c = rep.classes[k]
        assert (c.precision_mean, c.recall_mean, c.precision_std, c.recall_std) == (1, 1, 0, 0)
    rep = evaluate([ACT] * 1000, truth, reps=1, bootstrap=False)
    assert rep.classes["ACT"].precision_mean == pytest.approx(0.912)
    assert rep.classes["INA"].recall_mean == 0
    assert rep.classes["INA"].precision_reps == 0
    with pytest.raises(ContractError):
        evaluate([ACT], truth)


def test_evaluate_matches_confusion_matrix():
    rng = np.random.default_rng(5)
    t = rng.random(500) < 0.2
    p = np.where(rng.random(500) < 0.7, t, ~t)
    tp, fp, fn = np.sum(p & t), np.sum(p & ~t), np.sum(~p & t)
    tn = np.sum(~p & ~t)
    rep = evaluate([INA if x else ACT for x in p], [INA if x else ACT for x in t], reps=1, bootstrap=False)
    assert rep.classes["INA"].precision_mean == tp / (tp + fp)
    assert rep.classes["INA"].recall_mean == tp / (tp + fn)
    assert rep.classes["ACT"].precision_mean == tn / (tn + fn)
    assert rep.classes["ACT"].recall_mean == tn / (tn + fp)


def test_evaluate_bootstrap_deterministic():
    truth = [INA, ACT, ACT, INA, ACT] * 40
    pred = [INA, ACT, INA, ACT, ACT] * 40
    a, b = evaluate(pred, truth, seed=3), evaluate(pred, truth, seed=3)
    assert a.to_dict() == b.to_dict()
    assert a.classes["INA"].precision_std > 0


def test_sweep_thresholds():
    feats = [fv(1.0, -1.0, ACT), fv(1.0, -2.0, INA), fv(1.0, -3.0, INA)]
    rows = sweep_thresholds(feats, [1.5, 2.5])
    assert rows[0]["recall"] == 1.0 and rows[1]["recall"] == 0.5


def test_fit_model_and_roundtrip(tmp_path):
    syn = churn_corpus()
    ivs, _ = label_corpus(syn.corpus)
    feats = extract_features(syn.corpus, ivs)
    write_features_jsonl(feats, tmp_path / "f.jsonl")
    assert read_features_jsonl(tmp_path / "f.jsonl") == feats
    m = fit_model(feats)
    assert (m.mode, m.theta) == ("absolute", 1.9)
    _posterior_identity(m.posterior, m.prior_ina)
    m.save(tmp_path / "m.json")
    back = ChurnModel.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
    assert predict(feats, back) == predict(feats, m)
    with pytest.raises(InsufficientDataError):
        fit_model([fv(1, -1, ACT)])
    assert fit_model(feats, mode="deviation").theta == 0.8


def _last_alerts(alerts):
    return {(a.author, a.timestamp): a.label for a in alerts}


def test_stream_matches_batch_with_restore(tmp_path):
    syn = churn_corpus(40, seed=6)
    ivs, _ = label_corpus(syn.corpus)
    feats = extract_features(syn.corpus, ivs)
    for mode in ("absolute", "deviation"):
        model = fit_model(feats, mode=mode)
        batch = {f.key: lab for f, lab in zip(feats, predict(feats, model))}
        msgs = list(syn.corpus.messages)
        cut = len(msgs) // 2
        sp = StreamPredictor(model)
        first = list(sp.run(msgs[:cut]))
        sp.save_state(tmp_path / "s.json")
        resumed = StreamPredictor(model)
        resumed.load_state(tmp_path / "s.json")
        alerts = _last_alerts(first + list(stream_predict(msgs[cut:], model, resumed)))
        assert {k: alerts[k] for k in batch} == batch
        straight = list(stream_predict(msgs, model))
        assert [a.to_record() for a in straight[cut:]] == [a.to_record() for a in stream_predict(msgs[cut:], model, _restored(model, msgs[:cut]))]


def _restored(model, prefix):
    sp = StreamPredictor(model)
    list(sp.run(prefix))
    back = StreamPredictor(model)
    back.load_state_dict(sp.state_dict())
    return back


def test_stream_alert_and_reorder():
    model = ChurnModel("absolute", 1.9)
    sp = StreamPredictor(model)
    a = sp.process(msg("1", "x", 10 * DAY, p=1, n=-1))
    b = sp.process(msg("2", "x", 11 * DAY, p=1, n=-4))
    assert a.label is ACT and b.label is INA and b.N_u == -2.5
    with pytest.raises(ReorderError):
        sp.process(msg("3", "x", 10 * DAY, p=1, n=-1))
    sp.process(msg("4", "y", DAY, p=1, n=-1))     # other contributors are independent
