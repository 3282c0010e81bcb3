"""Inactivity prediction from recent negativity.

Synthetic contributors go quiet for a month or more exactly when their
mean negativity over the last five days exceeds 1.9. With clean labels
the threshold predictor is perfect; label noise erodes it.
"""
from emochurn.activity import label_corpus
from emochurn.churn import evaluate, extract_features, fit_model, predict, sweep_thresholds
from emochurn.synth import ChurnPlan, SynthConfig, generate_synthetic_corpus

for noise in (0.0, 0.1, 0.3):
    syn = generate_synthetic_corpus(SynthConfig(n_contributors=400, churn=ChurnPlan(label_noise=noise)), seed=2)
    intervals, _ = label_corpus(syn.corpus)
    feats = extract_features(syn.corpus, intervals)
    model = fit_model(feats, mode="absolute", theta=1.9)
    rep = evaluate(predict(feats, model), [f.label for f in feats], reps=20, seed=2)
    ina = rep.classes["INA"]
    print(f"noise {noise:.1f}: prior {model.prior_ina:.3f}  "
          f"INA precision {ina.precision_mean:.3f}±{ina.precision_std:.3f}  "
          f"recall {ina.recall_mean:.3f}±{ina.recall_std:.3f}")

# %% posterior P(INA | N_u) per bin, last (noisiest) corpus
nb = model.posterior["N_u"]
print("\nN_u bin           n     P(INA)   95% CI")
for i in range(len(nb.counts)):
    lo, hi = nb.edges[i], nb.edges[i + 1]
    if nb.supported[i]:
        print(f"[{lo:+.1f}, {hi:+.1f})  {nb.counts[i]:6d}   {nb.estimates[i]:.3f}   [{nb.ci_lo[i]:.3f}, {nb.ci_hi[i]:.3f}]")
    else:
        print(f"[{lo:+.1f}, {hi:+.1f})  {0:6d}   unsupported")

# %% where would another threshold land?
for row in sweep_thresholds(feats, [1.5, 1.9, 2.5, 3.0]):
    print("theta {theta:.1f}: precision {precision:.3f} recall {recall:.3f}".format(**row))
