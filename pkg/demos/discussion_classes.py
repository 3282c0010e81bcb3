"""Collective emotion of discussions on a synthetic bug tracker.

Plants a known mix of discussion classes, then recovers it with the
three-test classifier. Run: python3 demos/discussion_classes.py
"""
import numpy as np

from emochurn.discussions import BaselineRatios, classify_corpus, compute_baseline, emotion_timeseries
from emochurn.synth import SynthConfig, generate_synthetic_corpus

mix = {"neutral": 0.3, "underemotional": 0.15, "positive": 0.15,
       "negative": 0.15, "bipolar": 0.1, "undetermined": 0.15}
cfg = SynthConfig(n_discussions=500, class_mixture=mix, discussion_size=(60, 120))
syn = generate_synthetic_corpus(cfg, seed=11)
print(f"{len(syn.corpus)} messages in {cfg.n_discussions} discussions")

# %% message-level baseline vs the configured one
emp = compute_baseline(syn.corpus)
print("empirical baseline  P=%.3f N=%.3f U=%.3f" % (emp.P, emp.N, emp.U))
print("configured baseline P=%.3f N=%.3f U=%.3f" % cfg.polarity_probs)

# %% classify against the configured baseline
table = classify_corpus(syn.corpus, BaselineRatios(*cfg.polarity_probs))
freq = table.frequencies()
print("\nclass            planted  recovered")
for k, v in mix.items():
    print(f"{k:16s} {v:7.2f}  {freq[k] / len(table):9.3f}")

# %% 30-day moving average of the emotion signal
series = emotion_timeseries(syn.corpus, 30)
s = np.array([pt.s for pt in series.points])
print(f"\n{len(s)} daily points, mean s(t) = {s.mean():+.3f}, range [{s.min():+.3f}, {s.max():+.3f}]")
