#!/usr/bin/env python3
"""Run the intrinsic evaluation harness at demo scale.

Covers all six experiments: replication histogram, last-layer noise sanity
check, top-K ablation (both methods), re-prediction tracking, angle-
restricted stability, and the wall-clock comparison. Reports land in
demo_out/ as JSON + CSV.
"""

from pathlib import Path

import numpy as np

import lipex

ds = lipex.make_synthetic_text_dataset(n_per_class=40, n_classes=3, vocab_size=140,
                                       words_per_doc=26, seed=7)
featurizer = lipex.build_featurizer(ds.train_records())
X, labels = lipex.featurize_records(ds.train_records(), featurizer)
model = lipex.train_reference(X, labels, class_labels=ds.class_labels,
                              epochs=12, seed=0)
instances = [raw for raw, _ in ds.eval_records()][:12]
cfg = lipex.FitConfig(learning_rate=0.25, n_perturbations=250, max_epochs=80)
out = Path("demo_out")
out.mkdir(exist_ok=True)

print("1/6 replication histogram")
rep = lipex.tv_replication(model, instances, featurizer, fit_config=cfg, seed=1)
rep.write(out / "tv.json", out / "tv.csv")
print(f"    median TV {rep.aggregates['median_tv']:.4f}")

print("2/6 noise sanity check")
rep = lipex.sanity_check(model, instances[:6], featurizer,
                         sigma_grid=[0.0, 0.1, 0.4, 1.2], trials=6,
                         fit_config=cfg, seed=2)
rep.write(out / "sanity.json", out / "sanity.csv")
print(f"    model drift {np.round(rep.aggregates['model_drift'], 3)}")
print(f"    surrogate   {np.round(rep.aggregates['lipex_drift'], 3)}")

print("3/6 ablation flip rate")
for method in ("lipex", "lime"):
    rep = lipex.ablation_flip_rate(model, instances, featurizer, method=method,
                                   ks=[1, 2, 3], fit_config=cfg,
                                   lime_perturbations=800, seed=3)
    rep.write(out / f"ablation_{method}.json", out / f"ablation_{method}.csv")
    rates = [rep.aggregates[f"flip_rate_k{k}"] for k in (1, 2, 3)]
    print(f"    {method}: flip rates {np.round(rates, 3)}")

print("4/6 re-prediction tracking")
rep = lipex.reprediction_tracking(model, instances, featurizer, ks=[1, 2, 3],
                                  fit_config=cfg, seed=4)
rep.write(out / "tracking.json", out / "tracking.csv")
print(f"    match rates {[rep.aggregates[f'match_rate_k{k}'] for k in (1, 2, 3)]}")

print("5/6 angle-restricted stability")
rep = lipex.jaccard_stability(model, instances, featurizer,
                              deltas=[np.pi / 8, np.pi / 4, np.pi / 2], k=3,
                              fit_config=cfg, lime_perturbations=800, seed=5)
rep.write(out / "jaccard.json", out / "jaccard.csv")
print(f"    j_lipex {np.round(rep.aggregates['j_lipex'], 3)}")
print(f"    j_lime  {np.round(rep.aggregates['j_lime'], 3)}")

print("6/6 timing comparison")
rep = lipex.timing_comparison(model, instances[:6], featurizer,
                              fit_config=lipex.FitConfig(n_perturbations=400),
                              lime_perturbations=2000, seed=6)
rep.write(out / "timing.json", out / "timing.csv")
v = rep.volatile
print(f"    {v['lipex_mean_seconds'] * 1000:.0f} ms vs "
      f"{v['lime_mean_seconds'] * 1000:.0f} ms per instance "
      f"({rep.aggregates['lipex_calls_per_instance']:.0f} vs "
      f"{rep.aggregates['lime_calls_per_instance']:.0f} inference calls)")

print()
print("reports in demo_out/")
