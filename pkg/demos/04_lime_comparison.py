#!/usr/bin/env python3
"""Matrix explanation vs per-class weighted-ridge baseline, side by side.

Both methods share the instance's selected feature space; the baseline fits
one weight vector per class independently on its own (larger) perturbation
sample, kernel-weighted toward the instance.
"""

import numpy as np

from lipex import (
    FitConfig,
    build_featurizer,
    featurize_records,
    fit,
    fit_lime_all_classes,
    lime_top_k,
    make_synthetic_text_dataset,
    prepare_bundle,
    top_k_features,
    train_reference,
)

ds = make_synthetic_text_dataset(n_per_class=50, n_classes=3, vocab_size=140,
                                 words_per_doc=24, seed=7)
featurizer = build_featurizer(ds.train_records())
X, labels = featurize_records(ds.train_records(), featurizer)
model = train_reference(X, labels, class_labels=ds.class_labels, epochs=15, seed=0)

text = ds.eval_records()[2][0]
bundle = prepare_bundle(model, text, featurizer, n_perturbations=600, seed=3)
expl = fit(bundle, FitConfig(learning_rate=0.25, n_perturbations=600, max_epochs=250))
baseline = fit_lime_all_classes(bundle, n_perturbations=3000)

predicted = bundle.predicted_class()
k = min(5, bundle.feats.size)
a = top_k_features(expl, predicted, k)
b = lime_top_k(baseline, predicted, k)
overlap = set(a) & set(b)

print("instance:", text[:70], "...")
print(f"predicted class: {expl.class_labels[predicted]}")
print()
print(f"{'matrix top-' + str(k):24s}{'baseline top-' + str(k)}")
for x, y in zip(a, b):
    print(f"{x:24s}{y}")
print()
print(f"overlap {len(overlap)}/{k}, Jaccard {len(overlap) / len(set(a) | set(b)):.2f}")
print()
print("full matrix rows (one per class) vs baseline rows:")
for c, label in enumerate(expl.class_labels):
    print(f"  {label:8s} matrix   {np.round(expl.weights[c], 2)}")
    print(f"  {label:8s} baseline {np.round(baseline.weights[c], 2)}")
