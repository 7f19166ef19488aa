"""Shared fixtures: a small trained text model and segment-dataset plumbing."""

import json

import numpy as np
import pytest

from lipex import (
    SegmentBundle,
    build_featurizer,
    featurize_records,
    make_synthetic_text_dataset,
    train_reference,
)


@pytest.fixture(scope="session")
def small_text_world():
    """Corpus, featurizer, and a trained reference model shared by harness tests."""
    ds = make_synthetic_text_dataset(n_per_class=40, n_classes=3, vocab_size=120,
                                     words_per_doc=24, seed=1)
    feat = build_featurizer(ds.train_records())
    X, labels = featurize_records(ds.train_records(), feat)
    model = train_reference(X, labels, class_labels=ds.class_labels, epochs=12, seed=0)
    return ds, feat, model


def graded_segment_instance(class_idx, rng, n_segments=10, seg_dim=4,
                            intensities=(2.0, 1.4, 0.9), noise=0.5):
    """One synthetic segment-bundle instance with graded class-signature segments."""
    d = n_segments * seg_dim
    base = rng.normal(0.0, noise, size=d)
    for rank, seg in enumerate(range(3 * class_idx, 3 * class_idx + len(intensities))):
        base[seg * seg_dim:(seg + 1) * seg_dim] += intensities[rank]
    return SegmentBundle.from_dict({
        "base": base.tolist(),
        "shape": [d],
        "segments": [
            {"id": f"s{i}", "indices": list(range(i * seg_dim, (i + 1) * seg_dim))}
            for i in range(n_segments)
        ],
    })


def write_segment_dataset(dir_path, n_per_class=12, n_classes=3, seed=0):
    """Write a labeled segment-manifest directory; returns the class labels."""
    rng = np.random.default_rng(seed)
    dir_path.mkdir(parents=True, exist_ok=True)
    idx = 0
    for c in range(n_classes):
        for _ in range(n_per_class):
            bundle = graded_segment_instance(c, rng)
            doc = bundle.to_dict()
            doc["label"] = f"class{c}"
            (dir_path / f"inst{idx:03d}.json").write_text(json.dumps(doc))
            idx += 1
    return [f"class{c}" for c in range(n_classes)]
