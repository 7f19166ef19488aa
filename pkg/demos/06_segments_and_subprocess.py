#!/usr/bin/env python3
"""Segment-modality instances and the subprocess model adapter.

Builds a segment-mask bundle (the format precomputed segmenters feed in),
explains a segment instance, then serves the same model over the stdio
JSON protocol and explains through the adapter.
"""

import json
import sys
import textwrap
from pathlib import Path

import numpy as np

import lipex
from lipex import SegmentBundle, SubprocessModel

out = Path("demo_out")
out.mkdir(exist_ok=True)
rng = np.random.default_rng(0)

# --- a segment instance: 8 segments of 5 features each
n_seg, seg_dim = 8, 5
d = n_seg * seg_dim
base = rng.normal(0, 0.4, size=d)
base[0:10] += 2.0  # segments s0, s1 carry the class-0 signal
bundle_doc = {
    "base": base.tolist(),
    "shape": [d],
    "segments": [{"id": f"s{i}", "indices": list(range(i * seg_dim, (i + 1) * seg_dim))}
                 for i in range(n_seg)],
}
manifest = out / "segment_instance.json"
manifest.write_text(json.dumps(bundle_doc))
instance = SegmentBundle.load(manifest)
print(f"segment bundle: {n_seg} segments over {d} features")

W = rng.normal(size=(3, d)) * 0.3
W[0, 0:10] += 0.8
model = lipex.LinearSoftmaxModel(W, np.zeros(3), ["a", "b", "c"])
expl = lipex.explain_instance(model, instance,
                              cfg=lipex.FitConfig(learning_rate=0.25,
                                                  n_perturbations=400,
                                                  max_epochs=150))
pred = int(np.argmax(model.predict_proba(base[None, :])[0]))
print(f"predicted class: {expl.class_labels[pred]}")
print(f"top-3 segments: {lipex.top_k_features(expl, pred, 3)}")
print()

# --- the same model behind the wire protocol
model_file = out / "demo_model.json"
lipex.save_model(model, model_file)
server = out / "demo_server.py"
server.write_text(textwrap.dedent("""\
    import json, sys
    from lipex.models import load_model

    model, _ = load_model(sys.argv[1])
    for line in sys.stdin:
        req = json.loads(line)
        if req.get("op") == "info":
            print(json.dumps({"classes": list(model.class_labels),
                              "input_dim": model.input_dim}), flush=True)
        elif req.get("op") == "predict":
            probs = model.predict_proba(req["instances"]).tolist()
            print(json.dumps({"id": req["id"], "probs": probs}), flush=True)
"""))

with SubprocessModel([sys.executable, str(server), str(model_file)]) as remote:
    print(f"subprocess handshake: classes={remote.class_labels}, "
          f"input_dim={remote.input_dim}")
    remote_expl = lipex.explain_instance(
        remote, instance,
        cfg=lipex.FitConfig(learning_rate=0.25, n_perturbations=400, max_epochs=150))
    print(f"top-3 via subprocess: {lipex.top_k_features(remote_expl, pred, 3)}")
    same = np.allclose(remote_expl.weights, expl.weights)
    print(f"identical to in-process explanation: {same}")
