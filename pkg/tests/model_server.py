#!/usr/bin/env python3
"""Line-delimited JSON model server used by the subprocess-adapter tests.

Loads a model file and answers the stdio protocol:

    {"op": "info"}                                   -> classes + input_dim
    {"id": N, "op": "predict", "instances": [...]}   -> {"id": N, "probs": [...]}

Failure modes for protocol tests are selected by a second argument:
``garbage`` emits a non-JSON line, ``bad-id`` echoes a wrong id, ``die``
exits after the handshake.
"""

import json
import sys


def main():
    model_path = sys.argv[1]
    mode = sys.argv[2] if len(sys.argv) > 2 else "ok"

    from lipex.models import load_model

    model, _ = load_model(model_path)
    for line in sys.stdin:
        req = json.loads(line)
        if req.get("op") == "info":
            print(json.dumps({
                "classes": list(model.class_labels),
                "input_dim": model.input_dim,
            }), flush=True)
            if mode == "die":
                sys.stderr.write("simulated crash after handshake\n")
                return 3
            continue
        if req.get("op") == "predict":
            if mode == "garbage":
                print("not json at all", flush=True)
                continue
            probs = model.predict_proba(req["instances"])
            resp_id = -1 if mode == "bad-id" else req["id"]
            print(json.dumps({"id": resp_id, "probs": probs.tolist()}), flush=True)
            continue
        print(json.dumps({"error": f"unknown op {req.get('op')!r}"}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
