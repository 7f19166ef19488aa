"""Black-box classifier abstraction and desk-scale reference backends.

Three backends share one contract: ``predict_proba`` maps an (n, d) batch to
an (n, C) row-stochastic matrix, deterministically.  The built-in backends
(multinomial logistic regression and a one-hidden-layer ReLU MLP) expose
their parameters, which enables the last-layer noise distortion used by the
sanity-check experiment; the subprocess backend wraps an external model
behind a line-delimited JSON protocol and supports prediction only.

Model files are self-describing JSON: architecture descriptor plus flat
row-major weight arrays, with the text featurizer vocabulary embedded when
the model was trained on text.
"""

import copy
import hashlib
import json
import shlex
import subprocess
import tempfile
import threading

import numpy as np

from .distributions import ClassDistribution, softmax_rows
from .errors import (
    BackendError,
    DimensionError,
    InvalidDatasetError,
    InvalidInputError,
    UnsupportedOperationError,
)

MODEL_FORMAT = "lipex-model"


class BlackBoxClassifier:
    """Opaque map from materialized instances to class distributions."""

    backend = "abstract"

    def __init__(self, class_labels, input_dim):
        self.class_labels = tuple(str(c) for c in class_labels)
        self.input_dim = int(input_dim)
        if len(self.class_labels) < 2:
            raise InvalidInputError("a classifier needs at least 2 classes")

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def _check_batch(self, batch) -> np.ndarray:
        X = np.asarray(batch, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise DimensionError(
                f"batch shape {X.shape} does not match input_dim={self.input_dim}"
            )
        return X

    def predict_proba(self, batch) -> np.ndarray:
        raise NotImplementedError

    def predict(self, batch) -> list:
        """One validated ClassDistribution per row, batch order preserved."""
        P = self.predict_proba(batch)
        return [ClassDistribution(row, self.class_labels) for row in P]

    def fingerprint(self) -> str:
        """Stable content hash, recorded in experiment reports."""
        payload = json.dumps(self._describe(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def _describe(self) -> dict:
        raise NotImplementedError


class LinearSoftmaxModel(BlackBoxClassifier):
    """Multinomial logistic regression: softmax(W x + b)."""

    backend = "logistic-regression"

    def __init__(self, weights, bias, class_labels):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise DimensionError(
                f"weights {weights.shape} and bias {bias.shape} are inconsistent"
            )
        super().__init__(class_labels, weights.shape[1])
        if weights.shape[0] != self.n_classes:
            raise DimensionError("final layer width must equal the class count")
        self.weights = weights.copy()
        self.bias = bias.copy()
        self.weights.flags.writeable = False
        self.bias.flags.writeable = False

    def logits(self, batch) -> np.ndarray:
        X = self._check_batch(batch)
        return X @ self.weights.T + self.bias

    def predict_proba(self, batch) -> np.ndarray:
        return softmax_rows(self.logits(batch))

    def _describe(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "backend": self.backend,
            "classes": list(self.class_labels),
            "input_dim": self.input_dim,
            "layers": [
                {"shape": list(self.weights.shape),
                 "weights": self.weights.ravel().tolist(),
                 "bias": self.bias.tolist()},
            ],
        }


class ReluMlpModel(BlackBoxClassifier):
    """One-hidden-layer ReLU network: softmax(W2 relu(W1 x + b1) + b2).

    Piecewise linear before the softmax, so in a neighborhood of any
    differentiable point the logits act as a fixed affine map — the
    structural fact the explanation fit exploits.
    """

    backend = "relu-mlp"

    def __init__(self, w1, b1, w2, b2, class_labels):
        w1 = np.asarray(w1, dtype=np.float64)
        b1 = np.asarray(b1, dtype=np.float64)
        w2 = np.asarray(w2, dtype=np.float64)
        b2 = np.asarray(b2, dtype=np.float64)
        if w1.ndim != 2 or b1.shape != (w1.shape[0],):
            raise DimensionError("hidden layer shapes are inconsistent")
        if w2.shape != (b2.shape[0], w1.shape[0]):
            raise DimensionError("output layer shapes are inconsistent")
        super().__init__(class_labels, w1.shape[1])
        if w2.shape[0] != self.n_classes:
            raise DimensionError("final layer width must equal the class count")
        self.w1, self.b1, self.w2, self.b2 = w1.copy(), b1.copy(), w2.copy(), b2.copy()
        for a in (self.w1, self.b1, self.w2, self.b2):
            a.flags.writeable = False

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def hidden_preactivation(self, batch) -> np.ndarray:
        X = self._check_batch(batch)
        return X @ self.w1.T + self.b1

    def logits(self, batch) -> np.ndarray:
        H = np.maximum(self.hidden_preactivation(batch), 0.0)
        return H @ self.w2.T + self.b2

    def logit_jacobian(self, x) -> np.ndarray:
        """(C, d) Jacobian of the logits at a single point."""
        x = self._check_batch(x)[0]
        mask = (x @ self.w1.T + self.b1) > 0
        return self.w2 @ (self.w1 * mask[:, None])

    def predict_proba(self, batch) -> np.ndarray:
        return softmax_rows(self.logits(batch))

    def _describe(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "backend": self.backend,
            "classes": list(self.class_labels),
            "input_dim": self.input_dim,
            "activation": "relu",
            "layers": [
                {"shape": list(self.w1.shape),
                 "weights": self.w1.ravel().tolist(), "bias": self.b1.tolist()},
                {"shape": list(self.w2.shape),
                 "weights": self.w2.ravel().tolist(), "bias": self.b2.tolist()},
            ],
        }


def train_reference(X, labels, *, arch="logistic-regression", class_labels=None,
                    hidden_dim=32, learning_rate=0.5, epochs=30, batch_size=32,
                    seed=0) -> BlackBoxClassifier:
    """Train a reference classifier with plain minibatch gradient descent on
    the cross-entropy loss.  Deterministic given the seed; per-epoch
    full-data cross-entropy is recorded on ``model.training_history``.

    With zero epochs the returned model is the initialization, whose output
    layer is zero and therefore predicts the uniform distribution.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"feature matrix must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features must be finite")
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise InvalidDatasetError("one label per row required")
    if class_labels is None:
        class_labels = sorted(set(str(l) for l in labels))
    class_labels = [str(c) for c in class_labels]
    if len(set(str(l) for l in labels)) < 2:
        raise InvalidDatasetError("training data contains a single class")
    label_to_idx = {c: i for i, c in enumerate(class_labels)}
    try:
        y = np.array([label_to_idx[str(l)] for l in labels], dtype=np.intp)
    except KeyError as exc:
        raise InvalidDatasetError(f"label {exc} not in class_labels") from exc

    n, d = X.shape
    C = len(class_labels)
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    rng = np.random.default_rng(seed)

    if arch == "logistic-regression":
        params = {"W": np.zeros((C, d)), "b": np.zeros(C)}
    elif arch == "relu-mlp":
        # random hidden layer breaks symmetry; zero output layer keeps the
        # initialization at the uniform prediction
        params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(d), size=(hidden_dim, d)),
            "b1": np.zeros(hidden_dim),
            "W2": np.zeros((C, hidden_dim)),
            "b2": np.zeros(C),
        }
    else:
        raise InvalidInputError(f"unknown architecture {arch!r}")

    def forward_logits(params, Xb):
        if arch == "logistic-regression":
            return Xb @ params["W"].T + params["b"], None
        H = np.maximum(Xb @ params["W1"].T + params["b1"], 0.0)
        return H @ params["W2"].T + params["b2"], H

    def full_ce(params):
        logits, _ = forward_logits(params, X)
        P = softmax_rows(logits)
        return float(-np.mean(np.log(P[np.arange(n), y] + 1e-300)))

    history = [full_ce(params)]
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            Xb, Yb = X[idx], Y[idx]
            logits, H = forward_logits(params, Xb)
            Pb = softmax_rows(logits)
            dU = (Pb - Yb) / idx.size
            if arch == "logistic-regression":
                params["W"] -= learning_rate * (dU.T @ Xb)
                params["b"] -= learning_rate * dU.sum(axis=0)
            else:
                gW2 = dU.T @ H
                gb2 = dU.sum(axis=0)
                dH = (dU @ params["W2"]) * (H > 0)
                params["W1"] -= learning_rate * (dH.T @ Xb)
                params["b1"] -= learning_rate * dH.sum(axis=0)
                params["W2"] -= learning_rate * gW2
                params["b2"] -= learning_rate * gb2
        history.append(full_ce(params))

    if arch == "logistic-regression":
        model = LinearSoftmaxModel(params["W"], params["b"], class_labels)
    else:
        model = ReluMlpModel(params["W1"], params["b1"], params["W2"], params["b2"],
                             class_labels)
    model.training_history = history
    return model


class DistortionConfig:
    """Mean-zero Gaussian noise applied to the final linear layer's weights."""

    __slots__ = ("sigma", "seed", "target")

    def __init__(self, sigma: float, seed: int, target: str = "last-layer-weights"):
        if sigma < 0:
            raise InvalidInputError("sigma must be non-negative")
        if target != "last-layer-weights":
            raise InvalidInputError(f"unsupported distortion target {target!r}")
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.target = target


def distort_last_layer(model: BlackBoxClassifier, cfg: DistortionConfig) -> BlackBoxClassifier:
    """Copy of ``model`` with N(0, sigma^2) i.i.d. noise added to the final
    layer's weight matrix.  The original model is untouched; sigma = 0
    returns a bit-identical copy."""
    if isinstance(model, SubprocessModel):
        raise UnsupportedOperationError(
            "subprocess models expose no parameters to distort"
        )
    if cfg.sigma == 0.0:
        return copy.deepcopy(model)
    rng = np.random.default_rng(cfg.seed)
    if isinstance(model, LinearSoftmaxModel):
        noise = rng.normal(0.0, cfg.sigma, size=model.weights.shape)
        return LinearSoftmaxModel(model.weights + noise, model.bias, model.class_labels)
    if isinstance(model, ReluMlpModel):
        noise = rng.normal(0.0, cfg.sigma, size=model.w2.shape)
        return ReluMlpModel(model.w1, model.b1, model.w2 + noise, model.b2,
                            model.class_labels)
    raise UnsupportedOperationError(
        f"cannot distort a {type(model).__name__}"
    )


def save_model(model: BlackBoxClassifier, path, featurizer=None) -> None:
    """Write the self-describing JSON model file (optionally embedding the
    text featurizer vocabulary)."""
    doc = model._describe()
    doc["featurizer"] = featurizer.to_dict() if featurizer is not None else None
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Load a model file; returns (model, featurizer_or_None)."""
    from .data import Featurizer  # local import: data depends on perturbation only

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"{path} is not a {MODEL_FORMAT} file")
    classes = doc["classes"]

    def layer(i):
        spec = doc["layers"][i]
        shape = tuple(spec["shape"])
        W = np.asarray(spec["weights"], dtype=np.float64).reshape(shape)
        b = np.asarray(spec["bias"], dtype=np.float64)
        return W, b

    if doc["backend"] == "logistic-regression":
        W, b = layer(0)
        model = LinearSoftmaxModel(W, b, classes)
    elif doc["backend"] == "relu-mlp":
        w1, b1 = layer(0)
        w2, b2 = layer(1)
        model = ReluMlpModel(w1, b1, w2, b2, classes)
    else:
        raise InvalidInputError(f"unknown backend {doc['backend']!r} in {path}")
    feat = doc.get("featurizer")
    return model, (Featurizer.from_dict(feat) if feat else None)


class SubprocessModel(BlackBoxClassifier):
    """Adapter for an external model speaking line-delimited JSON on stdio.

    Handshake on startup::

        -> {"op": "info"}
        <- {"classes": ["a", "b"], "input_dim": 4}

    Prediction (ids are caller-chosen and echoed back)::

        -> {"id": 7, "op": "predict", "instances": [[...d reals...], ...]}
        <- {"id": 7, "probs": [[...C reals summing to 1...], ...]}

    Requests are serialized over the single channel; concurrent callers are
    safe but batches are processed one at a time.  Large batches are chunked
    to keep individual lines bounded.
    """

    backend = "subprocess"
    CHUNK_ROWS = 512

    def __init__(self, command, timeout: float = 60.0):
        self._cmd = shlex.split(command) if isinstance(command, str) else list(command)
        self._timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self._stderr = tempfile.TemporaryFile()
        try:
            self._proc = subprocess.Popen(
                self._cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self._stderr,
                text=True,
            )
        except OSError as exc:
            raise BackendError(f"could not start {self._cmd!r}: {exc}") from exc
        info = self._roundtrip({"op": "info"})
        try:
            classes = info["classes"]
            input_dim = int(info["input_dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(
                f"malformed info response: {info!r}", self._stderr_tail()
            ) from exc
        super().__init__(classes, input_dim)

    def _stderr_tail(self, limit: int = 4000) -> str:
        try:
            self._stderr.seek(0, 2)
            size = self._stderr.tell()
            self._stderr.seek(max(0, size - limit))
            return self._stderr.read().decode(errors="replace")
        except Exception:
            return "<stderr unavailable>"

    def _roundtrip(self, request: dict) -> dict:
        if self._proc.poll() is not None:
            raise BackendError(
                f"child exited with status {self._proc.returncode}",
                self._stderr_tail(),
            )
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"pipe failure: {exc}", self._stderr_tail()) from exc
        if not line:
            status = self._proc.poll()
            raise BackendError(
                f"child closed its stdout (exit status {status})",
                self._stderr_tail(),
            )
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendError(
                f"child wrote invalid JSON: {line[:200]!r}", self._stderr_tail()
            ) from exc

    def predict_proba(self, batch) -> np.ndarray:
        X = self._check_batch(batch)
        out = np.empty((X.shape[0], self.n_classes))
        with self._lock:
            for start in range(0, X.shape[0], self.CHUNK_ROWS):
                chunk = X[start:start + self.CHUNK_ROWS]
                self._next_id += 1
                req_id = self._next_id
                resp = self._roundtrip({
                    "id": req_id,
                    "op": "predict",
                    "instances": chunk.tolist(),
                })
                if resp.get("id") != req_id:
                    raise BackendError(
                        f"response id {resp.get('id')!r} does not match request {req_id}",
                        self._stderr_tail(),
                    )
                probs = np.asarray(resp.get("probs", None), dtype=np.float64)
                if probs.shape != (chunk.shape[0], self.n_classes):
                    raise BackendError(
                        f"probs shape {probs.shape} does not match "
                        f"({chunk.shape[0]}, {self.n_classes})",
                        self._stderr_tail(),
                    )
                if np.any(probs < -1e-9) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
                    raise BackendError(
                        "child returned rows that are not probability vectors",
                        self._stderr_tail(),
                    )
                out[start:start + chunk.shape[0]] = probs
        return out

    def _describe(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "backend": self.backend,
            "command": self._cmd,
            "classes": list(self.class_labels),
            "input_dim": self.input_dim,
        }

    def close(self) -> None:
        if getattr(self, "_proc", None) is None:
            return
        try:
            if self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=2.0)
                except subprocess.TimeoutExpired:
                    self._proc.terminate()
                    self._proc.wait(timeout=2.0)
        except Exception:
            pass
        finally:
            self._proc = None
            self._stderr.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
