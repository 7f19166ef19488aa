"""The explanation-matrix fit.

The surrogate for one instance is ``z -> softmax(W z)`` over the selected
Boolean feature space, and W minimizes the similarity-weighted empirical
squared-Hellinger risk against the cached black-box outputs,

    L(W) = (1/n) * sum_y  pi(y) * H^2( softmax(W select(y)), h(T(y)) )
           + (penalty/2) * ||W||_F^2,

by plain minibatch gradient descent from W = 0.  Writing the squared
Hellinger through the Bhattacharyya coefficient, H^2(p, q) = 1 - sum_c
sqrt(p_c q_c), gives the analytic gradient per sample

    dL/d(logits) = (pi/2) * ( p * sum_c sqrt(p_c q_c) - sqrt(p * q) ),

where only the surrogate side is differentiated (the black-box outputs are
constants).  The regularization penalty enters the loss exactly as written
above, i.e. it is not rescaled by the perturbation count, so its effective
strength grows as the perturbation budget shrinks.

Distances other than the squared Hellinger can be evaluated through
``loss`` (``divergence=...``) for diagnostics, but the descent itself
implements the Hellinger gradient only.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .distributions import ClassDistribution, softmax_rows, squared_hellinger_rows
from .errors import (
    DimensionError,
    FeatureRangeError,
    FitDivergenceError,
    InvalidInputError,
)


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of the explanation fit."""

    learning_rate: float = 0.01
    l2_penalty: float = 0.001
    batch_size: int = 128
    n_perturbations: int = 1000
    max_epochs: int = 200
    tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise InvalidInputError("l2_penalty must be non-negative")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "l2_penalty": self.l2_penalty,
            "batch_size": self.batch_size,
            "n_perturbations": self.n_perturbations,
            "max_epochs": self.max_epochs,
            "tol": self.tol,
            "seed": self.seed,
        }


class ExplanationMatrix:
    """A fitted C x f_x explanation: one row per class, one column per
    selected feature, plus fit diagnostics."""

    method = "lipex"

    def __init__(self, weights, class_labels, feature_names, diagnostics=None):
        W = np.asarray(weights, dtype=np.float64)
        if W.ndim != 2:
            raise DimensionError(f"weights must be 2-d, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise InvalidInputError("weights must be finite")
        self.class_labels = tuple(str(c) for c in class_labels)
        self.feature_names = tuple(str(f) for f in feature_names)
        if W.shape != (len(self.class_labels), len(self.feature_names)):
            raise DimensionError(
                f"weights shape {W.shape} does not match "
                f"{len(self.class_labels)} classes x {len(self.feature_names)} features"
            )
        self.weights = W.copy()
        self.weights.flags.writeable = False
        self.diagnostics = dict(diagnostics or {})

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def class_index(self, class_ref) -> int:
        if isinstance(class_ref, str):
            return self.class_labels.index(class_ref)
        return int(class_ref)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "classes": list(self.class_labels),
            "features": list(self.feature_names),
            "matrix": [float(v) for v in self.weights.ravel()],  # row-major
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_csv(self, feature_subset=None) -> str:
        """Header = feature names, one row per class (label column first)."""
        names = list(feature_subset) if feature_subset is not None else list(self.feature_names)
        cols = [self.feature_names.index(n) for n in names]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class"] + names)
        for c, label in enumerate(self.class_labels):
            writer.writerow([label] + [repr(float(self.weights[c, j])) for j in cols])
        return buf.getvalue()

    @staticmethod
    def from_json(text: str) -> "ExplanationMatrix":
        doc = json.loads(text)
        C, F = len(doc["classes"]), len(doc["features"])
        W = np.asarray(doc["matrix"], dtype=np.float64).reshape(C, F)
        return ExplanationMatrix(W, doc["classes"], doc["features"], doc.get("diagnostics"))


def surrogate_probs(weights, reduced_rows) -> np.ndarray:
    """Row-wise surrogate distributions softmax(W z) for an (n, f_x) design."""
    W = np.asarray(weights, dtype=np.float64)
    Z = np.asarray(reduced_rows, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != W.shape[1]:
        raise DimensionError(
            f"reduced vectors of width {Z.shape[1]} for a {W.shape} matrix"
        )
    return softmax_rows(Z @ W.T)


def surrogate_predict(expl: ExplanationMatrix, reduced_bits) -> ClassDistribution:
    """Surrogate distribution for one reduced Boolean vector."""
    p = surrogate_probs(expl.weights, reduced_bits)[0]
    return ClassDistribution(p, expl.class_labels)


def _validate_training(Z, Q, pi):
    Z = np.asarray(Z, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise InvalidInputError("training set is empty")
    if Q.shape[0] != Z.shape[0] or pi.shape != (Z.shape[0],):
        raise DimensionError("training arrays are misaligned")
    return Z, Q, pi


def loss(weights, reduced_rows, target_probs, pi_weights, l2_penalty=0.0,
         divergence=None) -> float:
    """Similarity-weighted empirical divergence plus Frobenius penalty.

    ``divergence`` defaults to the squared Hellinger; any row-wise callable
    ``(P, Q) -> (n,)`` may be substituted for evaluation purposes.
    """
    Z, Q, pi = _validate_training(reduced_rows, target_probs, pi_weights)
    W = np.asarray(weights, dtype=np.float64)
    P = surrogate_probs(W, Z)
    div = divergence if divergence is not None else squared_hellinger_rows
    data = float(np.mean(pi * div(P, Q)))
    return data + 0.5 * l2_penalty * float(np.sum(W * W))


def loss_gradient(weights, reduced_rows, target_probs, pi_weights,
                  l2_penalty=0.0) -> np.ndarray:
    """Analytic gradient of :func:`loss` (squared-Hellinger divergence)."""
    Z, Q, pi = _validate_training(reduced_rows, target_probs, pi_weights)
    W = np.asarray(weights, dtype=np.float64)
    P = surrogate_probs(W, Z)
    root = np.sqrt(P * Q)
    bc = root.sum(axis=1)
    G = 0.5 * pi[:, None] * (P * bc[:, None] - root)
    return (G.T @ Z) / Z.shape[0] + l2_penalty * W


def fit(bundle, cfg: FitConfig = FitConfig()) -> ExplanationMatrix:
    """Fit the explanation matrix for a prepared instance bundle.

    W starts at zero and is updated by minibatch gradient descent until
    ``max_epochs`` or until the full-loss delta between consecutive epochs
    drops below ``tol``.  The run is deterministic given ``cfg.seed``; black
    boxes are never queried here (the bundle caches one output per
    perturbation).
    """
    Z = bundle.reduced_design().astype(np.float64)
    Q = np.asarray(bundle.model_probs, dtype=np.float64)
    pi = bundle.pi_vector()
    Z, Q, pi = _validate_training(Z, Q, pi)
    n, C = Q.shape
    W = np.zeros((C, Z.shape[1]))

    sqrtQ = np.sqrt(Q)

    def batch_gradient(Wc, Zb, sqrtQb, pib):
        # same math as loss_gradient, without re-validating per batch
        U = Zb @ Wc.T
        E = np.exp(U - U.max(axis=1, keepdims=True))
        P = E / E.sum(axis=1, keepdims=True)
        root = np.sqrt(P) * sqrtQb
        bc = root.sum(axis=1)
        G = 0.5 * pib[:, None] * (P * bc[:, None] - root)
        return (G.T @ Zb) / Zb.shape[0] + cfg.l2_penalty * Wc

    history = [loss(W, Z, Q, pi, cfg.l2_penalty)]
    rng = np.random.default_rng(cfg.seed)
    epochs_run = 0
    converged = False
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        Zs, sqrtQs, pis = Z[order], sqrtQ[order], pi[order]
        # overflow on a diverging trajectory surfaces as the error below,
        # not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, cfg.batch_size):
                stop = start + cfg.batch_size
                W -= cfg.learning_rate * batch_gradient(
                    W, Zs[start:stop], sqrtQs[start:stop], pis[start:stop]
                )
            current = loss(W, Z, Q, pi, cfg.l2_penalty)
        if not np.isfinite(current):
            raise FitDivergenceError(epoch, cfg.learning_rate)
        history.append(current)
        epochs_run = epoch
        if abs(history[-2] - current) < cfg.tol:
            converged = True
            break

    diagnostics = {
        "initial_loss": history[0],
        "final_loss": history[-1],
        "epochs_run": epochs_run,
        "converged": converged,
        "n_samples": int(n),
        "loss_history": [float(v) for v in history],
        **cfg.to_dict(),
    }
    return ExplanationMatrix(W, bundle.class_labels, bundle.feature_names, diagnostics)


def top_k_row(values, names, k: int) -> list:
    """Names of the k largest-|value| entries; ties go to the smaller index."""
    v = np.asarray(values, dtype=np.float64)
    if k > v.shape[0]:
        raise FeatureRangeError(f"k={k} exceeds the {v.shape[0]} available features")
    if k < 0:
        raise FeatureRangeError("k must be non-negative")
    order = np.argsort(-np.abs(v), kind="stable")
    return [names[j] for j in order[:k]]


def top_k_features(expl: ExplanationMatrix, class_ref, k: int) -> list:
    """Top-k features of one class row, by absolute weight."""
    c = expl.class_index(class_ref)
    return top_k_row(expl.weights[c], expl.feature_names, k)
