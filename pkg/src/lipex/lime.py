"""Per-class penalized linear regression baseline over the same Boolean
perturbation space and the same selected features as the matrix fit.

Each class row is an independent weighted ridge regression of that class's
probability against the reduced Boolean design, with exponential-kernel
sample weights exp(-dist^2 / width^2) where dist is the cosine distance of
the perturbation from the all-ones vector.  Sample weights are normalized
to unit mean before solving, so rescaling all of them leaves the fit
unchanged.  The intercept is included and never penalized.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError, SingularityError
from .explainer import top_k_row
from .perturbation import materialize_batch, sample_perturbations, restrict_by_angle
from .seeding import child_seed
from .selection import select_rows

#: Perturbation budgets of the reference implementation this baseline follows.
TEXT_PERTURBATIONS = 5000
IMAGE_PERTURBATIONS = 1000


def default_budget(modality: str) -> int:
    return TEXT_PERTURBATIONS if modality == "text" else IMAGE_PERTURBATIONS


def default_kernel_width(n_features: int) -> float:
    return 0.25 * float(np.sqrt(n_features))


class LimeExplanation:
    """C independent per-class fits assembled into a (C, f_x) weight matrix."""

    method = "lime"

    def __init__(self, weights, intercepts, class_labels, feature_names, config=None):
        W = np.asarray(weights, dtype=np.float64)
        b = np.asarray(intercepts, dtype=np.float64)
        self.class_labels = tuple(str(c) for c in class_labels)
        self.feature_names = tuple(str(f) for f in feature_names)
        if W.shape != (len(self.class_labels), len(self.feature_names)):
            raise DimensionError(f"weights shape {W.shape} is inconsistent")
        if b.shape != (len(self.class_labels),):
            raise DimensionError(f"intercepts shape {b.shape} is inconsistent")
        self.weights = W.copy()
        self.intercepts = b.copy()
        self.weights.flags.writeable = False
        self.intercepts.flags.writeable = False
        self.config = dict(config or {})

    def class_index(self, class_ref) -> int:
        if isinstance(class_ref, str):
            return self.class_labels.index(class_ref)
        return int(class_ref)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "classes": list(self.class_labels),
            "features": list(self.feature_names),
            "matrix": [float(v) for v in self.weights.ravel()],
            "intercepts": [float(v) for v in self.intercepts],
            "diagnostics": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_csv(self, feature_subset=None) -> str:
        from .explainer import ExplanationMatrix

        proxy = ExplanationMatrix(self.weights, self.class_labels, self.feature_names)
        return proxy.to_csv(feature_subset)


def fit_lime_class(X, y, sample_weights, ridge_penalty: float = 1.0):
    """Closed-form weighted ridge fit of one class's probabilities.

    Minimizes sum_i w_i (y_i - beta.x_i - b)^2 + penalty * ||beta||^2 after
    normalizing the weights to unit mean.  Returns (beta, intercept).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(sample_weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidInputError("need at least 2 rows to fit")
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise DimensionError("target/weight lengths do not match the design")
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidInputError("sample weights must be non-negative with positive mass")
    w = w / w.mean()
    x_bar = (w @ X) / w.sum()
    y_bar = float(w @ y) / w.sum()
    Xc = X - x_bar
    yc = y - y_bar
    XtWX = (Xc * w[:, None]).T @ Xc
    XtWy = (Xc * w[:, None]).T @ yc
    A = XtWX + ridge_penalty * np.eye(X.shape[1])
    try:
        beta = np.linalg.solve(A, XtWy)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(
            "normal matrix is singular; use a positive ridge penalty"
        ) from exc
    return beta, y_bar - float(x_bar @ beta)


@dataclass(frozen=True)
class LimeData:
    """The baseline's own perturbation sample with cached model outputs."""

    pset: object
    model_probs: np.ndarray
    seed: int

    def distances(self) -> np.ndarray:
        """Cosine distance of each perturbation from the all-ones vector."""
        return self.pset.pi_weights()

    def restrict(self, delta: float) -> "LimeData":
        angles = self.pset.angles()
        mask = angles <= delta
        return LimeData(
            pset=restrict_by_angle(self.pset, delta),
            model_probs=self.model_probs[mask],
            seed=self.seed,
        )


def build_lime_data(bundle, n_perturbations: int = None, seed: int = None) -> LimeData:
    """Sample the baseline's perturbations and query the model once each."""
    if n_perturbations is None:
        n_perturbations = default_budget(bundle.vocab.modality)
    if seed is None:
        seed = child_seed(bundle.seed, 1)
    pset = sample_perturbations(bundle.vocab, n_perturbations, seed)
    mats = materialize_batch(bundle.vocab, pset, bundle.featurizer)
    probs = bundle.model.predict_proba(np.asarray(mats, dtype=np.float64))
    return LimeData(pset=pset, model_probs=probs, seed=int(seed))


def fit_lime_from_data(bundle, data: LimeData, kernel_width: float = None,
                       ridge_penalty: float = 1.0) -> LimeExplanation:
    """Fit all class rows on an existing perturbation sample (shared
    feature set comes from the bundle)."""
    feats = bundle.feats
    if kernel_width is None:
        kernel_width = default_kernel_width(feats.size)
    X = select_rows(data.pset.bits_matrix(), feats).astype(np.float64)
    dists = data.distances()
    w = np.exp(-(dists ** 2) / kernel_width ** 2)
    C = len(bundle.class_labels)
    W = np.zeros((C, feats.size))
    b = np.zeros(C)
    for c in range(C):
        W[c], b[c] = fit_lime_class(X, data.model_probs[:, c], w, ridge_penalty)
    return LimeExplanation(
        W, b, bundle.class_labels, bundle.feature_names,
        config={
            "kernel_width": float(kernel_width),
            "ridge_penalty": float(ridge_penalty),
            "n_perturbations": data.pset.count,
            "seed": data.seed,
        },
    )


def fit_lime_all_classes(bundle, n_perturbations: int = None,
                         kernel_width: float = None, ridge_penalty: float = 1.0,
                         seed: int = None) -> LimeExplanation:
    """Sample, query, and fit: the baseline's full per-instance pipeline."""
    data = build_lime_data(bundle, n_perturbations, seed)
    return fit_lime_from_data(bundle, data, kernel_width, ridge_penalty)


def lime_top_k(expl: LimeExplanation, class_ref, k: int) -> list:
    """Top-k features of one class row, by absolute weight."""
    c = expl.class_index(class_ref)
    return top_k_row(expl.weights[c], expl.feature_names, k)
