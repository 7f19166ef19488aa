"""Greedy forward feature selection and the per-instance explanation space.

One class at a time, features are added greedily: at each step every
unselected candidate is scored by the training R^2 of an intercept-included
ridge regression on the already-selected columns plus the candidate, and the
best candidate wins (ties go to the smaller index).  The explanation space
of an instance is the union of the per-class top-k selections; each class
pass is independent, so a class may re-pick a feature another class already
chose — the union deduplicates.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTargetWarning, DimensionError, InvalidInputError


class _RidgeScorer:
    """Training-R^2 scorer for ridge fits on column subsets.

    Precomputes the centered Gram moments of (X, y) once, so scoring a
    subset costs one small dense solve regardless of n.  The intercept is
    always included and never penalized.
    """

    def __init__(self, X, y, penalty):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"design matrix must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionError(
                f"target length {y.shape} does not match {X.shape[0]} rows"
            )
        if X.shape[0] < 2:
            raise InvalidInputError("need at least 2 rows to fit")
        n = X.shape[0]
        self.penalty = float(penalty)
        self.col_mean = X.mean(axis=0)
        self.y_mean = float(y.mean())
        # centered moments: Xc^T Xc and Xc^T yc from the raw ones
        self.gram = X.T @ X - n * np.outer(self.col_mean, self.col_mean)
        self.xty = X.T @ y - n * self.col_mean * self.y_mean
        yc = y - self.y_mean
        self.sst = float(yc @ yc)
        self.n_features = X.shape[1]

    @property
    def degenerate(self) -> bool:
        return self.sst <= 0.0

    def r2(self, ids) -> float:
        ids = np.asarray(ids, dtype=np.intp)
        G = self.gram[np.ix_(ids, ids)] + self.penalty * np.eye(ids.size)
        b = self.xty[ids]
        beta = np.linalg.solve(G, b)
        # SSE = yc.yc - 2 b.beta + beta (Gc) beta, with Gc = G - penalty*I
        sse = self.sst - 2.0 * b @ beta + beta @ (G @ beta) - self.penalty * (beta @ beta)
        return 1.0 - sse / self.sst

    def r2_candidates(self, selected, candidates) -> np.ndarray:
        """R^2 of selected + [j] for every candidate j, via one batched solve."""
        t = len(selected)
        m = len(candidates)
        sel = np.asarray(selected, dtype=np.intp)
        cand = np.asarray(candidates, dtype=np.intp)
        A = np.empty((m, t + 1, t + 1))
        A[:, :t, :t] = self.gram[np.ix_(sel, sel)]
        A[:, :t, t] = self.gram[np.ix_(sel, cand)].T.reshape(m, t)
        A[:, t, :t] = A[:, :t, t]
        A[:, t, t] = self.gram[cand, cand]
        A += self.penalty * np.eye(t + 1)
        b = np.empty((m, t + 1))
        b[:, :t] = self.xty[sel]
        b[:, t] = self.xty[cand]
        beta = np.linalg.solve(A, b[..., None])[..., 0]
        Abeta = np.einsum("mij,mj->mi", A, beta)
        sse = (self.sst - 2.0 * np.einsum("mi,mi->m", b, beta)
               + np.einsum("mi,mi->m", beta, Abeta)
               - self.penalty * np.einsum("mi,mi->m", beta, beta))
        return 1.0 - sse / self.sst


def forward_select_trace(X, y, k: int, ridge_penalty: float = 1.0):
    """Greedy forward selection; returns [(index, r2_after_adding)] of length k."""
    if k == 0:
        return []
    scorer = _RidgeScorer(X, y, ridge_penalty)
    if k > scorer.n_features:
        raise InvalidInputError(
            f"cannot select {k} of {scorer.n_features} features"
        )
    if scorer.degenerate:
        warnings.warn(
            "constant target: R^2 is undefined, returning the first k indices",
            DegenerateTargetWarning,
            stacklevel=3,
        )
        return [(j, float("nan")) for j in range(k)]
    selected: list[int] = []
    trace = []
    for _ in range(k):
        candidates = [j for j in range(scorer.n_features) if j not in selected]
        scores = scorer.r2_candidates(selected, candidates)
        best = int(np.argmax(scores))  # first maximum: ties to the smaller index
        selected.append(candidates[best])
        trace.append((candidates[best], float(scores[best])))
    return trace


def forward_select(X, y, k: int, ridge_penalty: float = 1.0) -> list[int]:
    """Ordered indices of the k greedily-selected features."""
    return [idx for idx, _ in forward_select_trace(X, y, k, ridge_penalty)]


@dataclass(frozen=True)
class SelectedFeatureSet:
    """The explanation space of one instance: an ordered subset of its unit
    indices plus the per-class selection provenance."""

    indices: tuple
    per_class_trace: dict
    width: int  # |x| of the originating vocabulary

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise InvalidInputError("selected indices must be unique")
        if any(i < 0 or i >= self.width for i in self.indices):
            raise InvalidInputError("selected index out of vocabulary range")

    @property
    def size(self) -> int:
        return len(self.indices)

    def to_json_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "width": self.width,
            "per_class": {
                label: [{"index": int(i), "r2": r} for i, r in picks]
                for label, picks in self.per_class_trace.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def build_feature_space(pset, model_outputs, per_class_k: int = 5,
                        ridge_penalty: float = 1.0, class_labels=None) -> SelectedFeatureSet:
    """Union of the top-``per_class_k`` features selected independently for
    every class's probability column, with provenance recorded per class."""
    X = pset.bits_matrix().astype(np.float64)
    Y = np.asarray(model_outputs, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise DimensionError(
            f"model outputs {Y.shape} do not align with {X.shape[0]} perturbations"
        )
    n_classes = Y.shape[1]
    if class_labels is None:
        class_labels = [str(c) for c in range(n_classes)]
    per_class = {}
    union: list[int] = []
    for c in range(n_classes):
        trace = forward_select_trace(X, Y[:, c], per_class_k, ridge_penalty)
        per_class[str(class_labels[c])] = trace
        for idx, _ in trace:
            if idx not in union:
                union.append(idx)
    return SelectedFeatureSet(
        indices=tuple(sorted(union)),
        per_class_trace=per_class,
        width=X.shape[1],
    )


def select(bits, feats: SelectedFeatureSet) -> np.ndarray:
    """Project a full-width Boolean vector onto the selected coordinates."""
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or b.shape[0] != feats.width:
        raise DimensionError(
            f"expected {feats.width} bits, got shape {b.shape}"
        )
    return b[np.asarray(feats.indices, dtype=np.intp)]


def select_rows(bits_matrix, feats: SelectedFeatureSet) -> np.ndarray:
    """Row-wise projection of an (n, |x|) bit matrix onto the selection."""
    m = np.asarray(bits_matrix)
    if m.ndim != 2 or m.shape[1] != feats.width:
        raise DimensionError(
            f"expected (n, {feats.width}) bit matrix, got shape {m.shape}"
        )
    return m[:, np.asarray(feats.indices, dtype=np.intp)]
