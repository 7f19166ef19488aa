"""Per-instance orchestration: perturb, query the black box once per
perturbation, select the feature space, and hand a self-contained bundle to
the fitting routines.

The bundle is the single source of truth an explanation is computed from:
both the explanation-matrix fit and the baseline fit read the same selected
features, and the cached black-box outputs guarantee exactly one inference
pass per perturbation.
"""

from dataclasses import dataclass, replace

import numpy as np

from .explainer import ExplanationMatrix, FitConfig, fit
from .perturbation import (
    FeatureVocabulary,
    PerturbationSet,
    extract_features,
    materialize_batch,
    restrict_by_angle,
    sample_perturbations,
)
from .selection import SelectedFeatureSet, build_feature_space, select_rows


@dataclass(frozen=True)
class InstanceBundle:
    """Everything needed to fit explanations for one instance."""

    vocab: FeatureVocabulary
    perturbations: PerturbationSet
    model_probs: np.ndarray  # (n, C), row i = h(T(y_i)); row 0 is the instance
    feats: SelectedFeatureSet
    model: object
    featurizer: object
    seed: int
    materialized: object = None  # (n, d) array or list of strings

    @property
    def class_labels(self):
        return self.model.class_labels

    @property
    def feature_names(self):
        return tuple(self.vocab.units[i] for i in self.feats.indices)

    def reduced_design(self) -> np.ndarray:
        return select_rows(self.perturbations.bits_matrix(), self.feats)

    def pi_vector(self) -> np.ndarray:
        return self.perturbations.pi_weights()

    def instance_probs(self) -> np.ndarray:
        """Black-box distribution at the instance itself (the all-ones row)."""
        return self.model_probs[0]

    def predicted_class(self) -> int:
        return int(np.argmax(self.model_probs[0]))

    def with_probs(self, probs) -> "InstanceBundle":
        """Same perturbations and features, different cached outputs (used
        when re-querying a distorted model on identical materializations)."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != self.model_probs.shape:
            raise ValueError("replacement outputs must keep the cached shape")
        return replace(self, model_probs=probs)

    def restrict(self, delta: float) -> "InstanceBundle":
        """Keep only perturbations within angle ``delta`` of the all-ones
        vector, carrying the cached outputs along.  Features are not
        re-selected."""
        angles = self.perturbations.angles()
        mask = angles <= delta
        restricted = restrict_by_angle(self.perturbations, delta)
        mats = None
        if self.materialized is not None:
            if isinstance(self.materialized, np.ndarray):
                mats = self.materialized[mask]
            else:
                mats = [m for m, keep in zip(self.materialized, mask) if keep]
        return replace(
            self,
            perturbations=restricted,
            model_probs=self.model_probs[mask],
            materialized=mats,
        )


def prepare_bundle(model, instance, featurizer=None, *, n_perturbations: int = 1000,
                   seed: int = 0, per_class_k: int = 5, selection_penalty: float = 1.0,
                   baseline: float = 0.0, feats: SelectedFeatureSet = None,
                   keep_materialized: bool = True) -> InstanceBundle:
    """Run the per-instance pipeline up to (but not including) the fit.

    Passing ``feats`` skips feature selection and pins the feature space
    (used by planted-truth tests and by stability comparisons that hold the
    feature list fixed).
    """
    vocab = extract_features(instance, baseline=baseline)
    if vocab.modality == "text" and featurizer is None:
        from .errors import InvalidInputError

        raise InvalidInputError(
            "text instances need a featurizer: every model backend consumes "
            "numeric vectors (the wire protocol carries reals only)"
        )
    pset = sample_perturbations(vocab, n_perturbations, seed)
    mats = materialize_batch(vocab, pset, featurizer)
    probs = model.predict_proba(np.asarray(mats, dtype=np.float64))
    if feats is None:
        feats = build_feature_space(
            pset, probs, per_class_k, selection_penalty, class_labels=model.class_labels
        )
    return InstanceBundle(
        vocab=vocab,
        perturbations=pset,
        model_probs=probs,
        feats=feats,
        model=model,
        featurizer=featurizer,
        seed=int(seed),
        materialized=mats if keep_materialized else None,
    )


def explain_instance(model, instance, featurizer=None, cfg: FitConfig = FitConfig(),
                     *, per_class_k: int = 5, seed: int = None,
                     baseline: float = 0.0) -> ExplanationMatrix:
    """Convenience wrapper: prepare a bundle and fit the explanation matrix."""
    if seed is None:
        seed = cfg.seed
    bundle = prepare_bundle(
        model, instance, featurizer,
        n_perturbations=cfg.n_perturbations,
        seed=seed, per_class_k=per_class_k, baseline=baseline,
    )
    return fit(bundle, cfg)
