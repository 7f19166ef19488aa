"""Explanation matrices for black-box probabilistic classifiers.

For one instance and one classifier, the package fits a C x f_x matrix W
such that softmax(W z) locally replicates the classifier's distribution
over classes across Boolean perturbations of the instance's interpretable
units, by minimizing a similarity-weighted squared-Hellinger regression
loss.  It ships a per-class weighted-ridge baseline over the same
perturbation space and an intrinsic-evaluation harness (distribution
replication, noise sanity check, ablation flip rate, re-prediction
tracking, angle-restricted stability, timing).
"""

__version__ = "0.1.0"

from . import errors
from .data import (
    Featurizer,
    LabeledDataset,
    build_featurizer,
    featurize_records,
    load_dataset,
    make_synthetic_text_dataset,
    split_dataset,
)
from .distributions import (
    PROB_ATOL,
    ClassDistribution,
    hellinger,
    kl_divergence,
    softmax,
    softmax_rows,
    squared_hellinger,
    squared_hellinger_rows,
    total_variation,
    total_variation_rows,
)
from .evaluation import (
    ExperimentReport,
    ablation_flip_rate,
    jaccard_stability,
    reprediction_tracking,
    sanity_check,
    timing_comparison,
    tv_replication,
)
from .explainer import (
    ExplanationMatrix,
    FitConfig,
    fit,
    loss,
    loss_gradient,
    surrogate_predict,
    surrogate_probs,
    top_k_features,
)
from .lime import (
    LimeExplanation,
    build_lime_data,
    fit_lime_all_classes,
    fit_lime_class,
    fit_lime_from_data,
    lime_top_k,
)
from .models import (
    BlackBoxClassifier,
    DistortionConfig,
    LinearSoftmaxModel,
    ReluMlpModel,
    SubprocessModel,
    distort_last_layer,
    load_model,
    save_model,
    train_reference,
)
from .perturbation import (
    BooleanPerturbation,
    FeatureVocabulary,
    PerturbationSet,
    SegmentBundle,
    angle_from_ones,
    extract_features,
    materialize,
    materialize_batch,
    pi_weight,
    restrict_by_angle,
    sample_perturbations,
    tokenize,
)
from .pipeline import InstanceBundle, explain_instance, prepare_bundle
from .seeding import child_seed, spawn_seeds
from .selection import (
    SelectedFeatureSet,
    build_feature_space,
    forward_select,
    forward_select_trace,
    select,
    select_rows,
)
