"""Surrogate, loss, analytic gradient, descent, and top-k extraction."""

import json
import math

import numpy as np
import pytest

from lipex import (
    ExplanationMatrix,
    FitConfig,
    LinearSoftmaxModel,
    extract_features,
    fit,
    loss,
    loss_gradient,
    prepare_bundle,
    sample_perturbations,
    surrogate_predict,
    surrogate_probs,
    top_k_features,
    total_variation_rows,
)
from lipex.errors import (
    DimensionError,
    FeatureRangeError,
    FitDivergenceError,
    InvalidInputError,
)
from lipex.pipeline import InstanceBundle
from lipex.selection import SelectedFeatureSet


def random_training_set(seed, n=60, fx=5, C=3):
    rng = np.random.default_rng(seed)
    Z = (rng.random((n, fx)) < 0.6).astype(float)
    Q = rng.dirichlet(np.ones(C), size=n)
    pi = rng.random(n)
    return Z, Q, pi


def fd_gradient(W, Z, Q, pi, lam, step=1e-6):
    """Central finite differences of the loss, entry by entry."""
    g = np.zeros_like(W)
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            Wp, Wm = W.copy(), W.copy()
            Wp[i, j] += step
            Wm[i, j] -= step
            g[i, j] = (loss(Wp, Z, Q, pi, lam) - loss(Wm, Z, Q, pi, lam)) / (2 * step)
    return g


def planted_bundle(seed, n=400, width=8, C=3, scale=1.5):
    """Bundle whose cached outputs come from softmax(W* z): the target the
    fit must recover exactly (up to the softmax shift family)."""
    rng = np.random.default_rng(seed)
    text = " ".join(f"u{i}" for i in range(width))
    vocab = extract_features(text)
    pset = sample_perturbations(vocab, n, seed)
    W_star = rng.normal(size=(C, width)) * scale
    feats = SelectedFeatureSet(indices=tuple(range(width)), per_class_trace={}, width=width)
    Z = pset.bits_matrix().astype(float)
    Q = surrogate_probs(W_star, Z)
    model = LinearSoftmaxModel(W_star, np.zeros(C), [f"c{i}" for i in range(C)])
    bundle = InstanceBundle(vocab=vocab, perturbations=pset, model_probs=Q,
                            feats=feats, model=model, featurizer=None, seed=seed)
    return bundle, W_star


class TestSurrogate:
    def test_zero_matrix_uniform(self):
        W = np.zeros((4, 3))
        for z in (np.ones(3), np.zeros(3), np.array([1, 0, 1])):
            assert np.allclose(surrogate_probs(W, z)[0], 0.25)

    def test_zero_input_uniform(self):
        rng = np.random.default_rng(0)
        W = rng.normal(size=(5, 4))
        assert np.allclose(surrogate_probs(W, np.zeros(4))[0], 0.2)

    def test_hand_softmax(self):
        expl = ExplanationMatrix([[math.log(2)], [0.0]], ["a", "b"], ["f"])
        d = surrogate_predict(expl, [1])
        assert np.allclose(d.probs, [2 / 3, 1 / 3])

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            surrogate_probs(np.zeros((2, 3)), np.ones(4))


class TestLoss:
    def test_uniform_targets_zero_at_zero(self):
        Z, _, pi = random_training_set(1, C=4)
        Q = np.full((Z.shape[0], 4), 0.25)
        assert loss(np.zeros((4, Z.shape[1])), Z, Q, pi, 0.0) == 0.0

    def test_all_ones_only_reduces_to_penalty(self):
        # the instance itself carries zero similarity weight
        Z = np.ones((1, 4))
        Q = np.array([[0.7, 0.2, 0.1]])
        pi = np.array([0.0])
        rng = np.random.default_rng(2)
        W = rng.normal(size=(3, 4))
        lam = 0.01
        assert loss(W, Z, Q, pi, lam) == pytest.approx(0.5 * lam * np.sum(W * W))

    def test_planted_is_global_zero(self):
        bundle, W_star = planted_bundle(3)
        Z = bundle.reduced_design().astype(float)
        val = loss(W_star, Z, bundle.model_probs, bundle.pi_vector(), 0.0)
        assert 0.0 <= val < 1e-12

    def test_empty_training_set(self):
        with pytest.raises(InvalidInputError):
            loss(np.zeros((2, 3)), np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0), 0.0)

    def test_pluggable_divergence(self):
        from lipex import total_variation_rows as tv_rows

        Z, Q, pi = random_training_set(4)
        W = np.random.default_rng(5).normal(size=(3, Z.shape[1]))
        h = loss(W, Z, Q, pi, 0.0)
        t = loss(W, Z, Q, pi, 0.0, divergence=tv_rows)
        assert h != t  # different divergences, same plumbing
        P = surrogate_probs(W, Z)
        assert t == pytest.approx(float(np.mean(pi * tv_rows(P, Q))))


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for shape_seed in range(5):
            Z, Q, pi = random_training_set(shape_seed + 10,
                                           n=int(rng.integers(20, 60)),
                                           fx=int(rng.integers(2, 7)),
                                           C=int(rng.integers(2, 5)))
            for _ in range(2):
                W = rng.normal(size=(Q.shape[1], Z.shape[1]))
                g = loss_gradient(W, Z, Q, pi, 0.001)
                g_fd = fd_gradient(W, Z, Q, pi, 0.001)
                rel = np.abs(g - g_fd) / np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), 1e-8)
                worst = max(worst, float(rel.max()))
        assert worst < 1e-5

    def test_zero_at_planted_optimum(self):
        bundle, W_star = planted_bundle(7)
        Z = bundle.reduced_design().astype(float)
        g = loss_gradient(W_star, Z, bundle.model_probs, bundle.pi_vector(), 0.0)
        assert np.max(np.abs(g)) < 1e-12


class TestFit:
    def test_zero_epochs_returns_zero_matrix(self):
        bundle, _ = planted_bundle(8)
        cfg = FitConfig(max_epochs=0)
        expl = fit(bundle, cfg)
        assert np.all(expl.weights == 0.0)
        Z = bundle.reduced_design().astype(float)
        assert expl.diagnostics["final_loss"] == pytest.approx(
            loss(np.zeros_like(expl.weights), Z, bundle.model_probs, bundle.pi_vector(),
                 cfg.l2_penalty)
        )

    def test_planted_recovery(self):
        bundle, W_star = planted_bundle(9)
        cfg = FitConfig(learning_rate=0.5, l2_penalty=0.0, max_epochs=3000, tol=0.0)
        expl = fit(bundle, cfg)
        assert expl.diagnostics["final_loss"] < 1e-4
        Z = bundle.reduced_design().astype(float)
        tv = total_variation_rows(surrogate_probs(expl.weights, Z), bundle.model_probs)
        assert tv.max() < 0.01

    def test_deterministic(self):
        bundle, _ = planted_bundle(10)
        cfg = FitConfig(max_epochs=20, seed=5)
        a, b = fit(bundle, cfg), fit(bundle, cfg)
        assert np.array_equal(a.weights, b.weights)
        assert a.to_json() == b.to_json()

    def test_final_loss_le_initial_and_monotone_at_default_lr(self):
        bundle, _ = planted_bundle(11)
        expl = fit(bundle, FitConfig(max_epochs=60))
        h = expl.diagnostics["loss_history"]
        assert h[-1] <= h[0]
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))

    def test_penalty_monotonically_shrinks_norm(self):
        # heavier Frobenius penalty cannot grow the fitted norm
        bundle, _ = planted_bundle(12)
        norms = []
        for lam in (1e-4, 1e-3, 1e-2):
            expl = fit(bundle, FitConfig(learning_rate=0.25, l2_penalty=lam,
                                         max_epochs=400, tol=0.0))
            norms.append(float(np.linalg.norm(expl.weights)))
        assert norms[1] <= norms[0] + 1e-9
        assert norms[2] <= norms[1] + 1e-9

    def test_divergence_reports_epoch_and_lr(self):
        bundle, _ = planted_bundle(13)
        with pytest.raises(FitDivergenceError) as err:
            fit(bundle, FitConfig(learning_rate=1e12, max_epochs=50))
        assert err.value.learning_rate == 1e12
        assert err.value.epoch >= 1


class TestTopK:
    def expl(self, row):
        W = np.vstack([row, np.zeros_like(row)])
        names = [f"f{i}" for i in range(len(row))]
        return ExplanationMatrix(W, ["a", "b"], names)

    def test_full_k_is_permutation(self):
        e = self.expl(np.array([0.3, -0.1, 0.7]))
        assert sorted(top_k_features(e, 0, 3)) == ["f0", "f1", "f2"]

    def test_absolute_value_sort(self):
        e = self.expl(np.array([0.1, -0.9, 0.5]))
        assert top_k_features(e, 0, 2) == ["f1", "f2"]

    def test_scale_invariance(self):
        rng = np.random.default_rng(14)
        row = rng.normal(size=8)
        for alpha in (0.5, 2.0, 117.0):
            a = top_k_features(self.expl(row), 0, 5)
            b = top_k_features(self.expl(alpha * row), 0, 5)
            assert a == b

    def test_tie_break_smaller_index(self):
        e = self.expl(np.array([0.5, -0.5, 0.2]))
        assert top_k_features(e, 0, 2) == ["f0", "f1"]

    def test_k_out_of_range(self):
        e = self.expl(np.array([0.5, 0.1]))
        with pytest.raises(FeatureRangeError):
            top_k_features(e, 0, 3)

    def test_class_by_label(self):
        e = self.expl(np.array([0.5, 0.1]))
        assert top_k_features(e, "a", 1) == ["f0"]


class TestSerialization:
    def test_json_round_trip(self):
        rng = np.random.default_rng(15)
        e = ExplanationMatrix(rng.normal(size=(2, 3)), ["x", "y"], ["a", "b", "c"],
                              {"final_loss": 0.5})
        e2 = ExplanationMatrix.from_json(e.to_json())
        assert np.array_equal(e.weights, e2.weights)
        assert e2.class_labels == ("x", "y")
        assert e2.diagnostics["final_loss"] == 0.5

    def test_json_matrix_row_major(self):
        e = ExplanationMatrix([[1.0, 2.0], [3.0, 4.0]], ["x", "y"], ["a", "b"])
        doc = json.loads(e.to_json())
        assert doc["matrix"] == [1.0, 2.0, 3.0, 4.0]

    def test_csv_layout(self):
        e = ExplanationMatrix([[1.0, 2.0], [3.0, 4.0]], ["x", "y"], ["a", "b"])
        lines = e.to_csv().strip().split("\n")
        assert lines[0] == "class,a,b"
        assert lines[1].startswith("x,") and lines[2].startswith("y,")
        # column subset: k features -> k + 1 columns
        sub = e.to_csv(["b"]).strip().split("\n")
        assert sub[0] == "class,b"
        assert all(len(line.split(",")) == 2 for line in sub)


class TestReluExactness:
    def test_single_linear_region_recovery(self):
        # engineered MLP: hidden units active on the whole Boolean cube and
        # the affine constant cancelled, so logits are exactly linear in the
        # perturbation bits; the fit must replicate the model everywhere
        from lipex import ReluMlpModel
        from lipex.data import Featurizer

        rng = np.random.default_rng(16)
        width, hidden, C = 9, 6, 3
        tokens = [f"w{i}" for i in range(width)]
        featurizer = Featurizer(tokens)
        # scales keep the composed logits moderate, away from softmax saturation
        w1 = rng.normal(size=(hidden, width)) / np.sqrt(width)
        b1 = np.abs(w1).sum(axis=1) + 1.0  # preactivation > 0 for any bits
        w2 = rng.normal(size=(C, hidden)) * 0.6
        b2 = -w2 @ b1
        model = ReluMlpModel(w1, b1, w2, b2, [f"c{i}" for i in range(C)])

        text = " ".join(tokens)
        feats = SelectedFeatureSet(indices=tuple(range(width)), per_class_trace={},
                                   width=width)
        bundle = prepare_bundle(model, text, featurizer, n_perturbations=400,
                                seed=17, feats=feats)
        # confirm the construction: every perturbation keeps all units active
        mats = np.asarray(bundle.materialized)
        assert np.all(model.hidden_preactivation(mats) > 0)

        cfg = FitConfig(learning_rate=0.5, l2_penalty=0.0, max_epochs=3000, tol=0.0)
        expl = fit(bundle, cfg)
        Z = bundle.reduced_design().astype(float)
        tv = total_variation_rows(surrogate_probs(expl.weights, Z), bundle.model_probs)
        assert tv.max() < 0.01
