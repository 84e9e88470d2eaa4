import numpy as np
import pytest
import torch
import torch.nn as nn

from semaforge.data import build_patch_dataset
from semaforge.errors import ConfigError, ShapeMismatchError
from semaforge.forensics import (
    DetectorModel,
    DetectorTrainConfig,
    TransformSpec,
    adversarial_train,
    apply_transform,
    bart_augment,
    default_bart_specs,
    heatmap,
    max_accuracy,
    pgd_attack,
    robustness_sweep,
    train_detector,
)
from semaforge.forensics.bart import KINDS, draw_transform
from semaforge.raster import ImageTile
from semaforge.synthetic import make_separable_detector_task


def manual_separable_blur(img, sigma, truncate=4.0):
    """Independent oracle: direct separable Gaussian convolution."""
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k = k / k.sum()
    out = np.empty_like(img, dtype=np.float64)
    for c in range(img.shape[2]):
        padded = np.pad(img[..., c].astype(np.float64), radius, mode="symmetric")
        tmp = np.zeros_like(padded)
        for i, w in enumerate(k):
            tmp += w * np.roll(padded, radius - i, axis=0)
        tmp2 = np.zeros_like(padded)
        for i, w in enumerate(k):
            tmp2 += w * np.roll(tmp, radius - i, axis=1)
        out[..., c] = tmp2[radius:-radius, radius:-radius]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@pytest.fixture(scope="module")
def patch64():
    return np.random.default_rng(3).random((64, 64, 3)).astype(np.float32)


class TestBart:
    def test_identity_half(self, patch64):
        # seed 1's first uniform draw is >= 0.5, so no transform applies.
        rng = np.random.default_rng(1)
        assert rng.random() >= 0.5
        out = bart_augment(patch64, default_bart_specs(), seed=1)
        assert np.array_equal(out, patch64)

    def test_gamma_one_is_identity(self, patch64):
        assert np.array_equal(apply_transform(patch64, "gamma", 1.0), patch64)

    def test_blur_matches_separable_convolution_oracle(self, patch64):
        for radius in (0.5, 1.3, 4.2):
            ours = apply_transform(patch64, "gaussian-blur", radius)
            oracle = manual_separable_blur(patch64, radius)
            np.testing.assert_allclose(ours, oracle, atol=1e-6)

    def test_seeded_blur_draw_reproducible(self, patch64):
        specs = [TransformSpec("gaussian-blur", 0.1, 5.0)]
        for seed in range(20):
            rng = np.random.default_rng(seed)
            drawn = draw_transform(specs, rng)
            out = bart_augment(patch64, specs, seed=seed)
            again = bart_augment(patch64, specs, seed=seed)
            assert np.array_equal(out, again)
            if drawn is not None:
                kind, param = drawn
                np.testing.assert_allclose(out, manual_separable_blur(patch64, param),
                                           atol=1e-6)

    def test_frequency_statistics(self):
        specs = default_bart_specs()
        identity = 0
        kind_counts = {k: 0 for k in KINDS}
        n = 10_000
        for seed in range(n):
            drawn = draw_transform(specs, np.random.default_rng(seed))
            if drawn is None:
                identity += 1
            else:
                kind_counts[drawn[0]] += 1
        assert abs(identity / n - 0.5) <= 0.02
        applied = n - identity
        for k, count in kind_counts.items():
            assert abs(count / applied - 1.0 / len(specs)) <= 0.03, k

    def test_empty_specs_identity_logged(self, patch64, caplog):
        import logging

        with caplog.at_level(logging.WARNING):
            out = bart_augment(patch64, [], seed=2)  # seed 2 draws "apply"
        assert np.array_equal(out, patch64)
        assert any("empty" in r.message for r in caplog.records)

    def test_all_kinds_preserve_shape_and_range(self, patch64):
        for spec in default_bart_specs():
            param = (spec.low + spec.high) / 2.0
            out = apply_transform(patch64, spec.kind, param,
                                  rng=np.random.default_rng(0))
            assert out.shape == patch64.shape
            assert 0.0 <= out.min() and out.max() <= 1.0

    def test_blur_range_validated(self):
        with pytest.raises(ValueError):
            TransformSpec("gaussian-blur", 0.05, 5.0)


class _FixedNet(nn.Module):
    """Deterministic stand-in: logit = 8*(mean - 0.5), so prob is a smooth
    function of the window content."""

    def forward(self, x):
        return 8.0 * (x.mean(dim=(1, 2, 3)) - 0.5)


def _stub_detector(patch_size):
    return DetectorModel(net=_FixedNet(), patch_size=patch_size)


def brute_force_heatmap(model, image, stride):
    """Window enumeration oracle.

    Windows are scored through the same predict batching as the
    implementation (float32 reductions change with batch layout), then
    accumulated directly per pixel.
    """
    h, w = image.shape
    p = model.patch_size
    origins = [(y, x) for y in range(0, h - p + 1, stride)
               for x in range(0, w - p + 1, stride)]
    scores = []
    for i in range(0, len(origins), 256):
        windows = np.stack([image.pixels[y: y + p, x: x + p]
                            for y, x in origins[i: i + 256]])
        scores.extend(model.predict(windows))
    sums = np.zeros((h, w))
    counts = np.zeros((h, w), dtype=np.int64)
    for (y, x), score in zip(origins, scores):
        sums[y: y + p, x: x + p] += score
        counts[y: y + p, x: x + p] += 1
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return means, counts


class TestHeatmap:
    def test_66x66_stride1_coverage(self):
        model = _stub_detector(64)
        image = ImageTile(np.random.default_rng(0).random((66, 66, 3)).astype(np.float32))
        hm = heatmap(model, image, stride=1)
        assert hm.coverage[0, 0] == 1
        assert hm.coverage[33, 33] == 9
        means, counts = brute_force_heatmap(model, image, 1)
        np.testing.assert_allclose(hm.scores, means, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(hm.coverage, counts)

    def test_single_window_constant(self):
        model = _stub_detector(64)
        image = ImageTile(np.random.default_rng(1).random((64, 64, 3)).astype(np.float32))
        hm = heatmap(model, image, stride=1)
        score = model.predict(image.pixels[None])[0]
        assert np.allclose(hm.scores, score)
        assert (hm.coverage == 1).all()

    @pytest.mark.parametrize("stride", [1, 7, 64])
    @pytest.mark.parametrize("size", [(64, 64), (72, 80), (80, 71)])
    def test_parity_with_enumeration(self, size, stride):
        model = _stub_detector(64)
        image = ImageTile(np.random.default_rng(42).random(size + (3,)).astype(np.float32))
        hm = heatmap(model, image, stride=stride)
        means, counts = brute_force_heatmap(model, image, stride)
        np.testing.assert_allclose(hm.scores, means, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(hm.coverage, counts)

    def test_small_patch_model_parity(self):
        model = _stub_detector(8)
        image = ImageTile(np.random.default_rng(5).random((30, 26, 3)).astype(np.float32))
        for stride in (1, 3, 8):
            hm = heatmap(model, image, stride=stride)
            means, counts = brute_force_heatmap(model, image, stride)
            np.testing.assert_allclose(hm.scores, means, rtol=0, atol=1e-12)
            np.testing.assert_array_equal(hm.coverage, counts)

    def test_undersized_image_rejected(self):
        model = _stub_detector(64)
        with pytest.raises(ShapeMismatchError):
            heatmap(model, ImageTile(np.zeros((32, 64, 3), dtype=np.float32)), 1)

    def test_constant_model_constant_heatmap(self):
        class ConstNet(nn.Module):
            def forward(self, x):
                return torch.zeros(x.shape[0])

        model = DetectorModel(net=ConstNet(), patch_size=16)
        image = ImageTile(np.random.default_rng(2).random((40, 40, 3)).astype(np.float32))
        hm = heatmap(model, image, stride=1)
        assert np.allclose(hm.scores, 0.5)


def mann_whitney_auc(labels, scores):
    """Rank-statistic oracle: pairwise win fraction with half ties."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAucAndAccuracy:
    def test_auc_matches_rank_oracle(self):
        from sklearn.metrics import roc_auc_score

        for seed in range(5):
            rng = np.random.default_rng(seed)
            labels = rng.integers(0, 2, 60)
            labels[0], labels[1] = 0, 1  # both classes present
            scores = np.round(rng.random(60), 2)  # ties likely
            assert roc_auc_score(labels, scores) == pytest.approx(
                mann_whitney_auc(labels, scores), abs=1e-9)

    def test_max_accuracy_hand_case(self):
        labels = np.array([0, 0, 1, 1])
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        assert max_accuracy(labels, scores) == 0.75
        assert max_accuracy(np.array([0, 1]), np.array([0.2, 0.9])) == 1.0


@pytest.fixture(scope="module")
def toy_task():
    pristine, generated = make_separable_detector_task(6, 128, seed=1)
    return build_patch_dataset(pristine, generated, patch=64, val_fraction=0.25, seed=0)


class TestDetectorTraining:
    def test_single_class_rejected(self, toy_task):
        only_pristine = toy_task.subset(toy_task.labels == 0)
        with pytest.raises(ConfigError):
            train_detector(only_pristine, "plain", DetectorTrainConfig(epochs=1))

    def test_zero_epochs_chance_level(self, toy_task):
        # A single untrained init can be biased either way; chance level
        # holds in expectation over inits.
        aucs = []
        for seed in range(12):
            _, report = train_detector(toy_task, "plain",
                                       DetectorTrainConfig(epochs=0, seed=seed))
            aucs.append(report.val_auc)
        assert abs(float(np.mean(aucs)) - 0.5) <= 0.1

    def test_pgd_projection_exact(self, toy_task):
        model, _ = train_detector(toy_task, "plain", DetectorTrainConfig(epochs=1, seed=0))
        x = torch.from_numpy(toy_task.patches[:8].astype(np.float32)).permute(0, 3, 1, 2)
        y = torch.from_numpy(toy_task.labels[:8].astype(np.float32))
        eps = 4.0 / 255.0
        delta = pgd_attack(model.net, x, y, eps, steps=5,
                           generator=torch.Generator().manual_seed(0))
        assert float(delta.abs().max()) <= eps + 1e-9
        assert float((x + delta).min()) >= 0.0
        assert float((x + delta).max()) <= 1.0

    def test_pgd_zero_steps_identity(self, toy_task):
        model, _ = train_detector(toy_task, "plain", DetectorTrainConfig(epochs=1, seed=0))
        x = torch.from_numpy(toy_task.patches[:4].astype(np.float32)).permute(0, 3, 1, 2)
        y = torch.from_numpy(toy_task.labels[:4].astype(np.float32))
        delta = pgd_attack(model.net, x, y, 4.0 / 255.0, steps=0)
        assert torch.equal(delta, torch.zeros_like(x))

    def test_epsilon_zero_equals_plain(self, toy_task):
        adv_model, _ = train_detector(toy_task, "adversarial",
                                      DetectorTrainConfig(epochs=2, seed=7, epsilon=0.0))
        plain_model, _ = train_detector(toy_task, "plain",
                                        DetectorTrainConfig(epochs=2, seed=7))
        a = adv_model.net.state_dict()
        b = plain_model.net.state_dict()
        assert all(torch.equal(a[k], b[k]) for k in a)


class TestRobustnessSweep:
    def test_identity_parameter_matches_clean_auc(self):
        from sklearn.metrics import roc_auc_score

        pristine, generated = make_separable_detector_task(4, 128, seed=2)
        data = build_patch_dataset(pristine, generated, patch=64, val_fraction=0.25, seed=0)
        model, _ = train_detector(data, "plain", DetectorTrainConfig(epochs=2, seed=0))

        from semaforge.data import tile_raster

        p_scores = model.predict(np.concatenate([tile_raster(t.pixels, 64, 64)
                                                 for t in pristine]))
        g_scores = model.predict(np.concatenate([tile_raster(t.pixels, 64, 64)
                                                 for t in generated]))
        clean_auc = roc_auc_score(
            np.concatenate([np.zeros(len(p_scores)), np.ones(len(g_scores))]),
            np.concatenate([p_scores, g_scores]))

        curves = robustness_sweep(model, generated, pristine,
                                  {"gamma": [1.0, 1.5], "gaussian-blur": [0.0, 1.0]})
        for curve in curves:
            identity_value = curve.values[curve.params.index(
                1.0 if curve.kind == "gamma" else 0.0)]
            assert identity_value == pytest.approx(clean_auc, abs=1e-12)

    def test_grid_must_be_sorted(self):
        from semaforge.forensics.robustness import RobustnessCurve

        with pytest.raises(ValueError):
            RobustnessCurve(kind="gamma", params=[2.0, 1.0], values=[0.5, 0.5],
                            training_mode="plain")
