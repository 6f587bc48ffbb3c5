"""Test the linear probe, top-k accuracy, principal components and exports."""

import os
import unittest

import numpy as np

from sscl.data import gen_blobs
from sscl.errors import ConfigValidationError, DegenerateLabels, ShapeMismatch
from sscl.evaluation import (
    ProbeConfig,
    ReportRow,
    export_embeddings,
    export_pca,
    extract_features,
    linear_probe,
    pca2d,
    principal_components,
    topk_accuracy,
    write_report,
)
from sscl.model import EncoderConfig, encode, init_params
from sscl.tests import TempDirTestCase


def _read_lines(path):
    with open(path, encoding="utf-8") as file:
        return file.read().splitlines()


class TestTopKAccuracy(unittest.TestCase):
    """Test topk_accuracy."""

    scores = np.array([[0.1, 0.5, 0.4], [0.9, 0.05, 0.05]])

    def test_top1(self):
        self.assertEqual(0.5, topk_accuracy(self.scores, [2, 0], 1))

    def test_top2(self):
        self.assertEqual(1.0, topk_accuracy(self.scores, [2, 0], 2))

    def test_all_classes(self):
        self.assertEqual(1.0, topk_accuracy(self.scores, [0, 1], 3))

    def test_ties_to_lower_class(self):
        self.assertEqual(1.0, topk_accuracy([[1.0, 1.0, 0.0]], [0], 1))
        self.assertEqual(0.0, topk_accuracy([[1.0, 1.0, 0.0]], [1], 1))

    def test_invalid_k(self):
        for k in (0, 4):
            with self.subTest(k=k), self.assertRaises(ValueError):
                topk_accuracy(self.scores, [0, 0], k)

    def test_label_count(self):
        with self.assertRaises(ShapeMismatch):
            topk_accuracy(self.scores, [0], 1)


class TestLinearProbe(unittest.TestCase):
    """Test linear_probe."""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.labels = np.repeat([0, 1, 2], 20)
        centers = np.eye(3) * 4.0
        self.features = centers[self.labels] + rng.normal(scale=0.3, size=(60, 3))
        self.cfg = ProbeConfig(epochs=30, lr=0.5, batch_n=16)

    def test_separable(self):
        result = linear_probe(self.features, self.labels, self.cfg)
        self.assertEqual(1.0, result.train_accuracy)
        self.assertEqual((1.0, 1.0), result.accuracy(self.features, self.labels))
        self.assertLess(result.history[-1], result.history[0])
        self.assertEqual(30, len(result.history))

    def test_shuffled_labels_give_chance(self):
        accuracies = []
        for seed in range(5):
            dataset = gen_blobs(classes=4, dim=8, per_class=300, spread=0.3, seed=seed)
            labels = np.random.default_rng(seed).permutation(dataset.labels)
            order = np.random.default_rng(seed + 100).permutation(dataset.n)
            train, test = order[:800], order[800:]
            cfg = ProbeConfig(epochs=20, lr=0.1, batch_n=64, seed=seed)
            result = linear_probe(dataset.features[train], labels[train], cfg, class_count=4)
            accuracies.append(result.accuracy(dataset.features[test], labels[test])[0])
        self.assertAlmostEqual(0.25, float(np.mean(accuracies)), delta=0.05)

    def test_standardized_scores(self):
        features = self.features * np.array([1e-3, 1.0, 1e3]) + 50.0
        result = linear_probe(features, self.labels, self.cfg)
        self.assertEqual(1.0, result.train_accuracy)
        np.testing.assert_allclose(features.mean(axis=0), result.feature_mean)
        standardized = (features - result.feature_mean) / result.feature_scale
        np.testing.assert_allclose(standardized @ result.weights + result.bias, result.scores(features))

    def test_raw_features(self):
        cfg = ProbeConfig(epochs=30, lr=0.5, batch_n=16, standardize=False)
        result = linear_probe(self.features, self.labels, cfg)
        self.assertIsNone(result.feature_mean)
        np.testing.assert_allclose(self.features @ result.weights + result.bias, result.scores(self.features))

    def test_deterministic(self):
        first = linear_probe(self.features, self.labels, self.cfg)
        second = linear_probe(self.features, self.labels, self.cfg)
        np.testing.assert_array_equal(first.weights, second.weights)
        self.assertEqual(first.history, second.history)

    def test_class_count(self):
        result = linear_probe(self.features, self.labels, ProbeConfig(epochs=1), class_count=5)
        self.assertEqual((3, 5), result.weights.shape)
        self.assertEqual(5, result.class_count)

    def test_degenerate_labels(self):
        with self.assertRaises(DegenerateLabels):
            linear_probe(self.features, np.zeros(60, dtype=int), self.cfg)

    def test_label_count(self):
        with self.assertRaises(ShapeMismatch):
            linear_probe(self.features, self.labels[:10], self.cfg)

    def test_invalid_config(self):
        with self.assertRaises(ConfigValidationError) as context:
            ProbeConfig(epochs=0, lr=0.0).validate()
        self.assertEqual(["probe.epochs", "probe.lr"], context.exception.paths)


class TestExtractFeatures(unittest.TestCase):
    """Test extract_features."""

    def test_frozen_encoder(self):
        model = init_params(EncoderConfig(input_dim=3, encoder_layers=[4], projection_dim=2, seed=0)).encoder_only()
        before = model.params.checksum()
        x = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_array_equal(encode(model, x), extract_features(model, x))
        self.assertEqual(before, model.params.checksum())


class TestPrincipalComponents(unittest.TestCase):
    """Test principal_components and pca2d."""

    def test_orthonormal(self):
        features = np.random.default_rng(3).normal(size=(10, 5))
        components, variances = principal_components(features, 3)
        np.testing.assert_allclose(components @ components.T, np.eye(3), atol=1e-8)
        self.assertTrue(all(later <= earlier + 1e-9 for earlier, later in zip(variances, variances[1:])))

    def test_top_variance(self):
        features = np.random.default_rng(4).normal(size=(50, 4)) * [3.0, 1.0, 0.5, 0.1]
        _, variances = principal_components(features, 1)
        centered = features - features.mean(axis=0)
        want = np.linalg.eigvalsh(centered.T @ centered / 50)[-1]
        self.assertAlmostEqual(want, variances[0], delta=1e-6 * want)

    def test_rank_one(self):
        features = np.outer(np.arange(10.0), [1.0, 2.0, 0.0])
        components, variances = principal_components(features, 2)
        self.assertAlmostEqual(0.0, variances[1], delta=1e-10)
        np.testing.assert_allclose(components @ components.T, np.eye(2), atol=1e-8)

    def test_variance_preserved_in_2d(self):
        features = np.random.default_rng(5).normal(size=(20, 2)) @ [[2.0, 0.5], [0.0, 1.0]]
        projected = pca2d(features)
        self.assertAlmostEqual(features.var(axis=0).sum(), projected.var(axis=0).sum(), delta=1e-9)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            principal_components(np.zeros((1, 3)), 1)
        with self.assertRaises(ValueError):
            principal_components(np.zeros((4, 3)), 4)


class TestExports(TempDirTestCase):
    """Test the CSV exports."""

    def test_embeddings(self):
        path = os.path.join(self.tmp_dir, "embeddings.csv")
        export_embeddings([[1.0, 2.0], [0.5, -1.0]], [0, 3], path)
        self.assertEqual(["0,1.0,2.0", "3,0.5,-1.0"], _read_lines(path))

    def test_pca(self):
        path = os.path.join(self.tmp_dir, "pca.csv")
        features = np.random.default_rng(6).normal(size=(6, 4))
        export_pca(features, [0, 1, 0, 1, 2, 2], path)
        lines = _read_lines(path)
        self.assertEqual("label,pc1,pc2", lines[0])
        self.assertEqual(7, len(lines))
        self.assertEqual("2", lines[-1].split(",")[0])

    def test_report(self):
        path = os.path.join(self.tmp_dir, "report.csv")
        write_report([ReportRow("sscl", 0, 0.5, 0.75)], path)
        self.assertEqual(["method,seed,top1,top5", "sscl,0,0.5,0.75"], _read_lines(path))

    def test_report_header(self):
        path = os.path.join(self.tmp_dir, "report.csv")
        write_report([ReportRow("baseline", 1, 1.0, 1.0)], path, header=("mode", "seed", "top1", "top5"))
        self.assertEqual("mode,seed,top1,top5", _read_lines(path)[0])
