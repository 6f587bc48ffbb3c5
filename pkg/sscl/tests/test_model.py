"""Test the encoder, projection head and checkpoint container."""

import math
import os
import unittest

import numpy as np

from sscl.autodiff import grad_check
from sscl.errors import CheckpointError, ConfigValidationError, ShapeMismatch
from sscl.model import (
    CHECKPOINT_MAGIC,
    EncoderConfig,
    encode,
    encode_on_tape,
    init_params,
    load_checkpoint,
    project,
    project_on_tape,
    save_checkpoint,
)
from sscl.tests import TempDirTestCase


def _reference_forward(params, x, prefix, layers, last_relu=False):
    for index in range(layers):
        x = x @ params[f"{prefix}{index}.weight"] + params[f"{prefix}{index}.bias"]
        if index < layers - 1 or last_relu:
            x = np.maximum(x, 0.0)
    return x


class TestEncoderConfig(unittest.TestCase):
    """Test EncoderConfig."""

    def test_defaults(self):
        config = EncoderConfig(input_dim=3)
        self.assertEqual(64, config.feature_dim)
        self.assertEqual(64, config.hidden_dim)

    def test_hidden_dim(self):
        self.assertEqual(7, EncoderConfig(3, [4, 5], projection_hidden_dim=7).hidden_dim)

    def test_invalid(self):
        with self.assertRaises(ConfigValidationError) as context:
            EncoderConfig(input_dim=0, encoder_layers=[], projection_dim=0)
        want = ["model.encoder_layers", "model.input_dim", "model.projection_dim"]
        self.assertEqual(want, context.exception.paths)


class TestModel(unittest.TestCase):
    """Test parameter layout and the forward passes."""

    def setUp(self):
        self.config = EncoderConfig(input_dim=3, encoder_layers=[5, 4], projection_dim=2, seed=1)
        self.model = init_params(self.config)
        self.x = np.random.default_rng(0).standard_normal((3, 3))

    def test_declaration_order(self):
        want = [
            "encoder.0.weight",
            "encoder.0.bias",
            "encoder.1.weight",
            "encoder.1.bias",
            "projection.0.weight",
            "projection.0.bias",
            "projection.1.weight",
            "projection.1.bias",
        ]
        self.assertEqual(want, self.model.params.names())

    def test_glorot_init(self):
        weight = self.model.params["encoder.0.weight"]
        self.assertEqual((3, 5), weight.shape)
        self.assertTrue(np.all(np.abs(weight) <= math.sqrt(6.0 / 8.0)))
        np.testing.assert_array_equal(self.model.params["encoder.0.bias"], 0.0)

    def test_init_deterministic(self):
        self.assertEqual(self.model.params.checksum(), init_params(self.config).params.checksum())
        other = EncoderConfig(input_dim=3, encoder_layers=[5, 4], projection_dim=2, seed=2)
        self.assertNotEqual(self.model.params.checksum(), init_params(other).params.checksum())

    def test_encode_matches_reference(self):
        want = _reference_forward(self.model.params, self.x, "encoder.", 2)
        np.testing.assert_allclose(encode(self.model, self.x), want, rtol=1e-12, atol=1e-15)

    def test_project_matches_reference(self):
        features = encode(self.model, self.x)
        raw = _reference_forward(self.model.params, features, "projection.", 2)
        want = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        got = project(self.model, features)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(np.linalg.norm(got, axis=1), 1.0, atol=1e-12)

    def test_zero_encoder(self):
        for name, value in self.model.params.items():
            if name.startswith("encoder."):
                value.fill(0.0)
        np.testing.assert_array_equal(encode(self.model, self.x), 0.0)

    def test_wrong_width(self):
        with self.assertRaises(ShapeMismatch):
            encode(self.model, np.ones((2, 4)))
        with self.assertRaises(ShapeMismatch):
            project(self.model, np.ones((2, 5)))

    def test_encoder_only(self):
        encoder = self.model.encoder_only()
        self.assertTrue(self.model.has_projection)
        self.assertFalse(encoder.has_projection)
        want = ["encoder.0.weight", "encoder.0.bias", "encoder.1.weight", "encoder.1.bias"]
        self.assertEqual(want, encoder.params.names())
        np.testing.assert_array_equal(encode(encoder, self.x), encode(self.model, self.x))

    def test_composite_gradient(self):
        weights = np.random.default_rng(1).standard_normal((3, 2))

        def build(tape):
            z = project_on_tape(tape, self.model, encode_on_tape(tape, self.model, tape.constant(self.x)))
            return tape.sum(tape.mul(z, tape.constant(weights)))

        self.assertLessEqual(grad_check(build, self.model.params), 1e-5)


class TestCheckpoint(TempDirTestCase):
    """Test the checkpoint container."""

    def setUp(self):
        super().setUp()
        self.model = init_params(EncoderConfig(input_dim=3, encoder_layers=[4], projection_dim=2, seed=3))
        self.path = os.path.join(self.tmp_dir, "model.ckpt")

    def test_round_trip(self):
        run = {"seed": 3, "loss": {"mode": "sscl", "tau": 0.1}}
        save_checkpoint(self.path, self.model, run)
        model, got_run = load_checkpoint(self.path)
        self.assertEqual(self.model.params.checksum(), model.params.checksum())
        self.assertEqual(self.model.config, model.config)
        self.assertEqual(run, got_run)

    def test_magic(self):
        save_checkpoint(self.path, self.model)
        with open(self.path, "rb") as file:
            self.assertEqual(CHECKPOINT_MAGIC, file.read(len(CHECKPOINT_MAGIC)))

    def test_not_a_checkpoint(self):
        with open(self.path, "wb") as file:
            file.write(b"not a checkpoint at all")
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(os.path.join(self.tmp_dir, "missing.ckpt"))

    def test_truncated(self):
        save_checkpoint(self.path, self.model)
        with open(self.path, "rb") as file:
            payload = file.read()
        with open(self.path, "wb") as file:
            file.write(payload[:-8])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_trailing_bytes(self):
        save_checkpoint(self.path, self.model)
        with open(self.path, "ab") as file:
            file.write(b"\0" * 8)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_corrupt_header(self):
        payloads = [b"\x01", b"\x03\0\0\0\xff\xfe\xfd", b"\x03\0\0\0[1]"]
        for payload in (CHECKPOINT_MAGIC + tail for tail in payloads):
            with open(self.path, "wb") as file:
                file.write(payload)
            with self.subTest(payload=payload), self.assertRaises(CheckpointError):
                load_checkpoint(self.path)
