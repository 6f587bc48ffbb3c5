"""Test the helpers of sscl.util, sscl.errors and sscl.jinja_filters."""

import unittest

from sscl.context import Context
from sscl.errors import ConfigValidationError, ShapeMismatch, ZeroRow
from sscl.jinja_filters import to_json, to_yaml
from sscl.util import nest, parse_override


class TestParseOverride(unittest.TestCase):
    """Test parse_override."""

    def test_values_are_yaml(self):
        cases = [
            ("train.epochs=0", (["train", "epochs"], 0)),
            ("loss.mode=sscl", (["loss", "mode"], "sscl")),
            ("model.encoder_layers=[8, 8]", (["model", "encoder_layers"], [8, 8])),
            ("loss.tau=0.05", (["loss", "tau"], 0.05)),
            ("data.path=", (["data", "path"], None)),
            ("seed=3", (["seed"], 3)),
        ]
        for override, want in cases:
            with self.subTest(override=override):
                self.assertEqual(want, parse_override(override))

    def test_value_keeps_equal_signs(self):
        self.assertEqual((["data", "path"], "a=b"), parse_override("data.path=a=b"))

    def test_malformed(self):
        for override in ("train.epochs", "=3", "train..epochs=3", "train.epochs=[1, 2", "loss.mode=a: b: c"):
            with self.subTest(override=override), self.assertRaises(ConfigValidationError):
                parse_override(override)

    def test_templates_are_kept(self):
        cases = [
            ("loss.s={{ train.batch_n // 4 }}", "{{ train.batch_n // 4 }}"),
            ("loss.s='{{ train.batch_n // 4 }}'", "{{ train.batch_n // 4 }}"),
            ("train.base_lr={{ 0.1 }}", "{{ 0.1 }}"),
        ]
        for override, want in cases:
            with self.subTest(override=override):
                self.assertEqual(want, parse_override(override)[1])


class TestNest(unittest.TestCase):
    """Test nest."""

    def test_nest(self):
        self.assertEqual({"a": {"b": {"c": 1}}}, nest(["a", "b", "c"], 1))

    def test_single_key(self):
        self.assertEqual({"a": [1]}, nest(["a"], [1]))


class TestErrors(unittest.TestCase):
    """Test the error messages."""

    def test_single_failure(self):
        error = ConfigValidationError("must be > 0", path="loss.r")
        self.assertEqual("Configuration failed validation\n\n  **loss.r:** must be > 0", str(error))
        self.assertEqual(["loss.r"], error.paths)

    def test_failures_are_grouped(self):
        error = ConfigValidationError(failures=[("loss.s", "too small"), (None, "general"), ("loss.s", "odd")])
        want = "Configuration failed validation\n\n  general\n\n  **loss.s:** too small\nodd"
        self.assertEqual(want, str(error))
        self.assertEqual(["loss.s"], error.paths)

    def test_shape_mismatch(self):
        self.assertEqual("Bad operand: expected 3, got 4", str(ShapeMismatch("Bad operand", expected=3, got=4)))
        self.assertEqual("Bad operand", str(ShapeMismatch("Bad operand")))

    def test_zero_row(self):
        error = ZeroRow(2, 0.0)
        self.assertEqual(2, error.row)
        self.assertEqual("Row 2 has norm 0.000e+00, cannot be normalized", str(error))


class TestFilters(unittest.TestCase):
    """Test the template filters."""

    def test_to_json_unwraps_nodes(self):
        context = Context({"a": 2, "xs": [1, "{{ a }}"]})
        self.assertEqual("[1, 2]", to_json(context["xs"]))

    def test_to_yaml(self):
        self.assertEqual("a: 1\nb:\n- 2\n- 3\n", to_yaml({"a": 1, "b": [2, 3]}))

    def test_to_yaml_flow_style(self):
        self.assertEqual("{a: 1}\n", to_yaml({"a": 1}, default_flow_style=True))

    def test_to_json_rejects_objects(self):
        with self.assertRaises(TypeError):
            to_json(object())
