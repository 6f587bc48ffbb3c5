"""Test library functions against hand-computed values kept in testdata/*.yaml."""

import builtins
import importlib
import os
import unittest

import numpy as np
import yaml

from sscl import errors
from sscl.negatives import LossParams
from sscl.train import TrainConfig

# keyword arguments built from a mapping instead of passed as arrays
ARGUMENT_TYPES = {
    "params": LossParams,
    "cfg": TrainConfig,
}


class OracleChecks:
    """Collection of static methods comparing a call against its expected outcome."""

    @staticmethod
    def check_equal(test, call, want, index):
        """Check that the result equals the expected value exactly."""
        np.testing.assert_array_equal(np.asarray(call()), np.asarray(want), err_msg=f"Case {index}")

    @staticmethod
    def check_close(test, call, want, index):
        """Check that the result matches the expected value to 1e-12."""
        np.testing.assert_allclose(np.asarray(call()), np.asarray(want), rtol=0, atol=1e-12, err_msg=f"Case {index}")

    @staticmethod
    def check_raises(test, call, want, index):
        """Check that the call raises the named sscl or builtin exception."""
        exception = getattr(errors, want, None) or getattr(builtins, want)
        with test.assertRaises(exception, msg=f"Case {index}"):
            call()


def _load_function(function_path):
    module_name, function_name = function_path.rsplit(".", 1)
    module = importlib.import_module(module_name)
    return getattr(module, function_name)


def _arguments(kwargs):
    arguments = {}
    for name, value in kwargs.items():
        if name in ARGUMENT_TYPES:
            arguments[name] = ARGUMENT_TYPES[name](**value)
        elif isinstance(value, list):
            arguments[name] = np.asarray(value)
        else:
            arguments[name] = value
    return arguments


def _testcases(data_dir):
    for filename in sorted(os.listdir(data_dir)):
        if filename.endswith(".yaml"):
            with open(os.path.join(data_dir, filename), encoding="utf-8") as file:
                yield yaml.safe_load(file), filename


class _OracleTestCaseMeta(type):
    def __new__(mcs, name, bases, dct):
        cls = super().__new__(mcs, name, bases, dct)
        data_dir = getattr(cls, "data_dir", None)
        if data_dir is None:
            return cls

        for testcase, filename in _testcases(data_dir):
            # Strip the .yaml extension
            testcase_name = f"test_{filename[:-5]}"

            # Create a new closure for testcase
            def test_wrapper(testcase):
                def test_runner(self: "OracleTestCase"):
                    if testcase.get("skip", False):
                        self.skipTest("Skipping due to testcase skip=true")
                    self._run_test_case(testcase)  # pylint:disable=protected-access

                test_runner.__doc__ = testcase.get("description")
                return test_runner

            setattr(cls, testcase_name, test_wrapper(testcase))
        return cls


class OracleTestCase(unittest.TestCase, metaclass=_OracleTestCaseMeta):  # pylint:disable=missing-class-docstring
    def _run_test_case(self, testcase):
        function = _load_function(testcase["function"])
        for index, case in enumerate(testcase["cases"]):
            arguments = _arguments(case.get("kwargs", {}))

            def call(arguments=arguments):
                return function(**arguments)

            for check in case["checks"]:
                for check_name, want in check.items():
                    _check_name = f"check_{check_name}"
                    if not hasattr(OracleChecks, _check_name):
                        raise ValueError(f"Unknown check {check_name} {check}")
                    with self.subTest(case=index, check=check_name):
                        getattr(OracleChecks, _check_name)(self, call, want, index)


class TestOracles(OracleTestCase):
    """Hand-computed values of the negative selection, weighting, loss and schedule functions."""

    data_dir = os.path.join(os.path.dirname(__file__), "testdata")
