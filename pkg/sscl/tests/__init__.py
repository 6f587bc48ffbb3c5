"""Unit tests for the sscl package."""

import logging
import shutil
import tempfile
import unittest

import numpy as np

logging.disable(logging.INFO)


def unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    """Random rows on the unit sphere."""
    matrix = rng.standard_normal((rows, dim))
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


class TempDirTestCase(unittest.TestCase):
    """Test case with a scratch directory removed after every test."""

    def setUp(self):
        """Create the scratch directory."""
        super().setUp()
        self.tmp_dir = tempfile.mkdtemp(prefix="sscl-test-")

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.tmp_dir, ignore_errors=True)
        super().tearDown()
