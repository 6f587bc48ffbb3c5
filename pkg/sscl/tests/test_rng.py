"""Test the keyed random streams."""

import unittest

import numpy as np

from sscl.rng import KeyedRandom


class TestKeyedRandom(unittest.TestCase):
    """Test KeyedRandom."""

    def test_same_key_same_draws(self):
        want = KeyedRandom(3).stream("view", 0, 1).random(5)
        got = KeyedRandom(3).stream("view", 0, 1).random(5)
        np.testing.assert_array_equal(want, got)

    def test_keys_are_independent(self):
        rng = KeyedRandom(3)
        self.assertFalse(np.array_equal(rng.stream("view", 0, 1).random(5), rng.stream("view", 0, 2).random(5)))
        self.assertFalse(np.array_equal(rng.stream("shuffle", 0).random(5), rng.stream("probe", 0).random(5)))

    def test_seeds_differ(self):
        self.assertFalse(np.array_equal(KeyedRandom(1).stream(0).random(5), KeyedRandom(2).stream(0).random(5)))

    def test_child_prefix(self):
        rng = KeyedRandom(9)
        want = rng.stream("negatives", 2, 3, 7).random(4)
        got = rng.child("negatives", 2).child(3).stream(7).random(4)
        np.testing.assert_array_equal(want, got)

    def test_creation_order_does_not_matter(self):
        first = KeyedRandom(4)
        want = first.stream(5).random(3)
        second = KeyedRandom(4)
        for key in range(5):
            second.stream(key).random(100)
        got = second.stream(5).random(3)
        np.testing.assert_array_equal(want, got)

    def test_negative_key(self):
        with self.assertRaises(ValueError):
            KeyedRandom(0).stream(-1)

    def test_repr(self):
        self.assertEqual("KeyedRandom(seed=1, prefix=('view', 2))", repr(KeyedRandom(1).child("view", 2)))
