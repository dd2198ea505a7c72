"""
Unit tests for measure_core module
การทดสอบสำหรับโมดูลการวัด
"""

import unittest
from pathlib import Path
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.measure_core import (StateSpace, as_measure, as_weight, hahn_jordan,
                                  is_zero_mean, norm_equivalence_bounds, random_probability,
                                  random_zero_mean, total_variation, triple_norm,
                                  weighted_norm)


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


class TestMeasureCore(unittest.TestCase):
    """ทดสอบการทำงานของ measure_core"""

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.mu = np.array([0.5, -0.2, -0.3])
        self.V = np.array([1.0, 2.0, 4.0])

    def test_state_space_labels(self):
        """ทดสอบป้ายชื่อสถานะ"""
        space = StateSpace(size=3, labels=("a", "b", "c"))
        self.assertEqual(space.label(1), "b")
        self.assertEqual(StateSpace(size=2).label(1), "1")

    def test_state_space_rejects_bad_input(self):
        with self.assertRaises(ValueError):
            StateSpace(size=0)
        with self.assertRaises(ValueError):
            StateSpace(size=2, labels=("a", "a"))
        with self.assertRaises(ValueError):
            StateSpace(size=2, labels=("a",))

    def test_as_measure_is_read_only(self):
        """ทดสอบว่า measure แก้ไขไม่ได้"""
        mu = as_measure([0.2, -0.2])
        with self.assertRaises(ValueError):
            mu[0] = 1.0

    def test_as_measure_rejects_nonfinite_and_length(self):
        with self.assertRaises(ValueError):
            as_measure([0.1, np.nan])
        with self.assertRaises(ValueError):
            as_measure([0.1, 0.2], StateSpace(size=3))

    def test_as_weight_requires_at_least_one(self):
        """ทดสอบว่า V ต้องไม่น้อยกว่า 1"""
        np.testing.assert_array_equal(as_weight([1, 2, 3]), [1.0, 2.0, 3.0])
        with self.assertRaises(ValueError) as ctx:
            as_weight([1.0, 0.5])
        self.assertIn("V[1]", str(ctx.exception))

    def test_norms_of_fixed_measure(self):
        """ทดสอบค่า norm ของ measure ตัวอย่าง"""
        self.assertAlmostEqual(total_variation(self.mu), 1.0)
        self.assertAlmostEqual(weighted_norm(self.mu, self.V), 0.5 + 0.4 + 1.2)
        self.assertAlmostEqual(triple_norm(self.mu, self.V, 0.5), 1.0 + 0.5 * 2.1)

    def test_weighted_norm_length_mismatch(self):
        with self.assertRaises(ValueError):
            weighted_norm(self.mu, [1.0, 2.0])

    def test_triple_norm_needs_positive_beta(self):
        with self.assertRaises(ValueError):
            triple_norm(self.mu, self.V, 0.0)

    def test_zero_mean(self):
        self.assertTrue(is_zero_mean(self.mu))
        self.assertFalse(is_zero_mean([0.5, 0.4]))

    def test_hahn_jordan_split(self):
        """ทดสอบการแยก Hahn-Jordan"""
        plus, minus = hahn_jordan(self.mu)
        np.testing.assert_array_equal(plus, [0.5, 0.0, 0.0])
        np.testing.assert_array_equal(minus, [0.0, 0.2, 0.3])
        self.assertTrue(np.all(plus * minus == 0.0))

    def test_random_measures_are_seeded(self):
        """ทดสอบว่า seed เดียวกันให้ผลเหมือนกัน"""
        first = random_zero_mean(np.random.default_rng(7), 5, 3)
        second = random_zero_mean(np.random.default_rng(7), 5, 3)
        np.testing.assert_array_equal(first, second)
        for nu in first:
            self.assertTrue(is_zero_mean(nu))
        probabilities = random_probability(np.random.default_rng(1), 4, 2)
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0)
        self.assertTrue(np.all(probabilities >= 0.0))

    @given(st.lists(finite, min_size=1, max_size=8), st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=200, deadline=None)
    def test_norm_equivalence(self, values, beta):
        """min(1, beta)||mu||_V <= triple <= (1 + beta)||mu||_V"""
        mu = np.asarray(values)
        V = 1.0 + np.arange(mu.size, dtype=float) ** 2
        lower, middle, upper = norm_equivalence_bounds(mu, V, beta)
        scale = max(1.0, upper)
        self.assertLessEqual(lower, middle + 1e-12 * scale)
        self.assertLessEqual(middle, upper + 1e-12 * scale)

    @given(st.lists(finite, min_size=1, max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_hahn_jordan_reconstructs(self, values):
        plus, minus = hahn_jordan(values)
        np.testing.assert_allclose(plus - minus, values)
        self.assertAlmostEqual(total_variation(values), float(plus.sum() + minus.sum()))


if __name__ == '__main__':
    unittest.main()
