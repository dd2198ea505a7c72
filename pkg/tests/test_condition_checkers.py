"""
Unit tests for condition_checkers module
การทดสอบสำหรับโมดูลตรวจสอบเงื่อนไข
"""

import math
import unittest
from pathlib import Path
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.condition_checkers import (CertificationFailure, check_doeblin, check_harris,
                                        check_local_coupling, check_lyapunov,
                                        check_weak_lyapunov, concave_compose_bound,
                                        harris_to_coupling, lyapunov_measure_check,
                                        measure_level_coupling_check, pairwise_to_measure)
from modules.kernel_ops import StochasticKernel, semigroup_at
from modules.model_loader import ModelLoader, list_fixtures
from modules.scalar_functions import ScalarFunction


class TestConditionCheckers(unittest.TestCase):
    """ทดสอบการทำงานของตัวตรวจสอบเงื่อนไข"""

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.two = StochasticKernel([[0.7, 0.3], [0.4, 0.6]])
        self.three = StochasticKernel([[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.1, 0.3, 0.6]])
        self.V = np.array([1.0, 2.0, 4.0])
        self.swap = StochasticKernel([[0, 1, 0], [1, 0, 0], [0, 0, 1]])
        self.phi = ScalarFunction("power", {"p": 0.5}, role="phi")

    def test_doeblin_two_state(self):
        """ทดสอบ Doeblin alpha = 0.7"""
        cert = check_doeblin(self.two)
        self.assertAlmostEqual(cert.alpha, 0.7)
        np.testing.assert_allclose(cert.eta, [0.4 / 0.7, 0.3 / 0.7])
        self.assertEqual(cert.input_hash, self.two.content_hash)

    def test_doeblin_failure_on_swap(self):
        result = check_doeblin(self.swap)
        self.assertIsInstance(result, CertificationFailure)
        self.assertFalse(result.ok)
        self.assertEqual(result.reason, "zero_mass")

    def test_harris_set(self):
        """ทดสอบ Harris บนเซต {V <= 2.5}"""
        cert = check_harris(self.three, self.V, 2.5)
        self.assertEqual(cert.set_C, (0, 1))
        self.assertAlmostEqual(cert.alpha, 0.8)
        self.assertEqual(check_harris(self.three, self.V, 0.5).reason, "empty_set")
        with self.assertRaises(ValueError):
            check_harris(self.three, self.V, 0.0)

    def test_harris_set_of_power(self):
        cert = check_harris(self.swap, np.ones(3), 1.0, N=2)
        self.assertEqual(cert.reason, "zero_mass")

    def test_lyapunov_fit(self):
        """ทดสอบ PV <= gamma_L V + K"""
        cert = check_lyapunov(self.three, self.V, K_grid=[1.0])
        self.assertAlmostEqual(cert.gamma_L, 0.9)
        self.assertEqual(cert.K, 1.0)
        failure = check_lyapunov(self.three, self.V, K_grid=[0.0])
        self.assertEqual(failure.reason, "not_contractive")
        self.assertEqual(failure.witness, 0)
        with self.assertRaises(ValueError):
            check_lyapunov(self.three, self.V, K_grid=[-1.0])

    def test_weak_lyapunov_fit(self):
        """ทดสอบ PV + sigma phi(V) <= V + K"""
        cert = check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5])
        self.assertEqual(cert.sigma_bar, 0.5)
        self.assertAlmostEqual(cert.K, 1.4)
        with self.assertRaises(ValueError):
            check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[1.5])
        with self.assertRaises(ValueError):
            check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5, 1.0])

    def test_weak_lyapunov_default_grid_stays_below_one(self):
        """ทดสอบว่า sigma_bar อยู่ใน (0, 1) เสมอ"""
        flat = StochasticKernel([[0.5, 0.5], [0.5, 0.5]])
        cert = check_weak_lyapunov(flat, [1.0, 2.0], self.phi)
        self.assertGreater(cert.sigma_bar, 0.0)
        self.assertLess(cert.sigma_bar, 1.0)
        self.assertTrue(all(0.0 < s < 1.0 for s, _ in cert.grid))

    def test_weak_lyapunov_with_threshold(self):
        failure = check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5], A=1.0)
        self.assertEqual(failure.reason, "no_admissible_constant")
        cert = check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5], A=10.0)
        self.assertAlmostEqual(cert.sigma_bar - cert.K / 10.0, 0.36)

    def test_local_coupling(self):
        """ทดสอบ local coupling gamma_H"""
        cert = check_local_coupling(self.two, np.ones(2), 2.0, 1)
        self.assertAlmostEqual(cert.gamma_H, 0.3)
        self.assertEqual(cert.scope, "pairwise")
        self.assertEqual(cert.witness, (0, 1))
        self.assertEqual(check_local_coupling(self.two, np.ones(2), 1.0, 1).reason, "vacuous")

    def test_local_coupling_failure_witness(self):
        failure = check_local_coupling(self.swap, np.ones(3), 4.0, 1)
        self.assertEqual(failure.reason, "not_contractive")
        self.assertEqual(failure.witness, [0, 1])
        with self.assertRaises(ValueError):
            check_local_coupling(self.swap, np.ones(3), 4.0, 0)

    def test_coupling_conversions(self):
        """ทดสอบการแปลง Harris และ pairwise เป็น measure-level"""
        harris = check_harris(self.three, self.V, 2.5)
        coupling = harris_to_coupling(harris, 0.5)
        self.assertAlmostEqual(coupling.gamma_H, 1.0 - 0.8 * 0.6)
        self.assertEqual(coupling.scope, "measure")
        with self.assertRaises(ValueError):
            harris_to_coupling(harris, 1.25)

        pairwise = check_local_coupling(self.two, np.ones(2), 2.0, 1)
        measure = pairwise_to_measure(pairwise, 0.5)
        self.assertAlmostEqual(measure.gamma_H, 1.0 - 0.7 * 0.5)
        self.assertIs(pairwise_to_measure(measure, 0.1), measure)

    def test_concave_compose_bound(self):
        cert = check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5])
        psi = ScalarFunction("power", {"p": 0.5})
        report = concave_compose_bound(self.three, self.V, self.phi, psi, cert.sigma_bar, cert.K)
        self.assertTrue(report["passed"])
        self.assertGreaterEqual(report["worst_margin"], 0.0)
        with self.assertRaises(ValueError):
            concave_compose_bound(self.three, self.V, self.phi, ScalarFunction("power", {"p": 2.0}),
                                  cert.sigma_bar, cert.K)

    def test_harris_coupling_dominates_measure_contraction_on_fixtures(self):
        """ทดสอบว่า gamma_H จาก Harris ไม่ต่ำกว่าค่าที่วัดได้บนทุก fixture"""
        loader = ModelLoader()
        rng = np.random.default_rng(17)
        checked = 0
        for path in list_fixtures():
            model = loader.load(path)
            if model.R is None:
                continue
            S = semigroup_at(model.generator, model.T) if model.continuous else model.kernel
            N = 1 if model.continuous else model.N
            harris = check_harris(S, model.weight, model.R, N)
            self.assertTrue(harris.ok, path.name)
            for A in (0.25 * model.R, 0.45 * model.R):
                coupling = harris_to_coupling(harris, A)
                report = measure_level_coupling_check(S, model.weight, coupling, rng, count=300)
                self.assertTrue(report["passed"], f"{path.name} at A = {A}")
                self.assertLessEqual(report["worst_ratio"], coupling.gamma_H + 1e-12)
            checked += 1
        self.assertGreaterEqual(checked, 3)

    def test_randomized_measure_checks(self):
        """ทดสอบการตรวจสอบแบบสุ่มในระดับ measure"""
        rng = np.random.default_rng(3)
        pairwise = check_local_coupling(self.two, np.ones(2), 2.0, 1)
        report = measure_level_coupling_check(self.two, np.ones(2), pairwise, rng, count=50)
        self.assertTrue(report["passed"])
        self.assertAlmostEqual(report["worst_ratio"], 0.3, places=12)

        lyap = check_lyapunov(self.three, self.V, K_grid=[1.0])
        self.assertTrue(lyapunov_measure_check(self.three, self.V, lyap, rng, count=200)["passed"])
        weak = check_weak_lyapunov(self.three, self.V, self.phi, sigma_grid=[0.5])
        self.assertTrue(lyapunov_measure_check(self.three, self.V, weak, rng, count=200)["passed"])

    def test_certificates_serialize(self):
        cert = check_harris(self.three, self.V, 2.5)
        described = cert.to_dict()
        self.assertEqual(described["kind"], "harris")
        self.assertEqual(described["set_C"], [0, 1])
        self.assertFalse(math.isnan(described["alpha"]))


if __name__ == '__main__':
    unittest.main()
