"""
Unit tests for certifier module
การทดสอบสำหรับโมดูล certifier
"""

import unittest
from pathlib import Path
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.certifier import Certifier
from modules.model_loader import FIXTURE_DIR, ModelLoader, fixture_path


class TestCertifier(unittest.TestCase):
    """ทดสอบการทำงานของ Certifier บน fixture"""

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.config = {"harness": {"n_max": 60, "random_measures": 5}}
        self.loader = ModelLoader(self.config)
        self.certifier = Certifier(self.config)

    def _step(self, run, name):
        return next(step for step in run.steps if step["name"] == name)

    def test_doeblin_two_state_report(self):
        """ทดสอบ pipeline เต็มรูปแบบบนโซ่สองสถานะ"""
        model = self.loader.load(fixture_path("doeblin_two_state"))
        run = self.certifier.certify(model)
        self.assertIn("doeblin", run.certificates)
        self.assertAlmostEqual(run.certificates["doeblin"].alpha, 0.7)
        self.assertIn("doeblin_tv", run.envelopes)
        self.assertTrue(run.verification["doeblin_tv"]["passed"])
        self.assertEqual(self._step(run, "harris")["status"], "skipped")
        self.assertEqual(run.violations, [])
        self.assertEqual(run.missing_expectations, [])
        self.assertEqual(run.exit_code, 0)
        np.testing.assert_allclose(run.existence["mu_star"], [4.0 / 7.0, 3.0 / 7.0], atol=1e-10)
        self.assertTrue(run.uniqueness["unique"])

    def test_certificates_only(self):
        model = self.loader.load(fixture_path("harris_three_state"))
        run = self.certifier.certify(model, envelopes=False, verify=False)
        self.assertIn("harris", run.certificates)
        self.assertEqual(run.certificates["harris"].set_C, (0, 1))
        names = [step["name"] for step in run.steps]
        self.assertNotIn("verification", names)
        self.assertNotIn("geometric_envelopes", names)
        self.assertEqual(run.exit_code, 0)

    def test_block_diagonal_is_not_unique(self):
        model = self.loader.load(fixture_path("block_diagonal"))
        run = self.certifier.certify(model, envelopes=False, verify=False)
        self.assertEqual(run.uniqueness["multiplicity"], 2)
        self.assertIn("doeblin", run.failures)
        self.assertEqual(run.exit_code, 0)

    def test_period_two_uses_cesaro(self):
        """ทดสอบ fallback ไปยังค่าเฉลี่ย Cesaro สำหรับโซ่คาบสอง"""
        model = self.loader.load(fixture_path("period_two"))
        run = self.certifier.certify(model, envelopes=False, verify=False)
        cesaro = run.existence["cesaro"]
        self.assertTrue(cesaro["converged"])
        np.testing.assert_allclose(cesaro["mu"], [0.5, 0.5])
        self.assertTrue(run.uniqueness["unique"])

    def test_counterexample_reports_missing_certificate(self):
        model = self.loader.load(FIXTURE_DIR / "counterexamples" / "coupling_failure.json")
        run = self.certifier.certify(model, envelopes=False, verify=False)
        self.assertEqual(run.failures["coupling"].reason, "not_contractive")
        self.assertEqual(run.failures["coupling"].witness, [0, 1])
        self.assertEqual(self._step(run, "coupling")["status"], "failed")
        self.assertEqual(run.missing_expectations, ["certificate:coupling"])
        self.assertEqual(run.exit_code, 1)

    def test_reflected_walk_geometric_and_interpolated_envelopes(self):
        """ทดสอบ envelope แบบ Harris และ interpolated บน reflected walk 100 สถานะ"""
        config = {"harness": {"n_max": 500, "random_measures": 20}}
        model = ModelLoader(config).load(fixture_path("reflected_walk"))
        run = Certifier(config).certify(model)
        self.assertLess(run.certificates["lyapunov"].gamma_L, 1.0)
        self.assertEqual(self._step(run, "geometric_envelopes")["status"], "ok")
        for name in ("harris_tv", "harris_v1", "interpolated_tv", "interpolated_v1"):
            self.assertIn(name, run.envelopes)
            self.assertTrue(run.verification[name]["passed"], name)
        self.assertEqual(run.envelopes["interpolated_tv"]["envelope"].horizon, 500.0)
        self.assertEqual(run.exit_code, 0)

    def test_reflected_walk_feller_route(self):
        model = self.loader.load(fixture_path("reflected_walk_feller"))
        run = self.certifier.certify(model)
        self.assertIn("feller_tv", run.envelopes)
        self.assertIn("feller_v1", run.envelopes)
        self.assertTrue(run.verification["feller_tv"]["passed"])
        self.assertEqual(run.exit_code, 0)

    def test_birth_death_generator_end_to_end(self):
        """ทดสอบ pipeline เต็มรูปแบบบน generator birth-death"""
        model = self.loader.load(fixture_path("birth_death_ctmc"))
        run = self.certifier.certify(model)
        self.assertEqual([step["name"] for step in run.steps if step["status"] == "error"], [])
        self.assertEqual(run.uniqueness["multiplicity"], 1)
        self.assertTrue(run.uniqueness["unique"])
        expected = 0.5 ** np.arange(20)
        np.testing.assert_allclose(run.uniqueness["candidates"][0], expected / expected.sum(), atol=1e-9)
        self.assertIn("weak_lyapunov", run.certificates)
        self.assertEqual(run.violations, [])
        self.assertEqual(run.exit_code, 0)

    def test_model_tolerances_override_config(self):
        model = self.loader.from_dict({
            "schema_version": "1.0", "name": "loose", "kernel": [[0.7, 0.3], [0.4, 0.6]],
            "tolerances": {"stationary": 1e-3}})
        self.assertEqual(self.certifier._tolerance(model, "stationary"), 1e-3)
        self.assertEqual(self.certifier._tolerance(model, "cesaro"), 1e-10)

    def test_failed_envelope_gives_exit_code_two(self):
        model = self.loader.load(fixture_path("doeblin_two_state"))
        run = self.certifier.certify(model, envelopes=False, verify=False)
        run.verification["doeblin_tv"] = {"passed": False, "worst_ratio": 1.5}
        self.assertEqual(run.violations, ["doeblin_tv"])
        self.assertEqual(run.exit_code, 2)


if __name__ == '__main__':
    unittest.main()
