"""
Unit tests for reporter module
การทดสอบสำหรับโมดูลรายงาน
"""

import unittest
import tempfile
import os
import json
from pathlib import Path
import sys

import numpy as np
import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules import __version__
from modules.certifier import Certifier
from modules.condition_checkers import check_doeblin
from modules.geometric_rates import doeblin_rate
from modules.harness import Harness
from modules.model_loader import ModelLoader, fixture_path
from modules.reporter import CSV_COLUMNS, Reporter
from modules.subgeometric_rates import RateFunction


class TestReporter(unittest.TestCase):
    """ทดสอบการทำงานของ Reporter"""

    @classmethod
    def setUpClass(cls):
        """certify ครั้งเดียวสำหรับทุกการทดสอบ"""
        cls.config = {"harness": {"n_max": 30, "random_measures": 3}}
        model = ModelLoader(cls.config).load(fixture_path("doeblin_two_state"))
        cls.certified = Certifier(cls.config).certify(model)

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.reporter = Reporter(self.config)
        self.harness = Harness(self.config)
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """ทำความสะอาดหลังการทดสอบ"""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_generate_report(self):
        """ทดสอบการสร้างรายงาน"""
        report = self.reporter.generate_report(self.certified, seed=0, flags={"tol": 1e-9})
        self.assertEqual(set(report), {"metadata", "steps", "certificates", "failures", "envelopes",
                                       "verification", "existence", "uniqueness", "outcome"})
        meta = report["metadata"]
        self.assertEqual(meta["tool_version"], __version__)
        self.assertEqual(meta["model"], "doeblin_two_state")
        self.assertEqual(meta["system"], "kernel")
        self.assertEqual(meta["flags"], {"tol": 1e-9})
        self.assertEqual(report["outcome"]["exit_code"], 0)
        self.assertIn("doeblin_tv", report["envelopes"])

    def test_save_json_report_is_deterministic(self):
        report = self.reporter.generate_report(self.certified, seed=0)
        first = self.reporter.save_report(report, os.path.join(self.temp_dir, "a.json"))
        second = self.reporter.save_report(report, os.path.join(self.temp_dir, "b.json"))
        self.assertEqual(first.read_text(encoding="utf-8"), second.read_text(encoding="utf-8"))
        loaded = json.loads(first.read_text(encoding="utf-8"))
        self.assertEqual(loaded["envelopes"]["doeblin_tv"]["C"], 1.0)
        self.assertEqual(loaded["certificates"]["doeblin"]["kind"], "doeblin")
        self.assertNotIn("timestamp", loaded["metadata"])

    def test_save_text_report(self):
        report = self.reporter.generate_report(self.certified, seed=0)
        path = self.reporter.save_report(report, os.path.join(self.temp_dir, "out", "r.txt"), "text")
        text = path.read_text(encoding="utf-8")
        self.assertIn("Model: doeblin_two_state", text)
        self.assertIn("doeblin_tv: pass", text)
        self.assertTrue(text.endswith("Exit code: 0\n"))
        self.assertNotIn("Prefactor fitted up to:", text)
        with self.assertRaises(ValueError):
            self.reporter.save_report(report, os.path.join(self.temp_dir, "r.xml"), "xml")

    def test_text_report_lists_fitted_horizon(self):
        """ทดสอบว่ารายงานระบุช่วง n ที่ใช้ fit prefactor"""
        report = self.reporter.generate_report(self.certified, seed=0)
        report["envelopes"]["tabulated_tv"] = RateFunction(
            t=[0.0, 1.0], theta=[1.0, 0.5], norm_tag="tv", reference_tag="v2", horizon=50.0)
        path = self.reporter.save_report(report, os.path.join(self.temp_dir, "h.txt"), "text")
        text = path.read_text(encoding="utf-8")
        self.assertIn("Prefactor fitted up to:\n  tabulated_tv: 50\n", text)
        loaded = json.loads(self.reporter.save_report(report, os.path.join(self.temp_dir, "h.json"))
                            .read_text(encoding="utf-8"))
        self.assertEqual(loaded["envelopes"]["tabulated_tv"]["horizon"], 50.0)
        self.assertNotIn("horizon", loaded["envelopes"]["doeblin_tv"])

    def test_decay_csv_round_trip(self):
        """ทดสอบการเขียนและอ่าน CSV แล้วตรวจซ้ำ"""
        S = self.certified.model.kernel
        decay = self.harness.simulate_decay(S, [1.0, -1.0], 10)
        frame = self.reporter.decay_frame(decay, tv_envelope=doeblin_rate(check_doeblin(S)))
        self.assertEqual(list(frame.columns), CSV_COLUMNS)
        self.assertTrue(frame["v1_norm"].isna().all())
        np.testing.assert_allclose(frame["envelope_tv"], 2.0 * 0.3 ** np.arange(11))

        path = self.reporter.save_decay_csv(frame, os.path.join(self.temp_dir, "decay.csv"))
        header = path.read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(header, ",".join(CSV_COLUMNS))
        loaded = self.reporter.load_decay_csv(str(path))
        np.testing.assert_array_equal(loaded["tv"].to_numpy(), frame["tv"].to_numpy())

        outcomes = self.reporter.revalidate_csv(loaded)
        self.assertEqual(list(outcomes), ["envelope_tv"])
        self.assertTrue(outcomes["envelope_tv"]["passed"])

    def test_revalidate_detects_violation(self):
        frame = pd.DataFrame({"n_or_t": [0.0, 1.0], "tv": [2.0, 0.8], "v1_norm": np.nan,
                              "v2_norm": np.nan, "envelope_tv": [2.0, 0.6], "envelope_v1": np.nan})
        outcome = self.reporter.revalidate_csv(frame)["envelope_tv"]
        self.assertFalse(outcome["passed"])
        self.assertAlmostEqual(outcome["worst_ratio"], 0.8 / 0.6)

    def test_load_rejects_foreign_header(self):
        path = os.path.join(self.temp_dir, "other.csv")
        pd.DataFrame({"n": [0], "tv": [1.0]}).to_csv(path, index=False)
        with self.assertRaises(ValueError):
            self.reporter.load_decay_csv(path)
        with self.assertRaises(FileNotFoundError):
            self.reporter.load_decay_csv(os.path.join(self.temp_dir, "missing.csv"))

    def test_export_tables(self):
        written = self.reporter.export_rate_tables(self.certified, self.temp_dir, 20)
        self.assertEqual(set(written), set(self.certified.envelopes))
        rates = self.reporter.load_decay_csv(str(written["doeblin_tv"]))
        self.assertEqual(len(rates), 21)
        self.assertAlmostEqual(rates["envelope_tv"].iloc[1], 0.3)

        decays = self.reporter.export_decay_tables(self.certified, self.harness, self.temp_dir, count=2)
        self.assertEqual(set(decays), {"decay_0", "decay_1"})
        for path in decays.values():
            self.assertTrue(Path(path).exists())


if __name__ == '__main__':
    unittest.main()
