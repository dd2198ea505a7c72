"""
Unit tests for the command-line entry point
การทดสอบสำหรับ main
"""

import unittest
import tempfile
import os
import json
from pathlib import Path
import sys

import yaml

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from main import build_parser, flag_overrides, main
from modules.model_loader import FIXTURE_DIR, fixture_path, list_fixtures


class TestMain(unittest.TestCase):
    """ทดสอบ exit code ของ CLI"""

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.temp_dir = tempfile.mkdtemp()
        self.config_path = os.path.join(self.temp_dir, "config.yaml")
        with open(self.config_path, "w", encoding="utf-8") as f:
            yaml.safe_dump({"harness": {"n_max": 40, "random_measures": 3, "existence_draws": 3},
                            "logging": {"level": "WARNING"}}, f)

    def tearDown(self):
        """ทำความสะอาดหลังการทดสอบ"""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _main(self, *argv):
        return main(["--config", self.config_path, *argv])

    def test_certify_writes_report(self):
        code = self._main("certify", str(fixture_path("doeblin_two_state")), "--out", self.temp_dir)
        self.assertEqual(code, 0)
        report_path = Path(self.temp_dir) / "doeblin_two_state_report.json"
        report = json.loads(report_path.read_text(encoding="utf-8"))
        self.assertEqual(report["outcome"]["exit_code"], 0)
        self.assertEqual(report["envelopes"], {})

    def test_missing_certificate_exit_code(self):
        model = FIXTURE_DIR / "counterexamples" / "coupling_failure.json"
        self.assertEqual(self._main("certify", str(model), "--out", self.temp_dir), 1)

    def test_input_errors(self):
        """ทดสอบ exit code 3 สำหรับข้อผิดพลาดของ input"""
        missing = os.path.join(self.temp_dir, "missing.json")
        self.assertEqual(self._main("certify", missing), 3)
        broken = os.path.join(self.temp_dir, "broken.json")
        Path(broken).write_text(json.dumps({"schema_version": "1.0", "name": "broken",
                                            "kernel": [[0.5, 0.4], [0.5, 0.5]]}), encoding="utf-8")
        self.assertEqual(self._main("certify", broken), 3)
        self.assertEqual(main(["--config", missing, "certify", str(fixture_path("period_two"))]), 3)

    def test_simulate_writes_csv(self):
        code = self._main("simulate", str(fixture_path("harris_three_state")), "--count", "2",
                          "--n-max", "10", "--out", self.temp_dir)
        self.assertEqual(code, 0)
        for index in range(2):
            path = Path(self.temp_dir) / f"harris_three_state_decay_{index}.csv"
            lines = path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(lines[0], "n_or_t,tv,v1_norm,v2_norm,envelope_tv,envelope_v1")
            self.assertEqual(len(lines), 12)

    def test_report_writes_tables(self):
        code = self._main("report", str(fixture_path("doeblin_two_state")), "--n-max", "30",
                          "--out", self.temp_dir)
        self.assertEqual(code, 0)
        self.assertTrue((Path(self.temp_dir) / "doeblin_two_state_decay_0.csv").exists())

    def test_suite_exits_zero_and_is_deterministic(self):
        """ทดสอบ suite ทุก fixture: exit code 0 และรายงานเหมือนกันทุกไบต์"""
        first, second = (os.path.join(self.temp_dir, name) for name in ("first", "second"))
        self.assertEqual(self._main("suite", "--out", first), 0)
        self.assertEqual(self._main("suite", "--out", second), 0)
        reports = sorted(path.name for path in Path(first).glob("*_report.json"))
        self.assertEqual(len(reports), len(list_fixtures()))
        for name in reports:
            self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes(), name)

    def test_flag_overrides(self):
        args = build_parser().parse_args(["rate", "model.json", "--tol", "1e-6", "--seed", "4"])
        overlay = flag_overrides(args)
        self.assertEqual(overlay["harness"], {"slack": 1e-6, "seed": 4})
        self.assertEqual(overlay["subgeometric"], {})


if __name__ == '__main__':
    unittest.main()
