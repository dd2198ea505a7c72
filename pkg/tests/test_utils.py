"""
Tests for Utility Functions
===========================

Tests for the helpers shared by the certification pipeline.
"""

import unittest
import os
import tempfile
import json
import logging
import math
from pathlib import Path

import numpy as np
import yaml

# Add parent directory to path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.utils import (
    setup_logging, load_config, merge_config, config_section, validate_file_path,
    content_hash, to_jsonable, dump_json, save_json, load_json_schema
)


class TestUtils(unittest.TestCase):
    """ทดสอบการทำงานของ Utils"""

    def setUp(self):
        """ตั้งค่าก่อนการทดสอบ"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """ทำความสะอาดหลังการทดสอบ"""
        import shutil
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_setup_logging(self):
        """ทดสอบการตั้งค่า logging"""
        setup_logging(logging.DEBUG)
        root = logging.getLogger()
        self.assertEqual(root.level, logging.DEBUG)
        self.assertEqual(len(root.handlers), 1)
        self.assertIs(root.handlers[0].stream, sys.stderr)
        setup_logging()

    def test_load_config_yaml_file(self):
        """ทดสอบการโหลดไฟล์ config YAML"""
        config_path = os.path.join(self.temp_dir, "config.yaml")
        with open(config_path, "w", encoding="utf-8") as f:
            yaml.safe_dump({"harness": {"seed": 3}}, f)
        self.assertEqual(load_config(config_path), {"harness": {"seed": 3}})

        empty = os.path.join(self.temp_dir, "empty.yaml")
        Path(empty).write_text("", encoding="utf-8")
        self.assertEqual(load_config(empty), {})
        with self.assertRaises(FileNotFoundError):
            load_config(os.path.join(self.temp_dir, "missing.yaml"))

    def test_shipped_config_loads(self):
        config = load_config(str(Path(__file__).parent.parent / "config" / "config.yaml"))
        self.assertIn("harness", config)

    def test_merge_config(self):
        """ทดสอบการรวม config โดยข้ามค่า None"""
        base = {"harness": {"seed": 0, "n_max": 500}, "logging": {"level": "INFO"}}
        merged = merge_config(base, {"harness": {"seed": 9, "n_max": None}})
        self.assertEqual(merged["harness"], {"seed": 9, "n_max": 500})
        self.assertEqual(base["harness"]["seed"], 0)
        self.assertEqual(config_section(merged, "harness", {"slack": 1e-9})["slack"], 1e-9)
        self.assertEqual(config_section(None, "harness", {"slack": 1e-9}), {"slack": 1e-9})

    def test_validate_file_path(self):
        existing = os.path.join(self.temp_dir, "x.txt")
        Path(existing).write_text("x", encoding="utf-8")
        self.assertEqual(validate_file_path(existing), Path(existing))
        with self.assertRaises(FileNotFoundError):
            validate_file_path(os.path.join(self.temp_dir, "nope.txt"))
        nested = validate_file_path(os.path.join(self.temp_dir, "a", "b", "c.txt"), must_exist=False)
        self.assertTrue(nested.parent.exists())

    def test_content_hash(self):
        """ทดสอบ hash ที่คงที่และแยกแยะค่าได้"""
        a = np.array([0.1, 0.2])
        self.assertEqual(content_hash(a, K=1.0), content_hash(a.copy(), K=1.0))
        self.assertNotEqual(content_hash(a, K=1.0), content_hash(a, K=1.0 + 1e-16 * 8))
        self.assertNotEqual(content_hash(a), content_hash(a[::-1]))
        self.assertEqual(len(content_hash(a)), 64)

    def test_to_jsonable(self):
        data = {"array": np.array([1.0, 2.0]), "count": np.int64(3), "flag": np.bool_(True),
                "nan": float("nan"), "inf": math.inf, "pair": (1, 2)}
        converted = to_jsonable(data)
        self.assertEqual(converted, {"array": [1.0, 2.0], "count": 3, "flag": True,
                                     "nan": "nan", "inf": "inf", "pair": [1, 2]})

    def test_dump_and_save_json(self):
        text = dump_json({"b": 1, "a": np.array([0.5])})
        self.assertTrue(text.endswith("\n"))
        self.assertLess(text.index('"a"'), text.index('"b"'))
        path = save_json({"x": 1}, os.path.join(self.temp_dir, "out", "x.json"))
        self.assertEqual(json.loads(path.read_text(encoding="utf-8")), {"x": 1})

    def test_load_json_schema(self):
        schema_path = Path(__file__).parent.parent / "config" / "model_schema.json"
        schema = load_json_schema(str(schema_path))
        self.assertEqual(schema["properties"]["schema_version"]["const"], "1.0")
        with self.assertRaises(FileNotFoundError):
            load_json_schema(os.path.join(self.temp_dir, "missing.json"))


if __name__ == '__main__':
    unittest.main()
