"""
Unit tests for model_loader module
การทดสอบสำหรับโมดูลโหลดโมเดล
"""

import unittest
import tempfile
import os
import json
from pathlib import Path
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.model_loader import ModelLoader, ModelValidationError, fixture_path, list_fixtures


def minimal_model(**extra):
    raw = {"schema_version": "1.0", "name": "test", "kernel": [[0.7, 0.3], [0.4, 0.6]]}
    raw.update(extra)
    return raw


class TestModelLoader(unittest.TestCase):
    """ทดสอบการทำงานของ ModelLoader"""

    def setUp(self):
        """ตั้งค่าเริ่มต้นสำหรับการทดสอบ"""
        self.loader = ModelLoader()
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """ทำความสะอาดหลังการทดสอบ"""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_load_fixture(self):
        """ทดสอบการโหลด fixture ที่มากับโปรเจกต์"""
        model = self.loader.load(fixture_path("doeblin_two_state"))
        self.assertEqual(model.name, "doeblin_two_state")
        self.assertEqual(model.size, 2)
        self.assertEqual(model.space.labels, ("a", "b"))
        self.assertFalse(model.continuous)
        np.testing.assert_array_equal(model.weight, [1.0, 1.0])
        self.assertEqual(model.expect["certificates"], ["doeblin"])
        self.assertTrue(model.input_hash)

    def test_every_fixture_loads(self):
        fixtures = list_fixtures()
        self.assertGreaterEqual(len(fixtures), 5)
        for path in fixtures:
            model = self.loader.load(path)
            self.assertEqual(model.name, path.stem)

    def test_generator_fixture(self):
        model = self.loader.load(fixture_path("birth_death_ctmc.json"))
        self.assertTrue(model.continuous)
        self.assertEqual(model.size, 20)
        self.assertEqual(model.T, 10)

    def test_unknown_fixture(self):
        with self.assertRaises(FileNotFoundError):
            fixture_path("no_such_model")

    def test_row_sum_violation(self):
        """ทดสอบแถวที่ผลรวมไม่เท่ากับ 1"""
        raw = minimal_model(kernel=[[0.6, 0.3], [0.4, 0.6]])
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(raw)
        self.assertEqual(ctx.exception.path, "$.kernel[0]")
        self.assertTrue(str(ctx.exception).startswith("$.kernel[0]"))

    def test_negative_and_ragged_rows(self):
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(kernel=[[1.2, -0.2], [0.4, 0.6]]))
        self.assertEqual(ctx.exception.path, "$.kernel[0][1]")
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(kernel=[[0.7, 0.3], [1.0]]))
        self.assertEqual(ctx.exception.path, "$.kernel[1]")

    def test_generator_rows(self):
        raw = {"schema_version": "1.0", "name": "gen", "generator": [[-1.0, 1.0], [2.0, -1.0]]}
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(raw)
        self.assertEqual(ctx.exception.path, "$.generator[1]")
        raw["generator"] = [[-1.0, 1.0], [2.0, -2.0]]
        model = self.loader.from_dict(raw)
        self.assertTrue(model.continuous)
        self.assertEqual(model.T, 1.0)

    def test_schema_errors(self):
        """ทดสอบข้อผิดพลาดจาก JSON schema"""
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(schema_version="2.0"))
        self.assertEqual(ctx.exception.path, "$.schema_version")
        raw = minimal_model()
        del raw["name"]
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(raw)
        self.assertEqual(ctx.exception.path, "$")
        with self.assertRaises(ModelValidationError):
            self.loader.from_dict(minimal_model(weight_V=[0.5, 1.0]))

    def test_malformed_json(self):
        path = os.path.join(self.temp_dir, "broken.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write('{"name": ')
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.load(path)
        self.assertEqual(ctx.exception.path, "$")

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            self.loader.load(os.path.join(self.temp_dir, "missing.json"))

    def test_load_from_file(self):
        path = os.path.join(self.temp_dir, "model.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(minimal_model(weight_V=[1, 3]), f)
        model = self.loader.load(path)
        np.testing.assert_array_equal(model.V, [1.0, 3.0])

    def test_polynomial_index_weights(self):
        """ทดสอบ weight แบบ (offset + i)^power"""
        model = self.loader.from_dict(minimal_model(
            kernel=[[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]],
            weight_V={"tag": "polynomial_index", "power": 2},
            weight_V2={"tag": "polynomial_index", "power": 3, "offset": 2}))
        np.testing.assert_allclose(model.V, [1.0, 4.0, 9.0])
        np.testing.assert_allclose(model.V2, [8.0, 27.0, 64.0])

    def test_geometric_index_weights(self):
        model = self.loader.from_dict(minimal_model(
            kernel=[[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]],
            weight_V={"tag": "geometric_index", "base": 1.5},
            weight_V2={"tag": "geometric_index", "base": 2}))
        np.testing.assert_allclose(model.V, [1.0, 1.5, 2.25])
        np.testing.assert_allclose(model.V2, [1.0, 2.0, 4.0])
        with self.assertRaises(ModelValidationError):
            self.loader.from_dict(minimal_model(weight_V={"tag": "geometric_index", "base": 1.0}))

    def test_weight_order(self):
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(weight_V=[1, 5], weight_V2=[2, 3]))
        self.assertEqual(ctx.exception.path, "$.weight_V2[1]")
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(weight_V=[1, 2, 3]))
        self.assertEqual(ctx.exception.path, "$.weight_V")

    def test_functions(self):
        """ทดสอบการอ่าน phi และ psi"""
        model = self.loader.from_dict(minimal_model(
            weight_V=[1, 4], phi={"tag": "power", "p": 0.5}, harris_R=10,
            psi={"tag": "polynomial_builder", "eps": 0.2}))
        self.assertEqual(model.phi.role, "phi")
        self.assertAlmostEqual(model.psi(1.0), 1.0)
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(psi={"tag": "polynomial_builder"}))
        self.assertEqual(ctx.exception.path, "$.psi")
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(phi={"tag": "power", "p": 2.0}))
        self.assertEqual(ctx.exception.path, "$.phi")
        with self.assertRaises(ModelValidationError) as ctx:
            self.loader.from_dict(minimal_model(phi2={"tag": "polynomial_builder"}))
        self.assertEqual(ctx.exception.path, "$.phi2.tag")


if __name__ == '__main__':
    unittest.main()
