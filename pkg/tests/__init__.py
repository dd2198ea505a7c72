"""
Test suite for the Markov Certification Toolkit
ชุดทดสอบสำหรับระบบรับรองอัตราการลู่เข้าของ Markov kernel

This module collects the tests for every component of the
certification pipeline.
"""

import unittest
import sys
from pathlib import Path

# Add the parent directory to the path so we can import modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from .test_measure_core import TestMeasureCore
from .test_kernel_ops import TestStochasticKernel, TestGeneratorMatrix
from .test_scalar_functions import TestScalarFunctions
from .test_condition_checkers import TestConditionCheckers
from .test_geometric_rates import TestGeometricEnvelope, TestGeometricRates, TestHarrisPowerRate
from .test_subgeometric_rates import (TestRateFunction, TestTransforms, TestDifferenceBounds,
                                      TestComparisonRates, TestPsiBuilder, TestFellerPipeline,
                                      TestInterpolatedEnvelopes)
from .test_continuous_time import TestGeneratorDrift, TestContinuousEnvelopes, TestCesaroInvariant
from .test_model_loader import TestModelLoader
from .test_harness import TestSimulation, TestValidation, TestExistenceAndUniqueness
from .test_certifier import TestCertifier
from .test_reporter import TestReporter
from .test_utils import TestUtils
from .test_main import TestMain


TEST_MAPPING = {
    'measure': [TestMeasureCore],
    'kernel': [TestStochasticKernel, TestGeneratorMatrix],
    'functions': [TestScalarFunctions],
    'checkers': [TestConditionCheckers],
    'geometric': [TestGeometricEnvelope, TestGeometricRates, TestHarrisPowerRate],
    'subgeometric': [TestRateFunction, TestTransforms, TestDifferenceBounds,
                     TestComparisonRates, TestPsiBuilder, TestFellerPipeline,
                     TestInterpolatedEnvelopes],
    'continuous': [TestGeneratorDrift, TestContinuousEnvelopes, TestCesaroInvariant],
    'loader': [TestModelLoader],
    'harness': [TestSimulation, TestValidation, TestExistenceAndUniqueness],
    'certifier': [TestCertifier],
    'reporter': [TestReporter],
    'utils': [TestUtils],
    'main': [TestMain],
}


def create_test_suite(names=None):
    """
    สร้างชุดทดสอบที่รวมทุกการทดสอบ
    Create a test suite from the named groups (all groups by default).
    """
    suite = unittest.TestSuite()
    loader = unittest.TestLoader()
    for name in names or TEST_MAPPING:
        for test_class in TEST_MAPPING[name]:
            suite.addTests(loader.loadTestsFromTestCase(test_class))
    return suite


def run_all_tests():
    """
    รันการทดสอบทั้งหมด
    Run all tests with detailed output.
    """
    print("🧪 เริ่มการทดสอบระบบรับรอง Markov")
    print("🧪 Starting Markov Certification Tests")
    print("=" * 60)

    runner = unittest.TextTestRunner(verbosity=2, buffer=True, failfast=False)
    result = runner.run(create_test_suite())

    passed = result.testsRun - len(result.failures) - len(result.errors)
    print("\n" + "=" * 60)
    print("📊 สรุปผลการทดสอบ / Test Summary:")
    print(f"✅ ทดสอบผ่าน / Tests Passed: {passed}")
    print(f"❌ ทดสอบล้มเหลว / Tests Failed: {len(result.failures)}")
    print(f"💥 ข้อผิดพลาด / Errors: {len(result.errors)}")
    if result.testsRun:
        print(f"📈 อัตราความสำเร็จ / Success Rate: {passed / result.testsRun * 100:.1f}%")

    return result.wasSuccessful()


def run_specific_test(test_name):
    """
    รันการทดสอบเฉพาะ
    Run one group of tests.

    Args:
        test_name (str): Key of TEST_MAPPING
    """
    if test_name not in TEST_MAPPING:
        print(f"❌ ไม่พบการทดสอบ '{test_name}'")
        print(f"❌ Test '{test_name}' not found")
        print(f"✅ การทดสอบที่มี / Available tests: {', '.join(TEST_MAPPING)}")
        return False

    print(f"🧪 รันการทดสอบ {test_name}")
    print(f"🧪 Running {test_name} tests")
    print("-" * 40)

    runner = unittest.TextTestRunner(verbosity=2)
    return runner.run(create_test_suite([test_name])).wasSuccessful()


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Markov Certification Test Runner")
    parser.add_argument('--test', '-t', default=None,
                        help=f"Run specific test group ({', '.join(TEST_MAPPING)})")

    args = parser.parse_args()
    success = run_specific_test(args.test) if args.test else run_all_tests()

    if success:
        print("\n🎉 การทดสอบสำเร็จทั้งหมด!")
        print("🎉 All tests passed successfully!")
        sys.exit(0)
    else:
        print("\n💥 การทดสอบล้มเหลว!")
        print("💥 Some tests failed!")
        sys.exit(1)
