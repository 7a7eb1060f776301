from __future__ import annotations

import os
import unittest
from unittest import mock

from keyscope.runtime.workers import normalize_arch, resolve_workers, run_parallel


class WorkersTest(unittest.TestCase):
    def test_resolve_workers_prefers_explicit_then_env(self) -> None:
        with mock.patch.dict(os.environ, {"KEYSCOPE_WORKERS": "3"}, clear=False):
            self.assertEqual(resolve_workers(5), 5)
            self.assertEqual(resolve_workers(), 3)
        with mock.patch.dict(os.environ, {"KEYSCOPE_WORKERS": ""}, clear=False):
            self.assertGreaterEqual(resolve_workers(), 1)

    def test_resolve_workers_falls_back_to_cpu_count(self) -> None:
        for raw in ("", "0", "many"):
            with self.subTest(raw=raw):
                with mock.patch.dict(os.environ, {"KEYSCOPE_WORKERS": raw}, clear=False):
                    with mock.patch("keyscope.runtime.workers.os.cpu_count", return_value=6):
                        self.assertEqual(resolve_workers(), 6)
                    with mock.patch("keyscope.runtime.workers.os.cpu_count", return_value=None):
                        self.assertEqual(resolve_workers(0), 1)

    def test_run_parallel_keeps_input_order_and_captures_errors(self) -> None:
        def square(value: int) -> int:
            if value == 3:
                raise ValueError("three")
            return value * value

        for workers in (1, 4):
            results = run_parallel(square, range(6), workers)
            self.assertEqual([item for item, _, _ in results], list(range(6)))
            self.assertEqual(results[2][1], 4)
            self.assertIsNone(results[3][1])
            self.assertIsInstance(results[3][2], ValueError)

    def test_normalize_arch(self) -> None:
        self.assertEqual(normalize_arch(" KeyNet "), "keynet")
        self.assertEqual(normalize_arch(None), "allconv")
        self.assertEqual(normalize_arch("resnet"), "allconv")


if __name__ == "__main__":
    unittest.main()
