from __future__ import annotations

import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np

from keyscope import model_store
from keyscope.models.builders import build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.models.counting import count_params
from keyscope.runtime.errors import CheckpointError


class ModelStoreTest(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)
        self.batch = np.random.default_rng(0).random((2, 1, 121, 16)).astype(np.float32)

    def _trained_like(self, kind: str, n_f: int):
        model = build_model(ArchitectureConfig(kind=kind, n_feature_maps=n_f, dropout_p=0.1), seed=5)
        for layer in model.layers:
            for name, buffer in layer.buffers().items():
                buffer[...] = np.random.default_rng(len(name)).uniform(0.5, 1.5, buffer.shape)
        return model

    def test_round_trip_is_bit_exact(self) -> None:
        for kind in ("keynet", "allconv"):
            with self.subTest(kind=kind):
                model = self._trained_like(kind, 3)
                path = model_store.save_checkpoint(model, self.tmp / f"{kind}.knet", extra={"best_epoch": 4})
                loaded = model_store.load_checkpoint(path)
                self.assertEqual(loaded.config, model.config)
                self.assertEqual(loaded.signature(), model.signature())
                np.testing.assert_array_equal(
                    loaded.forward(self.batch), model.forward(self.batch)
                )
                self.assertEqual(model_store.read_checkpoint_metadata(path)["extra"], {"best_epoch": 4})

    def test_counts_survive_round_trip(self) -> None:
        model = build_model(ArchitectureConfig(kind="allconv", n_feature_maps=20))
        path = model_store.save_checkpoint(model, self.tmp / "wide.knet")
        self.assertEqual(count_params(model_store.load_checkpoint(path)), count_params(model))

    def test_corrupt_files(self) -> None:
        model = build_model(ArchitectureConfig(kind="allconv", n_feature_maps=1))
        path = model_store.save_checkpoint(model, self.tmp / "ok.knet")
        raw = path.read_bytes()

        cases = {
            "bad_magic": b"XXXX" + raw[4:],
            "version_mismatch": raw[:4] + (99).to_bytes(4, "little") + raw[8:],
            "truncated": raw[: len(raw) // 2],
            "trailing_bytes": raw + b"\0",
        }
        for code, payload in cases.items():
            with self.subTest(code=code):
                broken = self.tmp / f"{code}.knet"
                broken.write_bytes(payload)
                with self.assertRaises(CheckpointError) as ctx:
                    model_store.load_checkpoint(broken)
                self.assertEqual(ctx.exception.code, code)

    def test_unusable_metadata(self) -> None:
        tensors = build_model(ArchitectureConfig(kind="allconv", n_feature_maps=1)).state_dict()
        cases = {
            "bad_feature_maps": {"architecture": {"kind": "allconv", "n_feature_maps": "garbage"}},
            "unknown_kind": {"architecture": {"kind": "wavenet", "n_feature_maps": 1}},
            "no_feature_maps": {"architecture": {"kind": "allconv"}},
            "architecture_not_object": {"architecture": [1, 2]},
            "metadata_not_object": 7,
        }
        for name, metadata in cases.items():
            with self.subTest(case=name):
                broken = self.tmp / f"{name}.knet"
                broken.write_bytes(model_store.encode_checkpoint(tensors, metadata))
                with self.assertRaises(CheckpointError) as ctx:
                    model_store.load_checkpoint(broken)
                self.assertEqual(ctx.exception.code, "bad_metadata")
                self.assertEqual(ctx.exception.exit_status, 1)

    def test_missing_checkpoint(self) -> None:
        with self.assertRaises(CheckpointError) as ctx:
            model_store.load_checkpoint(self.tmp / "absent.knet")
        self.assertEqual(ctx.exception.code, "missing_checkpoint")

    def test_state_dict_mismatch(self) -> None:
        small = build_model(ArchitectureConfig(kind="allconv", n_feature_maps=1))
        large = build_model(ArchitectureConfig(kind="allconv", n_feature_maps=2))
        with self.assertRaises(CheckpointError) as ctx:
            small.load_state_dict(large.state_dict())
        self.assertEqual(ctx.exception.code, "shape_mismatch")
        keynet = build_model(ArchitectureConfig(kind="keynet", n_feature_maps=1))
        with self.assertRaises(CheckpointError) as ctx:
            small.load_state_dict(keynet.state_dict())
        self.assertEqual(ctx.exception.code, "name_mismatch")

    def test_bare_names_resolve_in_model_dir(self) -> None:
        with mock.patch.dict(os.environ, {"KEYSCOPE_MODEL_DIR": str(self.tmp / "models")}, clear=False):
            self.assertEqual(model_store.resolve_checkpoint_path("run1"), (self.tmp / "models" / "run1.knet").resolve())
            self.assertEqual(model_store.resolve_checkpoint_path("sub/run1.knet"), Path("sub/run1.knet"))


if __name__ == "__main__":
    unittest.main()
