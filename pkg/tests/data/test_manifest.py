from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

from keyscope.data.manifest import (
    UNASSIGNED,
    ManifestEntry,
    apply_classical_rule,
    assign_splits,
    entries_for_split,
    filter_entries_by_datasets,
    fnv1a_64,
    load_manifest,
    write_manifest,
)
from keyscope.runtime.errors import ConfigError, ManifestError

HEADER = "id,path,key,dataset,split,offset_s,duration_s\n"


def _entries(count: int) -> list[ManifestEntry]:
    return [ManifestEntry(id=f"piece-{i:04d}", key="C major", feature_path=Path(f"{i}.kspc")) for i in range(count)]


class LoadManifestTest(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

    def _write(self, body: str) -> Path:
        path = self.tmp / "manifest.csv"
        path.write_text(HEADER + body, encoding="utf-8")
        return path

    def test_well_formed_rows(self) -> None:
        path = self._write(
            "a,audio/a.wav,C major,giantsteps,train,,\n"
            "b,feats/b.kspc,Am,billboard,valid,0,0\n"
            f"c,{self.tmp / 'c.wav'},F# minor,classical,,5,300\n"
        )
        entries = load_manifest(path)
        self.assertEqual([entry.id for entry in entries], ["a", "b", "c"])
        self.assertEqual(entries[0].audio_path, self.tmp / "audio" / "a.wav")
        self.assertIsNone(entries[0].feature_path)
        self.assertEqual(entries[1].feature_path, self.tmp / "feats" / "b.kspc")
        self.assertEqual(entries[1].label.index, 21)
        self.assertEqual(entries[2].split, UNASSIGNED)
        self.assertEqual(entries[2].duration_s, 300.0)
        self.assertTrue(entries[2].is_classical)

    def test_duplicate_id_names_the_id(self) -> None:
        path = self._write("x,a.wav,C major,,,,\nx,b.wav,D major,,,,\n")
        with self.assertRaises(ManifestError) as ctx:
            load_manifest(path)
        self.assertEqual(ctx.exception.code, "duplicate_id")
        self.assertIn("'x'", str(ctx.exception))
        self.assertEqual(ctx.exception.line, 3)

    def test_bad_label_reports_line(self) -> None:
        path = self._write("ok,a.wav,C major,,,,\nbad,b.wav,H major,,,,\n")
        with self.assertRaises(ManifestError) as ctx:
            load_manifest(path)
        self.assertEqual(ctx.exception.code, "bad_label")
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("H major", str(ctx.exception))

    def test_structural_errors(self) -> None:
        cases = {
            "missing_column": "id,path,key\nx,a.wav,C major\n",
            "missing_path": HEADER + "x,,C major,,,,\n",
            "bad_split": HEADER + "x,a.wav,C major,,holdout,,\n",
            "bad_number": HEADER + "x,a.wav,C major,,,-3,\n",
            "missing_id": HEADER + ",a.wav,C major,,,,\n",
        }
        for code, text in cases.items():
            with self.subTest(code=code):
                path = self.tmp / f"{code}.csv"
                path.write_text(text, encoding="utf-8")
                with self.assertRaises(ManifestError) as ctx:
                    load_manifest(path)
                self.assertEqual(ctx.exception.code, code)
        with self.assertRaises(ManifestError) as ctx:
            load_manifest(self.tmp / "absent.csv")
        self.assertEqual(ctx.exception.code, "missing_manifest")

    def test_written_manifest_reloads(self) -> None:
        entries = assign_splits(_entries(10), (0.6, 0.2, 0.2), seed=1)
        entries = [
            ManifestEntry(id=e.id, key=e.key, split=e.split, feature_path=self.tmp / "out" / "feats" / f"{e.id}.kspc")
            for e in entries
        ]
        path = write_manifest(self.tmp / "out" / "manifest.csv", entries)
        first_row = path.read_text().splitlines()[1].split(",")
        self.assertEqual(first_row[1], f"feats/{entries[0].id}.kspc")
        reloaded = load_manifest(path)
        self.assertEqual([(e.id, e.split) for e in reloaded], [(e.id, e.split) for e in entries])
        self.assertEqual(reloaded[0].feature_path.resolve(), entries[0].feature_path.resolve())


class SplitTest(unittest.TestCase):
    def test_fnv_reference_values(self) -> None:
        self.assertEqual(fnv1a_64(b""), 0xCBF29CE484222325)
        self.assertEqual(fnv1a_64(b"a"), 0xAF63DC4C8601EC8C)

    def test_giantsteps_ratio(self) -> None:
        entries = assign_splits(_entries(1000), (0.8, 0.2, 0.0), seed=3)
        self.assertEqual(len(entries_for_split(entries, "train")), 800)
        self.assertEqual(len(entries_for_split(entries, "valid")), 200)
        self.assertEqual(len(entries_for_split(entries, "test")), 0)

    def test_billboard_ratio(self) -> None:
        entries = assign_splits(_entries(8), (0.625, 0.125, 0.25), seed=0)
        counts = [len(entries_for_split(entries, split)) for split in ("train", "valid", "test")]
        self.assertEqual(counts, [5, 1, 2])

    def test_deterministic_and_order_independent(self) -> None:
        entries = _entries(50)
        first = {e.id: e.split for e in assign_splits(entries, (0.7, 0.2, 0.1), seed=9)}
        again = {e.id: e.split for e in assign_splits(list(reversed(entries)), (0.7, 0.2, 0.1), seed=9)}
        self.assertEqual(first, again)
        other = {e.id: e.split for e in assign_splits(entries, (0.7, 0.2, 0.1), seed=10)}
        self.assertNotEqual(first, other)

    def test_assigned_entries_are_left_alone(self) -> None:
        fixed = ManifestEntry(id="fixed", key="C major", split="test", feature_path=Path("f.kspc"))
        result = assign_splits([fixed] + _entries(4), (1.0, 0.0, 0.0), seed=0)
        self.assertEqual(result[0].split, "test")
        self.assertTrue(all(entry.split == "train" for entry in result[1:]))

    def test_bad_ratios(self) -> None:
        for ratios in ((0.5, 0.5), (0.5, 0.6, 0.0), (1.2, -0.2, 0.0)):
            with self.subTest(ratios=ratios):
                with self.assertRaises(ConfigError):
                    assign_splits(_entries(3), ratios, seed=0)


class ClassicalRuleTest(unittest.TestCase):
    def _entry(self, dataset: str, duration: float, offset: float = 12.0) -> ManifestEntry:
        return ManifestEntry(
            id="x", key="C major", dataset=dataset, audio_path=Path("x.wav"), offset_s=offset, duration_s=duration
        )

    def test_caps_classical_pieces(self) -> None:
        capped = apply_classical_rule(self._entry("classical", 300.0))
        self.assertEqual((capped.offset_s, capped.duration_s), (0.0, 30.0))
        self.assertEqual(apply_classical_rule(self._entry("Classical", 20.0)).duration_s, 20.0)
        self.assertEqual(apply_classical_rule(self._entry("classical", 0.0)).duration_s, 30.0)

    def test_other_datasets_unchanged_and_rule_idempotent(self) -> None:
        pop = self._entry("billboard", 300.0)
        self.assertIs(apply_classical_rule(pop), pop)
        once = apply_classical_rule(self._entry("classical", 300.0))
        self.assertEqual(apply_classical_rule(once), once)

    def test_dataset_filter(self) -> None:
        entries = [self._entry("classical", 1.0), self._entry("billboard", 1.0)]
        self.assertEqual(len(filter_entries_by_datasets(entries, ["Classical"])), 1)


if __name__ == "__main__":
    unittest.main()
