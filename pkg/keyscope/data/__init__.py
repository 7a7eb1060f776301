"""Manifests, splits, chord-derived modes and the synthetic dataset generator."""

from keyscope.data.chords import ChordEvent, ChordQuality, derive_mode_from_chords, label_tonic_segments, load_chord_annotations
from keyscope.data.manifest import ManifestEntry, apply_classical_rule, assign_splits, load_manifest, write_manifest
from keyscope.data.synth import synth_dataset

__all__ = [
    "ChordEvent",
    "ChordQuality",
    "ManifestEntry",
    "apply_classical_rule",
    "assign_splits",
    "derive_mode_from_chords",
    "label_tonic_segments",
    "load_chord_annotations",
    "load_manifest",
    "synth_dataset",
    "write_manifest",
]
