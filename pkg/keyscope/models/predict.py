from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from keyscope.audio.spectrogram import LogFreqSpectrogram
from keyscope.evaluation.keys import KeyLabel
from keyscope.models.model import KeyModel
from keyscope.nn.losses import softmax


@dataclass(frozen=True)
class Prediction:
    distribution: np.ndarray
    label: KeyLabel

    @property
    def confidence(self) -> float:
        return float(self.distribution[self.label.index])


def spectrogram_batch(specs: list[LogFreqSpectrogram]) -> np.ndarray:
    """Stack equal-length spectrograms into (N, 1, bins, frames)."""
    return np.stack([spec.values.T for spec in specs])[:, None, :, :]


def predict_batch(model: KeyModel, batch: np.ndarray) -> list[Prediction]:
    probs = softmax(model.forward(batch, training=False).astype(np.float64))
    return [Prediction(distribution=row, label=KeyLabel.from_index(int(np.argmax(row)))) for row in probs]


def predict(model: KeyModel, spec: LogFreqSpectrogram) -> Prediction:
    """Full-piece inference in infer mode."""
    return predict_batch(model, spectrogram_batch([spec]))[0]
