from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Optional

from keyscope.audio.filterbank import DEFAULT_BINS_PER_OCTAVE, DEFAULT_F_MAX, DEFAULT_F_MIN, bin_count
from keyscope.evaluation.keys import N_CLASSES
from keyscope.runtime.errors import ConfigError
from keyscope.runtime.workers import VALID_ARCHS, normalize_arch

DEFAULT_N_BINS = bin_count(DEFAULT_F_MIN, DEFAULT_F_MAX, DEFAULT_BINS_PER_OCTAVE)
ALLCONV_MIN_EXTENT = 8

ALLCONV_GRID_NF = (2, 4, 8, 12, 16, 20, 24)
KEYNET_GRID_NF = (8, 16, 24, 32, 40)
GRID_DROPOUT = (0.0, 0.1, 0.2)


@dataclass(frozen=True)
class ArchitectureConfig:
    kind: str
    n_feature_maps: int
    dropout_p: float = 0.0
    n_bins: int = DEFAULT_N_BINS
    n_classes: int = N_CLASSES
    embedding_dim: Optional[int] = None

    def __post_init__(self) -> None:
        kind = normalize_arch(self.kind, default="")
        if kind not in VALID_ARCHS:
            raise ConfigError("unknown_architecture", f"architecture must be one of {sorted(VALID_ARCHS)}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.n_feature_maps < 1:
            raise ConfigError("invalid_feature_maps", f"N_f must be >= 1, got {self.n_feature_maps}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("invalid_dropout", f"dropout probability must be in [0, 1), got {self.dropout_p}")
        if self.n_classes != N_CLASSES:
            raise ConfigError("invalid_classes", f"key models classify {N_CLASSES} classes, got {self.n_classes}")
        if self.n_bins < 1:
            raise ConfigError("invalid_bins", f"n_bins must be positive, got {self.n_bins}")
        if self.embedding_dim is not None and self.embedding_dim < 1:
            raise ConfigError("invalid_embedding", f"embedding_dim must be positive, got {self.embedding_dim}")

    @property
    def embedding_size(self) -> int:
        """KeyNet embedding width; 2*N_f unless overridden."""
        return self.embedding_dim if self.embedding_dim is not None else 2 * self.n_feature_maps

    @property
    def min_frames(self) -> int:
        return ALLCONV_MIN_EXTENT if self.kind == "allconv" else 1

    @property
    def min_bins(self) -> int:
        return ALLCONV_MIN_EXTENT if self.kind == "allconv" else self.n_bins

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArchitectureConfig":
        try:
            return cls(
                kind=str(data["kind"]),
                n_feature_maps=int(data["n_feature_maps"]),
                dropout_p=float(data.get("dropout_p", 0.0)),
                n_bins=int(data.get("n_bins", DEFAULT_N_BINS)),
                n_classes=int(data.get("n_classes", N_CLASSES)),
                embedding_dim=None if data.get("embedding_dim") is None else int(data["embedding_dim"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("invalid_architecture", f"malformed architecture config: {exc}") from exc
