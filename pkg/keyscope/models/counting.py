from __future__ import annotations

from dataclasses import dataclass, field

from keyscope.models.model import KeyModel

EMBEDDING_LAYER = "embed"


@dataclass(frozen=True)
class ParamCount:
    per_layer: dict[str, int] = field(default_factory=dict)
    total: int = 0
    dense_params: int = 0

    @property
    def dense_share(self) -> float:
        return self.dense_params / self.total if self.total else 0.0


def count_params(model: KeyModel) -> ParamCount:
    """Trainable parameter counts per named layer; batch-norm gamma/beta count as trainable."""
    per_layer: dict[str, int] = {}
    for layer in model.layers:
        size = sum(param.size for param in layer.parameters())
        if size:
            per_layer[layer.name] = size
    return ParamCount(
        per_layer=per_layer,
        total=sum(per_layer.values()),
        dense_params=per_layer.get(EMBEDDING_LAYER, 0),
    )
