"""Adapter configuration; defaults come from the task card."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

# size tier -> (hashed feature buckets, hidden width)
TIERS = {
    "tiny": (512, 64),
    "small": (2048, 128),
}


@dataclass(frozen=True)
class AdapterConfig:
    tier: str = "tiny"
    epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-4
    schedule: str = "constant"
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size >= 1 and learning_rate > 0 required")

    @property
    def feature_dim(self) -> int:
        return TIERS[self.tier][0]

    @property
    def hidden_dim(self) -> int:
        return TIERS[self.tier][1]

    @classmethod
    def from_task_card(
        cls,
        card: dict,
        tier: str = "tiny",
        seed: int = 0,
        epochs: Optional[int] = None,
        batch_size: Optional[int] = None,
        learning_rate: Optional[float] = None,
    ) -> "AdapterConfig":
        """Task card hyperparameters are the defaults; flags may override."""
        hp = card["hyperparameters"]
        return cls(
            tier=tier,
            epochs=epochs if epochs is not None else hp["epochs"],
            batch_size=batch_size if batch_size is not None else hp["batch_size"],
            learning_rate=learning_rate if learning_rate is not None else hp["learning_rate"],
            schedule=hp.get("schedule", "constant"),
            seed=seed,
        )
