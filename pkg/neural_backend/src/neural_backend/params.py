"""Job parameters with the engine's defaults."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class NeuralJobParams:
    """Optimization settings for one appearance-transfer job.

    Unknown keys in the incoming params map are passed through untouched
    and ignored here, so callers can attach their own metadata.
    """

    learning_rate: float = 0.05
    epochs: int = 4000
    device: str = "cpu"
    checkpoint_epochs: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    @classmethod
    def from_mapping(cls, params: dict) -> "NeuralJobParams":
        params = dict(params or {})
        known = {
            "learning_rate": float(params.pop("learning_rate", 0.05)),
            "epochs": int(params.pop("epochs", 4000)),
            "device": str(params.pop("device", "cpu")),
            "checkpoint_epochs": tuple(
                int(e) for e in params.pop("checkpoint_epochs", ())
            ),
        }
        return cls(extra=params, **known)
