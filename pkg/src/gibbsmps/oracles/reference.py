"""Common result type for thermal reference values."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

EXACT_SOURCES = ("DenseED", "BdG")
SOURCES = EXACT_SOURCES + ("QMC",)


@dataclass(frozen=True)
class ThermalReference:
    source: str
    beta: float
    energy_density: float
    stderr: float = 0.0
    n_samples: int = 0

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown reference source {self.source!r}")
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")
        if (self.stderr == 0) != (self.source in EXACT_SOURCES):
            raise ValueError("stderr must be zero exactly for exact sources")

    @property
    def exact(self) -> bool:
        return self.source in EXACT_SOURCES

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({"kind": "reference", **asdict(self)})
