from __future__ import annotations

from dataclasses import dataclass

MIN_IMPROVEMENT = 1e-9


@dataclass(frozen=True)
class StoppingRule:
    """Stop after ``patience`` consecutive evaluations without a strict decrease
    of more than ``min_delta`` in the watched loss."""

    watch: str = "L_o"
    dataset: str = "train"
    patience: int = 5
    min_delta: float = MIN_IMPROVEMENT
    max_steps: int = 10_000

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.watch not in ("L_o", "R_f", "L_f"):
            raise ValueError(f"unknown watched loss {self.watch!r}")
        if self.dataset not in ("train", "holdout"):
            raise ValueError(f"unknown early-stopping set {self.dataset!r}")

    def tracker(self) -> "EarlyStopper":
        return EarlyStopper(self.patience, self.min_delta)


class EarlyStopper:
    def __init__(self, patience: int, min_delta: float = MIN_IMPROVEMENT):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.stale = 0

    def update(self, value: float) -> bool:
        """Record one evaluation; True once the patience is exhausted."""
        if value < self.best - self.min_delta:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience
