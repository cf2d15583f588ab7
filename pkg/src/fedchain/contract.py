"""Deterministic state machine for the on-chain model aggregator.

The contract accepts fixed-point model updates from sender addresses and,
once the submission threshold is reached, replaces the stored global model
with the elementwise integer mean (or dataset-size-weighted mean) of the
round's updates. Aggregation happens atomically inside the transaction that
crosses the threshold; failed calls leave the state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import QuantizedUpdate

MODE_MEAN = "mean"
MODE_WEIGHTED = "weighted"


class ContractError(Exception):
    """A contract call that reverts; state is left unchanged."""


class LengthMismatchError(ContractError):
    """Submitted update length differs from the stored global model."""


class DuplicateSubmissionError(ContractError):
    """The sender already submitted an update in the current round."""


@dataclass(frozen=True)
class Address:
    """20-byte account identifier, hex-rendered."""

    raw: bytes

    def __post_init__(self):
        if len(self.raw) != 20:
            raise ValueError(f"addresses are 20 bytes, got {len(self.raw)}")

    @classmethod
    def from_int(cls, value: int) -> "Address":
        return cls(int(value).to_bytes(20, "big"))

    def __str__(self) -> str:
        return "0x" + self.raw.hex()


class AggregatorContract:
    """Aggregator storage plus its two entry points.

    Storage mirrors a per-round mapping layout: ``model_updates[round][sender]``
    keeps every stored update (old rounds are never pruned), ``trainers`` and
    ``total_updates`` track the current round only.
    """

    def __init__(self, initial_model: QuantizedUpdate, threshold: int,
                 mode: str = MODE_MEAN):
        if threshold < 1:
            raise ValueError("threshold must be at least 1")
        if len(initial_model.values) == 0:
            raise ValueError("cannot deploy with a zero-length model")
        if mode not in (MODE_MEAN, MODE_WEIGHTED):
            raise ValueError(f"unknown aggregation mode {mode!r}")
        self.round: int = 0
        self.aggregated_model: QuantizedUpdate = initial_model.copy()
        self.model_updates: dict[int, dict[Address, QuantizedUpdate]] = {0: {}}
        self.trainers: list[Address] = []
        self.total_updates: int = 0
        self.threshold: int = threshold
        self.mode: str = mode

    def submit_update(self, sender: Address, update: QuantizedUpdate) -> None:
        """Store one update; aggregates in the same call at the threshold.

        Submitted updates are kept by reference and must not be mutated by
        the caller afterwards.
        """
        if len(update.values) != len(self.aggregated_model.values):
            raise LengthMismatchError(
                f"update length {len(update.values)} != global model length "
                f"{len(self.aggregated_model.values)}"
            )
        bucket = self.model_updates[self.round]
        if sender in bucket:
            raise DuplicateSubmissionError(
                f"{sender} already submitted in round {self.round}"
            )
        if self.mode == MODE_WEIGHTED and update.dataset_size < 1:
            raise ContractError(
                "weighted aggregation requires dataset_size >= 1 on every update"
            )
        bucket[sender] = update
        self.trainers.append(sender)
        self.total_updates += 1
        if self.total_updates >= self.threshold:
            self._aggregate()

    def get_global(self) -> tuple[int, QuantizedUpdate]:
        """Current round counter and a copy of the stored global model."""
        return self.round, self.aggregated_model.copy()

    def _aggregate(self) -> None:
        bucket = self.model_updates[self.round]
        matrix = np.stack([bucket[t].values for t in self.trainers])
        if self.mode == MODE_MEAN:
            merged = self._floor_mean(matrix)
        else:
            weights = np.array([bucket[t].dataset_size for t in self.trainers],
                               dtype=np.int64)
            merged = self._floor_weighted_mean(matrix, weights)
        self.aggregated_model = QuantizedUpdate(
            merged, self.aggregated_model.scale_exponent,
            self.aggregated_model.shape, 0,
        )
        self.round += 1
        self.model_updates[self.round] = {}
        self.total_updates = 0
        self.trainers = []

    @staticmethod
    def _floor_mean(matrix: np.ndarray) -> np.ndarray:
        count = len(matrix)
        # int64 fast path unless the elementwise sum could overflow
        if int(np.abs(matrix).max(initial=0)) <= (2 ** 63 - 1) // count:
            return np.floor_divide(matrix.sum(axis=0), count)
        totals = [sum(int(v) for v in matrix[:, i]) // count
                  for i in range(matrix.shape[1])]
        return np.array(totals, dtype=np.int64)

    @staticmethod
    def _floor_weighted_mean(matrix: np.ndarray, weights: np.ndarray) -> np.ndarray:
        total_size = int(weights.sum())
        peak = int(np.abs(matrix).max(initial=0)) * int(weights.max(initial=1))
        if peak <= (2 ** 63 - 1) // len(matrix):
            return np.floor_divide((matrix * weights[:, None]).sum(axis=0),
                                   total_size)
        totals = [
            sum(int(w) * int(v) for w, v in zip(weights, matrix[:, i])) // total_size
            for i in range(matrix.shape[1])
        ]
        return np.array(totals, dtype=np.int64)


__all__ = [
    "Address", "AggregatorContract", "ContractError",
    "DuplicateSubmissionError", "LengthMismatchError",
    "MODE_MEAN", "MODE_WEIGHTED",
]
