"""Fixed-point encoding of model parameters for on-ledger storage.

Parameters become signed 64-bit integers at a decimal scale (value * 10^s,
rounded half away from zero) in the canonical flat order of ModelParams.
The wire layout, little-endian throughout:

    u32 scale_exponent | u32 num_inputs | u32 num_hidden | u32 num_outputs
    | u32 width_const | u64 dataset_size | i64 values[...]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .network import LayerShape, ModelParams

_HEADER = struct.Struct("<5IQ")


@dataclass(eq=False)
class QuantizedUpdate:
    values: np.ndarray  # (param_count,) int64
    scale_exponent: int
    shape: LayerShape
    dataset_size: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.shape != (self.shape.param_count,):
            raise ValueError(
                f"value count {self.values.shape} does not match shape "
                f"({self.shape.param_count} parameters)"
            )
        if not 1 <= self.scale_exponent <= 12:
            raise ValueError("scale_exponent must be in [1, 12]")
        if self.dataset_size < 0:
            raise ValueError("dataset_size must be non-negative")

    def copy(self) -> "QuantizedUpdate":
        return QuantizedUpdate(self.values.copy(), self.scale_exponent,
                               self.shape, self.dataset_size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedUpdate):
            return NotImplemented
        return (self.scale_exponent == other.scale_exponent
                and self.shape == other.shape
                and self.dataset_size == other.dataset_size
                and np.array_equal(self.values, other.values))


def quantize(model: ModelParams, scale_exponent: int = 6,
             dataset_size: int = 0) -> QuantizedUpdate:
    """Encode each parameter as round_half_away_from_zero(p * 10^scale)."""
    if not 1 <= scale_exponent <= 12:
        raise ValueError("scale_exponent must be in [1, 12]")
    flat = model.flatten()
    if not np.all(np.isfinite(flat)):
        raise OverflowError("model contains non-finite parameters")
    limit = 10.0 ** (18 - scale_exponent)
    worst = float(np.abs(flat).max(initial=0.0))
    if worst >= limit:
        raise OverflowError(
            f"parameter magnitude {worst} too large for scale {scale_exponent} "
            f"(limit {limit})"
        )
    scaled = flat * float(10 ** scale_exponent)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return QuantizedUpdate(rounded.astype(np.int64), scale_exponent,
                           model.shape, dataset_size)


def dequantize(update: QuantizedUpdate) -> ModelParams:
    """Decode integers back to floats: v / 10^scale, canonical order."""
    flat = update.values.astype(np.float64) / float(10 ** update.scale_exponent)
    return ModelParams.unflatten(update.shape, flat)


def to_bytes(update: QuantizedUpdate) -> bytes:
    header = _HEADER.pack(
        update.scale_exponent,
        update.shape.num_inputs,
        update.shape.num_hidden,
        update.shape.num_outputs,
        update.shape.width_const,
        update.dataset_size,
    )
    return header + update.values.astype("<i8").tobytes()


def from_bytes(payload: bytes) -> QuantizedUpdate:
    if len(payload) < _HEADER.size:
        raise ValueError("payload shorter than the fixed header")
    scale, num_in, num_hidden, num_out, width_const, dataset_size = \
        _HEADER.unpack_from(payload)
    shape = LayerShape(num_in, num_hidden, num_out, width_const)
    body = payload[_HEADER.size:]
    if len(body) != 8 * shape.param_count:
        raise ValueError(
            f"payload carries {len(body) // 8} values, shape implies "
            f"{shape.param_count}"
        )
    values = np.frombuffer(body, dtype="<i8").astype(np.int64)
    return QuantizedUpdate(values, scale, shape, dataset_size)


__all__ = ["QuantizedUpdate", "dequantize", "from_bytes", "quantize", "to_bytes"]
