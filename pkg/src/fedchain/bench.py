"""Workload driver for the simulated ledger.

Generates a seeded transaction stream at a configured send rate against a
fresh ledger + contract, and reports throughput and latency. Two workloads:

* ``submit``    - every transaction stores an update; the aggregation
                  threshold is parked out of reach so it never fires.
* ``aggregate`` - threshold set low, so every threshold-th submission also
                  executes the aggregation loop. That extra compute is
                  modeled as the transaction occupying additional block
                  capacity, proportional to payload size times threshold
                  (the coefficient is a config knob, calibrated so the
                  default sweep shapes match a small permissioned network).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import QuantizedUpdate
from .contract import Address, AggregatorContract, MODE_MEAN
from .ledger import Ledger, LedgerConfig, SubmitUpdate, STATUS_FAILED
from .network import LayerShape, hidden_width
from .seeding import derive_rng, derive_seed

FUNCTION_SUBMIT = "submit"
FUNCTION_AGGREGATE = "aggregate"

# default per-second block capacity; 1s-block submit workloads plateau here
DEFAULT_CAPACITY_TPS = 255.0
# extra slots for an aggregating tx = ceil(coeff * payload_size * threshold)
DEFAULT_AGG_COST_COEFF = 4e-4

_NEVER_AGGREGATE = 2 ** 62


@dataclass(frozen=True)
class WorkloadSpec:
    send_rate: float
    function: str = FUNCTION_SUBMIT
    duration: float = 30.0
    block_time: float = 1.0
    payload_size: int = 512
    threshold: int = 5
    capacity_tps: float = DEFAULT_CAPACITY_TPS
    agg_cost_coeff: float = DEFAULT_AGG_COST_COEFF
    arrival_process: str = "poisson"

    def __post_init__(self):
        if self.function not in (FUNCTION_SUBMIT, FUNCTION_AGGREGATE):
            raise ValueError(f"unknown workload function {self.function!r}")
        if self.send_rate <= 0:
            raise ValueError("send_rate must be positive")
        if self.duration < 10 * self.block_time:
            raise ValueError("duration must cover at least 10 block times")
        if self.payload_size < 1:
            raise ValueError("payload_size must be at least 1")
        if self.threshold < 1:
            raise ValueError("threshold must be at least 1")
        if self.capacity_tps <= 0:
            raise ValueError("capacity_tps must be positive")
        if self.agg_cost_coeff < 0:
            raise ValueError("agg_cost_coeff must be non-negative")
        if self.arrival_process not in ("poisson", "uniform"):
            raise ValueError(f"unknown arrival process {self.arrival_process!r}")


@dataclass(frozen=True)
class BenchResult:
    function: str
    block_time: float
    send_rate: float
    achieved_throughput: float
    mean_latency: float
    p95_latency: float
    failed_tx_count: int


def shape_for_param_count(target: int) -> LayerShape:
    """Smallest-error two-class LayerShape with about ``target`` parameters."""
    if target < 1:
        raise ValueError("target must be at least 1")
    best = None
    for width_const in range(1, 11):
        for num_inputs in range(1, max(2 * target, 8)):
            n = hidden_width(num_inputs, 2, width_const)
            total = n * num_inputs + n + 2 * n + 2
            err = abs(total - target)
            if best is None or err < best[0]:
                best = (err, num_inputs, width_const)
            if total >= target:
                break
    _, num_inputs, width_const = best
    return LayerShape.from_dims(num_inputs, 2, width_const)


def _arrival_times(spec: WorkloadSpec, rng: np.random.Generator) -> np.ndarray:
    cap = math.floor(spec.send_rate * spec.duration)
    if spec.arrival_process == "uniform":
        times = (np.arange(1, cap + 1) / spec.send_rate)
        return times[times < spec.duration]
    times = []
    t = 0.0
    while len(times) < cap:
        t += rng.exponential(1.0 / spec.send_rate)
        if t >= spec.duration:
            break
        times.append(t)
    return np.array(times)


def run_workload(spec: WorkloadSpec, seed: int = 0) -> BenchResult:
    """Drive one workload on a fresh ledger and contract."""
    shape = shape_for_param_count(spec.payload_size)
    payload_len = shape.param_count
    blank = QuantizedUpdate(np.zeros(payload_len, dtype=np.int64), 6, shape, 1)

    aggregate = spec.function == FUNCTION_AGGREGATE
    threshold = spec.threshold if aggregate else _NEVER_AGGREGATE
    contract = AggregatorContract(blank.copy(), threshold, MODE_MEAN)
    ledger = Ledger(
        LedgerConfig(
            block_time=spec.block_time,
            max_txs_per_block=max(1, round(spec.capacity_tps * spec.block_time)),
            num_validators=16,
            rng_seed=seed % 2 ** 32,
        ),
        contract,
    )

    heavy_slots = 1 + math.ceil(spec.agg_cost_coeff * payload_len * spec.threshold)
    rng = derive_rng(seed, "arrivals")
    for i, when in enumerate(_arrival_times(spec, rng)):
        ledger.advance_to(float(when))
        if aggregate:
            sender = Address.from_int(1 + i % spec.threshold)
            slots = heavy_slots if (i + 1) % spec.threshold == 0 else 1
        else:
            sender = Address.from_int(1 + i)
            slots = 1
        ledger.submit(sender, SubmitUpdate(blank), now=float(when), slots=slots)
    ledger.advance_to(spec.duration)

    included = [tx for tx in ledger.transactions.values()
                if tx.confirm_time is not None]
    latencies = np.array([tx.confirm_time - tx.submit_time for tx in included])
    return BenchResult(
        function=spec.function,
        block_time=spec.block_time,
        send_rate=spec.send_rate,
        achieved_throughput=len(included) / spec.duration,
        mean_latency=float(latencies.mean()) if len(latencies) else 0.0,
        p95_latency=float(np.percentile(latencies, 95)) if len(latencies) else 0.0,
        failed_tx_count=sum(tx.status == STATUS_FAILED for tx in included),
    )


def sweep(rates, block_times, function: str = FUNCTION_SUBMIT, seed: int = 0,
          **spec_overrides) -> list[BenchResult]:
    """Cross-product of (block_time, send_rate) runs, each on a fresh ledger."""
    rates = list(rates)
    block_times = list(block_times)
    if not rates or not block_times:
        raise ValueError("rates and block_times must be non-empty")
    results = []
    for block_time in block_times:
        for rate in rates:
            spec = WorkloadSpec(send_rate=rate, function=function,
                                block_time=block_time, **spec_overrides)
            run_seed = derive_seed(seed, function, int(round(rate * 1000)),
                                   int(round(block_time * 1000)))
            results.append(run_workload(spec, run_seed))
    return results


BENCH_CSV_HEADER = ["function", "block_time", "send_rate", "throughput",
                    "mean_latency", "p95_latency", "failed_count"]


def results_csv_rows(results: list[BenchResult]) -> list[list[str]]:
    rows = []
    for r in results:
        rows.append([r.function, repr(r.block_time), repr(r.send_rate),
                     repr(r.achieved_throughput), repr(r.mean_latency),
                     repr(r.p95_latency), str(r.failed_tx_count)])
    return rows


__all__ = [
    "BENCH_CSV_HEADER", "BenchResult", "DEFAULT_AGG_COST_COEFF",
    "DEFAULT_CAPACITY_TPS", "FUNCTION_AGGREGATE", "FUNCTION_SUBMIT",
    "WorkloadSpec", "results_csv_rows", "run_workload",
    "shape_for_param_count", "sweep",
]
