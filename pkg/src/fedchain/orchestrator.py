"""Federated round driver.

One round, per client: fetch the global model from the contract, train it
locally, quantize the result and submit it as a ledger transaction. When the
threshold-crossing submission lands in a block the contract aggregates
in-transaction; the orchestrator then evaluates the new global model on the
held-out set and records the round.

Client training is pure and could run in parallel; all ledger interaction is
funneled through the single-threaded event loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import network as net
from .codec import dequantize, quantize
from .contract import Address, AggregatorContract, MODE_MEAN, MODE_WEIGHTED
from .datasets import Dataset, partition_clients
from .ledger import Ledger, LedgerConfig, SubmitUpdate
from .metrics import MetricsReport, binary_metrics, confusion, multiclass_metrics
from .seeding import derive_rng, derive_seed

TASK_BINARY = "binary"
TASK_MULTICLASS = "multiclass"


class ConfigError(ValueError):
    pass


class StallError(RuntimeError):
    """The ledger kept sealing blocks but aggregation never fired."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = TASK_BINARY
    num_clients: int = 4
    fl_rounds: int = 10
    train: net.TrainConfig = field(default_factory=net.TrainConfig)
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    threshold: int | None = None  # defaults to num_clients
    agg_mode: str = MODE_MEAN
    scale_exponent: int = 6
    seed: int = 0
    width_const: int = 3

    def __post_init__(self):
        if self.task not in (TASK_BINARY, TASK_MULTICLASS):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.num_clients < 1:
            raise ConfigError("num_clients must be at least 1")
        if self.fl_rounds < 1:
            raise ConfigError("fl_rounds must be at least 1")
        if self.threshold is None:
            object.__setattr__(self, "threshold", self.num_clients)
        if not 1 <= self.threshold <= self.num_clients:
            raise ConfigError("threshold must be in [1, num_clients]")
        if self.agg_mode not in (MODE_MEAN, MODE_WEIGHTED):
            raise ConfigError(f"unknown aggregation mode {self.agg_mode!r}")
        if not 1 <= self.scale_exponent <= 12:
            raise ConfigError("scale_exponent must be in [1, 12]")
        if not 1 <= self.width_const <= 10:
            raise ConfigError("width_const must be in [1, 10]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    global_accuracy: float
    global_loss: float
    per_client_train_loss: tuple[float, ...]


def _accuracy_and_loss(model: net.ModelParams, data: Dataset) -> tuple[float, float]:
    probs = net.predict_proba(model, data.features)
    accuracy = float((probs.argmax(axis=1) == data.labels).mean())
    picked = probs[np.arange(len(probs)), data.labels]
    loss = float(-np.log(np.maximum(picked, net.PROB_FLOOR)).mean())
    return accuracy, loss


def evaluate(model: net.ModelParams, test: Dataset) -> MetricsReport:
    """Argmax-classify the test set and build the metrics report."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.feature_dim != model.shape.num_inputs:
        raise ValueError("test feature dim does not match the model")
    predictions = net.predict_proba(model, test.features).argmax(axis=1)
    matrix = confusion(test.labels, predictions, len(test.classes))
    if len(test.classes) == 2:
        return binary_metrics(matrix)
    return multiclass_metrics(matrix)


class FederatedExperiment:
    """Runs the configured number of federated rounds over a fresh ledger."""

    def __init__(self, config: ExperimentConfig, max_stall_blocks: int = 64):
        self.config = config
        self.max_stall_blocks = max_stall_blocks
        self.contract: AggregatorContract | None = None
        self.ledger: Ledger | None = None
        self.global_model: net.ModelParams | None = None
        self.records: list[RoundRecord] = []

    def run(self, shards: list[Dataset], test_data: Dataset) -> list[RoundRecord]:
        cfg = self.config
        if len(shards) != cfg.num_clients:
            raise ConfigError(
                f"got {len(shards)} shards for {cfg.num_clients} clients"
            )
        if any(len(s) == 0 for s in shards):
            raise ConfigError("every client shard must be non-empty")
        classes = test_data.classes
        dims = {s.feature_dim for s in shards} | {test_data.feature_dim}
        if len(dims) != 1:
            raise ConfigError("shards and test data disagree on feature dim")
        if any(s.classes != classes for s in shards):
            raise ConfigError("shards and test data disagree on classes")
        # Aggregation fires on the threshold-crossing submission, so with
        # threshold < num_clients the surplus updates would spill into the
        # next round's storage and desynchronize round accounting.
        if cfg.threshold != cfg.num_clients:
            raise ConfigError(
                "round-aligned experiments need threshold == num_clients"
            )

        shape = net.LayerShape.from_dims(test_data.feature_dim, len(classes),
                                         cfg.width_const)
        initial = net.init_model(shape, derive_seed(cfg.seed, "init"))
        self.contract = AggregatorContract(
            quantize(initial, cfg.scale_exponent, 0), cfg.threshold, cfg.agg_mode
        )
        self.ledger = Ledger(cfg.ledger, self.contract)
        self.records = []

        for round_no in range(1, cfg.fl_rounds + 1):
            self._run_round(round_no, shards, test_data)
        _, final = self.contract.get_global()
        self.global_model = dequantize(final)
        return self.records

    def _run_round(self, round_no: int, shards: list[Dataset],
                   test_data: Dataset) -> None:
        cfg = self.config
        contract, ledger = self.contract, self.ledger
        start_round = contract.round
        _, stored = contract.get_global()
        global_model = dequantize(stored)

        # One shared shuffle seed per round keeps identical shards producing
        # identical updates; distinct shards diverge through their data.
        train_cfg = replace(cfg.train,
                            rng_seed=derive_seed(cfg.seed, "train", round_no))
        local_models = [net.train_local(global_model, shard, train_cfg)
                        for shard in shards]
        client_losses = tuple(
            net.mean_loss(model, shard.features, shard.labels)
            for model, shard in zip(local_models, shards)
        )

        # Clients submit in a seeded random order at seeded offsets within
        # the next block interval; aggregation is order-invariant.
        submit_rng = derive_rng(cfg.seed, "submit", round_no)
        order = submit_rng.permutation(cfg.num_clients)
        times = ledger.clock + np.sort(submit_rng.random(cfg.num_clients)) \
            * cfg.ledger.block_time
        for when, client in zip(times, order):
            update = quantize(local_models[client], cfg.scale_exponent,
                              len(shards[client]))
            ledger.submit(Address.from_int(client + 1), SubmitUpdate(update),
                          now=float(when))

        empty_blocks = 0
        while contract.round <= start_round:
            sealed = ledger.advance_to(ledger.next_seal_time())
            if not any(block.tx_ids for block in sealed):
                empty_blocks += 1
                if empty_blocks > self.max_stall_blocks:
                    raise StallError(
                        f"round {round_no}: no aggregation after "
                        f"{empty_blocks} empty blocks"
                    )

        _, merged = contract.get_global()
        accuracy, loss = _accuracy_and_loss(dequantize(merged), test_data)
        self.records.append(RoundRecord(round_no, accuracy, loss, client_losses))


def run_experiment(config: ExperimentConfig, shards: list[Dataset],
                   test_data: Dataset) -> list[RoundRecord]:
    return FederatedExperiment(config).run(shards, test_data)


def run_centralized_baseline(config: ExperimentConfig, pooled_data: Dataset,
                             test_data: Dataset) -> MetricsReport:
    """Single-model baseline trained on one client-sized stratified shard.

    Uses the same total epoch budget (fl_rounds * epochs) and the same model
    init stream as the federated run, but sees only 1/num_clients of the
    pooled training data, which models a diversity-limited central trainer.
    """
    shard = partition_clients(pooled_data, config.num_clients,
                              derive_seed(config.seed, "baseline-shard"))[0]
    shape = net.LayerShape.from_dims(pooled_data.feature_dim,
                                     len(pooled_data.classes),
                                     config.width_const)
    initial = net.init_model(shape, derive_seed(config.seed, "init"))
    train_cfg = replace(
        config.train,
        epochs=config.fl_rounds * config.train.epochs,
        rng_seed=derive_seed(config.seed, "baseline-train"),
    )
    model = net.train_local(initial, shard, train_cfg)
    return evaluate(model, test_data)


__all__ = [
    "ConfigError", "ExperimentConfig", "FederatedExperiment", "RoundRecord",
    "StallError", "TASK_BINARY", "TASK_MULTICLASS", "evaluate",
    "run_centralized_baseline", "run_experiment",
]
