"""Discrete-event simulation of a permissioned blockchain.

Blocks are sealed at exact multiples of the block time by a rotating
proposer drawn from a fixed validator set (consensus message exchange is
abstracted away; a delay model could be plugged into ``_seal_block``).
Transactions wait in a single FIFO pool, are drained into blocks up to a
per-block capacity, and execute against the aggregator contract in order.
Failed contract calls occupy their block slot but leave state untouched.

Time is simulated floating-point seconds; nothing depends on wall clock.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .contract import Address, AggregatorContract, ContractError
from .codec import QuantizedUpdate

STATUS_PENDING = "pending"
STATUS_OK = "ok"
STATUS_FAILED = "failed"


class LedgerError(Exception):
    pass


@dataclass(frozen=True)
class LedgerConfig:
    block_time: float = 1.0
    max_txs_per_block: int = 256
    num_validators: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if self.block_time <= 0:
            raise ValueError("block_time must be positive")
        if self.max_txs_per_block < 1:
            raise ValueError("max_txs_per_block must be at least 1")
        # BFT quorum sanity: n >= 3f + 1 with at least one tolerated fault
        if self.num_validators < 4:
            raise ValueError("need at least 4 validators")


@dataclass(frozen=True)
class SubmitUpdate:
    KIND = "submit_update"
    update: QuantizedUpdate


@dataclass(frozen=True)
class GetGlobal:
    KIND = "get_global"


Payload = Union[SubmitUpdate, GetGlobal]


@dataclass(eq=False)
class Transaction:
    tx_id: int
    sender: Address
    payload: Payload
    submit_time: float
    slots: int = 1
    confirm_time: Optional[float] = None
    status: str = STATUS_PENDING
    error: Optional[str] = None


@dataclass(frozen=True)
class Block:
    height: int
    seal_time: float
    proposer: int
    tx_ids: tuple[int, ...]


@dataclass(eq=False)
class Ledger:
    config: LedgerConfig
    contract: AggregatorContract
    clock: float = 0.0
    blocks: list[Block] = field(default_factory=list)
    transactions: dict[int, Transaction] = field(default_factory=dict)
    _pending: deque = field(default_factory=deque)
    _next_id: int = 0
    _last_submit: float = 0.0

    def next_seal_time(self) -> float:
        # multiples of block_time, computed by index so spacing stays exact
        return (len(self.blocks) + 1) * self.config.block_time

    def submit(self, sender: Address, payload: Payload, now: float,
               slots: int = 1) -> int:
        """Queue a transaction at simulated time ``now``; returns its id.

        Submissions must be time-ordered; ``slots`` is the block capacity the
        transaction occupies (heavier calls consume more than one).
        """
        if now < 0:
            raise LedgerError("submission time must be non-negative")
        if now < self._last_submit:
            raise LedgerError(
                f"submissions must be time-ordered ({now} < {self._last_submit})"
            )
        if slots < 1:
            raise LedgerError("slots must be at least 1")
        tx = Transaction(self._next_id, sender, payload, now, slots)
        self.transactions[tx.tx_id] = tx
        self._pending.append(tx)
        self._next_id += 1
        self._last_submit = now
        return tx.tx_id

    def advance_to(self, t: float) -> list[Block]:
        """Move the clock to ``t``, sealing every block due on the way."""
        if t < self.clock:
            raise LedgerError(f"cannot rewind the clock ({t} < {self.clock})")
        sealed = []
        while self.next_seal_time() <= t:
            sealed.append(self._seal_block(self.next_seal_time()))
        self.clock = t
        return sealed

    def _seal_block(self, seal_time: float) -> Block:
        capacity = self.config.max_txs_per_block
        used = 0
        tx_ids: list[int] = []
        while self._pending:
            tx = self._pending[0]
            if tx.submit_time >= seal_time:
                break  # arrived at or after the seal instant; next block
            if tx_ids and used + tx.slots > capacity:
                break
            self._pending.popleft()
            self._execute(tx)
            tx.confirm_time = seal_time
            tx_ids.append(tx.tx_id)
            used += tx.slots
            if used >= capacity:
                break
        block = Block(
            height=len(self.blocks),
            seal_time=seal_time,
            proposer=(self.config.rng_seed + len(self.blocks))
            % self.config.num_validators,
            tx_ids=tuple(tx_ids),
        )
        self.blocks.append(block)
        return block

    def _execute(self, tx: Transaction) -> None:
        try:
            if isinstance(tx.payload, SubmitUpdate):
                self.contract.submit_update(tx.sender, tx.payload.update)
            else:
                self.contract.get_global()
            tx.status = STATUS_OK
        except ContractError as exc:
            tx.status = STATUS_FAILED
            tx.error = str(exc)

    def tx_latency(self, tx_id: int) -> float:
        tx = self.transactions.get(tx_id)
        if tx is None:
            raise LedgerError(f"unknown transaction id {tx_id}")
        if tx.confirm_time is None:
            raise LedgerError(f"transaction {tx_id} is not confirmed yet")
        return tx.confirm_time - tx.submit_time

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def export_history(self, path) -> None:
        """Block/transaction history as CSV, one row per included tx."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["height", "seal_time", "tx_id", "sender",
                             "payload", "status", "latency"])
            for block in self.blocks:
                for tx_id in block.tx_ids:
                    tx = self.transactions[tx_id]
                    writer.writerow([
                        block.height, repr(block.seal_time), tx.tx_id,
                        str(tx.sender), tx.payload.KIND, tx.status,
                        repr(self.tx_latency(tx_id)),
                    ])


__all__ = [
    "Block", "GetGlobal", "Ledger", "LedgerConfig", "LedgerError",
    "SubmitUpdate", "Transaction",
    "STATUS_FAILED", "STATUS_OK", "STATUS_PENDING",
]
