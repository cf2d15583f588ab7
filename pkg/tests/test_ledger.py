import numpy as np
import pytest

from fedchain.codec import QuantizedUpdate
from fedchain.contract import Address, AggregatorContract
from fedchain.ledger import (GetGlobal, Ledger, LedgerConfig, LedgerError,
                             SubmitUpdate, STATUS_FAILED, STATUS_OK)
from fedchain.network import LayerShape

SHAPE = LayerShape.from_dims(1, 2, 1)
LEN = SHAPE.param_count


def make_update(value=0, length_shape=SHAPE):
    values = np.full(length_shape.param_count, value, dtype=np.int64)
    return QuantizedUpdate(values, 6, length_shape, 1)


def fresh_ledger(block_time=1.0, capacity=256, threshold=10 ** 9):
    contract = AggregatorContract(make_update(), threshold=threshold)
    return Ledger(LedgerConfig(block_time=block_time,
                               max_txs_per_block=capacity), contract)


def submit_n(ledger, n, at=0.0, spacing=0.0):
    ids = []
    for i in range(n):
        ids.append(ledger.submit(Address.from_int(i + 1),
                                 SubmitUpdate(make_update(i)),
                                 now=at + i * spacing))
    return ids


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValueError):
        LedgerConfig(block_time=0.0)
    with pytest.raises(ValueError):
        LedgerConfig(max_txs_per_block=0)
    with pytest.raises(ValueError):
        LedgerConfig(num_validators=3)


# ---------------------------------------------------------------- submission

def test_submit_enters_pool_fifo():
    ledger = fresh_ledger()
    submit_n(ledger, 2)
    assert ledger.pending_count == 2
    [block] = ledger.advance_to(1.0)
    assert block.tx_ids == (0, 1)  # FIFO order preserved


def test_submit_ids_unique():
    ledger = fresh_ledger(capacity=100000)
    ids = [ledger.submit(Address.from_int(1), GetGlobal(), now=0.0)
           for _ in range(10 ** 5)]
    assert len(set(ids)) == 10 ** 5


def test_submissions_must_be_monotone():
    ledger = fresh_ledger()
    ledger.submit(Address.from_int(1), GetGlobal(), now=5.0)
    with pytest.raises(LedgerError):
        ledger.submit(Address.from_int(2), GetGlobal(), now=4.0)


# ---------------------------------------------------------------- sealing

def test_all_pending_confirm_next_block():
    ledger = fresh_ledger(block_time=1.0, capacity=100)
    ids = submit_n(ledger, 10, at=0.0)
    blocks = ledger.advance_to(1.0)
    assert len(blocks) == 1
    for tx_id in ids:
        assert ledger.tx_latency(tx_id) == 1.0
        assert ledger.transactions[tx_id].status == STATUS_OK


def test_empty_blocks_sealed_on_schedule():
    ledger = fresh_ledger(block_time=1.0)
    blocks = ledger.advance_to(3.5)
    assert [b.seal_time for b in blocks] == [1.0, 2.0, 3.0]
    assert all(b.tx_ids == () for b in blocks)
    assert [b.height for b in blocks] == [0, 1, 2]


def test_capacity_backlog_drains_five_five_two():
    ledger = fresh_ledger(block_time=1.0, capacity=5)
    submit_n(ledger, 12, at=0.0)
    blocks = ledger.advance_to(3.0)
    assert [len(b.tx_ids) for b in blocks] == [5, 5, 2]
    # FIFO replay by hand: first five ids in the first block, and so on
    assert blocks[0].tx_ids == tuple(range(5))
    assert blocks[1].tx_ids == tuple(range(5, 10))
    assert blocks[2].tx_ids == tuple(range(10, 12))


def test_tx_arriving_at_seal_instant_waits_for_next_block():
    ledger = fresh_ledger(block_time=1.0)
    early = ledger.submit(Address.from_int(1), GetGlobal(), now=0.999)
    exact = ledger.submit(Address.from_int(2), GetGlobal(), now=1.0)
    ledger.advance_to(2.0)
    assert ledger.tx_latency(early) == pytest.approx(0.001)
    assert ledger.tx_latency(exact) == pytest.approx(1.0)


def test_latency_boundaries_without_congestion():
    ledger = fresh_ledger(block_time=2.0)
    just_after = ledger.submit(Address.from_int(1), GetGlobal(), now=0.01)
    ledger.advance_to(4.0)
    latency = ledger.tx_latency(just_after)
    assert 0.0 < latency <= 2.0


def test_uniform_arrivals_mean_latency_half_block_time():
    ledger = fresh_ledger(block_time=1.0, capacity=10 ** 6)
    rng = np.random.default_rng(99)
    times = np.sort(rng.uniform(0.0, 200.0, size=4000))
    ids = [ledger.submit(Address.from_int(i + 1), GetGlobal(), now=float(t))
           for i, t in enumerate(times)]
    ledger.advance_to(201.0)
    mean = np.mean([ledger.tx_latency(i) for i in ids])
    assert abs(mean - 0.5) < 0.05  # closed-form expectation is block_time/2


def test_advance_cannot_rewind():
    ledger = fresh_ledger()
    ledger.advance_to(5.0)
    with pytest.raises(LedgerError):
        ledger.advance_to(4.0)


# ---------------------------------------------------------------- execution

def test_failed_calls_occupy_slot_but_leave_state():
    contract = AggregatorContract(make_update(), threshold=3)
    ledger = Ledger(LedgerConfig(), contract)
    good = ledger.submit(Address.from_int(1), SubmitUpdate(make_update(5)), 0.0)
    wrong_shape = LayerShape.from_dims(6, 2, 1)
    bad = ledger.submit(Address.from_int(2),
                        SubmitUpdate(make_update(1, wrong_shape)), 0.0)
    dup = ledger.submit(Address.from_int(1), SubmitUpdate(make_update(7)), 0.0)
    [block] = ledger.advance_to(1.0)
    assert block.tx_ids == (good, bad, dup)
    assert ledger.transactions[good].status == STATUS_OK
    assert ledger.transactions[bad].status == STATUS_FAILED
    assert ledger.transactions[dup].status == STATUS_FAILED
    assert contract.total_updates == 1  # only the good call mutated state
    assert ledger.tx_latency(bad) == 1.0  # included, so it has a latency


def test_aggregation_fires_inside_block_execution():
    contract = AggregatorContract(make_update(), threshold=2)
    ledger = Ledger(LedgerConfig(), contract)
    ledger.submit(Address.from_int(1), SubmitUpdate(make_update(2)), 0.0)
    ledger.submit(Address.from_int(2), SubmitUpdate(make_update(4)), 0.0)
    ledger.advance_to(1.0)
    round_no, stored = contract.get_global()
    assert round_no == 1
    assert np.all(stored.values == 3)


def test_heavy_tx_slots_limit_block_capacity():
    ledger = fresh_ledger(capacity=4)
    ledger.submit(Address.from_int(1), GetGlobal(), 0.0, slots=3)
    ledger.submit(Address.from_int(2), GetGlobal(), 0.0, slots=3)
    ledger.submit(Address.from_int(3), GetGlobal(), 0.0)
    blocks = ledger.advance_to(2.0)
    assert [len(b.tx_ids) for b in blocks] == [1, 2]


def test_oversized_tx_still_makes_progress():
    ledger = fresh_ledger(capacity=2)
    ledger.submit(Address.from_int(1), GetGlobal(), 0.0, slots=10)
    [block, _] = ledger.advance_to(2.0)
    assert len(block.tx_ids) == 1


# ---------------------------------------------------------------- accounting

def test_conservation_every_tx_confirmed_or_pending():
    ledger = fresh_ledger(capacity=3)
    submit_n(ledger, 10)
    ledger.advance_to(2.0)
    confirmed = sum(1 for t in ledger.transactions.values()
                    if t.confirm_time is not None)
    assert confirmed + ledger.pending_count == 10


def test_throughput_never_exceeds_capacity():
    ledger = fresh_ledger(block_time=0.5, capacity=7)
    submit_n(ledger, 200)
    blocks = ledger.advance_to(6.0)
    assert all(len(b.tx_ids) <= 7 for b in blocks)
    confirmed = sum(len(b.tx_ids) for b in blocks)
    assert confirmed / 6.0 <= 7 / 0.5 + 1e-9


def test_latency_errors():
    ledger = fresh_ledger()
    tx = ledger.submit(Address.from_int(1), GetGlobal(), 0.0)
    with pytest.raises(LedgerError, match="unknown"):
        ledger.tx_latency(404)
    with pytest.raises(LedgerError, match="not confirmed"):
        ledger.tx_latency(tx)


def test_determinism_identical_history():
    def run():
        ledger = fresh_ledger(block_time=1.0, capacity=3)
        submit_n(ledger, 9, at=0.0, spacing=0.3)
        ledger.advance_to(5.0)
        return [(b.height, b.seal_time, b.proposer, b.tx_ids)
                for b in ledger.blocks]

    assert run() == run()


def test_history_export(tmp_path):
    ledger = fresh_ledger()
    submit_n(ledger, 3)
    ledger.advance_to(1.0)
    path = tmp_path / "history.csv"
    ledger.export_history(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "height,seal_time,tx_id,sender,payload,status,latency"
    assert len(lines) == 4
    assert "submit_update" in lines[1]


def test_proposers_rotate_over_validator_set():
    ledger = fresh_ledger()
    ledger.advance_to(20.0)
    proposers = {b.proposer for b in ledger.blocks}
    assert proposers <= set(range(16))
    assert len(proposers) == 16
