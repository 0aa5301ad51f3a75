import pytest

from ledger_core import ContractViolation, Ledger, Transaction, TxKind
from lvl_composition import (
    OVERLAY_GENESIS,
    LvlGate,
    OftKind,
    OftMessage,
    OftState,
    OverlayBlock,
    lvl_compose,
    validated_trace,
)


def _record(gate, kind, epoch, block, sender, tag, ticket=("", ())):
    message = OftMessage(kind, epoch, block, sender, gate, ticket)
    return Transaction(f"oft:{gate}:{sender}:{tag}", payload=message, kind=TxKind.OFT)


@pytest.fixture
def members(static_handle):
    return [static_handle(f"m{j}") for j in range(3)]


@pytest.mark.parametrize("n", [1, 2, 4])
def test_needs_odd_number_of_members(registry, static_handle, n):
    with pytest.raises(ContractViolation):
        LvlGate([static_handle(f"m{j}") for j in range(n)], registry)


def test_timing_parameters(registry, members):
    gate = lvl_compose(members, registry, name="root")
    assert gate.f == 1
    assert gate.c == 2
    assert gate.epoch_length == 6
    assert gate.latency_bound == 2 * 6 + 3 * 2
    assert gate.nominal_latency_bound == 3 * 2 + 3 * 2
    assert gate.epoch_position(0) == (1, 0)
    assert gate.epoch_position(7) == (2, 1)
    assert [gate.leader_of(v) for v in (1, 2, 3, 4)] == [1, 2, 0, 1]


def test_overlay_blocks_chain_their_ledgers():
    first = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    second = OverlayBlock(2, first, 2, (Transaction("tx2"),), proposer=2)
    assert second.ledger.ids() == ("tx1", "tx2")
    assert second.extends(first)
    assert not first.extends(second)
    assert first == OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)


def test_validated_trace_cuts_at_invalid_transition():
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (), proposer=1)
    ledger = Ledger((
        _record("root", OftKind.PROPOSE, 1, block, 1, "a"),
        Transaction("user-tx"),
        _record("other", OftKind.ACK, 1, block, 1, "b"),
        _record("root", OftKind.ACK, 1, block, 1, "c"),
        _record("root", OftKind.PROPOSE, 1, block, 1, "d"),
        _record("root", OftKind.ACK, 2, block, 1, "e"),
    ))
    trace = validated_trace(ledger, "root", sender=1, n=3, f=1)
    assert [m.kind for m in trace] == [OftKind.PROPOSE, OftKind.ACK]


def test_validated_trace_rejects_foreign_sender_and_non_leader():
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (), proposer=1)
    foreign = Ledger((_record("root", OftKind.ACK, 1, block, 2, "a"),))
    assert validated_trace(foreign, "root", sender=1, n=3, f=1) == []
    non_leader = Ledger((_record("root", OftKind.PROPOSE, 1, block, 0, "a"),))
    assert validated_trace(non_leader, "root", sender=0, n=3, f=1) == []


def test_proposal_after_first_epoch_needs_ticket():
    block = OverlayBlock(1, OVERLAY_GENESIS, 2, (), proposer=2)
    bare = Ledger((_record("root", OftKind.PROPOSE, 2, block, 2, "a"),))
    assert validated_trace(bare, "root", sender=2, n=3, f=1) == []
    ticketed = Ledger((_record("root", OftKind.PROPOSE, 2, block, 2, "a", ("ack", (0, 1))),))
    assert len(validated_trace(ticketed, "root", sender=2, n=3, f=1)) == 1


def test_epoch_certificate_needs_f_plus_one_acks():
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (), proposer=1)
    state = OftState(f=1)
    state.absorb([OftMessage(OftKind.ACK, 1, block, 0, "root")])
    assert state.certificate(1) is None
    state.absorb([OftMessage(OftKind.ACK, 1, block, 2, "root")])
    certificate = state.certificate(1)
    assert certificate.block == block
    assert certificate.acks == frozenset({0, 2})
    assert state.certificate(0).block == OVERLAY_GENESIS


def test_clients_accept_blocks_with_f_plus_one_acks(registry, members):
    gate = LvlGate(members, registry, name="root")
    first = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    second = OverlayBlock(2, first, 2, (Transaction("tx2"),), proposer=2)
    members[0].ledger = Ledger((_record("root", OftKind.ACK, 1, first, 0, "a"),
                                _record("root", OftKind.ACK, 2, second, 0, "b")))
    members[1].ledger = Ledger((_record("root", OftKind.ACK, 1, first, 1, "a"),))
    output, _ = gate.read_view("c1", 0)
    assert output.ids() == ("tx1",)

    members[2].ledger = Ledger((_record("root", OftKind.ACK, 2, second, 2, "a"),))
    output, _ = gate.read_view("c1", 1)
    assert output.ids() == ("tx1", "tx2")


def test_single_ack_is_not_enough(registry, members):
    gate = LvlGate(members, registry, name="root")
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    members[2].ledger = Ledger((_record("root", OftKind.ACK, 1, block, 2, "a"),))
    assert len(gate.read_view("c1", 0)[0]) == 0


def test_commit_record_relays_a_certificate(registry, members):
    gate = LvlGate(members, registry, name="root")
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    relay = _record("root", OftKind.COMMIT, 1, block, 2, "a", ("ack", (0, 1)))
    members[2].ledger = Ledger((relay,))
    assert gate.read_view("c1", 0)[0].ids() == ("tx1",)

    state = OftState(f=1)
    state.absorb([relay.payload])
    assert state.certificate(1).acks == frozenset({0, 1})


def test_commit_record_needs_f_plus_one_acks():
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (), proposer=1)
    thin = Ledger((_record("root", OftKind.COMMIT, 1, block, 2, "a", ("ack", (2,))),))
    assert validated_trace(thin, "root", sender=2, n=3, f=1) == []


def test_validators_relay_certificates_they_see(registry, members):
    gate = LvlGate(members, registry, name="root")
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    members[0].ledger = Ledger((_record("root", OftKind.ACK, 1, block, 0, "a"),))
    members[2].ledger = Ledger((_record("root", OftKind.ACK, 1, block, 2, "a"),))
    gate.step(1)
    for member in members:
        relays = [tx.payload for tx, _ in member.submitted if tx.payload.kind is OftKind.COMMIT]
        assert len(relays) == 1
        assert relays[0].block == block
        assert relays[0].ticket == ("ack", (0, 2))
    gate.step(2)
    assert sum(1 for tx, _ in members[0].submitted if tx.payload.kind is OftKind.COMMIT) == 1


def test_leader_uses_a_relayed_certificate_as_ticket(registry, members):
    gate = LvlGate(members, registry, name="root")
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (Transaction("tx1"),), proposer=1)
    members[0].ledger = Ledger((_record("root", OftKind.COMMIT, 1, block, 0, "a", ("ack", (0, 1))),))
    gate.step(gate.epoch_length)
    proposals = [tx.payload for tx, _ in members[2].submitted if tx.payload.kind is OftKind.PROPOSE]
    assert len(proposals) == 1
    assert proposals[0].epoch == 2
    assert proposals[0].block.parent == block
    assert proposals[0].ticket == ("ack", (0, 1))



def test_leader_proposes_at_epoch_start(registry, members):
    gate = LvlGate(members, registry, name="root")
    members[1].ledger = Ledger.of("tx1")
    gate.step(0)
    proposals = [(tx, t) for tx, t in members[1].submitted if tx.payload.kind is OftKind.PROPOSE]
    assert len(proposals) == 1
    block = proposals[0][0].payload.block
    assert block.epoch == 1
    assert block.ledger.ids() == ("tx1",)
    assert all(not m.submitted for j, m in enumerate(members) if j != 1)


def test_submit_reaches_every_member(registry, members):
    gate = LvlGate(members, registry)
    gate.submit(Transaction("tx1"), 0)
    assert all(m.submitted[0][0].id == "tx1" for m in members)


def test_split_validator_adds_replicas(registry, members):
    gate = LvlGate(members, registry, name="root")
    writes = []
    gate.split_validator(1, [("c1@0", lambda tx, t: writes.append(("b0", tx))),
                             ("c1@1", lambda tx, t: writes.append(("b1", tx)))])
    assert len(gate.validators) == 4
    assert sorted(v.index for v in gate.validators) == [0, 1, 1, 2]
    members[1].ledger = Ledger.of("tx1")
    gate.step(0)
    assert sorted(branch for branch, _ in writes) == ["b0", "b1"]
    assert gate.message_log(1)[0]["kind"] == "propose"


def test_mempool_skips_fork_markers_and_repeats(registry, members):
    gate = LvlGate(members, registry, name="root")
    members[1].ledger = Ledger((
        Transaction("fork:chain2:1:root", kind=TxKind.FORK),
        Transaction("tx1"),
        Transaction("tx1"),
        Transaction("tx2"),
    ))
    gate.step(0)
    proposals = [tx.payload for tx, _ in members[1].submitted if tx.payload.kind is OftKind.PROPOSE]
    assert proposals[0].block.ledger.ids() == ("tx1", "tx2")


def test_trace_ignores_repeated_records(registry, members):
    gate = LvlGate(members, registry, name="root")
    block = OverlayBlock(1, OVERLAY_GENESIS, 1, (), proposer=1)
    ack = _record("root", OftKind.ACK, 1, block, 0, "a")
    down = _record("root", OftKind.LEADER_DOWN, 1, block, 0, "b")
    assert [m.kind for m in gate.trace(Ledger((ack, ack, down)), 0)] == [OftKind.ACK, OftKind.LEADER_DOWN]
