import pytest

from ledger_core import ContractViolation, Ledger, Transaction, TxKind
from serial_composition import SerialGate, serial_compose, serial_compose_n


def _snapshot(gate, registry, ids, issuer=None, certify=True):
    ledger = Ledger.of(*ids)
    certificate = registry.issue(issuer or gate.a.name, ledger) if certify else None
    return gate.snapshot_tx(ledger, certificate)


def test_children_must_generate_certificates(registry, static_handle):
    a = static_handle("a", certificates=False)
    b = static_handle("b")
    with pytest.raises(ContractViolation):
        SerialGate(a, b, registry)
    gate = SerialGate(a, b, registry, unchecked=True)
    assert not gate.generates_certificates


def test_latency_bound_adds_up(registry, static_handle):
    gate = serial_compose(static_handle("a", bound=2), static_handle("b", bound=5), registry)
    assert gate.latency_bound == 7


def test_submit_goes_to_first_child(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    gate = serial_compose(a, b, registry)
    gate.submit(Transaction("tx1"), 3)
    assert [(tx.id, t) for tx, t in a.submitted] == [("tx1", 3)]
    assert b.submitted == []


def test_step_posts_snapshot_once_per_change(registry, static_handle):
    a, b = static_handle("a", ["tx1"]), static_handle("b")
    gate = serial_compose(a, b, registry, name="root")
    gate.step(0)
    gate.step(1)
    assert len(b.submitted) == 1
    posted, _ = b.submitted[0]
    assert posted.kind is TxKind.SNAPSHOT
    assert posted.payload.snapshot.ids() == ("tx1",)
    assert registry.verify(posted.payload.certificate, posted.payload.snapshot)

    a.ledger = Ledger.of("tx1", "tx2")
    gate.step(2)
    assert len(b.submitted) == 2


def test_empty_snapshot_is_not_posted(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    serial_compose(a, b, registry).step(0)
    assert b.submitted == []


def test_fold_of_certified_snapshots(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    gate = serial_compose(a, b, registry, name="root")
    records = [
        _snapshot(gate, registry, ["tx1"]),
        Transaction("noise"),
        _snapshot(gate, registry, ["tx1", "tx2"]),
        _snapshot(gate, registry, ["tx1"]),
    ]
    b.ledger = Ledger(tuple(records))
    output, certificate = gate.read_view("c1", 0)
    assert output.ids() == ("tx1", "tx2")
    assert registry.verify(certificate, output)


def test_uncertified_snapshots_are_skipped(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    gate = serial_compose(a, b, registry, name="root")
    b.ledger = Ledger((
        _snapshot(gate, registry, ["evil"], certify=False),
        _snapshot(gate, registry, ["forged"], issuer="someone-else"),
        _snapshot(gate, registry, ["tx1"]),
    ))
    output, _ = gate.read_view("c1", 0)
    assert output.ids() == ("tx1",)
    assert any("uncertified snapshot" in note for note in gate.diagnostics)


def test_snapshots_of_other_gates_are_ignored(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    mine = serial_compose(a, b, registry, name="root.1")
    other = serial_compose(a, b, registry, name="root.2")
    b.ledger = Ledger((_snapshot(other, registry, ["theirs"]), _snapshot(mine, registry, ["ours"])))
    assert mine.read_view("c1", 0)[0].ids() == ("ours",)


def test_unchecked_gate_accepts_everything(registry, static_handle):
    a, b = static_handle("a", certificates=False), static_handle("b", certificates=False)
    gate = serial_compose(a, b, registry, unchecked=True)
    b.ledger = Ledger((_snapshot(gate, registry, ["tx1"], certify=False),
                       _snapshot(gate, registry, ["tx2"], certify=False)))
    assert gate.read_view("c1", 0)[0].ids() == ("tx1", "tx2")


def test_output_follows_the_current_view_of_b(registry, static_handle):
    a, b = static_handle("a"), static_handle("b")
    gate = serial_compose(a, b, registry)
    b.ledger = Ledger((_snapshot(gate, registry, ["tx1", "tx2"]),))
    assert gate.read_view("c1", 0)[0].ids() == ("tx1", "tx2")
    b.ledger = Ledger()
    assert gate.read_view("c1", 1)[0].ids() == ()
    b.ledger = Ledger((_snapshot(gate, registry, ["tx3"]),))
    assert gate.read_view("c1", 2)[0].ids() == ("tx3",)


def test_serial_compose_n_names_intermediate_gates(registry, static_handle):
    chains = [static_handle(name) for name in ("a", "b", "c")]
    root = serial_compose_n(chains, registry, name="root")
    assert root.name == "root"
    assert root.a.name == "root~1"
    assert root.latency_bound == 6
    assert [h.name for h in root.walk()] == ["a", "b", "root~1", "c", "root"]


def test_serial_compose_n_single_and_empty(registry, static_handle):
    only = static_handle("a")
    assert serial_compose_n([only], registry) is only
    with pytest.raises(ContractViolation):
        serial_compose_n([], registry)
