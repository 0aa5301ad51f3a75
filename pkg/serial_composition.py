"""
Serial Composition

Gate that embeds certified snapshots of chain ``a`` into chain ``b``. A
proposer reads ``a`` every tick and posts a snapshot record to ``b`` when its
view changed. Clients read ``b``, keep the snapshot records of this gate in
``b`` order, drop the ones whose certificate does not verify, and left-fold
``clean`` over the remaining snapshots.

Safe if either child is safe; live if both are live, with latency
bound(a) + bound(b).
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ledger_core import (
    EMPTY_LEDGER,
    Certificate,
    CertificateRegistry,
    ContractViolation,
    Ledger,
    Transaction,
    TxKind,
    clean,
    consistent,
)
from underlay import ComposedHandle, LedgerHandle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SnapshotEntry:
    snapshot: Ledger
    certificate: Optional[Certificate]
    position: int
    gate: str


class SerialGate(ComposedHandle):
    """
    Serial composition of two handles.

    Args:
        a: Handle whose snapshots are timestamped.
        b: Handle that orders the snapshots.
        registry: Shared certificate registry.
        name: Unique gate name; also the lane name on the children.
        unchecked: Accept children that do not generate certificates and
            consume snapshots without verifying them.
        auto_snapshot: Post snapshots automatically on every view change.
    """

    def __init__(self, a: LedgerHandle, b: LedgerHandle, registry: CertificateRegistry,
                 name: str = "serial", unchecked: bool = False, auto_snapshot: bool = True):
        if not unchecked:
            for label, child in (("a", a), ("b", b)):
                if not child.generates_certificates:
                    raise ContractViolation(
                        f"serial gate {name}: child {label} ({child.name}) does not generate certificates"
                    )
        super().__init__(name, registry)
        self.a = a
        self.b = b
        self.unchecked = unchecked
        self.auto_snapshot = auto_snapshot
        self.proposer = f"{name}/proposer"
        self._last_posted: Optional[str] = None
        self._counter = itertools.count(1)
        self._fold_cache: Dict[str, Ledger] = {}
        self._reported: set = set()

    @property
    def generates_certificates(self) -> bool:
        return self.a.generates_certificates and self.b.generates_certificates

    @property
    def latency_bound(self) -> int:
        return self.a.latency_bound + self.b.latency_bound

    def children(self) -> List[LedgerHandle]:
        return [self.a, self.b]

    def submit(self, tx: Transaction, t: int):
        self.a.submit(tx, t)

    def snapshot_tx(self, snapshot: Ledger, certificate: Optional[Certificate]) -> Transaction:
        entry = SnapshotEntry(snapshot=snapshot, certificate=certificate, position=-1, gate=self.name)
        return Transaction(f"snp:{self.name}:{next(self._counter)}", payload=entry, kind=TxKind.SNAPSHOT)

    def step(self, t: int):
        if not self.auto_snapshot:
            return
        snapshot, certificate = self.a.read_view(self.proposer, t)
        if len(snapshot) == 0 or snapshot.digest == self._last_posted:
            return
        self.b.submit(self.snapshot_tx(snapshot, certificate), t)
        self._last_posted = snapshot.digest

    def extract_snapshots(self, ledger_b: Ledger) -> List[SnapshotEntry]:
        """Snapshot records of this gate found in ``ledger_b``, with their positions."""
        entries = []
        for position, tx in enumerate(ledger_b):
            if tx.kind is not TxKind.SNAPSHOT:
                continue
            entry = tx.payload
            if not isinstance(entry, SnapshotEntry):
                self._report(tx.id, f"malformed snapshot record {tx.id} skipped")
                continue
            if entry.gate != self.name:
                continue
            entries.append(SnapshotEntry(entry.snapshot, entry.certificate, position, entry.gate))
        return entries

    def is_valid(self, entry: SnapshotEntry) -> bool:
        if self.unchecked:
            return True
        cert = entry.certificate
        return cert is not None and cert.issuer == self.a.name and self.registry.verify(cert, entry.snapshot)

    def fold(self, ledger_b: Ledger) -> Ledger:
        cached = self._fold_cache.get(ledger_b.digest)
        if cached is not None:
            return cached
        result = EMPTY_LEDGER
        previous: Optional[SnapshotEntry] = None
        for entry in self.extract_snapshots(ledger_b):
            if not self.is_valid(entry):
                self._report(f"{entry.position}:{entry.snapshot.digest}",
                             f"uncertified snapshot at position {entry.position} skipped")
                continue
            if (previous is not None and entry.certificate is not None
                    and self.registry.is_strict(entry.certificate.issuer)
                    and not consistent(previous.snapshot, entry.snapshot)):
                self._report(f"breach:{entry.snapshot.digest}",
                             f"certificate soundness breach: conflicting certified snapshots from {entry.certificate.issuer}")
            result = clean(result, entry.snapshot)
            previous = entry
        self._fold_cache[ledger_b.digest] = result
        return result

    def read_view(self, observer: str, t: int) -> Tuple[Ledger, Optional[Certificate]]:
        ledger_b, _ = self.b.read_view(observer, t)
        output = self.fold(ledger_b)
        return output, self.certify(output)

    def _report(self, key: str, message: str):
        if key in self._reported:
            return
        self._reported.add(key)
        self.note(message)


def serial_compose(a: LedgerHandle, b: LedgerHandle, registry: CertificateRegistry,
                   name: str = "serial", **kwargs) -> SerialGate:
    return SerialGate(a, b, registry, name=name, **kwargs)


def serial_compose_n(chains: Sequence[LedgerHandle], registry: CertificateRegistry,
                     name: str = "serial", **kwargs) -> LedgerHandle:
    """Left fold: ((c1 + c2) + c3) + ...; a single handle is returned unchanged."""
    if not chains:
        raise ContractViolation("serial_compose_n needs at least one handle")
    composed = chains[0]
    for i, chain in enumerate(chains[1:], start=1):
        composed = SerialGate(composed, chain, registry,
                              name=name if i == len(chains) - 1 else f"{name}~{i}", **kwargs)
    return composed
