"""
Triangular (lvl) Composition

Runs an omission-fault-tolerant BFT overlay with n = 2f+1 emulated
validators. Validator j is hosted by child j: it writes its protocol
messages (propose, ack, leader-down, commit records) to its lane of child j
and reads every child to learn the messages of the others.

Timing, with c the largest child latency bound and T the epoch duration:

    epoch length   E = ceil(3c / T) * T
    epoch v >= 1   starts at (v - 1) * E; leader is v mod n
    start          leader proposes (needs a ticket from epoch v - 1)
    start + c      validators ack the epoch-v proposal they observed
    start + 2c     validators without an epoch-v certificate send leader-down

f+1 acks for the same block form its epoch certificate. Clients accept a
block as soon as they see its certificate on the children. A validator that
sees a certificate relays it as a commit record on its hosting child, so
clients and later leaders that missed some acks can still use it.

Safe if every child is safe; live if at least f+1 children are live.
"""

import hashlib
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from ledger_core import (
    EMPTY_LEDGER,
    Certificate,
    CertificateRegistry,
    ContractViolation,
    Ledger,
    Transaction,
    TxKind,
    clean,
)
from underlay import ComposedHandle, LedgerHandle

logger = logging.getLogger(__name__)


class OftKind(Enum):
    PROPOSE = "propose"
    ACK = "ack"
    LEADER_DOWN = "leader-down"
    COMMIT = "commit"


class OverlayBlock:
    """Overlay block; identity is its digest."""

    def __init__(self, height: int, parent: Optional["OverlayBlock"], epoch: int,
                 txs: Tuple[Transaction, ...] = (), proposer: int = -1):
        self.height = height
        self.parent = parent
        self.epoch = epoch
        self.txs = tuple(txs)
        self.proposer = proposer

    @property
    def parent_digest(self) -> Optional[str]:
        return self.parent.digest if self.parent is not None else None

    @cached_property
    def digest(self) -> str:
        body = f"{self.height}|{self.parent_digest or ''}|{self.epoch}|{self.proposer}|" + ",".join(tx.id for tx in self.txs)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    @cached_property
    def ledger(self) -> Ledger:
        if self.parent is None:
            return Ledger(self.txs)
        return Ledger(self.parent.ledger.txs + self.txs)

    @cached_property
    def ancestry(self) -> FrozenSet[str]:
        """Digests of this block and all its ancestors."""
        if self.parent is None:
            return frozenset({self.digest})
        return self.parent.ancestry | {self.digest}

    def extends(self, other: "OverlayBlock") -> bool:
        return other.digest in self.ancestry

    def sort_key(self) -> Tuple[int, int, str]:
        return (self.height, self.epoch, self.digest)

    def __eq__(self, other):
        return isinstance(other, OverlayBlock) and other.digest == self.digest

    def __hash__(self):
        return hash(self.digest)

    def __repr__(self):
        return f"OverlayBlock(h={self.height}, epoch={self.epoch}, {self.digest[:8]})"


OVERLAY_GENESIS = OverlayBlock(0, None, 0)


@dataclass(frozen=True)
class OftMessage:
    kind: OftKind
    epoch: int
    block: OverlayBlock
    sender: int
    gate: str
    ticket: Tuple[str, Tuple[int, ...]] = ("", ())


@dataclass(frozen=True)
class EpochCertificate:
    block: OverlayBlock
    epoch: int
    acks: FrozenSet[int]


def validated_trace(ledger: Ledger, gate: str, sender: int, n: int, f: int) -> List[OftMessage]:
    """
    Messages of one validator, cut at the first invalid transition.

    Invalid transitions: a malformed record, a record claiming another
    sender, a second proposal/ack/leader-down for an epoch, epochs going
    backwards, a proposal by a non-leader or without ticket, a leader-down
    not carrying the highest block the validator acked, a commit record
    relaying fewer than f+1 acks.
    """
    messages: List[OftMessage] = []
    seen: Set[Tuple[OftKind, int]] = set()
    last_epoch = {OftKind.PROPOSE: 0, OftKind.ACK: 0, OftKind.LEADER_DOWN: 0}
    highest_ack = OVERLAY_GENESIS
    for tx in ledger:
        if tx.kind is not TxKind.OFT:
            continue
        msg = tx.payload
        if not isinstance(msg, OftMessage):
            logger.debug(f"{gate}: malformed record {tx.id} from validator {sender}")
            break
        if msg.gate != gate:
            continue
        if msg.sender != sender:
            break
        if msg.kind is not OftKind.COMMIT:
            if (msg.kind, msg.epoch) in seen or msg.epoch < last_epoch[msg.kind] or msg.epoch < 1:
                break
        if msg.kind is OftKind.PROPOSE:
            if msg.epoch % n != sender or msg.block.epoch != msg.epoch:
                break
            if msg.epoch > 1 and len(msg.ticket[1]) < f + 1:
                break
        elif msg.kind is OftKind.ACK:
            if msg.block.epoch != msg.epoch:
                break
            highest_ack = msg.block
        elif msg.kind is OftKind.LEADER_DOWN:
            if msg.block != highest_ack:
                break
        elif msg.kind is OftKind.COMMIT:
            if msg.block.epoch != msg.epoch or len(msg.ticket[1]) < f + 1:
                break
        if msg.kind is not OftKind.COMMIT:
            seen.add((msg.kind, msg.epoch))
            last_epoch[msg.kind] = msg.epoch
        messages.append(msg)
    return messages


@dataclass
class OftState:
    """Aggregated protocol state seen through a set of validator traces."""
    f: int
    proposals: Dict[int, OverlayBlock] = field(default_factory=dict)
    acks: Dict[Tuple[int, str], Set[int]] = field(default_factory=lambda: defaultdict(set))
    leader_downs: Dict[int, Dict[int, OverlayBlock]] = field(default_factory=lambda: defaultdict(dict))
    relays: Dict[Tuple[int, str], FrozenSet[int]] = field(default_factory=dict)
    blocks: Dict[str, OverlayBlock] = field(default_factory=dict)

    def absorb(self, messages: Sequence[OftMessage]):
        for msg in messages:
            self.blocks[msg.block.digest] = msg.block
            if msg.kind is OftKind.PROPOSE:
                self.proposals.setdefault(msg.epoch, msg.block)
            elif msg.kind is OftKind.ACK:
                self.acks[(msg.epoch, msg.block.digest)].add(msg.sender)
            elif msg.kind is OftKind.LEADER_DOWN:
                self.leader_downs[msg.epoch][msg.sender] = msg.block
            elif msg.kind is OftKind.COMMIT:
                key = (msg.epoch, msg.block.digest)
                senders = frozenset(msg.ticket[1])
                if len(senders) > len(self.relays.get(key, ())):
                    self.relays[key] = senders

    def certificate(self, epoch: int) -> Optional[EpochCertificate]:
        if epoch == 0:
            return EpochCertificate(OVERLAY_GENESIS, 0, frozenset())
        for (e, digest), senders in self.acks.items():
            if e == epoch and len(senders) >= self.f + 1:
                return EpochCertificate(self.blocks[digest], epoch, frozenset(senders))
        for (e, digest), senders in self.relays.items():
            if e == epoch and len(senders) >= self.f + 1:
                return EpochCertificate(self.blocks[digest], epoch, senders)
        return None

    def certified(self) -> List[EpochCertificate]:
        epochs = sorted({e for e, _ in self.acks} | {e for e, _ in self.relays})
        return [cert for cert in map(self.certificate, epochs) if cert is not None]


class EmulatedValidator:
    """
    One overlay validator executed on its hosting child.

    Args:
        gate: The owning gate.
        index: Validator index j (hosted by child j).
        observer: Observer id used for every read.
        writer: Callable ``(tx, t)`` that posts a record on the hosting child.
        host: Handle the validator reads its mempool from.
    """

    def __init__(self, gate: "LvlGate", index: int, observer: str,
                 writer: Callable[[Transaction, int], None], host: LedgerHandle):
        self.gate = gate
        self.index = index
        self.observer = observer
        self.writer = writer
        self.host = host
        self.highest_acked: Tuple[OverlayBlock, int] = (OVERLAY_GENESIS, 0)
        self.committed: Set[str] = {OVERLAY_GENESIS.digest}
        self.sent: List[OftMessage] = []
        self.state = OftState(gate.f)
        self._done: Set[Tuple[OftKind, int]] = set()
        self._digests: Tuple[str, ...] = ()
        self._counter = itertools.count(1)

    # -- helpers -----------------------------------------------------------

    def _emit(self, kind: OftKind, epoch: int, block: OverlayBlock, t: int,
              ticket: Tuple[str, Tuple[int, ...]] = ("", ())) -> OftMessage:
        msg = OftMessage(kind, epoch, block, self.index, self.gate.name, ticket)
        tx_id = f"oft:{self.gate.name}:{self.observer}:{next(self._counter)}"
        self.writer(Transaction(tx_id, payload=msg, kind=TxKind.OFT), t)
        self.sent.append(msg)
        if kind is not OftKind.COMMIT:
            self._done.add((kind, epoch))
        logger.debug(f"{self.gate.name}: v{self.index} {kind.value} epoch {epoch} {block!r} at {t}")
        return msg

    def ingest(self, t: int):
        """Read every child and rebuild the aggregated state if anything changed."""
        views = [child.read_view(self.observer, t)[0] for child in self.gate.members]
        digests = tuple(view.digest for view in views)
        if digests == self._digests:
            return
        self._digests = digests
        state = OftState(self.gate.f)
        for j, view in enumerate(views):
            state.absorb(self.gate.trace(view, j))
        self.state = state

    def mempool(self, t: int, parent: OverlayBlock) -> Tuple[Transaction, ...]:
        view, _ = self.host.read_view(self.observer, t)
        known = set(parent.ledger.id_set)
        picked = []
        for tx in view:
            if tx.id in known or tx.kind is TxKind.FORK:
                continue
            if tx.kind is TxKind.OFT and isinstance(tx.payload, OftMessage) and tx.payload.gate == self.gate.name:
                continue
            known.add(tx.id)
            picked.append(tx)
        return tuple(picked)

    # -- protocol steps ----------------------------------------------------

    def on_epoch_enter(self, v: int, t: int) -> Optional[OftMessage]:
        if self.gate.leader_of(v) != self.index or (OftKind.PROPOSE, v) in self._done:
            return None
        certificate = self.state.certificate(v - 1)
        if certificate is not None:
            parent = certificate.block
            ticket = ("ack", tuple(sorted(certificate.acks)))
        else:
            downs = self.state.leader_downs.get(v - 1, {})
            if len(downs) < self.gate.f + 1:
                self._done.add((OftKind.PROPOSE, v))
                return None
            parent = max(downs.values(), key=lambda block: (block.epoch, block.digest))
            ticket = ("leader-down", tuple(sorted(downs)))
        block = OverlayBlock(parent.height + 1, parent, v, self.mempool(t, parent), self.index)
        return self._emit(OftKind.PROPOSE, v, block, t, ticket)

    def on_ack_time(self, v: int, t: int) -> Optional[OftMessage]:
        if (OftKind.ACK, v) in self._done:
            return None
        proposal = self.state.proposals.get(v)
        if proposal is None:
            return None
        self.highest_acked = (proposal, v)
        return self._emit(OftKind.ACK, v, proposal, t)

    def on_leaderdown_time(self, v: int, t: int) -> Optional[OftMessage]:
        if (OftKind.LEADER_DOWN, v) in self._done or self.state.certificate(v) is not None:
            return None
        return self._emit(OftKind.LEADER_DOWN, v, self.highest_acked[0], t)

    def commit_check(self, t: int) -> List[OverlayBlock]:
        newly = []
        for certificate in self.state.certified():
            block = certificate.block
            if block.digest in self.committed:
                continue
            self.committed |= block.ancestry
            self._emit(OftKind.COMMIT, certificate.epoch, block, t, ("ack", tuple(sorted(certificate.acks))))
            newly.append(block)
        return newly

    def step(self, t: int):
        self.ingest(t)
        v, offset = self.gate.epoch_position(t)
        if offset == 0:
            self.on_epoch_enter(v, t)
        if offset == self.gate.c:
            self.on_ack_time(v, t)
        if offset == 2 * self.gate.c:
            self.on_leaderdown_time(v, t)
        self.commit_check(t)


class LvlGate(ComposedHandle):
    """
    lvl composition over n = 2f+1 children.

    Parameters
    ----------
    members : sequence of LedgerHandle
        Hosting children, one per validator; odd length >= 3.
    registry : CertificateRegistry
        Shared certificate registry.
    name : str
        Unique gate name; also the lane name on the children.
    """

    def __init__(self, members: Sequence[LedgerHandle], registry: CertificateRegistry, name: str = "lvl"):
        n = len(members)
        if n < 3 or n % 2 == 0:
            raise ContractViolation(f"lvl gate {name} needs an odd number >= 3 of children, got {n}")
        super().__init__(name, registry)
        self.members = list(members)
        self.n = n
        self.f = (n - 1) // 2
        self.c = max(member.latency_bound for member in self.members)
        T = max(member.epoch_duration for member in self.members)
        self.epoch_length = math.ceil(3 * self.c / T) * T
        self.validators: List[EmulatedValidator] = [
            EmulatedValidator(self, j, f"{name}/v{j}", member.submit, member)
            for j, member in enumerate(self.members)
        ]
        self._trace_cache: Dict[Tuple[int, str], List[OftMessage]] = {}

    @property
    def generates_certificates(self) -> bool:
        return all(member.generates_certificates for member in self.members)

    @property
    def latency_bound(self) -> int:
        # f failed leaders, one full epoch waiting for a proposal, then 3c to certify and read
        return (self.f + 1) * self.epoch_length + 3 * self.c

    @property
    def nominal_latency_bound(self) -> int:
        return max(self.f * 3 * self.c + 3 * self.c, 3 * self.c + self.epoch_length - 1)

    def children(self) -> List[LedgerHandle]:
        return list(self.members)

    def leader_of(self, v: int) -> int:
        return v % self.n

    def epoch_position(self, t: int) -> Tuple[int, int]:
        """(epoch, ticks since its start) for tick t."""
        return t // self.epoch_length + 1, t % self.epoch_length

    def trace(self, ledger: Ledger, j: int) -> List[OftMessage]:
        key = (j, ledger.digest)
        cached = self._trace_cache.get(key)
        if cached is None:
            if ledger.has_duplicates():
                ledger = clean(EMPTY_LEDGER, ledger)
            cached = validated_trace(ledger, self.name, j, self.n, self.f)
            if len(self._trace_cache) > 8192:
                self._trace_cache.clear()
            self._trace_cache[key] = cached
        return cached

    def split_validator(self, j: int, replicas: Sequence[Tuple[str, Callable[[Transaction, int], None]]]):
        """
        Replace validator j by one executor per (observer, writer) pair.

        Used for hosting chains that equivocate: each replica follows one
        branch and writes only to it.
        """
        primary = self.validators[j]
        self.validators[j] = EmulatedValidator(self, j, replicas[0][0], replicas[0][1], primary.host)
        for observer, writer in replicas[1:]:
            self.validators.append(EmulatedValidator(self, j, observer, writer, primary.host))

    def message_log(self, j: int) -> List[Dict[str, object]]:
        return [
            {"kind": msg.kind.value, "epoch": msg.epoch, "block": msg.block.digest[:12], "height": msg.block.height}
            for validator in self.validators if validator.index == j
            for msg in validator.sent
        ]

    def submit(self, tx: Transaction, t: int):
        for member in self.members:
            member.submit(tx, t)

    def step(self, t: int):
        for validator in self.validators:
            validator.step(t)

    def accepted_blocks(self, views: Sequence[Ledger]) -> List[OverlayBlock]:
        """Certified blocks no other certified block extends, by (height, epoch, digest)."""
        state = OftState(self.f)
        for j, view in enumerate(views):
            state.absorb(self.trace(view, j))
        blocks = {cert.block for cert in state.certified()}
        covered = set()
        for block in blocks:
            covered |= block.ancestry - {block.digest}
        return sorted((block for block in blocks if block.digest not in covered), key=OverlayBlock.sort_key)

    def read_view(self, observer: str, t: int) -> Tuple[Ledger, Optional[Certificate]]:
        views = [member.read_view(observer, t)[0] for member in self.members]
        output = self.memory(observer)
        for block in self.accepted_blocks(views):
            output = clean(output, block.ledger)
        output = self.remember(observer, output)
        return output, self.certify(output)


def lvl_compose(members: Sequence[LedgerHandle], registry: CertificateRegistry, name: str = "lvl") -> LvlGate:
    return LvlGate(members, registry, name=name)
