"""
Underlay Chains

Simulated underlay blockchains with injectable (safe, live) fault modes and
the handle interface every composition gate is built on.

An ``UnderlayChain`` produces at most one block every ``epoch_duration``
ticks on each of its branches. A chain can host several protocol instances
at once: every instance reads and writes its own *lane* of the chain, while
forks, stalls and halts apply to the chain as a whole.

Fault behaviour:
- safe chains keep a single branch, so every exposed view is a prefix of one
  canonical ledger; a ¬live safe chain behaves like an omission-faulty
  participant (stalls, halts, late inclusion).
- ¬safe chains may fork (up to ``max_branches`` branches) and show different
  branches to different observers; each branch stays individually live when
  the chain is live.
- live chains include every transaction submitted at tick t in every view by
  ``max(gst, t) + tconf``.
"""

import bisect
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from ledger_core import (
    EMPTY_LEDGER,
    GENESIS,
    Block,
    Certificate,
    CertificateRegistry,
    ConfigurationError,
    ContractViolation,
    Ledger,
    Transaction,
    TxKind,
    clean,
)
from simnet import AdversarySchedule, Envelope, Network

logger = logging.getLogger(__name__)

ENVIRONMENT = "environment"

ObserverSelector = Union[None, Iterable[str], Callable[[str], bool]]


# ---------------------------------------------------------------------------
# Handle interface
# ---------------------------------------------------------------------------

class LedgerHandle(ABC):
    """Read/write interface shared by chain lanes and composition gates."""

    name: str = "handle"

    @property
    @abstractmethod
    def generates_certificates(self) -> bool:
        ...

    @property
    @abstractmethod
    def latency_bound(self) -> int:
        """Ticks after max(gst, submit) by which a submitted tx shows up when this handle is live."""

    @property
    def epoch_duration(self) -> int:
        return max((child.epoch_duration for child in self.children()), default=1)

    @abstractmethod
    def submit(self, tx: Transaction, t: int):
        ...

    @abstractmethod
    def read_view(self, observer: str, t: int) -> Tuple[Ledger, Optional[Certificate]]:
        ...

    def step(self, t: int):
        """Per-tick protocol work; chain lanes have none."""

    def children(self) -> List["LedgerHandle"]:
        return []

    def walk(self) -> Iterator["LedgerHandle"]:
        """Post-order traversal of the handle tree."""
        for child in self.children():
            yield from child.walk()
        yield self

    @property
    def chain_ids(self) -> frozenset:
        return frozenset().union(*(child.chain_ids for child in self.children())) if self.children() else frozenset()


class ComposedHandle(LedgerHandle):
    """
    Base class of the composition gates.

    Gates whose clients keep their output across reads use ``remember``: a
    new output is appended to the observer's previous one and sanitized with
    ``clean``. Other gates return their raw output on every read.
    """

    def __init__(self, name: str, registry: CertificateRegistry):
        self.name = name
        self.registry = registry
        self.registry.register_issuer(name, strict=False)
        self._memory: Dict[str, Ledger] = {}
        self.diagnostics: List[str] = []

    def remember(self, observer: str, ledger: Ledger) -> Ledger:
        previous = self._memory.get(observer, EMPTY_LEDGER)
        if previous is ledger:
            return ledger
        output = clean(previous, ledger)
        self._memory[observer] = output
        return output

    def memory(self, observer: str) -> Ledger:
        return self._memory.get(observer, EMPTY_LEDGER)

    def certify(self, ledger: Ledger) -> Optional[Certificate]:
        if not self.generates_certificates:
            return None
        return self.registry.issue(self.name, ledger)

    def note(self, message: str):
        logger.warning(f"{self.name}: {message}")
        self.diagnostics.append(f"{self.name}: {message}")

    def all_diagnostics(self) -> List[str]:
        notes = []
        for handle in self.walk():
            notes.extend(getattr(handle, "diagnostics", []))
        return notes


# ---------------------------------------------------------------------------
# Chain configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainConfig:
    id: str
    epoch_duration: int = 1
    tconf: int = 2
    safe: bool = True
    live: bool = True
    generates_certificates: bool = True
    max_branches: int = 4

    def validate(self, delta: int):
        if self.epoch_duration < 1:
            raise ConfigurationError(f"chain {self.id}: epoch duration must be >= 1, got {self.epoch_duration}")
        if self.tconf < delta + self.epoch_duration - 1:
            raise ConfigurationError(
                f"chain {self.id}: tconf={self.tconf} cannot cover delta={delta} plus one epoch of {self.epoch_duration}"
            )
        if self.max_branches < 1:
            raise ConfigurationError(f"chain {self.id}: max_branches must be >= 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChainConfig":
        try:
            return cls(
                id=str(data["id"]),
                epoch_duration=int(data.get("T", data.get("epoch_duration", 1))),
                tconf=int(data.get("tconf", 2)),
                safe=bool(data.get("safe", True)),
                live=bool(data.get("live", True)),
                generates_certificates=bool(data.get("certificates", True)),
                max_branches=int(data.get("max_branches", 4)),
            )
        except KeyError as e:
            raise ConfigurationError(f"chain config missing field {e}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "T": self.epoch_duration,
            "tconf": self.tconf,
            "safe": self.safe,
            "live": self.live,
            "certificates": self.generates_certificates,
            "max_branches": self.max_branches,
        }


@dataclass
class _Pending:
    tx: Transaction
    lane: str
    ready: int
    seq: int
    fifo_index: Optional[int] = None   # position among the lane's protocol records


class _Branch:
    """One candidate ledger of a chain, with per-lane indexes."""

    def __init__(self, index: int):
        self.index = index
        self.blocks: List[Block] = [GENESIS]
        self.block_lanes: List[Tuple[str, ...]] = [()]
        self.timestamps: List[int] = [-1]
        self.lane_txs: Dict[str, List[Transaction]] = {}
        self.lane_heights: Dict[str, List[int]] = {}
        self.pending: List[_Pending] = []
        self.fifo_done: Dict[str, int] = {}
        self.included: set = set()
        self._cache: Dict[Tuple[str, int], Ledger] = {}

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def height_at(self, t: int) -> int:
        return max(0, bisect.bisect_right(self.timestamps, t) - 1)

    def add_pending(self, entry: _Pending):
        if (entry.lane, entry.tx.id) in self.included:
            return
        self.pending.append(entry)
        self.pending.sort(key=lambda p: p.seq)

    def append_block(self, entries: List[_Pending], t: int) -> Block:
        block = Block(
            height=self.height + 1,
            txs=tuple(p.tx for p in entries),
            parent=self.blocks[-1].digest,
            timestamp=t,
        )
        self.blocks.append(block)
        self.block_lanes.append(tuple(p.lane for p in entries))
        self.timestamps.append(t)
        for entry in entries:
            self.lane_txs.setdefault(entry.lane, []).append(entry.tx)
            self.lane_heights.setdefault(entry.lane, []).append(block.height)
            self.included.add((entry.lane, entry.tx.id))
        return block

    def lane_ledger(self, lane: str, height: int) -> Ledger:
        heights = self.lane_heights.get(lane, [])
        n = bisect.bisect_right(heights, height)
        key = (lane, n)
        ledger = self._cache.get(key)
        if ledger is None:
            ledger = Ledger(tuple(self.lane_txs.get(lane, [])[:n]))
            self._cache[key] = ledger
        return ledger

    def take_ready(self, t: int) -> List[_Pending]:
        """Ready entries; protocol records leave in submission order per lane."""
        expected = dict(self.fifo_done)
        taken, kept = [], []
        for entry in self.pending:
            if entry.ready > t:
                kept.append(entry)
                continue
            if entry.fifo_index is not None:
                if entry.fifo_index != expected.get(entry.lane, 0):
                    kept.append(entry)
                    continue
                expected[entry.lane] = entry.fifo_index + 1
            taken.append(entry)
        self.pending = kept
        self.fifo_done = expected
        return taken


@dataclass
class _ObserverPolicy:
    preferred: int = 0
    switch_at: Optional[int] = None
    preferred_after: int = 0
    stall_from: Optional[int] = None
    stall_until: float = math.inf


# ---------------------------------------------------------------------------
# Underlay chain
# ---------------------------------------------------------------------------

class UnderlayChain:
    """
    Simulated underlay blockchain.

    Parameters
    ----------
    config : ChainConfig
        Identity, pacing, latency bound and fault flags.
    network : Network
        Transport used for transaction submissions.
    registry : CertificateRegistry
        Certificate bookkeeping shared by the run.
    adversarial : bool
        When true, faulty behaviour is drawn from the run's adversary
        schedule; otherwise only scripted faults apply.
    """

    def __init__(self, config: ChainConfig, network: Network, registry: CertificateRegistry,
                 adversarial: bool = False):
        config.validate(network.model.delta)
        self.config = config
        self.id = config.id
        self.network = network
        self.registry = registry
        self.schedule: AdversarySchedule = network.schedule
        self.rng = self.schedule.generator(f"chain:{self.id}")
        self.adversarial = adversarial

        network.register(self.id, self._on_delivery)
        if not network.has_participant(ENVIRONMENT):
            network.register(ENVIRONMENT)

        self._branches: List[_Branch] = [_Branch(0)]
        self._lanes: Dict[str, None] = {}
        self._submitted: set = set()
        self._seq = itertools.count()
        self._fifo_counter: Dict[str, int] = {}
        self._holds: Dict[str, List[Tuple[int, Optional[frozenset]]]] = {}
        self._expedited: List[Tuple[int, Optional[frozenset]]] = []
        self._stalls: List[Tuple[Callable[[str], bool], int, float]] = []
        self._assignments: Dict[str, List[Tuple[int, int]]] = {}
        self._selector: Optional[Callable[[str, int], Optional[int]]] = None
        self._last_view: Dict[str, Tuple[int, int]] = {}
        self._policies: Dict[str, _ObserverPolicy] = {}
        self._fork_plan: List[Tuple[int, int]] = []
        self.halt_at: Optional[int] = None

        if adversarial:
            self._plan_random_faults()

    # -- properties ---------------------------------------------------------

    @property
    def safe(self) -> bool:
        return self.config.safe

    @property
    def live(self) -> bool:
        return self.config.live

    @property
    def tconf(self) -> int:
        return self.config.tconf

    @property
    def branch_count(self) -> int:
        return len(self._branches)

    def branch(self, index: int) -> _Branch:
        try:
            return self._branches[index]
        except IndexError:
            raise ContractViolation(f"chain {self.id} has no branch {index}")

    def lane(self, lane: str = "") -> "ChainLane":
        self._lanes.setdefault(lane, None)
        issuer = self.issuer(lane)
        self.registry.register_issuer(issuer, strict=self.safe and self.config.generates_certificates)
        return ChainLane(self, lane)

    def issuer(self, lane: str) -> str:
        return self.id if not lane else f"{self.id}/{lane}"

    # -- writes -------------------------------------------------------------

    def submit(self, tx: Transaction, t: int, lane: str = "") -> bool:
        """Send ``tx`` to the chain's validators; duplicates per lane are rejected."""
        key = (lane, tx.id)
        if key in self._submitted:
            logger.debug(f"{self.id}: duplicate transaction {tx.id} rejected")
            return False
        self._submitted.add(key)
        self._lanes.setdefault(lane, None)
        fifo_index = None
        if tx.kind is not TxKind.USER:
            fifo_index = self._fifo_counter.get(lane, 0)
            self._fifo_counter[lane] = fifo_index + 1
        payload = (tx, lane, t, next(self._seq), fifo_index)
        self.network.send(ENVIRONMENT, self.id, payload, t, kind=tx.kind.value)
        return True

    def inject(self, tx: Transaction, branch: int, lane: str, t: int):
        """Adversary write straight into one branch of a chain that may equivocate."""
        if self.safe and self.config.generates_certificates:
            raise ContractViolation(f"cannot inject into a single branch of safe chain {self.id}")
        self._lanes.setdefault(lane, None)
        self.branch(branch).add_pending(_Pending(tx, lane, t, next(self._seq)))

    def hold(self, tx_id: str, until: int, branches: Optional[Iterable[int]] = None):
        """Delay inclusion of ``tx_id`` until ``until`` (clamped to the deadline on live chains)."""
        scope = None if branches is None else frozenset(branches)
        self._holds.setdefault(tx_id, []).append((until, scope))

    def expedite(self, until: int, tx_ids: Optional[Iterable[str]] = None):
        """
        Submissions sent before ``until`` reach the chain in the tick they are
        sent and are included in the next block; ``tx_ids`` limits this to
        the named transactions. Holds still apply on top.
        """
        if not self._expedited:
            self.schedule.expedite(
                lambda envelope: envelope.recipient == self.id
                and self._is_expedited(envelope.payload[0].id, envelope.send_time)
            )
        self._expedited.append((until, None if tx_ids is None else frozenset(tx_ids)))

    def _is_expedited(self, tx_id: str, send_time: int) -> bool:
        return any(send_time < until and (scope is None or tx_id in scope) for until, scope in self._expedited)

    def _on_delivery(self, envelope: Envelope):
        tx, lane, submit_time, seq, fifo_index = envelope.payload
        delivered = envelope.deliver_time
        gst = self.network.model.gst
        T = self.config.epoch_duration
        if self.live or not self.adversarial:
            deadline = max(gst, submit_time) + self.tconf
            high = max(delivered, deadline - T + 1)
        else:
            high = delivered + 2 * self.tconf
        if self._is_expedited(tx.id, submit_time):
            base = delivered
        else:
            base = self.schedule.pick(delivered, high, self.rng)
        for branch in self._branches:
            ready = base
            for until, scope in self._holds.get(tx.id, []):
                if scope is None or branch.index in scope:
                    ready = max(ready, until)
            if self.live:
                ready = min(ready, high)
            branch.add_pending(_Pending(tx, lane, ready, seq, fifo_index))

    # -- block production ----------------------------------------------------

    def advance(self, t: int):
        for tick, parent in [plan for plan in self._fork_plan if plan[0] == t]:
            if len(self._branches) < self.config.max_branches:
                at = self.schedule.pick(max(0, self._branches[parent].height - 2), self._branches[parent].height, self.rng)
                self.fork_branch(parent, at, t)
        if t % self.config.epoch_duration != 0:
            return
        if self.halt_at is not None and t >= self.halt_at:
            return
        for branch in self._branches:
            entries = branch.take_ready(t)
            if entries:
                branch.append_block(entries, t)

    def fork_branch(self, parent_branch: int, at_height: int, t: int = 0) -> int:
        """
        Create a branch that shares ``parent_branch`` up to ``at_height`` and conflicts after it.

        Every lane of the new branch starts its divergent part with a fork
        marker transaction, so the branches conflict as soon as any lane grows.
        """
        if self.safe and self.config.generates_certificates:
            raise ContractViolation(f"fork_branch called on safe chain {self.id}")
        if len(self._branches) >= self.config.max_branches:
            raise ContractViolation(f"chain {self.id} already has {len(self._branches)} branches (cap {self.config.max_branches})")
        parent = self.branch(parent_branch)
        if not 0 <= at_height <= parent.height:
            raise ContractViolation(f"fork height {at_height} outside [0, {parent.height}] on chain {self.id}")

        index = len(self._branches)
        child = _Branch(index)
        fork_seq = next(self._seq)
        markers = [
            _Pending(Transaction(f"fork:{self.id}:{index}:{lane or '-'}", kind=TxKind.FORK), lane, t, fork_seq)
            for lane in self._lanes
        ]
        for height in range(1, parent.height + 1):
            block = parent.blocks[height]
            entries = [
                _Pending(tx, lane, block.timestamp, -1)
                for tx, lane in zip(block.txs, parent.block_lanes[height])
            ]
            if height == at_height + 1:
                entries = markers + entries
                markers = []
            child.append_block(entries, block.timestamp)
        child.fifo_done = dict(parent.fifo_done)
        for entry in parent.pending:
            child.add_pending(_Pending(entry.tx, entry.lane, entry.ready, entry.seq, entry.fifo_index))
        for marker in markers:
            child.add_pending(marker)
        self._branches.append(child)
        logger.debug(f"{self.id}: branch {index} forked from {parent_branch} at height {at_height} (tick {t})")
        return index

    # -- views ---------------------------------------------------------------

    def assign_branch(self, observer: str, branch: int, from_tick: int = 0):
        self.branch(branch)
        self._assignments.setdefault(observer, []).append((from_tick, branch))
        self._assignments[observer].sort()

    def set_branch_selector(self, selector: Callable[[str, int], Optional[int]]):
        """Scripted view selection: ``selector(observer, t)`` returns a branch index or None."""
        self._selector = selector

    def set_stall(self, observers: ObserverSelector, start: int, until: Optional[float] = None):
        """Freeze the selected observers' views during [start, until); ``until=None`` means forever."""
        until = math.inf if until is None else until
        if self.live and until > self.network.model.gst:
            raise ContractViolation(
                f"chain {self.id} is live: a stall must end by gst={self.network.model.gst}, got {until}"
            )
        if observers is None:
            predicate = lambda observer: True
        elif callable(observers):
            predicate = observers
        else:
            chosen = frozenset(observers)
            predicate = lambda observer: observer in chosen
        self._stalls.append((predicate, start, until))

    def halt(self, at: int):
        if self.live:
            raise ContractViolation(f"chain {self.id} is live and cannot halt")
        self.halt_at = at

    def read_view(self, observer: str, t: int, lane: str = "") -> Tuple[Ledger, Optional[Certificate]]:
        branch = self._branches[self._branch_for(observer, t)]
        height = branch.height_at(t)
        stall_start = self._stall_start(observer, t)
        if stall_start is not None:
            height = min(height, branch.height_at(stall_start - 1))
        last = self._last_view.get(observer)
        if last is not None and last[0] == branch.index and last[1] > height:
            height = last[1]
        self._last_view[observer] = (branch.index, height)
        ledger = branch.lane_ledger(lane, height)
        certificate = None
        if self.config.generates_certificates:
            certificate = self.registry.issue(self.issuer(lane), ledger)
        return ledger, certificate

    def _branch_for(self, observer: str, t: int) -> int:
        if self._selector is not None:
            chosen = self._selector(observer, t)
            if chosen is not None:
                return min(chosen, len(self._branches) - 1)
        assigned = self._assignments.get(observer)
        if assigned:
            current = None
            for from_tick, branch in assigned:
                if from_tick <= t:
                    current = branch
            if current is not None:
                return current
        if self.adversarial and not self.safe:
            policy = self._policy(observer)
            preferred = policy.preferred
            if policy.switch_at is not None and t >= policy.switch_at:
                preferred = policy.preferred_after
            return min(preferred, len(self._branches) - 1)
        return 0

    def _stall_start(self, observer: str, t: int) -> Optional[int]:
        start = None
        for predicate, s, until in self._stalls:
            if s <= t < until and predicate(observer):
                start = s if start is None else min(start, s)
        if self.adversarial:
            policy = self._policy(observer)
            if policy.stall_from is not None and policy.stall_from <= t < policy.stall_until:
                start = policy.stall_from if start is None else min(start, policy.stall_from)
        return start

    # -- randomized faults ---------------------------------------------------

    def _plan_random_faults(self):
        tconf = self.tconf
        if not self.live and self.rng.random() < 0.5:
            self.halt_at = self.schedule.pick(0, 3 * tconf, self.rng)
        if not self.safe:
            forks = self.schedule.pick(1, min(2, self.config.max_branches - 1), self.rng) if self.config.max_branches > 1 else 0
            for _ in range(forks):
                self._fork_plan.append((self.schedule.pick(1, 3 * tconf, self.rng), 0))

    def _policy(self, observer: str) -> _ObserverPolicy:
        policy = self._policies.get(observer)
        if policy is not None:
            return policy
        rng = self.schedule.generator(f"chain:{self.id}:observer:{observer}")
        policy = _ObserverPolicy()
        if not self.safe:
            top = self.config.max_branches - 1
            policy.preferred = int(rng.integers(0, top + 1))
            if rng.random() < 0.3:
                policy.switch_at = int(rng.integers(1, 4 * self.tconf + 1))
                policy.preferred_after = int(rng.integers(0, top + 1))
        gst = self.network.model.gst
        if not self.live:
            if rng.random() < 0.5:
                policy.stall_from = int(rng.integers(0, 3 * self.tconf + 1))
        elif gst > 0 and rng.random() < 0.3:
            policy.stall_from = 0
            policy.stall_until = gst
        self._policies[observer] = policy
        return policy


class ChainLane(LedgerHandle):
    """One protocol instance's view of an underlay chain."""

    def __init__(self, chain: UnderlayChain, lane: str = ""):
        self.chain = chain
        self.lane = lane
        self.name = chain.issuer(lane)

    @property
    def generates_certificates(self) -> bool:
        return self.chain.config.generates_certificates

    @property
    def latency_bound(self) -> int:
        return self.chain.tconf

    @property
    def epoch_duration(self) -> int:
        return self.chain.config.epoch_duration

    @property
    def chain_ids(self) -> frozenset:
        return frozenset({self.chain.id})

    def submit(self, tx: Transaction, t: int):
        return self.chain.submit(tx, t, self.lane)

    def read_view(self, observer: str, t: int) -> Tuple[Ledger, Optional[Certificate]]:
        return self.chain.read_view(observer, t, self.lane)

    def inject(self, tx: Transaction, branch: int, t: int):
        self.chain.inject(tx, branch, self.lane, t)

    def __repr__(self):
        return f"ChainLane({self.name})"
