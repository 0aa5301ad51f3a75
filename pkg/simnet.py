"""
Simulated Network

Deterministic discrete-event network used by the underlay chains. Time is an
integer tick counter shared by every participant. Message delivery is chosen
by a seeded adversary schedule, always within the bounds of the network
model:

    send_time >= gst  ->  deliver_time <= send_time + delta
    send_time <  gst  ->  deliver_time <= max(gst, send_time) + delta

Events with equal delivery tick are processed in send order.
"""

import heapq
import itertools
import json
import logging
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from numpy.random import SFC64, Generator, SeedSequence

from ledger_core import ConfigurationError, ContractViolation

logger = logging.getLogger(__name__)


class NetworkMode(Enum):
    PARTIAL_SYNCHRONY = "psync"
    SYNCHRONY = "sync"

    @classmethod
    def parse(cls, value) -> "NetworkMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if value in (mode.value, mode.name, mode.name.lower()):
                return mode
        raise ConfigurationError(f"unknown network mode: {value!r} (expected 'psync' or 'sync')")


@dataclass(frozen=True)
class NetworkModel:
    mode: NetworkMode = NetworkMode.PARTIAL_SYNCHRONY
    delta: int = 1
    gst: int = 0

    def __post_init__(self):
        if self.delta < 1:
            raise ConfigurationError(f"delta must be a positive number of ticks, got {self.delta}")
        if self.gst < 0:
            raise ConfigurationError(f"gst must be non-negative, got {self.gst}")
        if self.mode is NetworkMode.SYNCHRONY and self.gst != 0:
            raise ConfigurationError(f"a synchronous network has gst == 0, got {self.gst}")

    @classmethod
    def synchronous(cls, delta: int = 1) -> "NetworkModel":
        return cls(NetworkMode.SYNCHRONY, delta, 0)

    @classmethod
    def partially_synchronous(cls, delta: int = 1, gst: int = 0) -> "NetworkModel":
        return cls(NetworkMode.PARTIAL_SYNCHRONY, delta, gst)

    @property
    def is_synchronous(self) -> bool:
        return self.mode is NetworkMode.SYNCHRONY

    def latest_delivery(self, send_time: int) -> int:
        return max(self.gst, send_time) + self.delta

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode.value, "delta": self.delta, "gst": self.gst}


@dataclass(frozen=True)
class Envelope:
    sender: str
    recipient: str
    payload: Any
    send_time: int
    deliver_time: Optional[int] = None
    seq: int = -1
    kind: str = "msg"

    def to_record(self) -> Dict[str, Any]:
        return {
            "tick": self.deliver_time,
            "sent": self.send_time,
            "sender": self.sender,
            "recipient": self.recipient,
            "kind": self.kind,
        }


def derived_generator(seed: int, label: str) -> Generator:
    """Generator keyed by (seed, label); independent of creation order."""
    return Generator(SFC64(SeedSequence([seed, zlib.crc32(label.encode("utf-8"))])))


class AdversarySchedule:
    """
    Seeded source of every adversarial choice in a run.

    Randomized choices are biased towards the extremes of the legal window
    (delay exactly up to the bound, or none at all) with probability
    ``boundary_bias``.
    """

    def __init__(self, seed: int = 0, boundary_bias: float = 0.5):
        if not 0.0 <= boundary_bias <= 1.0:
            raise ConfigurationError(f"boundary_bias must be in [0, 1], got {boundary_bias}")
        self.seed = int(seed)
        self.boundary_bias = boundary_bias
        self.rng = derived_generator(self.seed, "network")
        self._partitions: List[Tuple[List[frozenset], int]] = []
        self._expedited: List[Callable[[Envelope], bool]] = []

    def generator(self, label: str) -> Generator:
        return derived_generator(self.seed, label)

    def partition(self, groups: Sequence[Iterable[str]], until: int):
        """Hold messages crossing the given groups, sent before ``until``, for as long as allowed."""
        self._partitions.append(([frozenset(g) for g in groups], until))

    def expedite(self, predicate: Callable[[Envelope], bool]):
        """Deliver envelopes matching ``predicate`` in the tick they are sent."""
        self._expedited.append(predicate)

    def _crosses_partition(self, sender: str, recipient: str, send_time: int) -> bool:
        for groups, until in self._partitions:
            if send_time >= until:
                continue
            side_s = next((i for i, g in enumerate(groups) if sender in g), None)
            side_r = next((i for i, g in enumerate(groups) if recipient in g), None)
            if side_s is not None and side_r is not None and side_s != side_r:
                return True
        return False

    def pick(self, low: int, high: int, rng: Optional[Generator] = None) -> int:
        """Integer in [low, high], boundary biased."""
        if high <= low:
            return low
        rng = rng if rng is not None else self.rng
        roll = rng.random()
        if roll < self.boundary_bias / 2:
            return high
        if roll < self.boundary_bias:
            return low
        return int(rng.integers(low, high + 1))

    def choose_delivery(self, model: NetworkModel, envelope: Envelope) -> int:
        latest = model.latest_delivery(envelope.send_time)
        if any(predicate(envelope) for predicate in self._expedited):
            return envelope.send_time
        if self._crosses_partition(envelope.sender, envelope.recipient, envelope.send_time):
            return latest
        return self.pick(envelope.send_time, latest)


class Network:
    """Event queue of envelopes keyed by (deliver_time, seq)."""

    def __init__(self, model: NetworkModel, schedule: Optional[AdversarySchedule] = None,
                 participants: Iterable[str] = ()):
        self.model = model
        self.schedule = schedule or AdversarySchedule()
        self._participants: Dict[str, Optional[Callable[[Envelope], None]]] = {}
        self._queue: List[Tuple[int, int, Envelope]] = []
        self._seq = itertools.count()
        self.now = 0
        self.trace: List[Envelope] = []
        for participant in participants:
            self.register(participant)

    def register(self, participant: str, handler: Optional[Callable[[Envelope], None]] = None):
        self._participants[participant] = handler

    def has_participant(self, participant: str) -> bool:
        return participant in self._participants

    def send(self, sender: str, recipient: str, payload: Any, send_time: int, kind: str = "msg") -> Envelope:
        for who in (sender, recipient):
            if who not in self._participants:
                raise ConfigurationError(f"unknown participant: {who}")
        if send_time < 0:
            raise ContractViolation(f"send_time must be non-negative, got {send_time}")
        envelope = Envelope(sender, recipient, payload, send_time, seq=next(self._seq), kind=kind)
        deliver_time = self.schedule.choose_delivery(self.model, envelope)
        envelope = replace(envelope, deliver_time=deliver_time)
        heapq.heappush(self._queue, (deliver_time, envelope.seq, envelope))
        return envelope

    def run_until(self, t: int) -> List[Envelope]:
        """Deliver every queued envelope with deliver_time <= t, in (time, seq) order."""
        delivered = []
        while self._queue and self._queue[0][0] <= t:
            _, _, envelope = heapq.heappop(self._queue)
            delivered.append(envelope)
            self.trace.append(envelope)
            handler = self._participants.get(envelope.recipient)
            if handler is not None:
                handler(envelope)
        self.now = max(self.now, t)
        return delivered

    def pending(self) -> int:
        return len(self._queue)

    def export_trace(self) -> List[Dict[str, Any]]:
        return [envelope.to_record() for envelope in self.trace]

    def write_trace(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            for record in self.export_trace():
                f.write(json.dumps(record) + "\n")
        logger.info(f"Wrote {len(self.trace)} trace records to {path}")
