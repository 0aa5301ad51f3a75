"""
Parallel (lvs) Composition

Synchronous gate over two handles A and B. A client that has been online for
at least ``lag`` ticks (the larger child latency bound) compares its views of
A and B from ``lag`` ticks ago with its current views:

- if every tx of lagged A appears in current B and every tx of lagged B
  appears in current A, it outputs the interleaving of the current prefixes
  of length l = min(|lagged A|, |lagged B|);
- otherwise it outputs that interleaving followed by the rest of the current
  ledger whose lagged view was longer.

The output is raw: a transaction included by both children shows up twice.
Consumers sanitize it with ``clean``.
Live if either child is live; safe if both are safe and live.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

from ledger_core import (
    EMPTY_LEDGER,
    Certificate,
    CertificateRegistry,
    Ledger,
    Transaction,
    interleave,
)
from simnet import NetworkMode
from underlay import ComposedHandle, LedgerHandle

logger = logging.getLogger(__name__)


@dataclass
class LvsClientState:
    """Views of A and B one client took on every tick since ``online_since``."""
    online_since: int
    lag: int
    history: Deque[Tuple[int, Ledger, Ledger]] = field(default_factory=deque)

    def record(self, t: int, view_a: Ledger, view_b: Ledger):
        self.history.append((t, view_a, view_b))
        cutoff = t - self.lag
        while len(self.history) > 1 and self.history[1][0] <= cutoff:
            self.history.popleft()

    def ready(self, t: int) -> bool:
        return t - self.online_since >= self.lag

    def lagged(self, t: int) -> Tuple[Ledger, Ledger]:
        """Latest recorded views taken at or before ``t - lag``."""
        target = t - self.lag
        _, view_a, view_b = self.history[0]
        for tick, a, b in self.history:
            if tick > target:
                break
            view_a, view_b = a, b
        return view_a, view_b


def lvs_output(lagged_a: Ledger, current_a: Ledger, lagged_b: Ledger, current_b: Ledger) -> Ledger:
    """Raw interleaved output for one client at one tick."""
    # a child that switched branch can be shorter now than it was lag ticks ago
    ell = min(len(lagged_a), len(lagged_b), len(current_a), len(current_b))
    head = interleave(current_a[:ell], current_b[:ell])
    condition = lagged_a.id_set <= current_b.id_set and lagged_b.id_set <= current_a.id_set
    if condition:
        return head
    longer = current_a if len(lagged_a) >= len(lagged_b) else current_b
    return head + longer[ell:]


class LvsGate(ComposedHandle):
    """
    lvs composition of two handles.

    Parameters
    ----------
    a, b : LedgerHandle
        The interleaved children; both receive every submitted tx.
    registry : CertificateRegistry
        Shared certificate registry.
    name : str
        Unique gate name.
    mode : NetworkMode
        Network model of the run; anything but synchrony is only noted.
    """

    def __init__(self, a: LedgerHandle, b: LedgerHandle, registry: CertificateRegistry,
                 name: str = "lvs", mode: NetworkMode = NetworkMode.SYNCHRONY):
        super().__init__(name, registry)
        self.a = a
        self.b = b
        self.lag = max(a.latency_bound, b.latency_bound)
        self._clients: Dict[str, LvsClientState] = {}
        if mode is not NetworkMode.SYNCHRONY:
            self.note("lvs composition under partial synchrony: safety and liveness are not guaranteed")

    @property
    def generates_certificates(self) -> bool:
        return self.a.generates_certificates and self.b.generates_certificates

    @property
    def latency_bound(self) -> int:
        # a child that is not live may catch up inside the lookback window and
        # push the tx out of the interleaved prefix for one more lag
        return 3 * self.lag

    @property
    def nominal_latency_bound(self) -> int:
        return 2 * self.lag

    def children(self) -> List[LedgerHandle]:
        return [self.a, self.b]

    def submit(self, tx: Transaction, t: int):
        self.a.submit(tx, t)
        self.b.submit(tx, t)

    def client_state(self, observer: str) -> Optional[LvsClientState]:
        return self._clients.get(observer)

    def read_view(self, observer: str, t: int) -> Tuple[Ledger, Optional[Certificate]]:
        view_a, _ = self.a.read_view(observer, t)
        view_b, _ = self.b.read_view(observer, t)
        state = self._clients.get(observer)
        if state is None:
            state = LvsClientState(online_since=t, lag=self.lag)
            self._clients[observer] = state
        state.record(t, view_a, view_b)
        if not state.ready(t):
            output = EMPTY_LEDGER
        else:
            lagged_a, lagged_b = state.lagged(t)
            output = lvs_output(lagged_a, view_a, lagged_b, view_b)
        return output, self.certify(output)


def lvs_compose(a: LedgerHandle, b: LedgerHandle, registry: CertificateRegistry,
                name: str = "lvs", mode: NetworkMode = NetworkMode.SYNCHRONY) -> LvsGate:
    return LvsGate(a, b, registry, name=name, mode=mode)
