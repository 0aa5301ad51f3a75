"""
Ledger Core

Foundational value types shared by every other module of the simulator:
transactions, blocks, ledgers, certificates, bit vectors and fault
assignments, together with the pure ledger algebra (prefix, consistency,
clean, interleave, ind).

All types here are immutable and can be shared freely between threads and
worker processes.
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class CircuitError(Exception):
    """Base class of all simulator and synthesis errors."""


class ContractViolation(CircuitError, ValueError):
    """An operation was called outside of its precondition."""


class ConfigurationError(CircuitError, ValueError):
    """Malformed configuration, scenario, circuit spec or unknown participant."""


class SynthesisError(CircuitError, ValueError):
    """A requested characterization cannot be achieved or materialized."""


class CertificateSoundnessError(CircuitError):
    """A strict issuer was asked to certify a ledger conflicting with an earlier one."""


# ---------------------------------------------------------------------------
# Transactions, blocks, ledgers
# ---------------------------------------------------------------------------

class TxKind(Enum):
    USER = "user"
    SNAPSHOT = "snapshot"   # serial gate snapshot record
    OFT = "oft"             # lvl gate protocol message
    FORK = "fork"           # marker opening the divergent part of a branch


@dataclass(frozen=True)
class Transaction:
    """A transaction; identity is the id alone."""
    id: str
    payload: Any = field(default=None, compare=False, repr=False)
    kind: TxKind = field(default=TxKind.USER, compare=False)

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class Ledger:
    """Ordered sequence of transactions."""
    txs: Tuple[Transaction, ...] = ()

    @classmethod
    def of(cls, *ids: str) -> "Ledger":
        return cls(tuple(Transaction(i) for i in ids))

    @classmethod
    def decode(cls, text: str) -> "Ledger":
        """Inverse of ``encode`` for user transactions."""
        text = text.strip()
        if not text:
            return cls()
        return cls.of(*[part.strip() for part in text.split(",")])

    def __len__(self):
        return len(self.txs)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self.txs)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Ledger(self.txs[item])
        return self.txs[item]

    def __add__(self, other: "Ledger") -> "Ledger":
        return Ledger(self.txs + other.txs)

    def ids(self) -> Tuple[str, ...]:
        return tuple(tx.id for tx in self.txs)

    @cached_property
    def id_set(self) -> frozenset:
        return frozenset(tx.id for tx in self.txs)

    def encode(self) -> str:
        """Canonical text encoding, e.g. ``tx1,tx2``."""
        return ",".join(self.ids())

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.encode().encode("utf-8")).hexdigest()

    def has_duplicates(self) -> bool:
        return len(self.id_set) != len(self.txs)

    def __repr__(self):
        return f"Ledger({self.encode()})"


EMPTY_LEDGER = Ledger()


@dataclass(frozen=True)
class Block:
    """Underlay block; genesis has height 0 and no parent."""
    height: int
    txs: Tuple[Transaction, ...] = ()
    parent: Optional[str] = None
    timestamp: int = 0

    def __post_init__(self):
        if self.height < 0:
            raise ContractViolation(f"block height must be non-negative, got {self.height}")
        if self.height == 0 and self.parent is not None:
            raise ContractViolation("genesis block cannot have a parent")
        if self.height > 0 and self.parent is None:
            raise ContractViolation(f"block at height {self.height} needs a parent digest")

    @cached_property
    def digest(self) -> str:
        body = f"{self.height}|{self.parent or ''}|{self.timestamp}|" + ",".join(tx.id for tx in self.txs)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


GENESIS = Block(height=0)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    subject: str     # digest of the certified ledger
    issuer: str
    token: str


class CertificateRegistry:
    """
    Issues and verifies unforgeable certificate tokens.

    A strict issuer (a safe chain) never certifies two conflicting ledgers:
    trying to do so raises ``CertificateSoundnessError``. Non-strict issuers
    may certify conflicting ledgers; the conflicts are kept as diagnostics.
    """

    def __init__(self, secret: str = "registry"):
        self._secret = secret
        self._issued: Dict[Tuple[str, str], Certificate] = {}
        self._longest: Dict[str, Ledger] = {}
        self._strict: set = set()
        self.conflicts: List[Tuple[str, str, str]] = []

    def register_issuer(self, issuer: str, strict: bool):
        if strict:
            self._strict.add(issuer)
        else:
            self._strict.discard(issuer)

    def is_strict(self, issuer: str) -> bool:
        return issuer in self._strict

    def _token(self, issuer: str, subject: str) -> str:
        raw = f"{self._secret}|{issuer}|{subject}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:32]

    def issue(self, issuer: str, ledger: Ledger) -> Certificate:
        key = (issuer, ledger.digest)
        cert = self._issued.get(key)
        if cert is not None:
            return cert
        longest = self._longest.get(issuer, EMPTY_LEDGER)
        if not consistent(longest, ledger):
            if issuer in self._strict:
                raise CertificateSoundnessError(
                    f"issuer {issuer} cannot certify {ledger.encode() or '<empty>'}: "
                    f"conflicts with certified {longest.encode()}"
                )
            self.conflicts.append((issuer, longest.digest, ledger.digest))
        elif len(ledger) > len(longest):
            self._longest[issuer] = ledger
        cert = Certificate(subject=ledger.digest, issuer=issuer, token=self._token(issuer, ledger.digest))
        self._issued[key] = cert
        return cert

    def verify(self, cert: Optional[Certificate], ledger: Ledger) -> bool:
        if cert is None:
            return False
        if cert.subject != ledger.digest:
            return False
        return self._issued.get((cert.issuer, cert.subject)) == cert


# ---------------------------------------------------------------------------
# Ledger algebra
# ---------------------------------------------------------------------------

def is_prefix(a: Ledger, b: Ledger) -> bool:
    """True iff ``a`` is a leading segment of ``b``."""
    if len(a) > len(b):
        return False
    return b.txs[:len(a)] == a.txs


def consistent(a: Ledger, b: Ledger) -> bool:
    return is_prefix(a, b) or is_prefix(b, a)


def clean(a: Ledger, b: Ledger) -> Ledger:
    """``a`` followed by the transactions of ``b`` not already seen, first occurrence kept."""
    seen = set()
    out = []
    for tx in itertools.chain(a.txs, b.txs):
        if tx.id in seen:
            continue
        seen.add(tx.id)
        out.append(tx)
    if len(out) == len(a) and not a.has_duplicates():
        return a
    return Ledger(tuple(out))


def clean_all(ledgers: Iterable[Ledger], start: Ledger = EMPTY_LEDGER) -> Ledger:
    result = start
    for ledger in ledgers:
        result = clean(result, ledger)
    return result


def interleave(a: Ledger, b: Ledger) -> Ledger:
    """Position-exact interleaving: out[2i-1] = a[i], out[2i] = b[i] (1-indexed)."""
    if len(a) != len(b):
        raise ContractViolation(f"interleave needs equal lengths, got {len(a)} and {len(b)}")
    out = []
    for x, y in zip(a.txs, b.txs):
        out.append(x)
        out.append(y)
    return Ledger(tuple(out))


# ---------------------------------------------------------------------------
# Bit vectors and fault assignments
# ---------------------------------------------------------------------------

BitVector = Tuple[int, ...]


def parse_bits(text: str) -> BitVector:
    """``'101'`` -> ``(1, 0, 1)``."""
    text = text.strip()
    if not text or any(ch not in "01" for ch in text):
        raise ConfigurationError(f"invalid bit vector: {text!r}")
    return tuple(int(ch) for ch in text)


def format_bits(bits: Sequence[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def ind(v: Sequence[int]) -> frozenset:
    """1-based indices of the set bits."""
    return frozenset(i + 1 for i, bit in enumerate(v) if bit)


@dataclass(frozen=True)
class ChainFault:
    safe: bool = True
    live: bool = True

    def label(self) -> str:
        return ("S" if self.safe else "s") + ("L" if self.live else "l")


@dataclass(frozen=True)
class FaultAssignment:
    """Per-chain (safe, live) flags; chain i is entry i-1."""
    chains: Tuple[ChainFault, ...]

    def __len__(self):
        return len(self.chains)

    def __getitem__(self, index: int) -> ChainFault:
        return self.chains[index]

    @classmethod
    def honest(cls, k: int) -> "FaultAssignment":
        return cls(tuple(ChainFault() for _ in range(k)))

    @classmethod
    def from_bits(cls, safe: Sequence[int], live: Sequence[int]) -> "FaultAssignment":
        if isinstance(safe, str):
            safe = parse_bits(safe)
        if isinstance(live, str):
            live = parse_bits(live)
        if len(safe) != len(live):
            raise ConfigurationError(f"safety and liveness vectors differ in length: {len(safe)} vs {len(live)}")
        return cls(tuple(ChainFault(bool(s), bool(l)) for s, l in zip(safe, live)))

    @classmethod
    def from_index(cls, k: int, code: int) -> "FaultAssignment":
        """Decode the evaluator's integer code: low k bits safety, high k bits liveness."""
        safe = [(code >> i) & 1 for i in range(k)]
        live = [(code >> (k + i)) & 1 for i in range(k)]
        return cls.from_bits(safe, live)

    @classmethod
    def all_assignments(cls, k: int) -> List["FaultAssignment"]:
        return [cls.from_index(k, code) for code in range(4 ** k)]

    def to_index(self) -> int:
        k = len(self.chains)
        code = 0
        for i, fault in enumerate(self.chains):
            code |= int(fault.safe) << i
            code |= int(fault.live) << (k + i)
        return code

    @property
    def safety_bits(self) -> BitVector:
        return tuple(int(c.safe) for c in self.chains)

    @property
    def liveness_bits(self) -> BitVector:
        return tuple(int(c.live) for c in self.chains)

    def label(self) -> str:
        return f"s={format_bits(self.safety_bits)} l={format_bits(self.liveness_bits)}"
