"""
Circuits

Composition trees over underlay chains and the algebra around them:

- node types (Leaf, Serial, Lvl3, Lvs), a compact text format
  ``serial(1, lvl(2,3,4), lvs(1,2))`` and a JSON node form;
- the predicted security characterization of a tree, computed with numpy
  over all 4^k fault assignments at once (plus a brute-force oracle);
- characterizations in general (extreme (s, l) pairs) and
  permutation-invariant ((n_s, n_l, n_sl) triples) form, with dominance;
- achievability checks and synthesizers for (k, s, l) tuples, general
  characterizations under partial synchrony and synchrony, and the
  pareto-optimal families.

Gate semantics used everywhere in this module:

    serial  safe if any child safe,            live if all children live
    lvl3    safe if all children safe,         live if any two children live
    lvs     safe if both children safe & live, live if either child live (sync only)
"""

import itertools
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from circuit_config import DEFAULT_CONFIG
from ledger_core import (
    BitVector,
    ConfigurationError,
    ContractViolation,
    FaultAssignment,
    SynthesisError,
    format_bits,
    ind,
    parse_bits,
)
from simnet import NetworkMode

logger = logging.getLogger(__name__)

MAX_K = DEFAULT_CONFIG["synthesis"]["max_k"]
MAX_LVL_ARITY = DEFAULT_CONFIG["synthesis"]["max_lvl_arity"]
MAX_EVAL_K = DEFAULT_CONFIG["synthesis"]["max_eval_k"]


# ---------------------------------------------------------------------------
# Node types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise ContractViolation(f"leaf index must be a positive integer, got {self.index!r}")

    @property
    def children(self) -> Tuple["CircuitNode", ...]:
        return ()

    @property
    def kind(self) -> str:
        return "leaf"


@dataclass(frozen=True)
class Serial:
    children: Tuple["CircuitNode", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ContractViolation(f"serial node needs at least 2 children, got {len(self.children)}")

    @property
    def kind(self) -> str:
        return "serial"


@dataclass(frozen=True)
class Lvl3:
    children: Tuple["CircuitNode", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) != 3:
            raise ContractViolation(f"lvl node needs exactly 3 children, got {len(self.children)}")

    @property
    def kind(self) -> str:
        return "lvl"


@dataclass(frozen=True)
class Lvs:
    children: Tuple["CircuitNode", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) != 2:
            raise ContractViolation(f"lvs node needs exactly 2 children, got {len(self.children)}")

    @property
    def kind(self) -> str:
        return "lvs"


CircuitNode = Union[Leaf, Serial, Lvl3, Lvs]

_NODE_TYPES = {"serial": Serial, "lvl": Lvl3, "lvl3": Lvl3, "lvs": Lvs}


def _serial(nodes: Sequence[CircuitNode]) -> CircuitNode:
    if not nodes:
        raise SynthesisError("cannot compose an empty set of chains")
    return nodes[0] if len(nodes) == 1 else Serial(tuple(nodes))


def _iter_nodes(node: CircuitNode):
    seen = set()
    stack = [node]
    while stack:
        current = stack.pop()
        if id(current) in seen:
            continue
        seen.add(id(current))
        yield current
        stack.extend(current.children)


def leaf_indices(node: CircuitNode) -> FrozenSet[int]:
    return frozenset(n.index for n in _iter_nodes(node) if isinstance(n, Leaf))


def node_kinds(node: CircuitNode) -> FrozenSet[str]:
    return frozenset(n.kind for n in _iter_nodes(node))


def chain_count(node: CircuitNode) -> int:
    """Number of underlay chains the tree ranges over (largest leaf index)."""
    return max(leaf_indices(node))


def leaf_count(node: CircuitNode) -> int:
    """Leaf occurrences, counting shared subtrees once per use."""
    if isinstance(node, Leaf):
        return 1
    return sum(leaf_count(child) for child in node.children)


def node_count(node: CircuitNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return 1 + sum(node_count(child) for child in node.children)


def depth(node: CircuitNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(depth(child) for child in node.children)


def substitute(node: CircuitNode, mapping: Mapping[int, CircuitNode]) -> CircuitNode:
    """Replace leaves by the nodes ``mapping`` assigns to their index."""
    cache: Dict[int, CircuitNode] = {}

    def visit(current: CircuitNode) -> CircuitNode:
        cached = cache.get(id(current))
        if cached is not None:
            return cached
        if isinstance(current, Leaf):
            result = mapping.get(current.index, current)
        else:
            result = type(current)(tuple(visit(child) for child in current.children))
        cache[id(current)] = result
        return result

    return visit(node)


# ---------------------------------------------------------------------------
# Text and JSON forms
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\S))")


def _tokenize(text: str) -> List[str]:
    tokens = []
    position = 0
    text = text.rstrip()
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            break
        tokens.append(match.group(match.lastindex))
        position = match.end()
    return tokens


class _Parser:

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.position = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.position] if self.position < len(self.tokens) else None

    def take(self, expected: Optional[str] = None) -> str:
        token = self.peek()
        if token is None:
            raise ConfigurationError(f"unexpected end of circuit spec: {self.text!r}")
        if expected is not None and token != expected:
            raise ConfigurationError(f"expected {expected!r} but found {token!r} in circuit spec {self.text!r}")
        self.position += 1
        return token

    def node(self) -> CircuitNode:
        token = self.take()
        if token.isdigit():
            return Leaf(int(token))
        leaf_match = re.fullmatch(r"[Ll](\d+)", token)
        if leaf_match:
            return Leaf(int(leaf_match.group(1)))
        name = token.lower()
        if name == "leaf":
            self.take("(")
            index = self.take()
            self.take(")")
            if not index.isdigit():
                raise ConfigurationError(f"leaf index must be an integer, got {index!r}")
            return Leaf(int(index))
        node_type = _NODE_TYPES.get(name)
        if node_type is None:
            raise ConfigurationError(f"unknown gate {token!r} in circuit spec {self.text!r}")
        self.take("(")
        children = [self.node()]
        while self.peek() == ",":
            self.take(",")
            children.append(self.node())
        self.take(")")
        return node_type(tuple(children))


def _from_json(data: Any) -> CircuitNode:
    if isinstance(data, bool):
        raise ConfigurationError(f"invalid circuit node: {data!r}")
    if isinstance(data, int):
        return Leaf(data)
    if isinstance(data, dict) and len(data) == 1:
        (name, value), = data.items()
        name = name.lower()
        if name == "leaf":
            return _from_json(value)
        node_type = _NODE_TYPES.get(name)
        if node_type is not None and isinstance(value, list):
            return node_type(tuple(_from_json(child) for child in value))
    raise ConfigurationError(f"invalid circuit node: {data!r}")


def parse_circuit(spec: Union[str, int, dict, list]) -> CircuitNode:
    """Parse the text form or the JSON node form of a circuit."""
    try:
        if isinstance(spec, str):
            text = spec.strip()
            if not text:
                raise ConfigurationError("empty circuit spec")
            if text[0] in "{[":
                try:
                    return _from_json(json.loads(text))
                except json.JSONDecodeError as e:
                    raise ConfigurationError(f"invalid circuit JSON: {str(e)}")
            parser = _Parser(text)
            node = parser.node()
            if parser.peek() is not None:
                raise ConfigurationError(f"trailing input {parser.peek()!r} in circuit spec {text!r}")
            return node
        return _from_json(spec)
    except ContractViolation as e:
        raise ConfigurationError(f"malformed circuit: {str(e)}")


def circuit_to_spec(node: CircuitNode) -> str:
    if isinstance(node, Leaf):
        return str(node.index)
    return f"{node.kind}(" + ", ".join(circuit_to_spec(child) for child in node.children) + ")"


def circuit_to_json(node: CircuitNode) -> Any:
    if isinstance(node, Leaf):
        return node.index
    return {node.kind: [circuit_to_json(child) for child in node.children]}


def render_tree(node: CircuitNode, indent: str = "  ") -> str:
    lines = []

    def visit(current: CircuitNode, level: int):
        label = f"L{current.index}" if isinstance(current, Leaf) else current.kind
        lines.append(indent * level + label)
        for child in current.children:
            visit(child, level + 1)

    visit(node, 0)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Evaluation over fault assignments
# ---------------------------------------------------------------------------
#
# A fault assignment of k chains is encoded as an integer code: bit i-1 is the
# safety flag of chain i, bit k+i-1 its liveness flag (see FaultAssignment).

def _codes(k: int) -> np.ndarray:
    return np.arange(1 << (2 * k), dtype=np.int64)


def _check_eval_k(k: int, max_eval_k: int):
    if k > max_eval_k:
        raise SynthesisError(
            f"k={k} exceeds synthesis.max_eval_k={max_eval_k}: 4^k assignments are too many to enumerate; "
            f"use sampling mode"
        )


def evaluate(node: CircuitNode, mode: NetworkMode, k: Optional[int] = None,
             max_eval_k: int = MAX_EVAL_K) -> Tuple[np.ndarray, np.ndarray]:
    """
    Safety and liveness of ``node`` for every fault-assignment code.

    Returns two boolean arrays of length 4^k indexed by code.
    """
    k = chain_count(node) if k is None else k
    _check_eval_k(k, max_eval_k)
    codes = _codes(k)
    cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def visit(current: CircuitNode) -> Tuple[np.ndarray, np.ndarray]:
        cached = cache.get(id(current))
        if cached is not None:
            return cached
        if isinstance(current, Leaf):
            if current.index > k:
                raise ConfigurationError(f"leaf {current.index} outside of k={k} chains")
            safe = ((codes >> (current.index - 1)) & 1).astype(bool)
            live = ((codes >> (k + current.index - 1)) & 1).astype(bool)
        else:
            parts = [visit(child) for child in current.children]
            if isinstance(current, Serial):
                safe = np.logical_or.reduce([s for s, _ in parts])
                live = np.logical_and.reduce([l for _, l in parts])
            elif isinstance(current, Lvl3):
                (s1, l1), (s2, l2), (s3, l3) = parts
                safe = s1 & s2 & s3
                live = (l1 & l2) | (l2 & l3) | (l1 & l3)
            else:
                if mode is not NetworkMode.SYNCHRONY:
                    raise SynthesisError("lvs composition has no guarantees under partial synchrony")
                (s1, l1), (s2, l2) = parts
                safe = s1 & l1 & s2 & l2
                live = l1 | l2
        cache[id(current)] = (safe, live)
        return safe, live

    return visit(node)


def holds(node: CircuitNode, fault: FaultAssignment, mode: NetworkMode) -> Tuple[bool, bool]:
    """(safe, live) of ``node`` under one fault assignment, by direct recursion."""
    if isinstance(node, Leaf):
        if node.index > len(fault):
            raise ConfigurationError(f"leaf {node.index} outside of k={len(fault)} chains")
        chain = fault[node.index - 1]
        return chain.safe, chain.live
    parts = [holds(child, fault, mode) for child in node.children]
    if isinstance(node, Serial):
        return any(s for s, _ in parts), all(l for _, l in parts)
    if isinstance(node, Lvl3):
        return all(s for s, _ in parts), sum(1 for _, l in parts if l) >= 2
    if mode is not NetworkMode.SYNCHRONY:
        raise SynthesisError("lvs composition has no guarantees under partial synchrony")
    (s1, l1), (s2, l2) = parts
    return s1 and l1 and s2 and l2, l1 or l2


def _encode_pair(s: BitVector, l: BitVector) -> int:
    k = len(s)
    code = 0
    for i in range(k):
        code |= s[i] << i
        code |= l[i] << (k + i)
    return code


def _decode_code(code: int, k: int) -> Tuple[BitVector, BitVector]:
    return (tuple((code >> i) & 1 for i in range(k)),
            tuple((code >> (k + i)) & 1 for i in range(k)))


def _extreme_codes(members: np.ndarray, k: int) -> List[int]:
    """Codes in the upward-closed set ``members`` with no member directly below them."""
    codes = _codes(k)
    extreme = members.copy()
    for bit in range(2 * k):
        has_bit = ((codes >> bit) & 1).astype(bool)
        extreme &= ~(has_bit & members[codes ^ (1 << bit)])
    return [int(c) for c in np.nonzero(extreme)[0]]


def predicted_properties(node: CircuitNode, mode: NetworkMode, k: Optional[int] = None,
                         max_eval_k: int = MAX_EVAL_K) -> "Characterization":
    """General characterization of ``node``: extreme elements of its safety and liveness sets."""
    k = chain_count(node) if k is None else k
    safe, live = evaluate(node, mode, k, max_eval_k=max_eval_k)
    return Characterization(
        k=k,
        mode=CharacterizationMode.GENERAL,
        safety=frozenset(_decode_code(c, k) for c in _extreme_codes(safe, k)),
        liveness=frozenset(_decode_code(c, k) for c in _extreme_codes(live, k)),
    )


def brute_force_properties(node: CircuitNode, mode: NetworkMode, k: Optional[int] = None) -> "Characterization":
    """Same result as ``predicted_properties``, one assignment at a time."""
    k = chain_count(node) if k is None else k
    safe_set, live_set = set(), set()
    for fault in FaultAssignment.all_assignments(k):
        safe, live = holds(node, fault, mode)
        pair = (fault.safety_bits, fault.liveness_bits)
        if safe:
            safe_set.add(pair)
        if live:
            live_set.add(pair)
    return Characterization(k, CharacterizationMode.GENERAL, exm(safe_set), exm(live_set))


# ---------------------------------------------------------------------------
# Characterizations
# ---------------------------------------------------------------------------

class CharacterizationMode(Enum):
    GENERAL = "general"
    PERM_INVARIANT = "perm"


def _flatten(element) -> Tuple[int, ...]:
    if element and isinstance(element[0], tuple):
        s, l = element
        return tuple(s) + tuple(l)
    return tuple(element)


def _leq(a: Tuple[int, ...], b: Tuple[int, ...]) -> bool:
    return all(x <= y for x, y in zip(a, b))


def exm(vectors: Iterable) -> FrozenSet:
    """Minimal elements under the componentwise order."""
    items = {}
    for vector in vectors:
        items.setdefault(_flatten(vector), vector)
    return frozenset(
        vector for key, vector in items.items()
        if not any(other != key and _leq(other, key) for other in items)
    )


def class_rep(v: Tuple[BitVector, BitVector]) -> Tuple[int, int, int]:
    """(c_s, c_l, c_sl): safe chains, live chains, chains both safe and live."""
    s, l = v
    return sum(s), sum(l), sum(1 for a, b in zip(s, l) if a and b)


def _class_arrays(k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    codes = _codes(k)
    c_s = np.zeros(codes.size, dtype=np.int64)
    c_l = np.zeros(codes.size, dtype=np.int64)
    c_sl = np.zeros(codes.size, dtype=np.int64)
    for i in range(k):
        s_bit = (codes >> i) & 1
        l_bit = (codes >> (k + i)) & 1
        c_s += s_bit
        c_l += l_bit
        c_sl += s_bit & l_bit
    return c_s, c_l, c_sl


def _format_element(element) -> str:
    if element and isinstance(element[0], tuple):
        return f"({format_bits(element[0])},{format_bits(element[1])})"
    return "(" + ",".join(str(n) for n in element) + ")"


@dataclass(frozen=True)
class Characterization:
    """
    Security characterization of an overlay over k chains.

    In GENERAL mode ``safety`` and ``liveness`` hold extreme (s, l) bit-vector
    pairs; in PERM_INVARIANT mode they hold extreme (n_s, n_l, n_sl) triples.
    The sets are reduced to their extreme elements on construction, upward
    closure is implied.
    """
    k: int
    mode: CharacterizationMode
    safety: FrozenSet
    liveness: FrozenSet

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "safety", exm(self._normalize(e) for e in self.safety))
        object.__setattr__(self, "liveness", exm(self._normalize(e) for e in self.liveness))

    def _normalize(self, element):
        if self.mode is CharacterizationMode.GENERAL:
            try:
                s, l = element
            except (TypeError, ValueError):
                raise ConfigurationError(f"general element must be an (s, l) pair, got {element!r}")
            s = parse_bits(s) if isinstance(s, str) else tuple(int(b) for b in s)
            l = parse_bits(l) if isinstance(l, str) else tuple(int(b) for b in l)
            if len(s) != self.k or len(l) != self.k or any(b not in (0, 1) for b in s + l):
                raise ConfigurationError(f"element {element!r} is not a pair of {self.k}-bit vectors")
            return s, l
        triple = tuple(int(n) for n in element)
        if len(triple) != 3 or any(n < 0 for n in triple):
            raise ConfigurationError(f"perm-invariant element must be a non-negative triple, got {element!r}")
        return triple

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_ksl(cls, k: int, s: int, l: int) -> "Characterization":
        return cls(k, CharacterizationMode.PERM_INVARIANT, frozenset({(s, 0, 0)}), frozenset({(0, l, 0)}))

    @classmethod
    def from_sync_tuple(cls, k: int, s: Optional[int], l: int, b: Optional[int]) -> "Characterization":
        """Safe if >= s chains are safe or >= b chains are safe and live; live if >= l are live."""
        safety = set()
        if s is not None:
            safety.add((s, 0, 0))
        if b is not None:
            safety.add((0, 0, b))
        return cls(k, CharacterizationMode.PERM_INVARIANT, frozenset(safety), frozenset({(0, l, 0)}))

    # -- membership ---------------------------------------------------------

    def _mask(self, elements: FrozenSet, max_eval_k: int) -> np.ndarray:
        _check_eval_k(self.k, max_eval_k)
        codes = _codes(self.k)
        mask = np.zeros(codes.size, dtype=bool)
        if self.mode is CharacterizationMode.GENERAL:
            for s, l in elements:
                code = _encode_pair(s, l)
                mask |= (codes & code) == code
            return mask
        c_s, c_l, c_sl = _class_arrays(self.k)
        for n_s, n_l, n_sl in elements:
            mask |= (c_s >= n_s) & (c_l >= n_l) & (c_sl >= n_sl)
        return mask

    def safety_mask(self, max_eval_k: int = MAX_EVAL_K) -> np.ndarray:
        return self._mask(self.safety, max_eval_k)

    def liveness_mask(self, max_eval_k: int = MAX_EVAL_K) -> np.ndarray:
        return self._mask(self.liveness, max_eval_k)

    # -- conversions --------------------------------------------------------

    def to_general(self, max_eval_k: int = MAX_EVAL_K) -> "Characterization":
        if self.mode is CharacterizationMode.GENERAL:
            return self
        return Characterization(
            self.k,
            CharacterizationMode.GENERAL,
            frozenset(_decode_code(c, self.k) for c in _extreme_codes(self.safety_mask(max_eval_k), self.k)),
            frozenset(_decode_code(c, self.k) for c in _extreme_codes(self.liveness_mask(max_eval_k), self.k)),
        )

    def to_perm_invariant(self, max_eval_k: int = MAX_EVAL_K) -> "Characterization":
        if self.mode is CharacterizationMode.PERM_INVARIANT:
            return self
        c_s, c_l, c_sl = _class_arrays(self.k)
        converted = []
        for label, mask in (("safety", self.safety_mask(max_eval_k)), ("liveness", self.liveness_mask(max_eval_k))):
            members = np.nonzero(mask)[0]
            triples = exm((int(c_s[c]), int(c_l[c]), int(c_sl[c])) for c in members)
            candidate = Characterization(self.k, CharacterizationMode.PERM_INVARIANT, triples, frozenset())
            if not np.array_equal(candidate._mask(triples, max_eval_k), mask):
                raise SynthesisError(f"{label} set is not permutation invariant")
            converted.append(triples)
        return Characterization(self.k, CharacterizationMode.PERM_INVARIANT, converted[0], converted[1])

    # -- serialization ------------------------------------------------------

    def sorted_safety(self) -> List:
        return sorted(self.safety, key=_flatten)

    def sorted_liveness(self) -> List:
        return sorted(self.liveness, key=_flatten)

    def to_dict(self) -> Dict[str, Any]:
        if self.mode is CharacterizationMode.GENERAL:
            encode = lambda pair: [format_bits(pair[0]), format_bits(pair[1])]
        else:
            encode = list
        return {
            "mode": self.mode.value,
            "k": self.k,
            "safety": [encode(e) for e in self.sorted_safety()],
            "liveness": [encode(e) for e in self.sorted_liveness()],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Characterization":
        try:
            mode = CharacterizationMode(data.get("mode", "general"))
            k = int(data["k"])
            safety = [tuple(e) for e in data.get("safety", [])]
            liveness = [tuple(e) for e in data.get("liveness", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"invalid characterization: {str(e)}")
        return cls(k, mode, frozenset(safety), frozenset(liveness))

    def describe(self) -> str:
        safety = ", ".join(_format_element(e) for e in self.sorted_safety()) or "-"
        liveness = ", ".join(_format_element(e) for e in self.sorted_liveness()) or "-"
        return f"k={self.k} {self.mode.value} safety={{{safety}}} liveness={{{liveness}}}"


def load_characterization(path: str) -> Characterization:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON in {path}: {str(e)}")
    except OSError as e:
        raise ConfigurationError(f"Failed to read characterization {path}: {str(e)}")
    return Characterization.from_dict(data)


def save_characterization(characterization: Characterization, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(characterization.to_dict(), f, indent=2)


def dominates(p: Characterization, q: Characterization) -> bool:
    """True iff p is safe and live in every situation q is."""
    if p.mode is not q.mode:
        raise SynthesisError(f"cannot compare a {p.mode.value} characterization with a {q.mode.value} one")
    if p.k != q.k:
        raise SynthesisError(f"cannot compare characterizations over k={p.k} and k={q.k} chains")
    for mine, theirs in ((p.safety, q.safety), (p.liveness, q.liveness)):
        for target in theirs:
            if not any(_leq(_flatten(e), _flatten(target)) for e in mine):
                return False
    return True


# ---------------------------------------------------------------------------
# Closed-form achievability
# ---------------------------------------------------------------------------

def unachievable_reason(k: int, s: int, l: int) -> Optional[str]:
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if l > k:
        return f"l={l} > k={k}"
    if l < k // 2 + 1:
        return f"l={l} < floor(k/2)+1={k // 2 + 1}"
    if s < 2 * (k - l) + 1:
        return f"s={s} < 2(k-l)+1={2 * (k - l) + 1}"
    return None


def achievable_ksl(k: int, s: int, l: int) -> bool:
    return unachievable_reason(k, s, l) is None


def sync_unachievable_reason(k: int, s: Optional[int], l: int, b: Optional[int]) -> Optional[str]:
    """
    Reason the synchronous tuple is not achievable, or None.

    Each safety branch that is present must satisfy its own inequality:
    the s-branch needs l > k/2 and s >= 2(k-l)+1, the b-branch needs
    b >= k-l+1. With only a b-branch, l <= k/2 is allowed.
    """
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if l > k:
        return f"l={l} > k={k}"
    if l < 1:
        return f"l={l} < 1"
    if s is not None:
        if l < k // 2 + 1:
            return f"l={l} < floor(k/2)+1={k // 2 + 1}"
        if s < 2 * (k - l) + 1:
            return f"s={s} < 2(k-l)+1={2 * (k - l) + 1}"
    if b is not None and b < k - l + 1:
        return f"b={b} < k-l+1={k - l + 1}"
    return None


def achievable_sync(k: int, s: Optional[int], l: int, b: Optional[int]) -> bool:
    return sync_unachievable_reason(k, s, l, b) is None


# ---------------------------------------------------------------------------
# (k, s, l) synthesis
# ---------------------------------------------------------------------------

def lemma_leave(base: CircuitNode, chains: Union[int, Sequence[int]],
                max_k: int = MAX_K) -> CircuitNode:
    """
    Serial composition of ``base`` over every size-k' subset of ``chains``.

    ``base`` achieves (k', s, l) over leaves 1..k'; the result achieves
    (k'+m, s, l+m) where m = len(chains) - k'. Subsets are taken in
    lexicographic order.
    """
    chains = list(range(1, chains + 1)) if isinstance(chains, int) else list(chains)
    k_base = chain_count(base)
    m = len(chains) - k_base
    if m < 1:
        raise SynthesisError(f"lemma_leave needs m >= 1 extra chains, got m={m}")
    if len(chains) > max_k:
        raise SynthesisError(f"k={len(chains)} exceeds synthesis.max_k={max_k}; use sampling mode or raise the cap")
    return Serial(tuple(
        substitute(base, {i + 1: Leaf(c) for i, c in enumerate(subset)})
        for subset in itertools.combinations(chains, k_base)
    ))


def lvl_over(children: Sequence[CircuitNode], max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    """
    (2g+1)-lvl built from 3-lvl and serial gates: safe if all children are
    safe, live if at least g+1 children are live.

    g = 1 is a single Lvl3. For g > 1 every size-(2g-1) subset goes through a
    (2g-1)-lvl; the g(2g+1) outputs are grouped in order and reduced again:
    odd g uses g+1 groups of 2g-1 plus one singleton, even g uses g groups of
    2g-1 plus one group of 2g run through lemma_leave.
    """
    children = list(children)
    n = len(children)
    if n % 2 == 0:
        raise SynthesisError(f"lvl composition needs an odd number of inputs, got {n}")
    g = (n - 1) // 2
    if g == 0:
        return children[0]
    if g == 1:
        return Lvl3(tuple(children))
    if n > max_lvl_arity:
        raise SynthesisError(
            f"{n}-lvl exceeds synthesis.max_lvl_arity={max_lvl_arity}; use sampling mode or raise the cap"
        )

    outputs = [
        lvl_over([children[i] for i in subset], max_lvl_arity)
        for subset in itertools.combinations(range(n), 2 * g - 1)
    ]
    size = 2 * g - 1
    reduced = []
    if g % 2 == 1:
        for start in range(0, (g + 1) * size, size):
            reduced.append(lvl_over(outputs[start:start + size], max_lvl_arity))
        reduced.append(outputs[-1])
    else:
        for start in range(0, g * size, size):
            reduced.append(lvl_over(outputs[start:start + size], max_lvl_arity))
        last = outputs[g * size:]
        base = lvl_over([Leaf(i) for i in range(1, size + 1)], max_lvl_arity)
        leave = lemma_leave(base, len(last), max_k=len(last))
        reduced.append(substitute(leave, {i + 1: node for i, node in enumerate(last)}))
    return lvl_over(reduced, max_lvl_arity)


def synthesize_lvl(f: int, max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    """(2f+1)-lvl over leaves 1..2f+1; achieves (2f+1, 2f+1, f+1)."""
    if f < 1:
        raise SynthesisError(f"synthesize_lvl needs f >= 1, got {f}")
    return lvl_over([Leaf(i) for i in range(1, 2 * f + 2)], max_lvl_arity)


def synthesize_ksl(k: int, s: int, l: int, max_k: int = MAX_K,
                   max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    reason = unachievable_reason(k, s, l)
    if reason is not None:
        raise SynthesisError(f"({k},{s},{l}) is unachievable: {reason}")
    if k > max_k:
        raise SynthesisError(f"k={k} exceeds synthesis.max_k={max_k}; use sampling mode or raise the cap")
    f = k - l
    base = Leaf(1) if f == 0 else synthesize_lvl(f, max_lvl_arity)
    if k == 2 * f + 1:
        return base
    return lemma_leave(base, k, max_k=max_k)


# ---------------------------------------------------------------------------
# General synthesis
# ---------------------------------------------------------------------------

Pair = Tuple[BitVector, BitVector]


def _pairs(elements: Iterable) -> List[Pair]:
    pairs = []
    for element in elements:
        s, l = element
        s = parse_bits(s) if isinstance(s, str) else tuple(int(b) for b in s)
        l = parse_bits(l) if isinstance(l, str) else tuple(int(b) for b in l)
        pairs.append((s, l))
    return sorted(set(pairs), key=_flatten)


def _quorums(liveness: List[Pair]) -> List[FrozenSet[int]]:
    return sorted({ind(l) for _, l in liveness}, key=lambda q: tuple(sorted(q)))


def _bits(q: Iterable[int], k: int) -> str:
    return format_bits([1 if i + 1 in q else 0 for i in range(k)])


def general_psync_violation(safety: Iterable, liveness: Iterable) -> Optional[str]:
    """First violated achievability clause under partial synchrony, or None."""
    safety, liveness = _pairs(safety), _pairs(liveness)
    for s, l in liveness:
        if any(s):
            return f"liveness element ({format_bits(s)},{format_bits(l)}) depends on safety"
    for s, l in safety:
        if any(l):
            return f"safety element ({format_bits(s)},{format_bits(l)}) depends on liveness"
    for (_, l1), (_, l2) in itertools.combinations_with_replacement(liveness, 2):
        for s, _ in safety:
            if not ind(l1) & ind(l2) & ind(s):
                return (f"triple l1={format_bits(l1)}, l2={format_bits(l2)}, s={format_bits(s)} "
                        f"has an empty intersection")
    return None


def check_general_psync(safety: Iterable, liveness: Iterable) -> bool:
    return general_psync_violation(safety, liveness) is None


def general_sync_violation(safety: Iterable, liveness: Iterable) -> Optional[str]:
    """First violated achievability clause under synchrony, or None."""
    safety, liveness = _pairs(safety), _pairs(liveness)
    for s, l in liveness:
        if any(s):
            return f"liveness element ({format_bits(s)},{format_bits(l)}) depends on safety"
    for (_, l1), (_, l2) in itertools.combinations_with_replacement(liveness, 2):
        for s, l in safety:
            solid = {i + 1 for i in range(len(s)) if s[i] and l[i]}
            if ind(l1) & solid and ind(l2) & solid:
                continue
            if ind(l1) & ind(l2) & ind(s):
                continue
            return (f"triple l1={format_bits(l1)}, l2={format_bits(l2)}, "
                    f"(s,l)=({format_bits(s)},{format_bits(l)}) has neither a safe-and-live chain "
                    f"in both quorums nor a safe chain in their intersection")
    return None


def check_general_sync(safety: Iterable, liveness: Iterable) -> bool:
    return general_sync_violation(safety, liveness) is None


def _quorum_induction(quorums: List[FrozenSet[int]], k: int, sync: bool,
                      max_lvl_arity: int) -> CircuitNode:
    if not quorums:
        raise SynthesisError("liveness set is empty: no quorum to build on")
    if any(not q for q in quorums):
        raise SynthesisError("liveness set contains the all-zero vector: an always-live overlay cannot be built")

    protocol = _serial([Leaf(i) for i in sorted(quorums[0])])
    for m in range(1, len(quorums)):
        newest = quorums[m]
        parts = []
        for i in range(m):
            members = [Leaf(j) for j in sorted(quorums[i] & newest)]
            if sync:
                pairs = set()
                for j1 in sorted(quorums[i]):
                    for j2 in sorted(newest):
                        if j1 != j2 and (j2, j1) not in pairs:
                            pairs.add((j1, j2))
                members.extend(Lvs((Leaf(j1), Leaf(j2))) for j1, j2 in sorted(pairs))
            if not members:
                raise SynthesisError(
                    f"quorums {_bits(quorums[i], k)} and {_bits(newest, k)} do not intersect"
                )
            parts.append(_serial(members))
        intersection = lvl_over(parts + [protocol] * (m - 1), max_lvl_arity)
        protocol = Lvl3((protocol, _serial([Leaf(j) for j in sorted(newest)]), intersection))
    return protocol


def synthesize_general_psync(safety: Iterable, liveness: Iterable,
                             max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    """Tree whose predicted characterization dominates (safety, liveness) under partial synchrony."""
    safety, liveness = _pairs(safety), _pairs(liveness)
    violation = general_psync_violation(safety, liveness)
    if violation is not None:
        raise SynthesisError(f"unachievable under partial synchrony: {violation}")
    if not liveness:
        raise SynthesisError("liveness set is empty: no quorum to build on")
    k = len(liveness[0][1])
    return _quorum_induction(_quorums(liveness), k, sync=False, max_lvl_arity=max_lvl_arity)


def synthesize_general_sync(safety: Iterable, liveness: Iterable,
                            max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    """Tree whose predicted characterization dominates (safety, liveness) under synchrony."""
    safety, liveness = _pairs(safety), _pairs(liveness)
    violation = general_sync_violation(safety, liveness)
    if violation is not None:
        raise SynthesisError(f"unachievable under synchrony: {violation}")
    if not liveness:
        raise SynthesisError("liveness set is empty: no quorum to build on")
    k = len(liveness[0][1])
    return _quorum_induction(_quorums(liveness), k, sync=True, max_lvl_arity=max_lvl_arity)


def synthesize(characterization: Characterization, mode: NetworkMode,
               max_lvl_arity: int = MAX_LVL_ARITY) -> CircuitNode:
    general = characterization.to_general()
    if mode is NetworkMode.SYNCHRONY:
        return synthesize_general_sync(general.safety, general.liveness, max_lvl_arity)
    return synthesize_general_psync(general.safety, general.liveness, max_lvl_arity)


def verify_synthesis(node: CircuitNode, target: Characterization, mode: NetworkMode) -> bool:
    predicted = predicted_properties(node, mode, k=target.k)
    return dominates(predicted, target.to_general())


def pareto_set(k: int, mode: NetworkMode) -> List[Characterization]:
    """Pareto-optimal permutation-invariant characterizations, ordered by m_l."""
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    family = []
    for m_l in range(k // 2 + 1, k + 1):
        safety = {(2 * (k - m_l) + 1, 0, 0)}
        if mode is NetworkMode.SYNCHRONY:
            safety.add((0, 0, k - m_l + 1))
        family.append(Characterization(k, CharacterizationMode.PERM_INVARIANT,
                                       frozenset(safety), frozenset({(0, m_l, 0)})))
    return family
