"""
Attack Library

Scripted adversary worlds that break overlays whose claimed guarantees go
beyond what their construction can deliver:

- serial-without-certificates: a serial gate over a child without
  certificates; the adversary snapshots a short and a long fork of it into
  two branches of an unsafe ordering chain.
- three-world-psync: two liveness quorums whose intersection holds no
  chain required to be safe; every chain of the intersection equivocates,
  one branch per side, and the sides are kept apart until GST.
- sync-converse: an lvs gate claimed safe when both chains are safe, run
  with one chain that is safe but not live.
- naive-parallel: the lvs gate under partial synchrony, each client cut off
  from one chain until GST.

Each builder returns a ``Scenario``; ``run_attack`` runs it. Scripted
inclusions before GST are expedited, so every world replays identically
for any seed. ``cell_attacks`` instantiates the worlds that are legal
adversaries for one sweep cell.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from circuit_config import DEFAULT_CONFIG
from circuits import CircuitNode, Leaf, Lvl3, Lvs, Serial, chain_count, node_kinds, synthesize_ksl
from harness import Injection, RunResult, Scenario, SimulationRun, run_scenario
from ledger_core import (
    BitVector,
    ChainFault,
    ConfigurationError,
    FaultAssignment,
    Transaction,
    format_bits,
    ind,
    parse_bits,
)
from lvl_composition import LvlGate
from simnet import NetworkMode, NetworkModel
from underlay import ChainConfig, ChainLane


def _chain(index: int, fault: ChainFault, config: Dict[str, Any], **overrides) -> ChainConfig:
    sim = config["simulation"]
    values = dict(
        id=f"chain{index}",
        epoch_duration=int(sim["epoch_duration"]),
        tconf=int(sim["tconf"]),
        safe=fault.safe,
        live=fault.live,
        max_branches=2,
    )
    values.update(overrides)
    return ChainConfig(**values)


def _epoch_length(config: Dict[str, Any]) -> int:
    sim = config["simulation"]
    T = int(sim["epoch_duration"])
    return math.ceil(3 * int(sim["tconf"]) / T) * T


# ---------------------------------------------------------------------------
# Serial composition over a child without certificates
# ---------------------------------------------------------------------------

def serial_without_certificates(seed: int = 0, config: Optional[Dict[str, Any]] = None) -> Scenario:
    config = config or DEFAULT_CONFIG
    chains = [
        _chain(1, ChainFault(safe=True, live=True), config, generates_certificates=False),
        _chain(2, ChainFault(safe=False, live=True), config),
    ]

    def script(run: SimulationRun):
        chain_a, chain_b = run.chain(1), run.chain(2)
        gate = run.gate("root")
        lane_a, lane_b = gate.a, gate.b
        chain_a.fork_branch(0, 0, 0)
        chain_b.fork_branch(0, 0, 0)
        chain_b.assign_branch("c1", 0)
        chain_b.assign_branch("c2", 1)

        def write_forks(run: SimulationRun, t: int):
            for tx_id in ("tx1", "tx2", "tx3"):
                lane_a.inject(Transaction(tx_id), 0, t)
            for tx_id in ("tx1", "tx2b"):
                lane_a.inject(Transaction(tx_id), 1, t)

        def post_snapshots(run: SimulationRun, t: int):
            long_branch, short_branch = chain_a.branch(0), chain_a.branch(1)
            long_fork = long_branch.lane_ledger(lane_a.lane, long_branch.height)
            short_fork = short_branch.lane_ledger(lane_a.lane, short_branch.height)
            lane_b.inject(gate.snapshot_tx(short_fork, None), 0, t)
            lane_b.inject(gate.snapshot_tx(long_fork, None), 1, t)

        run.at(1, write_forks)
        run.at(4, post_snapshots)

    return Scenario(
        name="serial-without-certificates",
        circuit=Serial((Leaf(1), Leaf(2))),
        network=NetworkModel.partially_synchronous(int(config["simulation"]["delta"]), 0),
        chains=chains,
        observers=["c1", "c2"],
        horizon=12,
        seed=seed,
        adversarial=False,
        script=script,
        gate_options={"unchecked": True, "auto_snapshot": False},
        expect={"safety": "violated"},
    )


# ---------------------------------------------------------------------------
# Three worlds under partial synchrony
# ---------------------------------------------------------------------------

def three_world_vectors(k: int, s: int, l: int) -> Tuple[BitVector, BitVector, BitVector]:
    """
    Quorums l1 (first l chains), l2 (last l chains) and a safety vector s3 of
    weight s that avoids their intersection as far as possible.
    """
    l1 = tuple(1 if i < l else 0 for i in range(k))
    l2 = tuple(1 if i >= k - l else 0 for i in range(k))
    overlap = {i for i in range(k) if l1[i] and l2[i]}
    order = [i for i in range(k) if i not in overlap] + sorted(overlap)
    chosen = set(order[:min(s, k)])
    s3 = tuple(1 if i in chosen else 0 for i in range(k))
    return l1, l2, s3


def three_world_psync(circuit: Optional[CircuitNode] = None, claim: Tuple[int, int, int] = (3, 2, 2),
                      l1=None, l2=None, s3=None, seed: int = 0, gst: Optional[int] = None,
                      config: Optional[Dict[str, Any]] = None, fault: Optional[FaultAssignment] = None) -> Scenario:
    """
    Worlds for the quorums (l1, l2) and safety vector s3.

    Chains of l1 only serve side 1, chains of l2 only serve side 2, and are
    stalled for the other side until GST. Unsafe chains in both quorums fork
    into one branch per side and their lvl validators are split per branch.
    tx1 reaches only side 1 before GST, tx2 only side 2. When the triple
    intersection is not empty no chain of it can fork and the schedule
    degrades to plain stalls. ``fault`` overrides the chain flags derived
    from the vectors.
    """
    config = config or DEFAULT_CONFIG
    k, s, l = claim
    circuit = circuit if circuit is not None else Lvl3((Leaf(1), Leaf(2), Leaf(3)))
    if chain_count(circuit) != k:
        raise ConfigurationError(f"claim is over k={k} chains, circuit over {chain_count(circuit)}")
    defaults = three_world_vectors(k, s, l)
    l1, l2, s3 = [parse_bits(v) if isinstance(v, str) else (tuple(v) if v is not None else d)
                  for v, d in zip((l1, l2, s3), defaults)]
    quorum1, quorum2, safe_set = ind(l1), ind(l2), ind(s3)
    forked = (quorum1 & quorum2) - safe_set
    gst = gst if gst is not None else 8 * _epoch_length(config)

    if fault is not None and len(fault) != k:
        raise ConfigurationError(f"fault assignment over {len(fault)} chains, circuit over {k}")
    chains = [
        _chain(i, fault[i - 1] if fault is not None else ChainFault(safe=i in safe_set, live=i in quorum1 | quorum2),
               config)
        for i in range(1, k + 1)
    ]

    def script(run: SimulationRun):
        sides = {"c1": 1, "c2": 2}
        chain_index = {id(chain): i for i, chain in enumerate(run.chains, start=1)}
        side = lambda observer: sides.get(observer, 1)

        for handle in list(run.root.walk()):
            if not isinstance(handle, LvlGate):
                continue
            for j, member in enumerate(handle.members):
                observer = handle.validators[j].observer
                index = chain_index.get(id(member.chain)) if isinstance(member, ChainLane) else None
                if index in forked:
                    replicas = []
                    for branch in (0, 1):
                        replica = f"{observer}@{branch}"
                        sides[replica] = branch + 1
                        replicas.append((replica, lambda tx, t, lane=member, b=branch: lane.inject(tx, b, t)))
                    handle.split_validator(j, replicas)
                elif index is not None:
                    sides[observer] = 2 if index in quorum2 - quorum1 else 1

        for i, chain in enumerate(run.chains, start=1):
            if i not in quorum1 | quorum2:
                chain.halt(0)
                continue
            chain.expedite(gst)
            if i in forked:
                chain.fork_branch(0, 0, 0)
                chain.set_branch_selector(lambda observer, t: side(observer) - 1)
                chain.hold("tx1", gst, branches=[1])
                chain.hold("tx2", gst, branches=[0])
            elif i in quorum1:
                chain.set_stall(lambda observer: side(observer) == 2, 0, gst)
                chain.hold("tx2", gst)
            else:
                chain.set_stall(lambda observer: side(observer) == 1, 0, gst)
                chain.hold("tx1", gst)

    instantiable = not (quorum1 & quorum2 & safe_set)
    return Scenario(
        name=f"three-world-psync l1={format_bits(l1)} l2={format_bits(l2)} s3={format_bits(s3)}",
        circuit=circuit,
        network=NetworkModel.partially_synchronous(int(config["simulation"]["delta"]), gst),
        chains=chains,
        observers=["c1", "c2"],
        injections=[Injection("tx1", 0), Injection("tx2", 0)],
        seed=seed,
        adversarial=False,
        script=script,
        expect={"safety": "violated" if instantiable else "held"},
    )


# ---------------------------------------------------------------------------
# lvs worlds
# ---------------------------------------------------------------------------

def _cell_chains(circuit: CircuitNode, fault: FaultAssignment, config: Dict[str, Any]):
    if len(fault) != chain_count(circuit):
        raise ConfigurationError(f"fault assignment over {len(fault)} chains, circuit over {chain_count(circuit)}")
    return [_chain(i, chain, config) for i, chain in enumerate(fault.chains, start=1)]


def sync_converse(seed: int = 0, config: Optional[Dict[str, Any]] = None,
                  circuit: Optional[CircuitNode] = None, fault: Optional[FaultAssignment] = None) -> Scenario:
    """
    Chains that are not live are never shown to c2 and order tx1 before tx2.
    Live chains include both as late as they may, tx2 first. c1 sees a hidden
    chain ahead and follows its order, c2 follows the live ones.

    Defaults to lvs(1, 2) with chain 1 safe but not live and chain 2 safe
    and live.
    """
    config = config or DEFAULT_CONFIG
    sim = config["simulation"]
    tconf, delta = int(sim["tconf"]), int(sim["delta"])
    start = tconf + 1
    named = fault is None
    circuit = circuit if circuit is not None else Lvs((Leaf(1), Leaf(2)))
    if fault is None:
        fault = FaultAssignment((ChainFault(safe=True, live=False), ChainFault(safe=True, live=True)))

    def script(run: SimulationRun):
        for chain in run.chains:
            if chain.live:
                chain.hold("tx1", start + tconf)
                chain.hold("tx2", start + tconf)
            else:
                chain.set_stall(["c2"], 0)
                chain.hold("tx2", start + tconf + 1)

    return Scenario(
        name="sync-converse" if named else f"sync-converse [{fault.label()}]",
        circuit=circuit,
        network=NetworkModel.synchronous(delta),
        chains=_cell_chains(circuit, fault, config),
        observers=["c1", "c2"],
        injections=[Injection("tx2", start), Injection("tx1", start)],
        seed=seed,
        adversarial=False,
        script=script,
        expect={"safety": "violated"} if named else {},
    )


def naive_parallel(seed: int = 0, gst: Optional[int] = None, config: Optional[Dict[str, Any]] = None,
                   circuit: Optional[CircuitNode] = None, fault: Optional[FaultAssignment] = None) -> Scenario:
    """
    Every chain serves one client until GST: odd chains c1, even chains c2.
    Each client's tx enters its own chains in the tick it is sent and is held
    back on the others.

    Defaults to lvs(1, 2) over two safe and live chains.
    """
    config = config or DEFAULT_CONFIG
    sim = config["simulation"]
    gst = gst if gst is not None else 10 * int(sim["tconf"])
    named = fault is None
    circuit = circuit if circuit is not None else Lvs((Leaf(1), Leaf(2)))
    if fault is None:
        fault = FaultAssignment.honest(chain_count(circuit))

    def script(run: SimulationRun):
        for i, chain in enumerate(run.chains, start=1):
            chain.expedite(gst)
            if i % 2:
                chain.set_stall(["c2"], 0, gst)
                chain.hold("tx2", gst)
            else:
                chain.set_stall(["c1"], 0, gst)
                chain.hold("tx1", gst)

    return Scenario(
        name="naive-parallel" if named else f"naive-parallel [{fault.label()}]",
        circuit=circuit,
        network=NetworkModel.partially_synchronous(int(sim["delta"]), gst),
        chains=_cell_chains(circuit, fault, config),
        observers=["c1", "c2"],
        injections=[Injection("tx1", 1), Injection("tx2", 1)],
        seed=seed,
        adversarial=False,
        script=script,
        expect={"safety": "violated"} if named else {},
    )


def cell_attacks(circuit: CircuitNode, mode: NetworkMode, fault: FaultAssignment, seed: int = 0,
                 gst: int = 0, config: Optional[Dict[str, Any]] = None) -> List[Scenario]:
    """
    Scripted worlds that stay within the flags of ``fault``, for the gate
    kinds found in ``circuit``.

    Under partial synchrony an lvl gate meets the three worlds with both
    quorums spanning every chain, so exactly the unsafe chains equivocate;
    an lvs gate meets the cut-off clients. Under synchrony an lvs gate meets
    chains hidden from one client.
    """
    config = config or DEFAULT_CONFIG
    kinds = node_kinds(circuit)
    k = chain_count(circuit)
    scenarios = []
    if mode is NetworkMode.PARTIAL_SYNCHRONY:
        if "lvl" in kinds:
            everyone = (1,) * k
            scenarios.append(three_world_psync(circuit, claim=(k, sum(fault.safety_bits), k), l1=everyone,
                                               l2=everyone, s3=fault.safety_bits, seed=seed, gst=gst,
                                               config=config, fault=fault))
        if "lvs" in kinds:
            scenarios.append(naive_parallel(seed=seed, gst=gst, config=config, circuit=circuit, fault=fault))
    elif "lvs" in kinds:
        scenarios.append(sync_converse(seed=seed, config=config, circuit=circuit, fault=fault))
    return scenarios


# ---------------------------------------------------------------------------
# Library
# ---------------------------------------------------------------------------

@dataclass
class Attack:
    name: str
    summary: str
    build: Callable[..., Scenario]
    claim: str = ""
    expect: Dict[str, str] = field(default_factory=dict)


def attack_library() -> Dict[str, Attack]:
    attacks = [
        Attack("serial-without-certificates",
               "serial gate over a child without certificates, forks snapshotted into an unsafe chain",
               serial_without_certificates,
               claim="serial(1, 2) safe while chain 1 is safe",
               expect={"safety": "violated"}),
        Attack("three-world-psync",
               "lvl over 3 chains claimed (3,2,2): quorums 110 and 011 meet only at an unsafe chain",
               lambda seed=0, config=None: three_world_psync(claim=(3, 2, 2), seed=seed, config=config),
               claim="(k,s,l)=(3,2,2)",
               expect={"safety": "violated"}),
        Attack("three-world-psync-degraded",
               "same schedule against the synthesized (3,3,2) circuit; the intersection chain stays safe",
               lambda seed=0, config=None: three_world_psync(synthesize_ksl(3, 3, 2), claim=(3, 3, 2),
                                                             seed=seed, config=config),
               claim="(k,s,l)=(3,3,2)",
               expect={"safety": "held"}),
        Attack("sync-converse",
               "lvs claimed safe when both chains are safe, one chain not live",
               sync_converse,
               claim="E^S={(11,00)}",
               expect={"safety": "violated"}),
        Attack("naive-parallel",
               "lvs under partial synchrony, each client cut off from one chain until GST",
               naive_parallel,
               claim="lvs(1, 2) under partial synchrony",
               expect={"safety": "violated"}),
    ]
    return {attack.name: attack for attack in attacks}


def run_attack(name: str, seed: int = 0, config: Optional[Dict[str, Any]] = None) -> RunResult:
    library = attack_library()
    if name not in library:
        raise ConfigurationError(f"unknown attack {name!r}; known: {', '.join(library)}")
    return run_scenario(library[name].build(seed=seed, config=config), config)
