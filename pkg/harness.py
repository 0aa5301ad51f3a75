"""
Harness

Runs composition trees over simulated underlay chains and judges the
resulting client outputs.

- ``Scenario``: network model, chain configurations, circuit, fault
  assignment, adversary script, injections, observers, horizon and seed;
  loadable from JSON scenario files.
- ``SimulationRun``: the engine. Every tick runs, in order: network
  deliveries, block production, injections at the root, gate steps in
  post-order, and one read of the root per observer.
- ``judge_safety`` / ``judge_liveness``: verdicts with replayable witnesses.
- ``sweep``: every fault assignment of a circuit (or a sample of them) times
  several seeds, compared against the verdicts the circuit algebra predicts.
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from numpy.random import SeedSequence
from tqdm import tqdm

from circuit_config import DEFAULT_CONFIG
from circuits import CircuitNode, Leaf, Lvl3, Lvs, Serial, chain_count, circuit_to_spec, evaluate, parse_circuit
from ledger_core import (
    CertificateRegistry,
    ConfigurationError,
    FaultAssignment,
    Ledger,
    SynthesisError,
    Transaction,
    consistent,
)
from lvl_composition import LvlGate
from lvs_composition import LvsGate
from serial_composition import serial_compose_n
from simnet import AdversarySchedule, Network, NetworkMode, NetworkModel, derived_generator
from underlay import ChainConfig, LedgerHandle, UnderlayChain

logger = logging.getLogger(__name__)

Outputs = Dict[str, List[Tuple[int, Ledger]]]


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@dataclass
class Injection:
    tx: str
    t: int


@dataclass
class Scenario:
    """Everything needed to replay one run."""
    name: str
    circuit: CircuitNode
    network: NetworkModel
    chains: List[ChainConfig]
    observers: List[str] = field(default_factory=lambda: ["c1", "c2"])
    injections: List[Injection] = field(default_factory=list)
    horizon: Optional[int] = None
    seed: int = 0
    adversarial: bool = True
    directives: List[Dict[str, Any]] = field(default_factory=list)
    script: Optional[Callable[["SimulationRun"], None]] = None
    gate_options: Dict[str, Any] = field(default_factory=dict)
    expect: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        k = chain_count(self.circuit)
        if len(self.chains) != k:
            raise ConfigurationError(
                f"scenario {self.name}: circuit ranges over {k} chains but {len(self.chains)} are configured"
            )
        if not self.observers:
            raise ConfigurationError(f"scenario {self.name}: at least one observer is needed")

    @property
    def mode(self) -> NetworkMode:
        return self.network.mode

    @property
    def fault(self) -> FaultAssignment:
        return FaultAssignment.from_bits([int(c.safe) for c in self.chains], [int(c.live) for c in self.chains])

    @classmethod
    def from_dict(cls, data: Dict[str, Any], config: Optional[Dict[str, Any]] = None) -> "Scenario":
        sim = (config or DEFAULT_CONFIG)["simulation"]
        try:
            circuit = parse_circuit(data["circuit"])
        except KeyError:
            raise ConfigurationError("scenario needs a 'circuit' entry")
        k = chain_count(circuit)
        mode = NetworkMode.parse(data.get("mode", sim["mode"]))
        delta = int(data.get("delta", sim["delta"]))
        if mode is NetworkMode.SYNCHRONY:
            if int(data.get("gst", 0)) != 0:
                raise ConfigurationError(f"a synchronous scenario has gst == 0, got {data['gst']}")
            network = NetworkModel.synchronous(delta)
        else:
            network = NetworkModel.partially_synchronous(delta, int(data.get("gst", sim["gst"])))

        chain_entries = data.get("chains") or [{} for _ in range(k)]
        if len(chain_entries) != k:
            raise ConfigurationError(f"scenario lists {len(chain_entries)} chains for a circuit over {k}")
        faults = data.get("faults")
        if faults is not None:
            fault = FaultAssignment.from_bits(faults.get("safe", "1" * k), faults.get("live", "1" * k))
            if len(fault) != k:
                raise ConfigurationError(f"fault assignment covers {len(fault)} chains, circuit has {k}")
        else:
            fault = FaultAssignment.honest(k)
        chains = []
        for i, entry in enumerate(chain_entries):
            merged = {
                "id": f"chain{i + 1}",
                "T": sim["epoch_duration"],
                "tconf": sim["tconf"],
                "max_branches": sim["max_branches"],
                "safe": fault[i].safe,
                "live": fault[i].live,
            }
            merged.update(entry)
            chains.append(ChainConfig.from_dict(merged))

        injections = [Injection(str(item["tx"]), int(item["t"])) for item in data.get("injections", [])]
        return cls(
            name=str(data.get("name", "scenario")),
            circuit=circuit,
            network=network,
            chains=chains,
            observers=list(data.get("observers", sim["clients"])),
            injections=injections,
            horizon=data.get("horizon"),
            seed=int(data.get("seed", 0)),
            adversarial=bool(data.get("adversarial", True)),
            directives=list(data.get("script", [])),
            gate_options=dict(data.get("gate_options", {})),
            expect=dict(data.get("expect", {})),
        )

    @classmethod
    def from_json(cls, text: str, config: Optional[Dict[str, Any]] = None) -> "Scenario":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid scenario JSON: {str(e)}")
        if not isinstance(data, dict):
            raise ConfigurationError("a scenario must be a JSON object")
        return cls.from_dict(data, config)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "circuit": circuit_to_spec(self.circuit),
            "mode": self.mode.value,
            "delta": self.network.delta,
            "gst": self.network.gst,
            "chains": [c.to_dict() for c in self.chains],
            "observers": list(self.observers),
            "injections": [{"tx": i.tx, "t": i.t} for i in self.injections],
            "horizon": self.horizon,
            "seed": self.seed,
            "adversarial": self.adversarial,
            "script": list(self.directives),
            "gate_options": dict(self.gate_options),
            "expect": dict(self.expect),
        }


def load_scenario(path: str, config: Optional[Dict[str, Any]] = None) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigurationError(f"Failed to read scenario {path}: {str(e)}")
    try:
        return Scenario.from_json(text, config)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}: {str(e)}")


# ---------------------------------------------------------------------------
# Circuit instantiation
# ---------------------------------------------------------------------------

def build_circuit(node: CircuitNode, chains: Sequence[UnderlayChain], registry: CertificateRegistry,
                  mode: NetworkMode, name: str = "root", gate_options: Optional[Dict[str, Any]] = None) -> LedgerHandle:
    """
    Instantiate ``node`` over ``chains`` (leaf i runs on ``chains[i-1]``).

    Every gate gets a name from its position in the tree; a leaf child of a
    gate runs in its own lane of the chain, named after that position.
    """
    gate_options = gate_options or {}
    if isinstance(node, Leaf):
        if node.index > len(chains):
            raise ConfigurationError(f"leaf {node.index} has no chain (only {len(chains)} configured)")
        return chains[node.index - 1].lane(name)

    children = [
        build_circuit(child, chains, registry, mode, f"{name}.{position}", gate_options)
        for position, child in enumerate(node.children, start=1)
    ]
    if isinstance(node, Serial):
        return serial_compose_n(children, registry, name=name, **gate_options)
    if isinstance(node, Lvl3):
        return LvlGate(children, registry, name=name)
    if isinstance(node, Lvs):
        return LvsGate(children[0], children[1], registry, name=name, mode=mode)
    raise ConfigurationError(f"unknown circuit node {node!r}")


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

@dataclass
class SafetyVerdict:
    held: bool
    witness: Optional[Dict[str, Any]] = None

    @property
    def label(self) -> str:
        return "held" if self.held else "violated"


@dataclass
class LivenessVerdict:
    held: bool
    bound: int
    worst_latency: Optional[int] = None
    witness: Optional[Dict[str, Any]] = None

    @property
    def label(self) -> str:
        return "held" if self.held else "violated"


def _sample(observer: str, t: int, ledger: Ledger) -> Dict[str, Any]:
    return {"client": observer, "t": t, "ledger": ledger.encode()}


def judge_safety(outputs: Outputs) -> SafetyVerdict:
    """
    Consistency across every (client, tick) output.

    A client may show a shorter ledger than before as long as it stays
    consistent with everything it showed; contradicting itself is reported
    as a regression. All outputs are consistent iff each is a prefix of the
    longest one, so a single running maximum is enough.
    """
    for observer, samples in outputs.items():
        longest: Optional[Tuple[int, Ledger]] = None
        for t, ledger in samples:
            if longest is not None and longest[1] is not ledger and not consistent(longest[1], ledger):
                return SafetyVerdict(False, {
                    "reason": "regression",
                    "first": _sample(observer, *longest),
                    "second": _sample(observer, t, ledger),
                })
            if longest is None or len(ledger) > len(longest[1]):
                longest = (t, ledger)

    top: Optional[Tuple[str, int, Ledger]] = None
    checked = set()
    for observer, samples in outputs.items():
        for t, ledger in samples:
            if ledger.digest in checked:
                continue
            checked.add(ledger.digest)
            if top is None:
                top = (observer, t, ledger)
                continue
            if not consistent(ledger, top[2]):
                return SafetyVerdict(False, {
                    "reason": "conflict",
                    "first": _sample(*top),
                    "second": _sample(observer, t, ledger),
                })
            if len(ledger) > len(top[2]):
                top = (observer, t, ledger)
    return SafetyVerdict(True)


def judge_liveness(outputs: Outputs, injections: Sequence[Injection], gst: int, bound: int) -> LivenessVerdict:
    """Every injected tx must reach every client by max(gst, t) + bound."""
    worst = None
    for injection in injections:
        start = max(gst, injection.t)
        deadline = start + bound
        for observer, samples in outputs.items():
            seen = next((t for t, ledger in samples if t >= injection.t and injection.tx in ledger.id_set), None)
            last_tick = samples[-1][0] if samples else -1
            if seen is None:
                if last_tick >= deadline:
                    return LivenessVerdict(False, bound, worst, {
                        "tx": injection.tx, "deadline": deadline, "client": observer, "seen": None,
                    })
                continue
            if seen > deadline:
                return LivenessVerdict(False, bound, worst, {
                    "tx": injection.tx, "deadline": deadline, "client": observer, "seen": seen,
                })
            latency = max(0, seen - start)
            worst = latency if worst is None else max(worst, latency)
    return LivenessVerdict(True, bound, worst)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: str
    seed: int
    safety: SafetyVerdict
    liveness: LivenessVerdict
    horizon: int
    nominal_bound: Optional[int]
    outputs: Outputs
    diagnostics: List[str]
    trace: List[Dict[str, Any]]

    def matches(self, expect: Dict[str, str]) -> bool:
        return all(
            getattr(self, key).label == value
            for key, value in expect.items() if key in ("safety", "liveness")
        )

    def to_dict(self, include_trace: bool = False) -> Dict[str, Any]:
        report = {
            "scenario": self.scenario,
            "seed": self.seed,
            "horizon": self.horizon,
            "safety": {"verdict": self.safety.label, "witness": self.safety.witness},
            "liveness": {
                "verdict": self.liveness.label,
                "bound": self.liveness.bound,
                "nominal_bound": self.nominal_bound,
                "worst_latency": self.liveness.worst_latency,
                "witness": self.liveness.witness,
            },
            "final_outputs": {
                observer: samples[-1][1].encode() if samples else "" for observer, samples in self.outputs.items()
            },
            "diagnostics": list(self.diagnostics),
        }
        if include_trace:
            report["trace"] = self.trace
        return report


class SimulationRun:
    """
    One deterministic run of a scenario.

    Scripts may call ``at(t, fn)`` to schedule adversary actions; they run
    after the injections of tick t and before the gates step.
    """

    def __init__(self, scenario: Scenario, config: Optional[Dict[str, Any]] = None):
        self.scenario = scenario
        self.config = config or DEFAULT_CONFIG
        sim = self.config["simulation"]
        self.registry = CertificateRegistry(secret=f"run:{scenario.seed}")
        self.schedule = AdversarySchedule(scenario.seed, boundary_bias=float(sim["boundary_bias"]))
        self.network = Network(scenario.network, self.schedule)
        self.chains = [
            UnderlayChain(cfg, self.network, self.registry, adversarial=scenario.adversarial)
            for cfg in scenario.chains
        ]
        self.root = build_circuit(scenario.circuit, self.chains, self.registry, scenario.mode,
                                  gate_options=scenario.gate_options)
        self._hooks: Dict[int, List[Callable[["SimulationRun", int], None]]] = {}
        self.outputs: Outputs = {observer: [] for observer in scenario.observers}

        for directive in scenario.directives:
            self._apply_directive(directive)
        if scenario.script is not None:
            scenario.script(self)

        self.bound = self.root.latency_bound
        self.nominal_bound = getattr(self.root, "nominal_latency_bound", None)
        if self.nominal_bound is not None and all(cfg.safe and cfg.live for cfg in scenario.chains):
            self.bound = self.nominal_bound
        if scenario.horizon is not None:
            self.horizon = int(scenario.horizon)
        else:
            last = max((i.t for i in scenario.injections), default=0)
            self.horizon = max(scenario.network.gst, last) + self.bound + int(sim["horizon_slack"])

    # -- scripting ----------------------------------------------------------

    def chain(self, index: int) -> UnderlayChain:
        """1-based, matching leaf indices."""
        if not 1 <= index <= len(self.chains):
            raise ConfigurationError(f"no chain {index} in scenario {self.scenario.name}")
        return self.chains[index - 1]

    def gate(self, name: str) -> LedgerHandle:
        for handle in self.root.walk():
            if handle.name == name:
                return handle
        raise ConfigurationError(f"no gate named {name} in scenario {self.scenario.name}")

    def at(self, t: int, action: Callable[["SimulationRun", int], None]):
        self._hooks.setdefault(t, []).append(action)

    def _apply_directive(self, directive: Dict[str, Any]):
        op = directive.get("op")
        tick = int(directive.get("tick", 0))
        if op == "partition":
            self.schedule.partition(directive["groups"], int(directive["until"]))
            return
        try:
            chain = self.chain(int(directive["chain"]))
        except KeyError:
            raise ConfigurationError(f"directive {directive} needs a 'chain'")
        if op == "fork":
            self.at(tick, lambda run, t: chain.fork_branch(int(directive.get("parent", 0)),
                                                            int(directive.get("at_height", 0)), t))
        elif op == "assign":
            self.at(tick, lambda run, t: chain.assign_branch(directive["observer"], int(directive["branch"]),
                                                             int(directive.get("from", tick))))
        elif op == "stall":
            chain.set_stall(directive.get("observers"), int(directive.get("start", 0)), directive.get("until"))
        elif op == "halt":
            chain.halt(int(directive["at"]))
        elif op == "hold":
            chain.hold(str(directive["tx"]), int(directive["until"]), directive.get("branches"))
        else:
            raise ConfigurationError(f"unknown script op {op!r}")

    # -- execution ----------------------------------------------------------

    def run(self) -> RunResult:
        injections: Dict[int, List[Injection]] = {}
        for injection in self.scenario.injections:
            injections.setdefault(injection.t, []).append(injection)
        handles = list(self.root.walk())

        for t in range(self.horizon + 1):
            self.network.run_until(t)
            for chain in self.chains:
                chain.advance(t)
            for injection in injections.get(t, []):
                self.root.submit(Transaction(injection.tx), t)
            for action in self._hooks.get(t, []):
                action(self, t)
            for handle in handles:
                handle.step(t)
            for observer in self.scenario.observers:
                ledger, _ = self.root.read_view(observer, t)
                self.outputs[observer].append((t, ledger))

        diagnostics = self.root.all_diagnostics() if hasattr(self.root, "all_diagnostics") else []
        for issuer, _, _ in self.registry.conflicts:
            diagnostics.append(f"{issuer}: certified conflicting ledgers")
        return RunResult(
            scenario=self.scenario.name,
            seed=self.scenario.seed,
            safety=judge_safety(self.outputs),
            liveness=judge_liveness(self.outputs, self.scenario.injections, self.scenario.network.gst, self.bound),
            horizon=self.horizon,
            nominal_bound=self.nominal_bound,
            outputs=self.outputs,
            diagnostics=diagnostics,
            trace=self.network.export_trace(),
        )


def run_scenario(scenario: Scenario, config: Optional[Dict[str, Any]] = None) -> RunResult:
    result = SimulationRun(scenario, config).run()
    logger.info(f"{scenario.name} (seed {scenario.seed}): safety {result.safety.label}, "
                f"liveness {result.liveness.label}")
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def cell_seed(base_seed: int, code: int, index: int, gst: int) -> int:
    return int(SeedSequence([base_seed, code, index, gst]).generate_state(1)[0])


def default_injections(count: int, gst: int, tconf: int) -> List[Injection]:
    """``count`` transactions spread over [0, gst + 2*tconf)."""
    span = gst + 2 * tconf
    return [Injection(f"tx{i + 1}", (i * span) // max(1, count)) for i in range(count)]


def cell_scenario(circuit: CircuitNode, mode: NetworkMode, fault: FaultAssignment, seed: int, gst: int,
                  config: Optional[Dict[str, Any]] = None) -> Scenario:
    config = config or DEFAULT_CONFIG
    sim = config["simulation"]
    delta = int(sim["delta"])
    network = NetworkModel.synchronous(delta) if mode is NetworkMode.SYNCHRONY \
        else NetworkModel.partially_synchronous(delta, gst)
    chains = [
        ChainConfig(
            id=f"chain{i + 1}",
            epoch_duration=int(sim["epoch_duration"]),
            tconf=int(sim["tconf"]),
            safe=chain.safe,
            live=chain.live,
            max_branches=int(sim["max_branches"]),
        )
        for i, chain in enumerate(fault.chains)
    ]
    return Scenario(
        name=f"{circuit_to_spec(circuit)} [{fault.label()}]",
        circuit=circuit,
        network=network,
        chains=chains,
        observers=list(sim["clients"]),
        injections=default_injections(int(config["sweep"]["injections"]), network.gst, int(sim["tconf"])),
        seed=seed,
        adversarial=True,
    )


@dataclass
class CellResult:
    code: int
    fault: str
    predicted_safe: bool
    predicted_live: bool
    safety_held: bool = True
    liveness_held: bool = True
    worst_latency: Optional[int] = None
    runs: int = 0
    witness: Optional[Dict[str, Any]] = None

    @property
    def contradiction(self) -> bool:
        return (self.predicted_safe and not self.safety_held) or (self.predicted_live and not self.liveness_held)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "code": self.code,
            "fault": self.fault,
            "predicted": {"safety": self.predicted_safe, "liveness": self.predicted_live},
            "observed": {"safety": self.safety_held, "liveness": self.liveness_held},
            "worst_latency": self.worst_latency,
            "runs": self.runs,
            "contradiction": self.contradiction,
            "witness": self.witness,
        }


@dataclass
class SweepReport:
    circuit: str
    mode: str
    k: int
    seeds_per_cell: int
    gst_values: List[int]
    sampled: bool
    cells: List[CellResult]
    bound: Optional[int] = None

    @property
    def contradictions(self) -> List[CellResult]:
        return [cell for cell in self.cells if cell.contradiction]

    def cell(self, safe: str, live: str) -> CellResult:
        code = FaultAssignment.from_bits(safe, live).to_index()
        for cell in self.cells:
            if cell.code == code:
                return cell
        raise KeyError(f"cell s={safe} l={live} was not swept")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "circuit": self.circuit,
            "mode": self.mode,
            "k": self.k,
            "seeds_per_cell": self.seeds_per_cell,
            "gst_values": list(self.gst_values),
            "sampled": self.sampled,
            "bound": self.bound,
            "contradictions": len(self.contradictions),
            "cells": [cell.to_dict() for cell in self.cells],
        }


def run_cell(spec: str, mode_value: str, code: int, k: int, seeds_per_cell: int, gst_values: Sequence[int],
             base_seed: int, config: Dict[str, Any], predicted: Tuple[bool, bool]) -> CellResult:
    """One cell of a sweep; module level so worker processes can pickle it."""
    circuit = parse_circuit(spec)
    mode = NetworkMode.parse(mode_value)
    fault = FaultAssignment.from_index(k, code)
    cell = CellResult(code=code, fault=fault.label(), predicted_safe=predicted[0], predicted_live=predicted[1])
    for gst in gst_values:
        for index in range(seeds_per_cell):
            seed = cell_seed(base_seed, code, index, gst)
            result = run_scenario(cell_scenario(circuit, mode, fault, seed, gst, config), config)
            cell.runs += 1
            if result.liveness.worst_latency is not None:
                cell.worst_latency = max(cell.worst_latency or 0, result.liveness.worst_latency)
            failed = []
            if not result.safety.held:
                cell.safety_held = False
                failed.append(("safety", result.safety.witness))
            if not result.liveness.held:
                cell.liveness_held = False
                failed.append(("liveness", result.liveness.witness))
            if failed and cell.witness is None:
                cell.witness = {"seed": seed, "gst": gst, "property": failed[0][0], "detail": failed[0][1]}

    # scripted worlds count towards safety only
    from attacks import cell_attacks
    gst = max(gst_values)
    seed = cell_seed(base_seed, code, seeds_per_cell, gst)
    for scenario in cell_attacks(circuit, mode, fault, seed, gst, config):
        result = run_scenario(scenario, config)
        cell.runs += 1
        if not result.safety.held:
            cell.safety_held = False
            if cell.witness is None:
                cell.witness = {"seed": seed, "gst": gst, "attack": scenario.name, "property": "safety",
                                "detail": result.safety.witness}
    return cell


def sweep(circuit: CircuitNode, mode: NetworkMode, seeds_per_cell: Optional[int] = None,
          config: Optional[Dict[str, Any]] = None, workers: Optional[int] = None,
          sample: Optional[int] = None, gst_values: Optional[Sequence[int]] = None,
          base_seed: int = 0, progress: bool = True) -> SweepReport:
    """
    Run every fault assignment of ``circuit`` (or ``sample`` of them) and
    compare observed verdicts with the predicted ones.
    """
    config = config or DEFAULT_CONFIG
    sweep_config = config["sweep"]
    seeds_per_cell = int(seeds_per_cell or sweep_config["seeds_per_cell"])
    workers = int(workers or sweep_config["workers"])
    sample = sample if sample is not None else sweep_config.get("sample")
    gst_values = list(gst_values if gst_values is not None else sweep_config["gst_values"])
    if mode is NetworkMode.SYNCHRONY:
        gst_values = [0]

    k = chain_count(circuit)
    total = 4 ** k
    safe_pred, live_pred = evaluate(circuit, mode, k)
    if sample:
        rng = derived_generator(base_seed, "sweep-sample")
        codes = sorted(int(c) for c in rng.choice(total, size=min(int(sample), total), replace=False))
    elif total > int(sweep_config["max_cells"]):
        raise SynthesisError(
            f"{total} fault assignments exceed sweep.max_cells={sweep_config['max_cells']}; "
            f"use sampling mode (--sample N)"
        )
    else:
        codes = list(range(total))

    spec = circuit_to_spec(circuit)
    jobs = [
        (spec, mode.value, code, k, seeds_per_cell, gst_values, base_seed, config,
         (bool(safe_pred[code]), bool(live_pred[code])))
        for code in codes
    ]
    logger.info(f"Sweeping {spec} ({mode.value}): {len(jobs)} cells x {seeds_per_cell} seeds x {len(gst_values)} gst")

    cells: List[CellResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run_cell, *job) for job in jobs]
            for future in tqdm(as_completed(futures), total=len(futures), desc="cells", disable=not progress):
                cells.append(future.result())
        cells.sort(key=lambda cell: cell.code)
    else:
        for job in tqdm(jobs, desc="cells", disable=not progress):
            cells.append(run_cell(*job))

    report = SweepReport(
        circuit=spec,
        mode=mode.value,
        k=k,
        seeds_per_cell=seeds_per_cell,
        gst_values=gst_values,
        sampled=bool(sample),
        cells=cells,
    )
    if cells:
        honest = cell_scenario(circuit, mode, FaultAssignment.honest(k), 0, 0, config)
        report.bound = SimulationRun(honest, config).bound
    for cell in report.contradictions:
        logger.warning(f"{spec}: contradiction at {cell.fault}: {cell.witness}")
    return report


def scenario_files(directory: str) -> List[str]:
    return sorted(os.path.join(directory, name) for name in os.listdir(directory) if name.endswith(".json"))
