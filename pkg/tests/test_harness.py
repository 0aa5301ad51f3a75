import json
import os

import pytest

from circuits import achievable_ksl, parse_circuit, synthesize_ksl
from harness import (
    Injection,
    Scenario,
    SimulationRun,
    build_circuit,
    cell_scenario,
    cell_seed,
    default_injections,
    judge_liveness,
    judge_safety,
    load_scenario,
    run_cell,
    run_scenario,
    scenario_files,
    sweep,
)
from ledger_core import ConfigurationError, FaultAssignment, Ledger, SynthesisError
from lvl_composition import LvlGate
from serial_composition import SerialGate
from simnet import AdversarySchedule, Network, NetworkMode, NetworkModel
from underlay import ChainConfig, UnderlayChain

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scenarios")


def _outputs(**samples):
    return {client: [(t, Ledger.of(*ids)) for t, ids in entries] for client, entries in samples.items()}


def test_judge_safety_held():
    outputs = _outputs(c1=[(0, []), (1, ["a"]), (2, ["a", "b"])], c2=[(0, ["a"]), (1, ["a"])])
    assert judge_safety(outputs).held


def test_judge_safety_conflict_witness():
    outputs = _outputs(c1=[(0, ["a"]), (1, ["a", "b"])], c2=[(0, ["a"]), (1, ["a", "c"])])
    verdict = judge_safety(outputs)
    assert verdict.label == "violated"
    assert verdict.witness["reason"] == "conflict"
    assert {verdict.witness["first"]["ledger"], verdict.witness["second"]["ledger"]} == {"a,b", "a,c"}


def test_judge_safety_regression_witness():
    verdict = judge_safety(_outputs(c1=[(0, ["a", "b"]), (1, ["a"]), (2, ["a", "c"])]))
    assert not verdict.held
    assert verdict.witness["reason"] == "regression"
    assert verdict.witness["first"] == {"client": "c1", "t": 0, "ledger": "a,b"}
    assert verdict.witness["second"]["t"] == 2


def test_judge_safety_allows_a_consistent_shrink():
    assert judge_safety(_outputs(c1=[(0, ["a", "b"]), (1, ["a"]), (2, ["a", "b", "c"])])).held


def test_judge_liveness():
    outputs = _outputs(c1=[(t, ["tx1"] if t >= 3 else []) for t in range(8)],
                       c2=[(t, ["tx1"] if t >= 5 else []) for t in range(8)])
    verdict = judge_liveness(outputs, [Injection("tx1", 1)], gst=0, bound=4)
    assert verdict.held
    assert verdict.worst_latency == 4

    late = judge_liveness(outputs, [Injection("tx1", 1)], gst=0, bound=3)
    assert late.label == "violated"
    assert late.witness == {"tx": "tx1", "deadline": 4, "client": "c2", "seen": 5}


def test_judge_liveness_missing_tx():
    outputs = _outputs(c1=[(t, []) for t in range(10)])
    verdict = judge_liveness(outputs, [Injection("tx1", 0)], gst=2, bound=4)
    assert not verdict.held
    assert verdict.witness["seen"] is None
    assert verdict.witness["deadline"] == 6


def test_scenario_from_dict_defaults(config):
    scenario = Scenario.from_dict({"circuit": "lvl(1, 2, 3)", "faults": {"safe": "110", "live": "111"}}, config)
    assert [c.id for c in scenario.chains] == ["chain1", "chain2", "chain3"]
    assert scenario.fault.label() == "s=110 l=111"
    assert scenario.mode is NetworkMode.PARTIAL_SYNCHRONY
    assert scenario.observers == ["c1", "c2"]
    assert scenario.to_dict()["circuit"] == "lvl(1, 2, 3)"


@pytest.mark.parametrize("data", [
    {"circuit": "serial(1, 2)", "chains": [{"id": "x"}]},
    {"circuit": "serial(1, 2)", "faults": {"safe": "111", "live": "111"}},
    {"circuit": "lvs(1, 2)", "mode": "sync", "gst": 3},
    {"mode": "sync"},
])
def test_scenario_errors(config, data):
    with pytest.raises(ConfigurationError):
        Scenario.from_dict(data, config)


def test_load_scenario_errors(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(ConfigurationError):
        load_scenario(str(path))
    with pytest.raises(ConfigurationError):
        load_scenario(str(tmp_path / "missing.json"))


def test_scenario_from_json(config):
    scenario = Scenario.from_json('{"circuit": "lvs(1, 2)", "mode": "sync", "seed": 5}', config)
    assert scenario.mode is NetworkMode.SYNCHRONY
    assert scenario.seed == 5
    assert Scenario.from_json(json.dumps(scenario.to_dict()), config).to_dict() == scenario.to_dict()
    with pytest.raises(ConfigurationError):
        Scenario.from_json("[1, 2]", config)


def test_build_circuit_names_gates_by_position(registry):
    network = Network(NetworkModel.synchronous(), AdversarySchedule(0))
    chains = [UnderlayChain(ChainConfig(id=f"chain{i}"), network, registry) for i in (1, 2, 3)]
    root = build_circuit(parse_circuit("lvl(1, serial(2, 3), 1)"), chains, registry, NetworkMode.SYNCHRONY)
    assert isinstance(root, LvlGate)
    names = [handle.name for handle in root.walk()]
    assert names == ["chain1/root.1", "chain2/root.2.1", "chain3/root.2.2", "root.2", "chain1/root.3", "root"]
    assert isinstance(root.members[1], SerialGate)


def test_horizon_covers_the_bound(config):
    scenario = Scenario.from_dict({
        "circuit": "serial(1, 2)", "gst": 5, "injections": [{"tx": "tx1", "t": 3}, {"tx": "tx2", "t": 9}],
    }, config)
    run = SimulationRun(scenario, config)
    assert run.bound == 4
    assert run.horizon == 9 + 4 + config["simulation"]["horizon_slack"]


@pytest.mark.parametrize("path", scenario_files(SCENARIO_DIR), ids=os.path.basename)
def test_scenario_files_meet_expectations(path, config):
    scenario = load_scenario(path, config)
    result = run_scenario(scenario, config)
    assert result.matches(scenario.expect), result.to_dict()


@pytest.mark.parametrize("seed", range(3))
def test_runs_are_deterministic(config, seed):
    data = {"circuit": "serial(1, 2)", "gst": 4, "faults": {"safe": "01", "live": "11"},
            "injections": [{"tx": "tx1", "t": 0}, {"tx": "tx2", "t": 2}], "seed": seed}
    first = run_scenario(Scenario.from_dict(data, config), config)
    second = run_scenario(Scenario.from_dict(data, config), config)
    assert first.to_dict(include_trace=True) == second.to_dict(include_trace=True)
    json.dumps(first.to_dict(include_trace=True))


def test_scripted_directives_are_applied(config):
    data = {
        "circuit": "serial(1, 2)",
        "faults": {"safe": "10", "live": "10"},
        "injections": [{"tx": "tx1", "t": 0}],
        "adversarial": False,
        "script": [{"op": "halt", "chain": 2, "at": 0}],
    }
    result = run_scenario(Scenario.from_dict(data, config), config)
    assert result.safety.held
    assert not result.liveness.held
    assert all(len(samples[-1][1]) == 0 for samples in result.outputs.values())


def test_unknown_directive(config):
    with pytest.raises(ConfigurationError):
        SimulationRun(Scenario.from_dict({"circuit": "serial(1, 2)", "script": [{"op": "nuke", "chain": 1}]},
                                         config), config)


def test_default_injections():
    assert [(i.tx, i.t) for i in default_injections(2, gst=0, tconf=2)] == [("tx1", 0), ("tx2", 2)]
    assert cell_seed(0, 5, 1, 0) == cell_seed(0, 5, 1, 0)
    assert cell_seed(0, 5, 1, 0) != cell_seed(0, 5, 2, 0)


@pytest.mark.parametrize("spec, mode", [
    ("serial(1, 2)", NetworkMode.PARTIAL_SYNCHRONY),
    ("lvl(1, 2, 3)", NetworkMode.PARTIAL_SYNCHRONY),
    ("lvs(1, 2)", NetworkMode.SYNCHRONY),
])
def test_sweep_has_no_contradictions(config, spec, mode):
    report = sweep(parse_circuit(spec), mode, seeds_per_cell=1, config=config, progress=False,
                   gst_values=[0, 6] if mode is NetworkMode.PARTIAL_SYNCHRONY else None)
    assert len(report.cells) == 4 ** report.k
    assert report.contradictions == []
    honest = report.cell("1" * report.k, "1" * report.k)
    assert honest.safety_held and honest.liveness_held
    assert honest.worst_latency is not None and honest.worst_latency <= report.bound


def test_sweep_shows_serial_breaks_without_safe_chain(config):
    report = sweep(parse_circuit("serial(1, 2)"), NetworkMode.PARTIAL_SYNCHRONY, seeds_per_cell=4,
                   config=config, progress=False)
    cell = report.cell("00", "11")
    assert not cell.predicted_safe
    assert cell.runs == 4


def test_sweep_cap_and_sampling(config):
    circuit = parse_circuit("serial(1, 2, 3, 4, 5)")
    with pytest.raises(SynthesisError, match="--sample"):
        sweep(circuit, NetworkMode.PARTIAL_SYNCHRONY, config=config, progress=False)
    report = sweep(circuit, NetworkMode.PARTIAL_SYNCHRONY, seeds_per_cell=1, config=config,
                   sample=3, progress=False)
    assert report.sampled
    assert len(report.cells) == 3
    assert report.to_dict()["contradictions"] == 0


def test_honest_runs_use_the_nominal_bound(config):
    circuit = parse_circuit("lvl(1, 2, 3)")
    honest = SimulationRun(cell_scenario(circuit, NetworkMode.PARTIAL_SYNCHRONY, FaultAssignment.honest(3),
                                         0, 0, config), config)
    assert honest.bound == honest.nominal_bound == 12
    faulty = SimulationRun(cell_scenario(circuit, NetworkMode.PARTIAL_SYNCHRONY,
                                         FaultAssignment.from_bits("111", "110"), 0, 0, config), config)
    assert faulty.bound == 18


@pytest.mark.parametrize("gst", [0, 5])
@pytest.mark.parametrize("seed", range(4))
def test_honest_lvl_latency_within_six_confirmations(config, gst, seed):
    scenario = cell_scenario(parse_circuit("lvl(1, 2, 3)"), NetworkMode.PARTIAL_SYNCHRONY,
                             FaultAssignment.honest(3), seed, gst, config)
    result = run_scenario(scenario, config)
    assert result.safety.held
    assert result.liveness.held, result.liveness.witness
    assert result.liveness.worst_latency <= 6 * config["simulation"]["tconf"]


@pytest.mark.parametrize("code, base_seed", [(2, 2), (4, 1), (5, 1)])
def test_lvs_cells_with_branch_switching_children(config, code, base_seed):
    cell = run_cell("lvs(1, 2)", "sync", code, 2, 1, [0], base_seed, config, (False, False))
    assert cell.runs == 2


def test_cells_run_the_matching_scripted_worlds(config):
    code = FaultAssignment.from_bits("11", "01").to_index()
    cell = run_cell("lvs(1, 2)", "sync", code, 2, 1, [0], 0, config, (True, False))
    assert cell.runs == 2
    assert not cell.safety_held
    assert cell.contradiction

    honest = FaultAssignment.honest(2).to_index()
    cell = run_cell("lvs(1, 2)", "sync", honest, 2, 1, [0], 0, config, (True, True))
    assert cell.runs == 2
    assert cell.safety_held and not cell.contradiction


def test_serial_sweep_over_several_gst_values(config):
    report = sweep(parse_circuit("serial(1, 2)"), NetworkMode.PARTIAL_SYNCHRONY, seeds_per_cell=2,
                   config=config, progress=False, gst_values=[0, 5, 20])
    assert report.gst_values == [0, 5, 20]
    assert report.contradictions == []
    assert all(cell.runs == 6 for cell in report.cells)


def test_lvs_sync_sweep_keeps_its_safety_claims(config):
    report = sweep(parse_circuit("lvs(1, 2)"), NetworkMode.SYNCHRONY, seeds_per_cell=20, config=config,
                   progress=False)
    assert len(report.cells) == 16
    assert not [cell for cell in report.cells if cell.predicted_safe and not cell.safety_held]
    honest = report.cell("11", "11")
    assert honest.liveness_held
    assert honest.worst_latency <= 2 * config["simulation"]["tconf"]


SMALL_KSL = [(k, s, l) for k in range(1, 4) for l in range(1, k + 1) for s in range(1, k + 1)
             if achievable_ksl(k, s, l)]


def _assert_ksl_claims(report, s, l):
    assert report.contradictions == []
    for cell in report.cells:
        fault = FaultAssignment.from_index(report.k, cell.code)
        if sum(fault.safety_bits) >= s:
            assert cell.safety_held, cell.witness
        if sum(fault.liveness_bits) >= l:
            assert cell.liveness_held, cell.witness


@pytest.mark.parametrize("k, s, l", SMALL_KSL)
def test_synthesized_circuits_keep_their_claims(config, k, s, l):
    report = sweep(synthesize_ksl(k, s, l), NetworkMode.PARTIAL_SYNCHRONY, seeds_per_cell=2, config=config,
                   progress=False, gst_values=[0, 5])
    assert report.k == k
    _assert_ksl_claims(report, s, l)


@pytest.mark.parametrize("s, l", [(3, 3), (1, 4)])
def test_sampled_sweep_of_four_chain_circuits(config, s, l):
    report = sweep(synthesize_ksl(4, s, l), NetworkMode.PARTIAL_SYNCHRONY, seeds_per_cell=1, config=config,
                   progress=False, sample=24, gst_values=[0, 5])
    assert len(report.cells) == 24
    _assert_ksl_claims(report, s, l)
