#!/usr/bin/env python3
"""
Circuit Tool

Command-line entry point for the circuit simulator.

Verbs:
    synth      build a circuit for a (k,s,l) tuple, a sync tuple or a characterization file
    check      decide achievability (or check a circuit against a characterization)
    run        run a scenario file
    sweep      run every fault assignment of a circuit and compare with predictions
    pareto     list the pareto-optimal characterizations for k chains
    dominates  compare two characterization files
    attacks    run the scripted attack library

Exit codes: 0 success, 1 observed verdicts differ from the expected ones,
2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

from attacks import attack_library, run_attack
from circuit_config import config_hash, load_config, setup_logging
from circuits import (
    Characterization,
    circuit_to_json,
    circuit_to_spec,
    depth,
    dominates,
    general_psync_violation,
    general_sync_violation,
    load_characterization,
    node_count,
    pareto_set,
    parse_circuit,
    predicted_properties,
    render_tree,
    sync_unachievable_reason,
    synthesize,
    synthesize_ksl,
    unachievable_reason,
    verify_synthesis,
)
from harness import load_scenario, run_scenario, sweep
from ledger_core import ConfigurationError, ContractViolation, SynthesisError
from simnet import NetworkMode

logger = logging.getLogger(__name__)


def format_as_table(rows, headers=None, column_widths=None):
    """Fixed-width text table; the header row is followed by a separator."""
    if not rows and not headers:
        return ""
    data = ([headers] if headers else []) + [list(row) for row in rows]
    if not column_widths:
        column_widths = [max(len(str(row[i])) for row in data) for i in range(len(data[0]))]
    line = " | ".join(f"{{:{width}}}" for width in column_widths)
    lines = []
    for i, row in enumerate(data):
        lines.append(line.format(*[str(item) for item in row]).rstrip())
        if i == 0 and headers:
            lines.append("-+-".join("-" * width for width in column_widths))
    return "\n".join(lines)


def banner(title: str) -> str:
    return "=" * 80 + "\n" + title + "\n" + "=" * 80


def parse_ints(text: str, count: int, flag: str, optional: bool = False) -> Tuple[Optional[int], ...]:
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != count:
        raise ConfigurationError(f"{flag} expects {count} comma-separated values, got {text!r}")
    values = []
    for part in parts:
        if optional and part in ("-", ""):
            values.append(None)
            continue
        try:
            values.append(int(part))
        except ValueError:
            raise ConfigurationError(f"{flag}: {part!r} is not an integer")
    return tuple(values)


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def _mode(args) -> NetworkMode:
    return NetworkMode.parse(args.mode or args.config_data["simulation"]["mode"])


def _target(args) -> Characterization:
    if args.ksl:
        k, s, l = parse_ints(args.ksl, 3, "--ksl")
        return Characterization.from_ksl(k, s, l)
    if args.sync:
        k, s, l, b = parse_ints(args.sync, 4, "--sync", optional=True)
        return Characterization.from_sync_tuple(k, s, l, b)
    if args.char:
        return load_characterization(args.char)
    raise ConfigurationError("one of --ksl, --sync or --char is required")


def cmd_synth(args) -> Tuple[Dict[str, Any], str, int]:
    synthesis = args.config_data["synthesis"]
    mode = _mode(args)
    if args.ksl:
        k, s, l = parse_ints(args.ksl, 3, "--ksl")
        node = synthesize_ksl(k, s, l, max_k=synthesis["max_k"], max_lvl_arity=synthesis["max_lvl_arity"])
        target = Characterization.from_ksl(k, s, l)
    else:
        target = _target(args)
        if target.k > synthesis["max_k"]:
            raise SynthesisError(f"k={target.k} exceeds synthesis.max_k={synthesis['max_k']}; "
                                 f"use sampling mode or raise the cap")
        node = synthesize(target, NetworkMode.SYNCHRONY if args.sync else mode,
                          max_lvl_arity=synthesis["max_lvl_arity"])
        if args.sync:
            mode = NetworkMode.SYNCHRONY
    verified = verify_synthesis(node, target, mode)
    result = {
        "target": target.to_dict(),
        "mode": mode.value,
        "circuit": circuit_to_spec(node),
        "tree": circuit_to_json(node),
        "nodes": node_count(node),
        "depth": depth(node),
        "verified": verified,
    }
    text = "\n".join([
        banner(f"SYNTHESIS  {target.describe()}  ({mode.value})"),
        render_tree(node),
        "",
        f"circuit: {result['circuit']}",
        f"nodes: {result['nodes']}  depth: {result['depth']}  dominates target: {verified}",
    ])
    return result, text, 0 if verified else 1


def cmd_check(args) -> Tuple[Dict[str, Any], str, int]:
    mode = _mode(args)
    if args.circuit:
        node = parse_circuit(args.circuit)
        target = _target(args)
        predicted = predicted_properties(node, mode, k=target.k)
        holds = dominates(predicted, target.to_general())
        result = {"circuit": circuit_to_spec(node), "target": target.to_dict(),
                  "predicted": predicted.to_dict(), "dominates": holds}
        verdict = "achieved" if holds else "not achieved"
        return result, f"{verdict}: {circuit_to_spec(node)} vs {target.describe()}\npredicted {predicted.describe()}", 0

    if args.ksl:
        k, s, l = parse_ints(args.ksl, 3, "--ksl")
        reason = unachievable_reason(k, s, l)
    elif args.sync:
        k, s, l, b = parse_ints(args.sync, 4, "--sync", optional=True)
        reason = sync_unachievable_reason(k, s, l, b)
    else:
        target = _target(args).to_general()
        check = general_sync_violation if mode is NetworkMode.SYNCHRONY else general_psync_violation
        reason = check(target.safety, target.liveness)
    text = "achievable" if reason is None else f"unachievable: {reason}"
    return {"achievable": reason is None, "reason": reason}, text, 0


def cmd_run(args) -> Tuple[Dict[str, Any], str, int]:
    if not args.scenario:
        raise ConfigurationError("run needs --scenario PATH")
    scenario = load_scenario(args.scenario, args.config_data)
    if args.seed is not None:
        scenario.seed = args.seed
    result = run_scenario(scenario, args.config_data)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            for record in result.trace:
                f.write(json.dumps(record) + "\n")
    report = result.to_dict()
    report["expect"] = scenario.expect
    matches = result.matches(scenario.expect)
    rows = [
        ["safety", result.safety.label, json.dumps(result.safety.witness) if result.safety.witness else ""],
        ["liveness", result.liveness.label,
         f"bound {result.liveness.bound}, worst latency {result.liveness.worst_latency}"],
    ]
    text = "\n".join([
        banner(f"RUN  {scenario.name}  (seed {scenario.seed})"),
        format_as_table(rows, headers=["property", "verdict", "detail"]),
        "",
        *[f"{observer}: {ledger}" for observer, ledger in report["final_outputs"].items()],
        *(["", "diagnostics:"] + [f"  {d}" for d in result.diagnostics] if result.diagnostics else []),
        "",
        f"expected {scenario.expect}: {'ok' if matches else 'MISMATCH'}" if scenario.expect else "",
    ]).rstrip()
    return report, text, 0 if matches else 1


def cmd_sweep(args) -> Tuple[Dict[str, Any], str, int]:
    mode = _mode(args)
    synthesis = args.config_data["synthesis"]
    if args.circuit:
        node = parse_circuit(args.circuit)
    elif args.ksl:
        k, s, l = parse_ints(args.ksl, 3, "--ksl")
        node = synthesize_ksl(k, s, l, max_k=synthesis["max_k"], max_lvl_arity=synthesis["max_lvl_arity"])
    else:
        raise ConfigurationError("sweep needs --circuit SPEC or --ksl k,s,l")
    gst_values = [int(g) for g in args.gst.split(",")] if args.gst else None
    report = sweep(node, mode, seeds_per_cell=args.seeds, config=args.config_data, workers=args.workers,
                   sample=args.sample, gst_values=gst_values, base_seed=args.seed or 0, progress=not args.quiet)
    rows = [
        [cell.fault,
         "S" if cell.predicted_safe else "-", "held" if cell.safety_held else "VIOLATED",
         "L" if cell.predicted_live else "-", "held" if cell.liveness_held else "VIOLATED",
         "" if cell.worst_latency is None else cell.worst_latency,
         "CONTRADICTION" if cell.contradiction else ""]
        for cell in report.cells
    ]
    text = "\n".join([
        banner(f"SWEEP  {report.circuit}  ({report.mode}, k={report.k}, "
               f"{report.seeds_per_cell} seeds, gst {report.gst_values})"),
        format_as_table(rows, headers=["assignment", "pred S", "safety", "pred L", "liveness", "latency", "note"]),
        "",
        f"liveness bound: {report.bound}",
        f"cells: {len(report.cells)}  contradictions: {len(report.contradictions)}",
    ])
    return report.to_dict(), text, 1 if report.contradictions else 0


def cmd_pareto(args) -> Tuple[Dict[str, Any], str, int]:
    mode = _mode(args)
    family = pareto_set(args.k, mode)
    rows = [
        [c.sorted_liveness()[0][1],
         ", ".join(str(e) for e in c.sorted_safety()),
         ", ".join(str(e) for e in c.sorted_liveness())]
        for c in family
    ]
    text = "\n".join([
        banner(f"PARETO-OPTIMAL CHARACTERIZATIONS  k={args.k}  ({mode.value})"),
        format_as_table(rows, headers=["m_l", "safety (n_s,n_l,n_sl)", "liveness (n_s,n_l,n_sl)"]),
    ])
    return {"k": args.k, "mode": mode.value, "family": [c.to_dict() for c in family]}, text, 0


def cmd_dominates(args) -> Tuple[Dict[str, Any], str, int]:
    if not (args.p and args.q):
        raise ConfigurationError("dominates needs --p PATH and --q PATH")
    p, q = load_characterization(args.p), load_characterization(args.q)
    if p.mode is not q.mode:
        p, q = p.to_general(), q.to_general()
    forward, backward = dominates(p, q), dominates(q, p)
    text = f"p dominates q: {str(forward).lower()}\nq dominates p: {str(backward).lower()}"
    return {"p_dominates_q": forward, "q_dominates_p": backward}, text, 0


def cmd_attacks(args) -> Tuple[Dict[str, Any], str, int]:
    library = attack_library()
    names = [args.name] if args.name else list(library)
    seed = args.seed or 0
    results, rows, mismatches = [], [], 0
    for name in names:
        if name not in library:
            raise ConfigurationError(f"unknown attack {name!r}; known: {', '.join(library)}")
        attack = library[name]
        result = run_attack(name, seed=seed, config=args.config_data)
        matches = result.matches(attack.expect)
        mismatches += 0 if matches else 1
        results.append({"name": name, "claim": attack.claim, "expect": attack.expect,
                        "matches": matches, **result.to_dict()})
        rows.append([name, attack.claim, result.safety.label, attack.expect.get("safety", ""),
                     "ok" if matches else "MISMATCH"])
    text = "\n".join([
        banner(f"ATTACKS  (seed {seed})"),
        format_as_table(rows, headers=["attack", "claim", "safety", "expected", "status"]),
    ])
    return {"attacks": results}, text, 1 if mismatches else 0


COMMANDS = {
    "synth": cmd_synth,
    "check": cmd_check,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "pareto": cmd_pareto,
    "dominates": cmd_dominates,
    "attacks": cmd_attacks,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def parse_args(argv: Optional[Sequence[str]] = None):
    """Parse command line arguments"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a config.json overriding the defaults")
    common.add_argument("--format", choices=["json", "table"], help="Report format")
    common.add_argument("--output", help="Write the report to this file instead of stdout")
    common.add_argument("--seed", type=int, help="Base seed")
    common.add_argument("--mode", choices=["psync", "sync"], help="Network model")
    common.add_argument("--quiet", action="store_true", help="No progress bars")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Blockchain circuit simulator and synthesizer")
    verbs = parser.add_subparsers(dest="verb", required=True)

    synth = verbs.add_parser("synth", parents=[common], help="Synthesize a circuit")
    check = verbs.add_parser("check", parents=[common], help="Decide achievability")
    for sub in (synth, check):
        sub.add_argument("--ksl", help="k,s,l tuple, e.g. 3,3,2")
        sub.add_argument("--sync", help="k,s,l,b tuple under synchrony; '-' drops s or b")
        sub.add_argument("--char", help="Characterization JSON file")
    check.add_argument("--circuit", help="Circuit spec to check against the characterization")

    run = verbs.add_parser("run", parents=[common], help="Run a scenario file")
    run.add_argument("--scenario", help="Scenario JSON file")
    run.add_argument("--trace", help="Write the network trace (JSON lines) here")

    sweep_parser = verbs.add_parser("sweep", parents=[common], help="Sweep all fault assignments")
    sweep_parser.add_argument("--circuit", help="Circuit spec, e.g. 'lvl(1,2,3)'")
    sweep_parser.add_argument("--ksl", help="Synthesize the circuit for k,s,l first")
    sweep_parser.add_argument("--seeds", type=int, help="Seeds per cell")
    sweep_parser.add_argument("--workers", type=int, help="Worker processes")
    sweep_parser.add_argument("--sample", type=int, help="Sweep only this many random cells")
    sweep_parser.add_argument("--gst", help="Comma-separated GST values")

    pareto = verbs.add_parser("pareto", parents=[common], help="Pareto-optimal characterizations")
    pareto.add_argument("--k", type=int, required=True, help="Number of chains")

    dom = verbs.add_parser("dominates", parents=[common], help="Compare two characterizations")
    dom.add_argument("--p", help="First characterization file")
    dom.add_argument("--q", help="Second characterization file")

    attacks = verbs.add_parser("attacks", parents=[common], help="Run the scripted attacks")
    attacks.add_argument("--name", help="Run only this attack")

    return parser.parse_args(argv)


def emit(report: Dict[str, Any], text: str, args):
    output_format = args.format or args.config_data["report"]["format"]
    content = json.dumps(report, indent=2, default=str) if output_format == "json" else text
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(content + "\n")
        logger.info(f"Report written to {args.output}")
    else:
        print(content)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function"""
    args = parse_args(argv)
    try:
        config = load_config(args.config)
        setup_logging(config, verbose=args.verbose)
        args.config_data = config
        result, text, code = COMMANDS[args.verb](args)
    except (ConfigurationError, ContractViolation, SynthesisError) as e:
        print(f"ERROR: {str(e)}")
        return 2

    report = {
        "schema_version": config["report"]["schema_version"],
        "verb": args.verb,
        "seed": args.seed,
        "config_hash": config_hash(config),
        "result": result,
    }
    emit(report, text, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
