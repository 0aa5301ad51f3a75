import pytest

from circuits import (
    Characterization,
    CharacterizationMode,
    Leaf,
    Lvl3,
    achievable_ksl,
    achievable_sync,
    brute_force_properties,
    chain_count,
    check_general_psync,
    check_general_sync,
    circuit_to_spec,
    dominates,
    general_psync_violation,
    general_sync_violation,
    lemma_leave,
    lvl_over,
    pareto_set,
    predicted_properties,
    synthesize,
    synthesize_general_psync,
    synthesize_general_sync,
    synthesize_ksl,
    synthesize_lvl,
    unachievable_reason,
    sync_unachievable_reason,
    verify_synthesis,
)
from ledger_core import ContractViolation, SynthesisError
from simnet import NetworkMode

PSYNC = NetworkMode.PARTIAL_SYNCHRONY
SYNC = NetworkMode.SYNCHRONY


@pytest.mark.parametrize("k, s, l, reason", [
    (3, 3, 2, None),
    (3, 2, 2, "s=2 < 2(k-l)+1=3"),
    (4, 3, 2, "l=2 < floor(k/2)+1=3"),
    (2, 1, 3, "l=3 > k=2"),
    (5, 1, 5, None),
])
def test_unachievable_reason(k, s, l, reason):
    assert unachievable_reason(k, s, l) == reason
    assert achievable_ksl(k, s, l) is (reason is None)


def test_unachievable_reason_needs_chains():
    with pytest.raises(ContractViolation):
        unachievable_reason(0, 1, 1)


@pytest.mark.parametrize("k, s, l, b, achievable", [
    (3, None, 1, 3, True),
    (3, None, 1, 2, False),
    (3, 3, 2, 2, True),
    (2, 2, 1, None, False),
    (2, None, 1, 2, True),
])
def test_sync_achievability(k, s, l, b, achievable):
    assert achievable_sync(k, s, l, b) is achievable
    assert (sync_unachievable_reason(k, s, l, b) is None) is achievable


def test_sync_reason_text():
    assert sync_unachievable_reason(3, None, 1, 2) == "b=2 < k-l+1=3"


def test_lemma_leave_over_single_chain():
    node = lemma_leave(Leaf(1), 3)
    assert circuit_to_spec(node) == "serial(1, 2, 3)"
    assert predicted_properties(node, PSYNC).to_perm_invariant() == Characterization.from_ksl(3, 1, 3)


def test_lemma_leave_needs_extra_chains():
    with pytest.raises(SynthesisError):
        lemma_leave(Lvl3((Leaf(1), Leaf(2), Leaf(3))), 3)
    with pytest.raises(SynthesisError):
        lemma_leave(Leaf(1), 9, max_k=6)


def test_lvl_over_small_arities():
    assert lvl_over([Leaf(4)]) == Leaf(4)
    assert lvl_over([Leaf(1), Leaf(2), Leaf(3)]) == Lvl3((Leaf(1), Leaf(2), Leaf(3)))
    with pytest.raises(SynthesisError):
        lvl_over([Leaf(1), Leaf(2)])
    with pytest.raises(SynthesisError):
        lvl_over([Leaf(i) for i in range(1, 10)], max_lvl_arity=7)


@pytest.mark.parametrize("f", [1, 2, 3])
def test_synthesize_lvl(f):
    node = synthesize_lvl(f)
    n = 2 * f + 1
    assert chain_count(node) == n
    assert predicted_properties(node, PSYNC).to_perm_invariant() == Characterization.from_ksl(n, n, f + 1)


@pytest.mark.parametrize("k, s, l", [(1, 1, 1), (3, 3, 2), (3, 1, 3), (4, 3, 3), (5, 5, 3), (5, 3, 4), (6, 5, 4)])
def test_synthesize_ksl(k, s, l):
    node = synthesize_ksl(k, s, l)
    assert chain_count(node) == k
    assert verify_synthesis(node, Characterization.from_ksl(k, s, l), PSYNC)


def test_synthesized_circuits_match_brute_force():
    node = synthesize_ksl(4, 3, 3)
    assert predicted_properties(node, PSYNC) == brute_force_properties(node, PSYNC)


def test_synthesize_ksl_refuses():
    with pytest.raises(SynthesisError, match="unachievable"):
        synthesize_ksl(3, 2, 2)
    with pytest.raises(SynthesisError, match="max_k"):
        synthesize_ksl(7, 7, 4)


def _general(k, safety, liveness):
    return Characterization(k, CharacterizationMode.GENERAL, frozenset(safety), frozenset(liveness))


def test_general_psync_checks():
    assert check_general_psync([("111", "000")], [("000", "110"), ("000", "011")])
    violation = general_psync_violation([("100", "000")], [("000", "110"), ("000", "011")])
    assert "empty intersection" in violation
    assert "depends on safety" in general_psync_violation([], [("100", "110")])
    assert "depends on liveness" in general_psync_violation([("111", "100")], [("000", "111")])


def test_general_psync_synthesis():
    target = _general(3, [((1, 1, 1), (0, 0, 0))], [((0, 0, 0), (1, 1, 0)), ((0, 0, 0), (0, 1, 1))])
    node = synthesize_general_psync(target.safety, target.liveness)
    assert circuit_to_spec(node) == "lvl(serial(1, 2), serial(2, 3), 2)"
    assert verify_synthesis(node, target, PSYNC)


def test_general_psync_synthesis_refuses():
    with pytest.raises(SynthesisError):
        synthesize_general_psync([((1, 0, 0), (0, 0, 0))], [((0, 0, 0), (1, 1, 0)), ((0, 0, 0), (0, 1, 1))])
    with pytest.raises(SynthesisError):
        synthesize_general_psync([((1, 1, 1), (0, 0, 0))], [])


def test_general_sync_checks():
    assert check_general_sync([("11", "11")], [("00", "10"), ("00", "01")])
    assert not check_general_psync([("11", "11")], [("00", "10"), ("00", "01")])
    assert "neither" in general_sync_violation([("11", "10")], [("00", "10"), ("00", "01")])


def test_general_sync_synthesis_uses_lvs():
    target = _general(2, [((1, 1), (1, 1))], [((0, 0), (1, 0)), ((0, 0), (0, 1))])
    node = synthesize_general_sync(target.safety, target.liveness)
    assert circuit_to_spec(node) == "lvl(1, 2, lvs(1, 2))"
    assert verify_synthesis(node, target, SYNC)


@pytest.mark.parametrize("k, s, l", [(3, 3, 2), (4, 3, 3), (3, 1, 3)])
def test_synthesize_from_perm_invariant_target(k, s, l):
    target = Characterization.from_ksl(k, s, l)
    node = synthesize(target, PSYNC)
    assert verify_synthesis(node, target, PSYNC)


def test_synthesize_sync_tuple_with_b_branch_only():
    target = Characterization.from_sync_tuple(3, None, 1, 3)
    node = synthesize(target, SYNC)
    assert verify_synthesis(node, target, SYNC)


@pytest.mark.parametrize("mode", [PSYNC, SYNC])
def test_pareto_set(mode):
    family = pareto_set(5, mode)
    assert [c.sorted_liveness()[0][1] for c in family] == [3, 4, 5]
    assert family[0].safety >= {(5, 0, 0)}
    assert family[-1].safety >= {(1, 0, 0)}
    for first, second in zip(family, family[1:]):
        assert not dominates(first, second)
        assert not dominates(second, first)
    if mode is SYNC:
        assert (0, 0, 3) in family[0].safety


@pytest.mark.parametrize("k, s, l", [(3, 3, 2), (4, 3, 3), (5, 3, 4)])
def test_pareto_members_are_synthesizable(k, s, l):
    member = next(c for c in pareto_set(k, PSYNC) if c.sorted_liveness()[0][1] == l)
    assert member == Characterization.from_ksl(k, s, l)
    assert verify_synthesis(synthesize_ksl(k, s, l), member, PSYNC)
