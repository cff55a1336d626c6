import dataclasses
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congest_fl.distributed import solve_distributed
from congest_fl.instance import Instance, generate_instance, solution_cost
from congest_fl.trace import Trace, TraceEvent
from congest_fl.verify import (
    VERIFIERS,
    Violation,
    dual_fitting_factor,
    lemma1_violations,
    lemma2_violations,
    phase_bound,
    run_verifiers,
    verify_cost_bracket,
    verify_dual_fitting,
    verify_fact1,
    verify_lemma1,
    verify_lemma2,
    verify_phase_bound,
    verify_selection,
    verify_transitions,
)


def ev(phase, iteration, kind, node, event, detail="-"):
    return TraceEvent(phase, iteration, kind, node, event, detail)


def synthetic(m, k, eps, events, phases=None):
    phases = phases if phases is not None else 1 + max((e.phase for e in events), default=0)
    return Trace(m, k, Q(eps), 0, list(events), phases=phases)


def with_events(trace, extra):
    return dataclasses.replace(trace, events=trace.events + list(extra))


def test_violation_format():
    v = Violation("lemma2", (0, 3), "17/2", "3/2")
    assert str(v) == "VIOLATION lemma2 0,3 17/2 3/2"
    assert str(Violation("phases", (), "9", "4")) == "VIOLATION phases - 9 4"


def test_trivial_trace_is_clean(solve, trivial):
    res = solve(trivial)
    assert all(v == [] for v in run_verifiers(res.trace, trivial).values())


def test_unknown_verifier():
    with pytest.raises(KeyError):
        run_verifiers(synthetic(1, 1, 1, []), Instance.build([1], [[1]]), ["nope"])


# -- fact 1 -------------------------------------------------------------------


def test_fact1_detects_leftover_currently_paid(solve):
    inst = Instance.build([1, 50], [[1, 1], [3, 3]])
    res = solve(inst)
    assert verify_fact1(res.trace, inst) == []
    last = res.trace.phases - 1
    bad = with_events(res.trace, [ev(last, 0, "F", 1, "paid", "0")])
    found = verify_fact1(bad, inst)
    assert [v.ids for v in found] == [("i", last, 1)]


def test_fact1_detects_underpaid_opening():
    inst = Instance.build([5], [[1]])
    trace = synthetic(1, 1, Q(1, 2), [
        ev(0, 0, "F", 0, "paid", "5"),
        ev(0, 1, "F", 0, "draw", "3"),
        ev(0, 1, "F", 0, "open"),
        ev(0, 1, "C", 0, "connect", "0"),
    ])
    (v,) = verify_fact1(trace, inst)
    assert v.ids == ("ii", 0, 0) and (v.lhs, v.rhs) == ("0", "5")


def test_fact1_detects_missed_payment():
    inst = Instance.build([1], [[1, 1]])
    trace = synthetic(1, 2, 1, [ev(1, 0, "C", 0, "alpha", "1"), ev(1, 0, "C", 1, "alpha", "1")])
    found = verify_fact1(trace, inst)
    assert [v.ids for v in found] == [("iii", 1, 0)]
    assert (found[0].lhs, found[0].rhs) == ("2", "1")


def test_fact1_guard_exempts_unreachable_free_facility():
    # f = 0 but no waiting client reaches it: not a missed payment
    inst = Instance.build([0], [[2]])
    assert verify_fact1(synthetic(1, 1, Q(1, 2), []), inst) == []


# -- lemmas and dual fitting ---------------------------------------------------


def test_lemma1_injected():
    inst = Instance.build([1], [[1, 1]])
    found = lemma1_violations([Q(100), Q(1)], inst, Q(1, 2))
    assert [v.ids for v in found] == [(0, 1, 0)]  # j=0 against j'=1 at facility 0
    assert lemma1_violations([Q(1), Q(1)], inst, Q(1, 2)) == []


def test_lemma1_through_trace():
    inst = Instance.build([1], [[1, 1]])
    trace = synthetic(1, 2, 1, [ev(1, 0, "C", 0, "alpha", "7")])
    assert verify_lemma1(trace, inst)
    assert verify_lemma1(synthetic(1, 2, 1, []), inst) == []


def test_lemma2_examples():
    inst = Instance.build([1], [[1]])
    assert lemma2_violations([Q(1)], inst, Q(1, 2)) == []
    (v,) = lemma2_violations([Q(10)], inst, Q(1, 2))
    assert (v.lhs, v.rhs) == ("17/2", "3/2")


def test_lemma2_uses_clients_after_j_only():
    # the cheap client sorts first and so sees both terms
    inst = Instance.build([1], [[1, 1]])
    found = lemma2_violations([Q(2), Q(3)], inst, Q(0))
    assert [v.ids for v in found] == [(0, 0), (0, 1)]
    assert [v.lhs for v in found] == ["2", "2"]


def test_lemma2_through_trace():
    inst = Instance.build([1], [[1]])
    assert verify_lemma2(synthetic(1, 1, Q(1, 2), [ev(1, 0, "C", 0, "alpha", "6")]), inst)


def test_dual_fitting_gamma_one_breaks():
    broken = 0
    for seed in range(20):
        inst = generate_instance(4, 6, 64, (0, 64), seed)
        res = solve_distributed(inst, Q(1, 2), seed)
        assert verify_dual_fitting(res.trace, inst) == []
        broken += bool(verify_dual_fitting(res.trace, inst, gamma=Q(1)))
    assert broken > 0


def test_dual_fitting_factor():
    assert dual_fitting_factor(Q(1, 2)) == Q(1861, 1000) * Q(9, 4)


# -- bracket ---------------------------------------------------------------------


def test_bracket_trivial(solve, trivial):
    res = solve(trivial)
    assert verify_cost_bracket(res.trace, trivial) == []


def test_bracket_doubled_cost(solve, two_by_two):
    res = solve(two_by_two)
    cost = solution_cost(res.solution, two_by_two)
    (v,) = verify_cost_bracket(res.trace, two_by_two, cost=2 * cost)
    assert v.ids == ("high",)
    (v,) = verify_cost_bracket(res.trace, two_by_two, cost=cost / 4)
    assert v.ids == ("low",)


def test_bracket_unconnected_client():
    inst = Instance.build([1], [[1]])
    (v,) = verify_cost_bracket(synthetic(1, 1, 1, []), inst)
    assert v.lhs == "no_solution"


# -- selection, transitions, phases ----------------------------------------------


def test_selection_two_joinable_openings():
    inst = Instance.build([1, 1], [[1], [1]])
    trace = synthetic(2, 1, 1, [
        ev(1, 0, "C", 0, "alpha", "1"),
        ev(1, 0, "F", 0, "paid", "1"),
        ev(1, 0, "F", 1, "paid", "1"),
        ev(1, 1, "F", 0, "open"),
        ev(1, 1, "F", 1, "open"),
        ev(1, 1, "C", 0, "connect", "0"),
    ])
    found = verify_selection(trace, inst)
    assert [v.ids for v in found] == [("jprime", 1, 1, 0)]


def test_selection_no_progress():
    inst = Instance.build([1], [[1]])
    trace = synthetic(1, 1, 1, [
        ev(1, 0, "C", 0, "alpha", "1"),
        ev(1, 0, "F", 0, "paid", "1"),
        ev(1, 1, "F", 0, "draw", "4"),
    ])
    assert [v.ids for v in verify_selection(trace, inst)] == [("progress", 1, 1)]


def test_transitions_illegal_open():
    inst = Instance.build([1], [[1]])
    trace = synthetic(1, 1, 1, [ev(0, 1, "F", 0, "open"), ev(0, 1, "C", 0, "connect", "0")])
    assert verify_transitions(trace, inst)


def test_transitions_double_connect(solve, trivial):
    res = solve(trivial)
    bad = with_events(res.trace, [ev(res.trace.phases - 1, 1, "C", 0, "connect", "0")])
    assert verify_transitions(bad, trivial)


def test_phase_bound_value():
    # max_j min_i (c + f) = 2 for one facility f=1 at c=1
    assert phase_bound(Instance.build([1], [[1]]), Q(1)) == 2
    assert phase_bound(Instance.build([1], [[1]]), Q(1, 10)) == 9


def test_phase_bound_violation(solve, trivial):
    res = solve(trivial)
    bad = dataclasses.replace(res.trace, phases=50)
    assert verify_phase_bound(bad, trivial)


# -- property: real runs satisfy everything ----------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 6),
    st.integers(1, 8),
    st.integers(0, 64),
    st.sampled_from([Q(1, 10), Q(1, 2), Q(1), Q(3)]),
    st.integers(0, 2**32),
)
def test_all_verifiers_clean_on_generated_runs(m, k, fmax, eps, seed):
    inst = generate_instance(m, k, 64, (0, fmax), seed)
    res = solve_distributed(inst, eps, seed)
    results = run_verifiers(res.trace, inst)
    assert set(results) == set(VERIFIERS)
    assert all(v == [] for v in results.values()), results


def test_trace_text_round_trip(solve):
    inst = generate_instance(3, 5, 64, (0, 64), seed=5)
    trace = solve(inst).trace
    again = Trace.loads(trace.dumps())
    assert again.dumps() == trace.dumps()
    assert again.solution() == trace.solution()
