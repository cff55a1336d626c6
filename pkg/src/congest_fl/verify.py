"""Post-hoc checks of an execution trace against the algorithm's guarantees.

Every verifier takes a trace and the instance it ran on and returns a list
of :class:`Violation`; an empty list means the property held.  Violations
print as ``VIOLATION <verifier> <ids> <lhs> <rhs>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .distributed import contribution, log_ceil
from .instance import Instance, format_rational, solution_cost
from .messages import FacilityStatus
from .trace import Trace, TraceError

PAID, CLOSED, OPEN = FacilityStatus.CURRENTLY_PAID, FacilityStatus.CLOSED, FacilityStatus.OPEN

GREEDY_BOUND = Fraction(1861, 1000)


@dataclass(frozen=True)
class Violation:
    verifier: str
    ids: tuple[int | str, ...]
    lhs: str
    rhs: str

    def __str__(self) -> str:
        ids = ",".join(map(str, self.ids)) or "-"
        return f"VIOLATION {self.verifier} {ids} {self.lhs} {self.rhs}"


def _q(x: Fraction) -> str:
    return format_rational(x)


def _alphas(trace: Trace) -> list[Fraction]:
    return trace.final_alphas()


def verify_transitions(trace: Trace, inst: Instance) -> list[Violation]:
    """Every recorded transition is legal and no client connects twice."""
    return [Violation("transitions", (), problem.replace(" ", "_"), "-") for problem in trace.replay().problems]


def verify_fact1(trace: Trace, inst: Instance) -> list[Violation]:
    """At each phase end: nothing currently-paid, opened facilities paid for by
    the clients they took, and no closed facility still covered by
    unconnected clients that can reach it."""
    out: list[Violation] = []
    base = 1 + trace.epsilon
    f, c = inst.opening, inst.connection
    for phase in trace.replay().phases:
        p = phase.index
        alpha = [base**t for t in phase.alpha]
        for i, status in enumerate(phase.status_after):
            if status == PAID:
                out.append(Violation("fact1", ("i", p, i), "currently-paid", "-"))
        takers: dict[int, list[int]] = {}
        for it in phase.iterations:
            for j, i in it.connected.items():
                takers.setdefault(i, []).append(j)
        opened = {i for it in phase.iterations for i in it.opened}
        for i in sorted(opened):
            paid = sum((contribution(alpha[j], c[i][j]) for j in takers.get(i, [])), Fraction(0))
            if paid < f[i]:
                out.append(Violation("fact1", ("ii", p, i), _q(paid), _q(f[i])))
        waiting = phase.not_connected_at_end
        for i, status in enumerate(phase.status_after):
            if status != CLOSED:
                continue
            if not any(alpha[j] >= c[i][j] for j in waiting):
                continue
            cover = sum((contribution(alpha[j], c[i][j]) for j in waiting), Fraction(0))
            if cover >= f[i]:
                out.append(Violation("fact1", ("iii", p, i), _q(cover), _q(f[i])))
    return out


def verify_lemma1(trace: Trace, inst: Instance, epsilon: Fraction | None = None) -> list[Violation]:
    """alpha_j / (1+eps) <= alpha_j' + c_ij' + c_ij for all clients j, j' and facilities i."""
    eps = trace.epsilon if epsilon is None else Fraction(epsilon)
    return lemma1_violations(_alphas(trace), inst, eps)


def lemma1_violations(alpha: list[Fraction], inst: Instance, eps: Fraction) -> list[Violation]:
    out: list[Violation] = []
    c = inst.connection
    k = inst.num_clients
    for i, row in enumerate(c):
        # cheapest alpha_j' + c_ij' over j', then enumerate only on a miss
        best = min(alpha[j2] + row[j2] for j2 in range(k))
        for j in range(k):
            lhs = alpha[j] / (1 + eps)
            if lhs <= best + row[j]:
                continue
            for j2 in range(k):
                rhs = alpha[j2] + row[j2] + row[j]
                if lhs > rhs:
                    out.append(Violation("lemma1", (j, j2, i), _q(lhs), _q(rhs)))
    return out


def verify_lemma2(trace: Trace, inst: Instance, epsilon: Fraction | None = None) -> list[Violation]:
    """For clients sorted by alpha: sum_{l >= j} max(alpha_j - (1+eps) c_il, 0) <= (1+eps) f_i."""
    eps = trace.epsilon if epsilon is None else Fraction(epsilon)
    return lemma2_violations(_alphas(trace), inst, eps)


def lemma2_violations(alpha: list[Fraction], inst: Instance, eps: Fraction) -> list[Violation]:
    out: list[Violation] = []
    order = sorted(range(inst.num_clients), key=lambda j: (alpha[j], j))
    for i, row in enumerate(inst.connection):
        rhs = (1 + eps) * inst.opening[i]
        for pos, j in enumerate(order):
            lhs = sum(
                (max(alpha[j] - (1 + eps) * row[l], Fraction(0)) for l in order[pos:]),
                Fraction(0),
            )
            if lhs > rhs:
                out.append(Violation("lemma2", (i, j), _q(lhs), _q(rhs)))
    return out


def dual_fitting_factor(epsilon: Fraction) -> Fraction:
    return GREEDY_BOUND * (1 + Fraction(epsilon)) ** 2


def verify_dual_fitting(
    trace: Trace, inst: Instance, epsilon: Fraction | None = None, gamma: Fraction | None = None
) -> list[Violation]:
    """alpha / gamma is dual feasible: sum_j max(alpha_j/gamma - c_ij, 0) <= f_i for every i."""
    eps = trace.epsilon if epsilon is None else Fraction(epsilon)
    gamma = dual_fitting_factor(eps) if gamma is None else Fraction(gamma)
    return dual_fitting_violations(_alphas(trace), inst, gamma)


def dual_fitting_violations(alpha: list[Fraction], inst: Instance, gamma: Fraction) -> list[Violation]:
    out = []
    for i, row in enumerate(inst.connection):
        lhs = sum((max(a / gamma - c, Fraction(0)) for a, c in zip(alpha, row)), Fraction(0))
        if lhs > inst.opening[i]:
            out.append(Violation("dualfit", (i,), _q(lhs), _q(inst.opening[i])))
    return out


def verify_cost_bracket(
    trace: Trace, inst: Instance, epsilon: Fraction | None = None, cost: Fraction | None = None
) -> list[Violation]:
    """sum(alpha)/(1+eps) <= cost <= sum(alpha).  ``cost`` overrides the trace's own."""
    eps = trace.epsilon if epsilon is None else Fraction(epsilon)
    total = sum(_alphas(trace), Fraction(0))
    try:
        actual = solution_cost(trace.solution(), inst) if cost is None else Fraction(cost)
    except (TraceError, ValueError) as exc:
        return [Violation("bracket", (), "no_solution", str(exc).replace(" ", "_"))]
    out = []
    low = total / (1 + eps)
    if actual < low:
        out.append(Violation("bracket", ("low",), _q(actual), _q(low)))
    if actual > total:
        out.append(Violation("bracket", ("high",), _q(actual), _q(total)))
    return out


def verify_selection(trace: Trace, inst: Instance) -> list[Violation]:
    """Per selection iteration: no unconnected client can join two facilities
    opened together, and something opens whenever a paid facility has a
    reachable unconnected client."""
    out: list[Violation] = []
    base = 1 + trace.epsilon
    c = inst.connection
    for phase in trace.replay().phases:
        alpha = [base**t for t in phase.alpha]
        for it in phase.iterations:
            for j in sorted(it.not_connected_at_start):
                joinable = [i for i in sorted(it.opened) if alpha[j] >= c[i][j]]
                if len(joinable) > 1:
                    out.append(
                        Violation("selection", ("jprime", phase.index, it.index, j), str(len(joinable)), "1")
                    )
            live = [
                i for i in sorted(it.paid_at_start) if any(alpha[j] >= c[i][j] for j in it.not_connected_at_start)
            ]
            if live and not it.opened:
                out.append(Violation("selection", ("progress", phase.index, it.index), "0", "1"))
    return out


def phase_bound(inst: Instance, epsilon: Fraction) -> int:
    """ceil(log_{1+eps}(max_j min_i (c_ij + f_i))) + 1."""
    worst = max(
        min(inst.connection[i][j] + inst.opening[i] for i in range(inst.num_facilities))
        for j in range(inst.num_clients)
    )
    return log_ceil(worst, 1 + Fraction(epsilon)) + 1


def verify_phase_bound(trace: Trace, inst: Instance) -> list[Violation]:
    bound = phase_bound(inst, trace.epsilon)
    if trace.phases > bound:
        return [Violation("phases", (), str(trace.phases), str(bound))]
    return []


VERIFIERS: dict[str, Callable[[Trace, Instance], list[Violation]]] = {
    "fact1": verify_fact1,
    "lemma1": verify_lemma1,
    "lemma2": verify_lemma2,
    "dualfit": verify_dual_fitting,
    "bracket": verify_cost_bracket,
    "selection": verify_selection,
    "transitions": verify_transitions,
    "phases": verify_phase_bound,
}


def run_verifiers(trace: Trace, inst: Instance, names: list[str] | None = None) -> dict[str, list[Violation]]:
    names = list(VERIFIERS) if names is None else names
    unknown = [n for n in names if n not in VERIFIERS]
    if unknown:
        raise KeyError(f"unknown verifier(s): {', '.join(unknown)}")
    return {name: VERIFIERS[name](trace, inst) for name in names}
