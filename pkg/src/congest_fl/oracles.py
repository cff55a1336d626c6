"""Reference solvers used as oracles for the distributed algorithm."""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

from .instance import Instance, Solution

MAX_BRUTE_FORCE_FACILITIES = 20


class TooLargeError(ValueError):
    pass


def _time_paid(f: Fraction, costs: list[Fraction], now: Fraction) -> Fraction | None:
    """Earliest time >= now at which sum(max(tau - c, 0)) over ``costs`` reaches f."""
    if not costs:
        return None
    if sum((max(now - c, Fraction(0)) for c in costs), Fraction(0)) >= f:
        return now
    ordered = sorted(costs)
    prefix = Fraction(0)
    for r, c in enumerate(ordered, start=1):
        prefix += c
        tau = (f + prefix) / r  # payment is r*tau - prefix while exactly r clients pay
        upper = ordered[r] if r < len(ordered) else None
        if tau >= c and (upper is None or tau <= upper):
            return max(tau, now)
    raise AssertionError("payment is unbounded in tau, a crossing must exist")


def greedy_fl_sequential(inst: Instance) -> tuple[Solution, list[Fraction]]:
    """Continuous greedy (all unconnected alphas rise at unit rate), event driven.

    Two kinds of events, processed in exact time order: an unconnected
    client's alpha reaches its cost to an open facility (it joins the
    cheapest such facility), or the unconnected clients' contributions to a
    closed facility reach its opening cost (it opens and takes every
    unconnected client that reaches it).  Events at the same instant run one
    at a time, client events first, then openings in facility order, each
    opening re-checked against the clients still unconnected.
    """
    m, k = inst.num_facilities, inst.num_clients
    c = inst.connection
    opened: list[int] = []
    alpha: list[Fraction | None] = [None] * k
    assigned: list[int | None] = [None] * k
    now = Fraction(0)

    def waiting() -> list[int]:
        return [j for j in range(k) if alpha[j] is None]

    while waiting():
        times = []
        for i in range(m):
            if i in opened:
                times += [c[i][j] for j in waiting()]
            else:
                t = _time_paid(inst.opening[i], [c[i][j] for j in waiting()], now)
                if t is not None:
                    times.append(t)
        now = max(min(times), now)

        for j in waiting():
            reachable = [(c[i][j], i) for i in opened if c[i][j] <= now]
            if reachable:
                assigned[j], alpha[j] = min(reachable)[1], now
        for i in range(m):
            if i in opened:
                continue
            pending = waiting()
            paid = sum((max(now - c[i][j], Fraction(0)) for j in pending), Fraction(0))
            if pending and paid >= inst.opening[i]:
                opened.append(i)
                for j in pending:
                    if c[i][j] <= now:
                        assigned[j], alpha[j] = i, now

    return Solution(frozenset(opened), tuple(assigned)), alpha


def brute_force_opt(inst: Instance) -> Solution:
    """Exact optimum by enumerating every non-empty set of open facilities.

    Ties go to the lexicographically smallest open set.
    """
    m, k = inst.num_facilities, inst.num_clients
    if m > MAX_BRUTE_FORCE_FACILITIES:
        raise TooLargeError(f"{m} facilities; enumeration is limited to {MAX_BRUTE_FORCE_FACILITIES}")
    # integer arithmetic on a common denominator
    scale = math.lcm(*(x.denominator for x in inst.costs()))
    f = [int(x * scale) for x in inst.opening]
    c = [[int(x * scale) for x in row] for row in inst.connection]

    best_key: tuple[int, tuple[int, ...]] | None = None
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            cost = sum(f[i] for i in subset)
            cost += sum(min(c[i][j] for i in subset) for j in range(k))
            key = (cost, subset)
            if best_key is None or key < best_key:
                best_key = key
    _, subset = best_key
    assignment = tuple(min((c[i][j], i) for i in subset)[1] for j in range(k))
    return Solution(frozenset(subset), assignment)
