"""Client and facility programs of the distributed greedy algorithm.

A phase is: clients raise alpha (if still unconnected), join any already-open
facility they can now reach, and announce alpha; closed facilities check
whether unconnected clients cover their opening cost; then selection
iterations run until no facility is currently-paid.  A selection iteration
is four rounds: facilities send draws, clients relay the largest draw among
their paid candidates, facilities that hold the local maximum open and
announce it, clients acknowledge their new status and paid facilities that
lost their cover fall back to closed.

Alpha travels as the exponent ``t`` of ``(1 + eps) ** t``; every receiver
rebuilds the exact rational from ``t`` and the shared ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import congest
from .congest import CLIENT, FACILITY, NetworkView, RoundLog, Step
from .instance import Instance, InstanceError, Solution, format_rational
from .messages import (
    AlphaAnnounce,
    ClientStatus,
    FacilityStatus,
    MaxRelay,
    MessageFormat,
    OpenAnnounce,
    RandomDraw,
    StatusAck,
    default_bit_budget,
)
from .trace import Trace

NC, CONNECTED = ClientStatus.NOT_CONNECTED, ClientStatus.CONNECTED
CLOSED, PAID, OPEN = FacilityStatus.CLOSED, FacilityStatus.CURRENTLY_PAID, FacilityStatus.OPEN


class SelectionInvariantError(RuntimeError):
    """A client saw more than one facility it could join in one iteration."""


def contribution(alpha: Fraction, c: Fraction) -> Fraction:
    return max(alpha - c, Fraction(0))


def covered_cost(received: Sequence[tuple[Fraction, ClientStatus, Fraction]]) -> Fraction:
    return sum((contribution(a, c) for a, s, c in received if s == NC), Fraction(0))


def facility_phase_check(
    f: Fraction, received: Sequence[tuple[Fraction, ClientStatus, Fraction]]
) -> FacilityStatus:
    """Closed facility's payment check for one phase.

    Becomes currently-paid when unconnected clients cover ``f`` and at least
    one of them can actually reach the facility (``alpha >= c``).  The second
    condition only matters for ``f == 0``.
    """
    eligible = any(s == NC and a >= c for a, s, c in received)
    if eligible and covered_cost(received) >= f:
        return PAID
    return CLOSED


def client_phase_end(state: "ClientState") -> "ClientState":
    if state.status == NC:
        return replace(state, alpha_exponent=state.alpha_exponent + 1)
    return state


def preconnect(
    state: "ClientState", alpha: Fraction, open_costs: Mapping[int, Fraction]
) -> "ClientState":
    """Join the cheapest already-open facility whose connection cost alpha covers."""
    if state.status != NC:
        return state
    reachable = [(c, i) for i, c in open_costs.items() if alpha >= c]
    if not reachable:
        return state
    _, best = min(reachable)
    return replace(state, status=CONNECTED, assigned=best)


@dataclass(frozen=True)
class ClientState:
    node: int
    status: ClientStatus = NC
    alpha_exponent: int = 0
    assigned: int | None = None
    open_seen: frozenset[int] = frozenset()
    relay: tuple[int, int] | None = None  # largest (draw, facility) among paid candidates

    def __post_init__(self) -> None:
        if (self.status == CONNECTED) != (self.assigned is not None):
            raise ValueError("a client is connected exactly when it has an assigned facility")


@dataclass(frozen=True)
class FacilityState:
    node: int
    status: FacilityStatus = CLOSED
    draw: int | None = None
    opened_now: bool = False
    alpha: tuple[int, ...] = ()  # last announced exponent of every client
    connected: tuple[bool, ...] = ()


_LEGAL = {
    (CLOSED, PAID),
    (PAID, CLOSED),
    (PAID, OPEN),
}


def _transition(state: FacilityState, new: FacilityStatus) -> FacilityState:
    if new != state.status and (state.status, new) not in _LEGAL:
        raise ValueError(f"illegal facility transition {state.status.name} -> {new.name}")
    return replace(state, status=new)


class _Program:
    def __init__(self, inst: Instance, epsilon: Fraction, fmt: MessageFormat):
        self.inst = inst
        self.epsilon = epsilon
        self.fmt = fmt
        self._alpha: dict[int, Fraction] = {}

    def alpha(self, t: int) -> Fraction:
        if t not in self._alpha:
            self._alpha[t] = (1 + self.epsilon) ** t
        return self._alpha[t]


class ClientProgram(_Program):
    """Client side of the phase (alpha announcement) and of each selection iteration."""

    def initial_state(self, node: int, inst: Instance) -> ClientState:
        return ClientState(node)

    def _cost(self, state: ClientState, i: int) -> Fraction:
        return self.inst.connection[i][state.node]

    def send(self, state: ClientState, step: Step, rng: np.random.Generator, emit) -> tuple[ClientState, dict]:
        m = self.inst.num_facilities
        if step.kind == "alpha":
            if step.phase > 0 and state.status == NC:
                state = client_phase_end(state)
                emit("alpha", str(state.alpha_exponent))
            if state.status == NC and state.open_seen:
                open_costs = {i: self._cost(state, i) for i in state.open_seen}
                state = preconnect(state, self.alpha(state.alpha_exponent), open_costs)
                if state.status == CONNECTED:
                    emit("preconnect", str(state.assigned))
            msg = AlphaAnnounce(state.alpha_exponent, state.status)
        elif step.kind == "relay":
            draw, owner = state.relay if state.relay is not None else (None, None)
            msg = MaxRelay(draw, owner, state.status)
        elif step.kind == "ack":
            msg = StatusAck(state.status)
        else:
            raise ValueError(f"client has nothing to send in step {step.kind!r}")
        return state, {i: msg for i in range(m)}

    def receive(self, state: ClientState, step: Step, inbox: Mapping[int, object], emit) -> ClientState:
        alpha = self.alpha(state.alpha_exponent)
        if step.kind == "draw":
            candidates = [
                (msg.draw, i)
                for i, msg in inbox.items()
                if msg.status == PAID and alpha >= self._cost(state, i)
            ]
            return replace(state, relay=max(candidates, default=None))
        if step.kind == "open":
            opened = frozenset(i for i, msg in inbox.items() if msg.status == OPEN)
            state = replace(state, open_seen=state.open_seen | opened)
            joinable = sorted(
                i
                for i, msg in inbox.items()
                if msg.status == OPEN and msg.opened_now and alpha >= self._cost(state, i)
            )
            if state.status == NC and joinable:
                if len(joinable) > 1:
                    raise SelectionInvariantError(
                        f"phase {step.phase} iteration {step.iteration}: client {state.node} "
                        f"can join {joinable}"
                    )
                state = replace(state, status=CONNECTED, assigned=joinable[0])
                emit("connect", str(joinable[0]))
            return state
        raise ValueError(f"client has nothing to receive in step {step.kind!r}")


class FacilityProgram(_Program):
    """Facility side: payment check, draws, local-maximum opening and closing."""

    def initial_state(self, node: int, inst: Instance) -> FacilityState:
        k = inst.num_clients
        return FacilityState(node, alpha=(0,) * k, connected=(False,) * k)

    def _eligible(self, state: FacilityState) -> list[int]:
        row = self.inst.connection[state.node]
        return [
            j
            for j, (t, done) in enumerate(zip(state.alpha, state.connected))
            if not done and self.alpha(t) >= row[j]
        ]

    def _cover(self, state: FacilityState, clients: Sequence[int]) -> Fraction:
        row = self.inst.connection[state.node]
        return sum((contribution(self.alpha(state.alpha[j]), row[j]) for j in clients), Fraction(0))

    def send(self, state: FacilityState, step: Step, rng: np.random.Generator, emit) -> tuple[FacilityState, dict]:
        k = self.inst.num_clients
        if step.kind == "draw":
            draw = None
            if state.status == PAID:
                draw = int(rng.integers(0, 1 << self.fmt.draw_bits))
                emit("draw", str(draw))
            state = replace(state, draw=draw, opened_now=False)
            msg = RandomDraw(draw or 0, state.status)
        elif step.kind == "open":
            msg = OpenAnnounce(state.status, state.opened_now)
        else:
            raise ValueError(f"facility has nothing to send in step {step.kind!r}")
        return state, {j: msg for j in range(k)}

    def receive(self, state: FacilityState, step: Step, inbox: Mapping[int, object], emit) -> FacilityState:
        connected = list(state.connected)
        for j, msg in inbox.items():
            connected[j] = msg.status == CONNECTED
        state = replace(state, connected=tuple(connected))
        if step.kind == "alpha":
            alpha = list(state.alpha)
            for j, msg in inbox.items():
                alpha[j] = msg.alpha_exponent
            state = replace(state, alpha=tuple(alpha), opened_now=False)
            if state.status == CLOSED:
                row = self.inst.connection[state.node]
                received = [(self.alpha(alpha[j]), ClientStatus(connected[j]), row[j]) for j in range(len(row))]
                if facility_phase_check(self.inst.opening[state.node], received) == PAID:
                    state = _transition(state, PAID)
                    emit("paid", format_rational(covered_cost(received)))
            return state
        if step.kind == "relay":
            eligible = set(self._eligible(state))
            keys = [inbox[j].key for j in eligible if j in inbox]
            top = max((key for key in keys if key is not None), default=None)
            if state.status == PAID and state.draw is not None and top == (state.draw, state.node):
                state = replace(_transition(state, OPEN), opened_now=True)
                emit("open")
            return state
        if step.kind == "ack":
            if state.status == PAID:
                remaining = self._eligible(state)
                cover = self._cover(state, remaining)
                if not remaining or cover < self.inst.opening[state.node]:
                    state = _transition(state, CLOSED)
                    emit("close", format_rational(cover))
            return state
        raise ValueError(f"facility has nothing to receive in step {step.kind!r}")


class PhaseSchedule:
    """Drives phases and selection iterations; termination via global checks."""

    def __init__(self) -> None:
        self.phase = 0
        self.iteration = 0
        self._next = "alpha"
        self.done = False

    def next_step(self, view: NetworkView) -> Step | None:
        if self._next == "alpha":
            self._next = "loop?"
            return Step("alpha", CLIENT, self.phase, 0)
        if self._next == "loop?":
            any_paid = view.check(
                lambda v: any(f.status == PAID for f in v.facilities), self.phase, self.iteration
            )
            if any_paid:
                self.iteration += 1
                self._next = "relay"
                return Step("draw", FACILITY, self.phase, self.iteration)
            all_connected = view.check(
                lambda v: all(c.status == CONNECTED for c in v.clients), self.phase, self.iteration
            )
            if all_connected:
                self.done = True
                return None
            self.phase += 1
            self.iteration = 0
            self._next = "loop?"
            return Step("alpha", CLIENT, self.phase, 0)
        order = {"relay": ("relay", CLIENT, "open"), "open": ("open", FACILITY, "ack"), "ack": ("ack", CLIENT, "loop?")}
        kind, sender, nxt = order[self._next]
        self._next = nxt
        return Step(kind, sender, self.phase, self.iteration)


def log_ceil(value: Fraction, base: Fraction) -> int:
    """Smallest integer p >= 0 with ``base ** p >= value`` (exact)."""
    if base <= 1:
        raise ValueError("base must exceed 1")
    if value <= 1:
        return 0
    # float estimate to get close, exact powers to settle
    estimate = (math.log(value.numerator) - math.log(value.denominator)) / (
        math.log(base.numerator) - math.log(base.denominator)
    )
    p = max(0, int(estimate) - 2)
    power = base**p
    while p > 0 and power >= value:
        p -= 1
        power /= base
    while power < value:
        p += 1
        power *= base
    return p


def alpha_bits_for(inst: Instance, epsilon: Fraction) -> int:
    """Exponent width able to carry every alpha the run can reach.

    Costs are below ``2**bit_width`` so no client needs an exponent beyond
    ``log_{1+eps}(2**(bit_width+1))``.
    """
    log_n = MessageFormat.for_network(inst.n).id_bits
    t_max = log_ceil(Fraction(2) ** (inst.bit_width + 1), 1 + epsilon)
    return max(2 * log_n, t_max.bit_length())


def default_round_cap(inst: Instance, epsilon: Fraction) -> int:
    phases = log_ceil(Fraction(2) ** inst.bit_width, 1 + epsilon)
    return 64 * math.ceil(inst.n**0.75) * max(phases, 1) ** 2


@dataclass
class DistributedResult:
    solution: Solution
    trace: Trace
    phases: int
    rounds: int
    max_bits: int
    round_log: list[RoundLog]
    alpha_exponents: list[int]

    @property
    def alphas(self) -> list[Fraction]:
        base = 1 + self.trace.epsilon
        return [base**t for t in self.alpha_exponents]


def solve_distributed(
    inst: Instance,
    epsilon: Fraction,
    seed: int,
    *,
    bit_budget: int | None = None,
    round_cap: int | None = None,
    conservative_rounds: bool = False,
    shuffle_seed: int | None = None,
) -> DistributedResult:
    epsilon = Fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if min(inst.costs()) < 0:
        raise InstanceError("negative costs")
    fmt = MessageFormat.for_network(inst.n, alpha_bits_for(inst, epsilon))
    schedule = PhaseSchedule()
    result = congest.run(
        inst,
        ClientProgram(inst, epsilon, fmt),
        FacilityProgram(inst, epsilon, fmt),
        schedule,
        seed=seed,
        bit_budget=bit_budget if bit_budget is not None else default_bit_budget(inst.n),
        fmt=fmt,
        round_cap=round_cap if round_cap is not None else default_round_cap(inst, epsilon),
        conservative_rounds=conservative_rounds,
        shuffle_seed=shuffle_seed,
    )
    trace = result.trace
    trace.epsilon = epsilon
    trace.phases = schedule.phase + 1
    trace.rounds = result.round_count
    clients = result.client_states
    solution = Solution(
        frozenset(f.node for f in result.facility_states if f.status == OPEN),
        tuple(c.assigned for c in clients),
    )
    return DistributedResult(
        solution=solution,
        trace=trace,
        phases=trace.phases,
        rounds=result.round_count,
        max_bits=result.max_bits,
        round_log=result.rounds,
        alpha_exponents=[c.alpha_exponent for c in clients],
    )
