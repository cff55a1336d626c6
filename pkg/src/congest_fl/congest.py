"""Synchronous CONGEST round engine on the complete bipartite graph.

The engine knows nothing about facility location.  It drives two node
programs (one for clients, one for facilities) through a sequence of
communication steps chosen by a schedule, and it owns everything the model
makes global: message delivery, bit accounting, per-node randomness and the
zero-cost termination checks the schedule asks for.

A round has two halves.  First every node's ``send`` runs and all outboxes
are collected; only then is anything delivered and every node's ``receive``
run.  No node can observe a message of the current round while sending.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .instance import Instance
from .messages import MessageFormat, Payload
from .trace import Trace, TraceEvent

CLIENT, FACILITY = "C", "F"


class SimulationError(RuntimeError):
    pass


class BudgetViolation(SimulationError):
    def __init__(self, round_index: int, src: tuple[str, int], dst: tuple[str, int], bits: int, budget: int):
        self.round_index, self.src, self.dst, self.bits, self.budget = round_index, src, dst, bits, budget
        super().__init__(
            f"round {round_index}: message {src[0]}{src[1]}->{dst[0]}{dst[1]} "
            f"has {bits} bits, budget is {budget}"
        )


class RoundCapExceeded(SimulationError):
    pass


@dataclass(frozen=True)
class Step:
    """One communication round: ``sender`` kind sends, the other kind receives."""

    kind: str
    sender: str
    phase: int
    iteration: int


@dataclass(frozen=True)
class RoundLog:
    round_index: int
    phase: int
    iteration: int
    messages: int
    max_bits: int


Emit = Callable[[str, str], None]


class NodeProgram(Protocol):
    def initial_state(self, node: int, inst: Instance) -> Any: ...

    def send(self, state: Any, step: Step, rng: np.random.Generator, emit: Emit) -> tuple[Any, Mapping[int, Payload]]: ...

    def receive(self, state: Any, step: Step, inbox: Mapping[int, Payload], emit: Emit) -> Any: ...


class NetworkView:
    """Read-only global view handed to the schedule between rounds."""

    def __init__(self, engine: "_Engine"):
        self._engine = engine

    @property
    def clients(self) -> Sequence[Any]:
        return tuple(self._engine.states[CLIENT])

    @property
    def facilities(self) -> Sequence[Any]:
        return tuple(self._engine.states[FACILITY])

    def check(self, predicate: Callable[["NetworkView"], bool], phase: int = 0, iteration: int = 0) -> bool:
        """Evaluate a global termination predicate.

        Free by default; with conservative accounting each check is charged
        the two rounds of a convergecast that would compute it.
        """
        self._engine.checks += 1
        if self._engine.conservative_rounds:
            for _ in range(2):
                self._engine.log_round(phase, iteration, 0, 0)
        return bool(predicate(self))


class Schedule(Protocol):
    def next_step(self, view: NetworkView) -> Step | None: ...


@dataclass
class RunResult:
    client_states: list[Any]
    facility_states: list[Any]
    rounds: list[RoundLog]
    trace: Trace
    checks: int = 0

    @property
    def round_count(self) -> int:
        return len(self.rounds)

    @property
    def max_bits(self) -> int:
        return max((r.max_bits for r in self.rounds), default=0)


def node_rng(seed: int, kind: str, node: int) -> np.random.Generator:
    """Independent stream per node, derived from the run seed and node identity."""
    kind_code = 0 if kind == CLIENT else 1
    return np.random.default_rng(np.random.SeedSequence([seed % (1 << 64), kind_code, node]))


@dataclass
class _Engine:
    inst: Instance
    programs: dict[str, NodeProgram]
    fmt: MessageFormat
    bit_budget: int
    round_cap: int
    conservative_rounds: bool
    seed: int
    shuffle_seed: int | None
    states: dict[str, list[Any]] = field(default_factory=dict)
    rngs: dict[str, list[np.random.Generator]] = field(default_factory=dict)
    rounds: list[RoundLog] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)
    checks: int = 0

    def __post_init__(self) -> None:
        sizes = {CLIENT: self.inst.num_clients, FACILITY: self.inst.num_facilities}
        for kind, count in sizes.items():
            self.states[kind] = [self.programs[kind].initial_state(v, self.inst) for v in range(count)]
            self.rngs[kind] = [node_rng(self.seed, kind, v) for v in range(count)]
        self._order_rng = None if self.shuffle_seed is None else np.random.default_rng(self.shuffle_seed)

    def log_round(self, phase: int, iteration: int, messages: int, max_bits: int) -> None:
        if len(self.rounds) >= self.round_cap:
            raise RoundCapExceeded(f"hard round cap of {self.round_cap} rounds exceeded")
        self.rounds.append(RoundLog(len(self.rounds), phase, iteration, messages, max_bits))

    def _order(self, count: int) -> list[int]:
        order = list(range(count))
        if self._order_rng is not None:
            self._order_rng.shuffle(order)
        return order

    def execute(self, step: Step) -> None:
        sender = step.sender
        receiver = FACILITY if sender == CLIENT else CLIENT
        round_index = len(self.rounds)
        pending: list[TraceEvent] = []

        def emitter(kind: str, node: int) -> Emit:
            def emit(event: str, detail: str = "-") -> None:
                pending.append(TraceEvent(step.phase, step.iteration, kind, node, event, detail))
            return emit

        num_receivers = len(self.states[receiver])
        inboxes: list[dict[int, Payload]] = [{} for _ in range(num_receivers)]
        messages = max_bits = 0
        program = self.programs[sender]
        for v in self._order(len(self.states[sender])):
            state, outbox = program.send(self.states[sender][v], step, self.rngs[sender][v], emitter(sender, v))
            self.states[sender][v] = state
            for dst, payload in outbox.items():
                if not 0 <= dst < num_receivers:
                    raise SimulationError(f"{sender}{v} addressed unknown node {receiver}{dst}")
                bits = self.fmt.encode(payload)
                if len(bits) > self.bit_budget:
                    raise BudgetViolation(round_index, (sender, v), (receiver, dst), len(bits), self.bit_budget)
                inboxes[dst][v] = self.fmt.decode(bits)
                messages += 1
                max_bits = max(max_bits, len(bits))
        program = self.programs[receiver]
        for v in self._order(num_receivers):
            self.states[receiver][v] = program.receive(self.states[receiver][v], step, inboxes[v], emitter(receiver, v))
        self.log_round(step.phase, step.iteration, messages, max_bits)
        # canonical order so results do not depend on intra-round scheduling
        pending.sort(key=lambda ev: (ev.node_kind != sender, ev.node_kind, ev.node_id))
        self.events.extend(pending)


def run(
    inst: Instance,
    client_program: NodeProgram,
    facility_program: NodeProgram,
    schedule: Schedule,
    *,
    seed: int,
    bit_budget: int,
    fmt: MessageFormat | None = None,
    round_cap: int = 1_000_000,
    conservative_rounds: bool = False,
    shuffle_seed: int | None = None,
) -> RunResult:
    """Execute rounds until the schedule returns ``None``.

    ``shuffle_seed`` permutes the order in which nodes are stepped inside a
    round; it exists to check that outcomes do not depend on that order.
    """
    engine = _Engine(
        inst=inst,
        programs={CLIENT: client_program, FACILITY: facility_program},
        fmt=fmt or MessageFormat.for_network(inst.n),
        bit_budget=bit_budget,
        round_cap=round_cap,
        conservative_rounds=conservative_rounds,
        seed=seed,
        shuffle_seed=shuffle_seed,
    )
    view = NetworkView(engine)
    while (step := schedule.next_step(view)) is not None:
        engine.execute(step)
    trace = Trace(inst.num_facilities, inst.num_clients, Fraction(0), seed, engine.events, rounds=len(engine.rounds))
    return RunResult(engine.states[CLIENT], engine.states[FACILITY], engine.rounds, trace, engine.checks)


def rounds_to_csv(rounds: Sequence[RoundLog]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "phase", "iteration", "messages", "max_bits"])
    for r in rounds:
        writer.writerow([r.round_index, r.phase, r.iteration, r.messages, r.max_bits])
    return buf.getvalue()


def write_rounds_csv(rounds: Sequence[RoundLog], path: str | Path) -> None:
    Path(path).write_text(rounds_to_csv(rounds), encoding="utf-8")
