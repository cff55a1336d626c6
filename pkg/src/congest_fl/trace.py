"""Execution traces of the distributed algorithm.

A trace is a flat, chronological list of per-node transition records.  All
per-phase snapshots the verifiers need are rebuilt from it by
:meth:`Trace.replay`, so a trace file on disk is as good as the live object.

Event vocabulary (``iteration`` 0 is the part of a phase before the
selection loop):

* ``C j alpha t``       client j's exponent became t (start of a phase)
* ``C j preconnect i``  client j joined already-open facility i
* ``C j connect i``     client j joined facility i opened this iteration
* ``F i paid x``        facility i became currently-paid, covered cost x
* ``F i draw r``        facility i drew r this iteration
* ``F i open -``        facility i opened
* ``F i close x``       facility i fell back to closed, remaining cover x
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .instance import Solution, format_rational, parse_rational
from .messages import FacilityStatus


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    phase: int
    iteration: int
    node_kind: str  # "C" or "F"
    node_id: int
    event: str
    detail: str = "-"

    def __str__(self) -> str:
        return f"{self.phase} {self.iteration} {self.node_kind} {self.node_id} {self.event} {self.detail}"


@dataclass(frozen=True)
class Connection:
    client: int
    facility: int
    phase: int
    iteration: int
    via: str  # "connect" or "preconnect"


@dataclass
class IterationView:
    index: int
    paid_at_start: frozenset[int]
    not_connected_at_start: frozenset[int]
    draws: dict[int, int] = field(default_factory=dict)
    opened: set[int] = field(default_factory=set)
    closed: set[int] = field(default_factory=set)
    connected: dict[int, int] = field(default_factory=dict)


@dataclass
class PhaseView:
    index: int
    alpha: tuple[int, ...]
    preconnected: dict[int, int]
    not_connected: frozenset[int]  # after preconnect, i.e. the set U of this phase
    became_paid: dict[int, Fraction]
    status_before: tuple[FacilityStatus, ...]  # after the payment check
    status_after: tuple[FacilityStatus, ...]
    not_connected_at_end: frozenset[int]
    iterations: list[IterationView]


@dataclass
class Replay:
    phases: list[PhaseView]
    problems: list[str]  # illegal or duplicated transitions


@dataclass
class Trace:
    num_facilities: int
    num_clients: int
    epsilon: Fraction
    seed: int
    events: list[TraceEvent] = field(default_factory=list)
    phases: int = 0
    rounds: int = 0

    # -- derived views -------------------------------------------------------

    def final_alpha_exponents(self) -> list[int]:
        t = [0] * self.num_clients
        for ev in self.events:
            if ev.node_kind == "C" and ev.event == "alpha":
                t[ev.node_id] = int(ev.detail)
        return t

    def final_alphas(self) -> list[Fraction]:
        base = 1 + self.epsilon
        return [base**t for t in self.final_alpha_exponents()]

    def connections(self) -> list[Connection]:
        return [
            Connection(ev.node_id, int(ev.detail), ev.phase, ev.iteration, ev.event)
            for ev in self.events
            if ev.node_kind == "C" and ev.event in ("connect", "preconnect")
        ]

    def open_facilities(self) -> frozenset[int]:
        return frozenset(ev.node_id for ev in self.events if ev.node_kind == "F" and ev.event == "open")

    def solution(self) -> Solution:
        assigned: dict[int, int] = {}
        for conn in self.connections():
            assigned.setdefault(conn.client, conn.facility)
        missing = [j for j in range(self.num_clients) if j not in assigned]
        if missing:
            raise TraceError(f"clients never connected: {missing}")
        return Solution(self.open_facilities(), tuple(assigned[j] for j in range(self.num_clients)))

    def replay(self) -> Replay:
        """Rebuild per-phase snapshots and flag illegal transitions."""
        m, k = self.num_facilities, self.num_clients
        status = [FacilityStatus.CLOSED] * m
        alpha = [0] * k
        connected: dict[int, int] = {}
        problems: list[str] = []
        phases: list[PhaseView] = []

        by_phase: dict[int, list[TraceEvent]] = {}
        for ev in self.events:
            by_phase.setdefault(ev.phase, []).append(ev)
        last_phase = max(by_phase, default=-1)
        num_phases = max(self.phases, last_phase + 1)

        for p in range(num_phases):
            events = by_phase.get(p, [])
            setup = [ev for ev in events if ev.iteration == 0]
            preconnected: dict[int, int] = {}
            became_paid: dict[int, Fraction] = {}
            for ev in setup:
                if ev.node_kind == "C" and ev.event == "alpha":
                    t = int(ev.detail)
                    if ev.node_id in connected:
                        problems.append(f"phase {p}: connected client {ev.node_id} changed alpha")
                    elif t < alpha[ev.node_id]:
                        problems.append(f"phase {p}: client {ev.node_id} alpha decreased")
                    alpha[ev.node_id] = t
                elif ev.node_kind == "C" and ev.event == "preconnect":
                    i = int(ev.detail)
                    if ev.node_id in connected:
                        problems.append(f"phase {p}: client {ev.node_id} connected twice")
                    if status[i] != FacilityStatus.OPEN:
                        problems.append(f"phase {p}: client {ev.node_id} preconnected to non-open {i}")
                    connected[ev.node_id] = i
                    preconnected[ev.node_id] = i
            not_connected = frozenset(j for j in range(k) if j not in connected)
            for ev in setup:
                if ev.node_kind == "F" and ev.event == "paid":
                    if status[ev.node_id] != FacilityStatus.CLOSED:
                        problems.append(f"phase {p}: facility {ev.node_id} paid from {status[ev.node_id].name}")
                    status[ev.node_id] = FacilityStatus.CURRENTLY_PAID
                    became_paid[ev.node_id] = parse_rational(ev.detail)
                elif ev.node_kind == "F" or ev.event not in ("alpha", "preconnect"):
                    problems.append(f"phase {p}: unexpected setup event {ev}")
            status_before = tuple(status)

            iterations: list[IterationView] = []
            loop_events = [ev for ev in events if ev.iteration > 0]
            for ev in loop_events:
                while len(iterations) < ev.iteration:
                    iterations.append(
                        IterationView(
                            index=len(iterations) + 1,
                            paid_at_start=frozenset(
                                i for i in range(m) if status[i] == FacilityStatus.CURRENTLY_PAID
                            ),
                            not_connected_at_start=frozenset(j for j in range(k) if j not in connected),
                        )
                    )
                it = iterations[ev.iteration - 1]
                node = ev.node_id
                if ev.node_kind == "F":
                    if ev.event == "draw":
                        it.draws[node] = int(ev.detail)
                        continue
                    if status[node] != FacilityStatus.CURRENTLY_PAID:
                        problems.append(f"phase {p}: facility {node} {ev.event} from {status[node].name}")
                    if ev.event == "open":
                        status[node] = FacilityStatus.OPEN
                        it.opened.add(node)
                    elif ev.event == "close":
                        status[node] = FacilityStatus.CLOSED
                        it.closed.add(node)
                    else:
                        problems.append(f"phase {p}: unknown facility event {ev}")
                elif ev.event == "connect":
                    i = int(ev.detail)
                    if node in connected:
                        problems.append(f"phase {p}: client {node} connected twice")
                    if i not in it.opened:
                        problems.append(f"phase {p}: client {node} connected to {i} not opened this iteration")
                    connected[node] = i
                    it.connected[node] = i
                else:
                    problems.append(f"phase {p}: unexpected client event {ev}")

            phases.append(
                PhaseView(
                    index=p,
                    alpha=tuple(alpha),
                    preconnected=preconnected,
                    not_connected=not_connected,
                    became_paid=became_paid,
                    status_before=status_before,
                    status_after=tuple(status),
                    not_connected_at_end=frozenset(j for j in range(k) if j not in connected),
                    iterations=iterations,
                )
            )
        return Replay(phases, problems)

    # -- text format ---------------------------------------------------------

    def dumps(self) -> str:
        head = (
            f"TRACE v1 {self.num_facilities} {self.num_clients} "
            f"{format_rational(self.epsilon)} {self.seed} {self.phases} {self.rounds}"
        )
        return "\n".join([head, *map(str, self.events)]) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Trace":
        lines = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0][:2] != ["TRACE", "v1"] or len(lines[0]) != 8:
            raise TraceError("missing or malformed TRACE header")
        try:
            _, _, m, k, eps, seed, phases, rounds = lines[0]
            trace = cls(int(m), int(k), parse_rational(eps), int(seed), [], int(phases), int(rounds))
            for row in lines[1:]:
                if len(row) != 6 or row[2] not in ("C", "F"):
                    raise TraceError(f"bad trace record {' '.join(row)!r}")
                trace.events.append(TraceEvent(int(row[0]), int(row[1]), row[2], int(row[3]), row[4], row[5]))
        except ValueError as exc:
            raise TraceError(str(exc)) from exc
        return trace

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
