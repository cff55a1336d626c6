"""Global-knowledge model of the facility selection loop.

``facility_select`` repeatedly picks every facility whose random draw beats
all facilities sharing a client with it, removes those facilities with their
clients and all edges of those clients, and drops facilities left without
edges.  Draws are K-bit integers with the facility id as tie-breaker, the same
scheme the distributed programs use.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .instance import ceil_log2


@dataclass(frozen=True)
class ContributionGraph:
    num_facilities: int
    num_clients: int
    edges: frozenset[tuple[int, int]]  # (facility, client)

    def __post_init__(self) -> None:
        fac = {i for i, _ in self.edges}
        cli = {j for _, j in self.edges}
        if any(not 0 <= i < self.num_facilities for i in fac) or any(
            not 0 <= j < self.num_clients for j in cli
        ):
            raise ValueError("edge endpoint out of range")
        if len(fac) != self.num_facilities or len(cli) != self.num_clients:
            raise ValueError("contribution graph has isolated nodes")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]]) -> "ContributionGraph":
        edges = frozenset(edges)
        return cls(
            1 + max(i for i, _ in edges),
            1 + max(j for _, j in edges),
            edges,
        )

    @property
    def n(self) -> int:
        return self.num_facilities + self.num_clients

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(clients, facilities) of every edge, sorted by client then facility."""
        pairs = np.array(sorted((j, i) for i, j in self.edges), dtype=np.int64).reshape(-1, 2)
        cli, fac = pairs[:, 0], pairs[:, 1]
        cli.flags.writeable = False
        fac.flags.writeable = False
        return cli, fac

    def clients_of(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_facilities)]
        for i, j in sorted(self.edges):
            out[i].append(j)
        return out

    def facilities_of(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_clients)]
        for i, j in sorted(self.edges):
            out[j].append(i)
        return out


def facility_graph(g: ContributionGraph) -> dict[int, frozenset[int]]:
    """Adjacency of facilities that share at least one client."""
    adj: dict[int, set[int]] = {i: set() for i in range(g.num_facilities)}
    for facs in g.facilities_of():
        for a in facs:
            adj[a].update(b for b in facs if b != a)
    return {i: frozenset(s) for i, s in adj.items()}


def expected_removal_bounds(g: ContributionGraph) -> tuple[Fraction, Fraction, float]:
    """(|E|/|F|, max(|F|, |E|/|F|), sqrt(|E|))."""
    e, f = len(g.edges), g.num_facilities
    per = Fraction(e, f)
    return per, max(Fraction(f), per), math.sqrt(e)


def exact_expected_removals(g: ContributionGraph) -> tuple[Fraction, Fraction]:
    """Per-facility closed forms: sum deg(i)/(deg_F(i)+1) and
    sum (sum_{j in N(i)} deg(j))/(deg_F(i)+1)."""
    adj = facility_graph(g)
    clients = g.clients_of()
    deg_client = [len(x) for x in g.facilities_of()]
    exp_clients = Fraction(0)
    exp_edges = Fraction(0)
    for i in range(g.num_facilities):
        chance = Fraction(1, len(adj[i]) + 1)
        exp_clients += len(clients[i]) * chance
        exp_edges += sum(deg_client[j] for j in clients[i]) * chance
    return exp_clients, exp_edges


def classify_round(edges: int, n_t: int, n: int) -> str:
    """'heavy' iff edges >= n_t * sqrt(n), compared exactly via squares."""
    return "heavy" if edges * edges >= n_t * n_t * n else "light"


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    n_t: int
    facilities: int
    clients: int
    edges: int
    heavy: bool
    removed_clients: int
    removed_edges: int
    removed_facilities: int
    selected: int


def draw_bits(n: int) -> int:
    return 3 * ceil_log2(n)


def local_maxima(
    draws: np.ndarray, fac: np.ndarray, cli: np.ndarray, num_facilities: int, num_clients: int
) -> np.ndarray:
    """Boolean mask of facilities whose (draw, id) beats every facility sharing a client.

    ``fac``/``cli`` list the live edges sorted by client.  A facility is a
    local maximum in the facility graph exactly when it holds the best
    (draw, id) at each of its clients, so one segmented max over the edges
    suffices.  ``draws`` must leave room for the id in an int64.
    """
    if len(fac) == 0:
        return np.zeros(num_facilities, dtype=bool)
    shift = max(int(num_facilities - 1).bit_length(), 1)
    key = (draws << shift) | np.arange(num_facilities, dtype=np.int64)
    edge_key = key[fac]
    starts = np.flatnonzero(np.r_[True, cli[1:] != cli[:-1]])
    best = np.maximum.reduceat(edge_key, starts)
    seg_best = np.repeat(best, np.diff(np.r_[starts, len(cli)]))
    losses = np.bincount(fac[edge_key != seg_best], minlength=num_facilities)
    has_edge = np.bincount(fac, minlength=num_facilities) > 0
    return has_edge & (losses == 0)


def facility_select(g: ContributionGraph, seed: int, *, max_iterations: int | None = None) -> list[IterationStats]:
    """Run the selection loop to completion and return per-iteration statistics."""
    bits = draw_bits(g.n)
    if bits + max(int(g.num_facilities - 1).bit_length(), 1) > 62:
        raise ValueError("graph too large for 62-bit (draw, id) keys")
    rng = np.random.default_rng(seed % (1 << 64))
    cli, fac = g.edge_arrays
    m, k = g.num_facilities, g.num_clients
    live_fac = np.ones(m, dtype=bool)
    live_cli = np.ones(k, dtype=bool)
    stats: list[IterationStats] = []
    limit = max_iterations if max_iterations is not None else m + 1

    while live_fac.any():
        if len(stats) >= limit:
            raise RuntimeError(f"selection did not finish within {limit} iterations")
        f_t, c_t, e_t = int(live_fac.sum()), int(live_cli.sum()), len(fac)
        n_t = f_t + c_t
        draws = np.zeros(m, dtype=np.int64)
        draws[live_fac] = rng.integers(0, 1 << bits, size=f_t, dtype=np.int64)
        chosen = local_maxima(draws, fac, cli, m, k)

        gone_cli = np.zeros(k, dtype=bool)
        gone_cli[cli[chosen[fac]]] = True
        keep = ~gone_cli[cli]
        fac, cli = fac[keep], cli[keep]
        still = np.bincount(fac, minlength=m) > 0
        gone_fac = live_fac & ~still
        live_fac &= still
        live_cli &= ~gone_cli
        stats.append(
            IterationStats(
                iteration=len(stats) + 1,
                n_t=n_t,
                facilities=f_t,
                clients=c_t,
                edges=e_t,
                heavy=classify_round(e_t, n_t, g.n) == "heavy",
                removed_clients=int(gone_cli.sum()),
                removed_edges=e_t - len(fac),
                removed_facilities=int(gone_fac.sum()),
                selected=int(chosen.sum()),
            )
        )
    return stats


def random_contribution_graph(
    num_facilities: int, num_clients: int, edge_probability: float, seed: int
) -> ContributionGraph:
    """Random bipartite graph; isolated nodes are attached to a random partner."""
    rng = np.random.default_rng(seed % (1 << 64))
    mask = rng.random((num_facilities, num_clients)) < edge_probability
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.integers(num_clients)] = True
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(num_facilities), j] = True
    fi, cj = np.nonzero(mask)
    return ContributionGraph(num_facilities, num_clients, frozenset(zip(fi.tolist(), cj.tolist())))


STATS_HEADER = [
    "trial", "iteration", "n_t", "F_t", "C_t", "E_t", "heavy", "removed_clients", "removed_edges",
]


def stats_to_csv(trials: Sequence[Sequence[IterationStats]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_HEADER)
    for trial, stats in enumerate(trials):
        for s in stats:
            writer.writerow(
                [trial, s.iteration, s.n_t, s.facilities, s.clients, s.edges, int(s.heavy),
                 s.removed_clients, s.removed_edges]
            )
    return buf.getvalue()


@dataclass(frozen=True)
class SelectSummary:
    trials: int
    median_iterations: float
    p95_iterations: float
    mean_first_removed_clients: float
    mean_first_removed_edges: float
    clients_lb: Fraction
    edges_lb: Fraction
    edges_sqrt_lb: float
    iteration_bound: float  # 2 n^(3/4) log2 n


def summarize(g: ContributionGraph, trials: Sequence[Sequence[IterationStats]]) -> SelectSummary:
    counts = [len(t) for t in trials]
    clients_lb, edges_lb, sqrt_lb = expected_removal_bounds(g)
    return SelectSummary(
        trials=len(trials),
        median_iterations=statistics.median(counts),
        p95_iterations=float(np.percentile(counts, 95)),
        mean_first_removed_clients=statistics.fmean(t[0].removed_clients for t in trials),
        mean_first_removed_edges=statistics.fmean(t[0].removed_edges for t in trials),
        clients_lb=clients_lb,
        edges_lb=edges_lb,
        edges_sqrt_lb=sqrt_lb,
        iteration_bound=2 * g.n**0.75 * math.log2(g.n),
    )
