"""Facility-location instances, solutions and their text file formats.

All cost arithmetic uses :class:`fractions.Fraction`; no float ever touches a
cost, an alpha value or a comparison between them.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Cost = Fraction

_TOKEN = re.compile(r"^-?\d+(?:/\d+)?$")


class InstanceError(ValueError):
    """Malformed or invalid instance (file or in-memory)."""


class DegenerateInstanceError(InstanceError):
    """Every cost is zero, so there is nothing to normalize by."""


class SolutionError(ValueError):
    """A solution breaks the assignment constraints of the IP."""


def default_bit_width(n: int) -> int:
    """Default per-instance bit width ``4*ceil(log2 n) + 16``."""
    return 4 * ceil_log2(n) + 16


def ceil_log2(n: int) -> int:
    # n >= 2 on any bipartite network; clamp so tiny values still get one bit
    return max(1, (max(n, 1) - 1).bit_length())


def parse_rational(token: str) -> Fraction:
    """Parse an integer or ``p/q`` token; decimals are rejected."""
    token = token.strip()
    if not _TOKEN.match(token):
        raise InstanceError(f"not an exact rational token: {token!r}")
    if token.endswith("/0"):
        raise InstanceError(f"zero denominator: {token!r}")
    return Fraction(token)


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Instance:
    """Complete bipartite facility-location instance.

    ``connection[i][j]`` is the cost of serving client ``j`` from facility
    ``i``.  Facility and client ids are their positions.
    """

    opening: tuple[Fraction, ...]
    connection: tuple[tuple[Fraction, ...], ...]
    bit_width: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "opening", tuple(Fraction(f) for f in self.opening))
        object.__setattr__(
            self, "connection", tuple(tuple(Fraction(c) for c in row) for row in self.connection)
        )
        if len(self.connection) != len(self.opening):
            raise InstanceError("connection matrix needs one row per facility")
        widths = {len(row) for row in self.connection}
        if len(widths) > 1:
            raise InstanceError("ragged connection matrix")
        if not self.opening or not widths or widths == {0}:
            raise InstanceError("an instance needs at least one facility and one client")
        if self.bit_width <= 0:
            raise InstanceError("bit_width must be positive")

    @classmethod
    def build(
        cls,
        opening: Sequence[int | Fraction | str],
        connection: Sequence[Sequence[int | Fraction | str]],
        bit_width: int | None = None,
    ) -> "Instance":
        opening = tuple(Fraction(f) for f in opening)
        connection = tuple(tuple(Fraction(c) for c in row) for row in connection)
        n = len(opening) + (len(connection[0]) if connection else 0)
        return cls(opening, connection, bit_width or default_bit_width(n))

    @property
    def num_facilities(self) -> int:
        return len(self.opening)

    @property
    def num_clients(self) -> int:
        return len(self.connection[0])

    @property
    def n(self) -> int:
        return self.num_facilities + self.num_clients

    def costs(self) -> Iterable[Fraction]:
        yield from self.opening
        for row in self.connection:
            yield from row

    def cost_unit(self) -> Fraction:
        """Largest unit such that every cost is an integer multiple of it."""
        denominator = 1
        for c in self.costs():
            denominator = math.lcm(denominator, c.denominator)
        return Fraction(1, denominator)

    def scaled(self, factor: Fraction) -> "Instance":
        return Instance(
            tuple(f * factor for f in self.opening),
            tuple(tuple(c * factor for c in row) for row in self.connection),
            self.bit_width,
        )


@dataclass(frozen=True)
class Violation:
    kind: str
    witness: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        ids = ",".join(map(str, self.witness)) or "-"
        return f"{self.kind} {ids} {self.detail}"


def validate_instance(inst: Instance) -> list[Violation]:
    """Return every violated instance invariant (empty list iff valid)."""
    out: list[Violation] = []
    m, k = inst.num_facilities, inst.num_clients
    for i, f in enumerate(inst.opening):
        if f < 0:
            out.append(Violation("negative", (i,), f"f={format_rational(f)}"))
    for i, row in enumerate(inst.connection):
        for j, c in enumerate(row):
            if c < 0:
                out.append(Violation("negative", (i, j), f"c={format_rational(c)}"))

    nonzero = [c for c in inst.costs() if c > 0]
    if nonzero and min(nonzero) != 1:
        out.append(Violation("normalization", (), f"min_nonzero={format_rational(min(nonzero))}"))
    if not nonzero:
        out.append(Violation("normalization", (), "all costs are zero"))

    unit = inst.cost_unit()
    limit = 1 << inst.bit_width
    for idx, c in enumerate(inst.opening):
        if abs(c / unit) >= limit:
            out.append(Violation("bit_width", (idx,), f"f={format_rational(c)} B={inst.bit_width}"))
    for i, row in enumerate(inst.connection):
        for j, c in enumerate(row):
            if abs(c / unit) >= limit:
                out.append(Violation("bit_width", (i, j), f"c={format_rational(c)} B={inst.bit_width}"))

    # c[i][j] <= c[i][j'] + c[i'][j'] + c[i'][j]; the detour through (j', i')
    # only depends on the facility pair, so find its cheapest value first.
    c = inst.connection
    for i in range(m):
        for i2 in range(m):
            if i2 == i:
                continue
            detour = min(c[i][j2] + c[i2][j2] for j2 in range(k))
            for j in range(k):
                if c[i][j] <= detour + c[i2][j]:
                    continue
                for j2 in range(k):
                    rhs = c[i][j2] + c[i2][j2] + c[i2][j]
                    if c[i][j] > rhs:
                        out.append(
                            Violation(
                                "quadrilateral",
                                (i, j, i2, j2),
                                f"{format_rational(c[i][j])}>{format_rational(rhs)}",
                            )
                        )
    return out


def normalize(inst: Instance) -> Instance:
    """Scale all costs so the smallest non-zero cost is exactly 1."""
    nonzero = [c for c in inst.costs() if c > 0]
    if not nonzero:
        raise DegenerateInstanceError("cannot normalize an instance whose costs are all zero")
    smallest = min(nonzero)
    if smallest == 1:
        return inst
    return inst.scaled(1 / smallest)


def generate_instance(
    num_facilities: int,
    num_clients: int,
    grid_size: int,
    facility_cost_range: tuple[int, int],
    seed: int,
) -> Instance:
    """Random Euclidean instance on the integer grid ``[0, grid_size)^2``.

    Connection costs are ceilings of Euclidean distances, which keeps the
    quadrilateral inequality.  Clients avoid facility sites whenever the grid
    has a free site, so every connection cost is at least 1.
    """
    if num_facilities < 1 or num_clients < 1:
        raise InstanceError("need at least one facility and one client")
    if grid_size < 1:
        raise InstanceError("grid_size must be >= 1")
    lo, hi = facility_cost_range
    if lo < 0 or hi < lo:
        raise InstanceError(f"bad facility cost range {facility_cost_range}")

    rng = np.random.default_rng(seed % (1 << 64))
    fac_xy = rng.integers(0, grid_size, size=(num_facilities, 2))
    taken = {(int(x), int(y)) for x, y in fac_xy}
    cli_xy = np.empty((num_clients, 2), dtype=np.int64)
    avoid = len(taken) < grid_size * grid_size
    for j in range(num_clients):
        while True:
            xy = rng.integers(0, grid_size, size=2)
            if not avoid or (int(xy[0]), int(xy[1])) not in taken:
                break
        cli_xy[j] = xy
    opening = [int(v) for v in rng.integers(lo, hi + 1, size=num_facilities)]

    connection = []
    for fx, fy in fac_xy:
        row = []
        for cx, cy in cli_xy:
            sq = int(fx - cx) ** 2 + int(fy - cy) ** 2
            root = math.isqrt(sq)
            row.append(root if root * root == sq else root + 1)
        connection.append(row)
    n = num_facilities + num_clients
    return normalize(Instance.build(opening, connection, default_bit_width(n)))


@dataclass(frozen=True)
class Solution:
    open_facilities: frozenset[int]
    assignment: tuple[int, ...]  # assignment[j] = facility serving client j

    def check(self, inst: Instance) -> None:
        if len(self.assignment) != inst.num_clients:
            raise SolutionError(
                f"{len(self.assignment)} assignments for {inst.num_clients} clients"
            )
        for j, i in enumerate(self.assignment):
            if not 0 <= i < inst.num_facilities:
                raise SolutionError(f"client {j} assigned to unknown facility {i}")
            if i not in self.open_facilities:
                raise SolutionError(f"client {j} assigned to closed facility {i}")


def solution_cost(sol: Solution, inst: Instance) -> Fraction:
    """Opening costs of the open set plus each client's connection cost."""
    sol.check(inst)
    total = sum((inst.opening[i] for i in sol.open_facilities), Fraction(0))
    for j, i in enumerate(sol.assignment):
        total += inst.connection[i][j]
    return total


# -- file formats -----------------------------------------------------------

def dumps_instance(inst: Instance) -> str:
    lines = [f"FL v1 {inst.num_facilities} {inst.num_clients} {inst.bit_width}"]
    for i, f in enumerate(inst.opening):
        lines.append(f"F {i} {format_rational(f)}")
    for i, row in enumerate(inst.connection):
        lines.append(f"C {i} " + " ".join(format_rational(c) for c in row))
    return "\n".join(lines) + "\n"


def loads_instance(text: str, *, validate: bool = True) -> Instance:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise InstanceError("empty instance file")
    head = rows[0]
    if len(head) != 5 or head[:2] != ["FL", "v1"]:
        raise InstanceError(f"bad header: {' '.join(head)!r}")
    try:
        m, k, bits = (int(t) for t in head[2:])
    except ValueError as exc:
        raise InstanceError(f"bad header: {' '.join(head)!r}") from exc
    if m < 1 or k < 1 or bits < 1:
        raise InstanceError("header sizes must be positive")
    if len(rows) != 1 + 2 * m:
        raise InstanceError(f"expected {2 * m} body lines, found {len(rows) - 1}")

    opening = []
    for i, row in enumerate(rows[1 : 1 + m]):
        if len(row) != 3 or row[0] != "F" or row[1] != str(i):
            raise InstanceError(f"bad facility line {i}: {' '.join(row)!r}")
        opening.append(parse_rational(row[2]))
    connection = []
    for i, row in enumerate(rows[1 + m :]):
        if len(row) != 2 + k or row[0] != "C" or row[1] != str(i):
            raise InstanceError(f"bad cost line {i}: {' '.join(row)!r}")
        connection.append([parse_rational(t) for t in row[2:]])

    inst = Instance.build(opening, connection, bits)
    if validate:
        problems = validate_instance(inst)
        if problems:
            listed = "; ".join(str(v) for v in problems[:5])
            raise InstanceError(f"{len(problems)} invariant violation(s): {listed}")
    return inst


def write_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def read_instance(path: str | Path, *, validate: bool = True) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"), validate=validate)


def dumps_solution(sol: Solution) -> str:
    lines = ["OPEN " + " ".join(str(i) for i in sorted(sol.open_facilities))]
    lines += [f"ASSIGN {j} {i}" for j, i in enumerate(sol.assignment)]
    return "\n".join(lines) + "\n"


def loads_solution(text: str) -> Solution:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0][0] != "OPEN":
        raise SolutionError("solution must start with an OPEN line")
    try:
        opened = frozenset(int(t) for t in rows[0][1:])
        pairs = {}
        for row in rows[1:]:
            if len(row) != 3 or row[0] != "ASSIGN":
                raise SolutionError(f"bad line {' '.join(row)!r}")
            if int(row[1]) in pairs:
                raise SolutionError(f"client {row[1]} assigned twice")
            pairs[int(row[1])] = int(row[2])
    except ValueError as exc:
        raise SolutionError(str(exc)) from exc
    if sorted(pairs) != list(range(len(pairs))):
        raise SolutionError("ASSIGN lines must cover clients 0..k-1 exactly once")
    return Solution(opened, tuple(pairs[j] for j in range(len(pairs))))


def write_solution(sol: Solution, path: str | Path) -> None:
    Path(path).write_text(dumps_solution(sol), encoding="utf-8")


def read_solution(path: str | Path) -> Solution:
    return loads_solution(Path(path).read_text(encoding="utf-8"))
