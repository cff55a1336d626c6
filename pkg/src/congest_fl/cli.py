"""Command-line entry point: ``congest-fl {generate,run,verify,select-stats}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .congest import SimulationError, write_rounds_csv
from .distributed import solve_distributed
from .instance import (
    Instance,
    InstanceError,
    format_rational,
    generate_instance,
    parse_rational,
    read_instance,
    solution_cost,
    write_instance,
    write_solution,
)
from .oracles import brute_force_opt, greedy_fl_sequential
from .selection import (
    ContributionGraph,
    exact_expected_removals,
    facility_select,
    random_contribution_graph,
    stats_to_csv,
    summarize,
)
from .trace import Trace
from .verify import VERIFIERS, run_verifiers

log = logging.getLogger("congest_fl")

SOLVERS = ("distributed", "greedy", "optimal")
REPORT_VERIFIERS = ("fact1", "lemma1", "lemma2", "dualfit", "bracket")
REPORT_HEADER = [
    "instance", "seed", "epsilon", "cost_dist", "cost_greedy", "cost_opt", "ratio_dist", "ratio_greedy",
    "phases", "rounds", "max_bits", *REPORT_VERIFIERS, "ratio_dist_approx", "ratio_greedy_approx",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    instances: list[tuple[str, Instance]]
    epsilons: list[Fraction]
    seeds: list[int]
    solvers: list[str] = field(default_factory=lambda: list(SOLVERS))
    verifiers: list[str] = field(default_factory=lambda: list(REPORT_VERIFIERS))
    out: Path | None = None
    trace_dir: Path | None = None
    conservative_rounds: bool = False
    round_cap: int | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not self.instances:
            raise ConfigError("no instances")
        if not self.seeds:
            raise ConfigError("no seeds")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilon must be positive")
        if not self.solvers:
            raise ConfigError("select at least one solver")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solver(s): {', '.join(bad)}")
        bad = [v for v in self.verifiers if v not in VERIFIERS]
        if bad:
            raise ConfigError(f"unknown verifier(s): {', '.join(bad)}")


# -- argument parsing helpers ---------------------------------------------

def _int_range(token: str) -> tuple[int, int]:
    lo, _, hi = token.partition("-")
    lo_i = int(lo)
    hi_i = int(hi) if hi else lo_i
    if lo_i < 1 or hi_i < lo_i:
        raise ConfigError(f"bad size range {token!r}")
    return lo_i, hi_i


def generated_corpus(params: str, count: int, gen_seed: int) -> list[tuple[str, Instance]]:
    """Instances for ``--generate F,C,GRID,FMIN,FMAX``; F and C may be ranges like ``1-6``."""
    parts = params.split(",")
    if len(parts) != 5:
        raise ConfigError("--generate expects F,C,GRID,FMIN,FMAX")
    f_range, c_range = _int_range(parts[0]), _int_range(parts[1])
    grid, fmin, fmax = (int(p) for p in parts[2:])
    corpus = []
    for idx in range(count):
        seq = np.random.SeedSequence([gen_seed % (1 << 64), idx])
        rng = np.random.default_rng(seq)
        m = int(rng.integers(f_range[0], f_range[1] + 1))
        k = int(rng.integers(c_range[0], c_range[1] + 1))
        inst_seed = int(seq.generate_state(1, dtype=np.uint64)[0])
        corpus.append((f"gen-{gen_seed}-{idx}", generate_instance(m, k, grid, (fmin, fmax), inst_seed)))
    return corpus


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _ratio(cost: Fraction | None, opt: Fraction | None) -> Fraction | None:
    if cost is None or opt is None:
        return None
    if opt == 0:
        return Fraction(1) if cost == 0 else None
    return cost / opt


def _fmt(value: Fraction | None) -> str:
    return "-" if value is None else format_rational(value)


def _approx(value: Fraction | None) -> str:
    return "-" if value is None else f"~{float(value):.6f}"


# -- cmd_run -----------------------------------------------------------------

def evaluate(
    name: str,
    inst: Instance,
    seed: int,
    epsilon: Fraction,
    solvers: Sequence[str],
    verifiers: Sequence[str],
    conservative_rounds: bool = False,
    round_cap: int | None = None,
    trace_dir: Path | None = None,
) -> tuple[list[str], bool]:
    """One report row; the flag is True when every selected check passed."""
    ok = True
    cost_dist = cost_greedy = cost_opt = None
    phases = rounds = max_bits = "-"
    flags = {v: "skip" for v in REPORT_VERIFIERS}
    if "optimal" in solvers:
        cost_opt = solution_cost(brute_force_opt(inst), inst)
    if "greedy" in solvers:
        cost_greedy = solution_cost(greedy_fl_sequential(inst)[0], inst)
    if "distributed" in solvers:
        try:
            res = solve_distributed(
                inst, epsilon, seed, conservative_rounds=conservative_rounds, round_cap=round_cap
            )
        except (SimulationError, RuntimeError, ValueError) as exc:
            log.error("%s seed=%s eps=%s: %s", name, seed, format_rational(epsilon), exc)
            flags = {v: "error" for v in REPORT_VERIFIERS}
            ok = False
        else:
            cost_dist = solution_cost(res.solution, inst)
            phases, rounds, max_bits = str(res.phases), str(res.rounds), str(res.max_bits)
            results = run_verifiers(res.trace, inst, list(verifiers))
            for vname, violations in results.items():
                for v in violations:
                    log.warning("%s seed=%s eps=%s: %s", name, seed, format_rational(epsilon), v)
                if violations:
                    ok = False
                if vname in flags:
                    flags[vname] = "fail" if violations else "pass"
            if trace_dir is not None:
                stem = f"{name}_s{seed}_e{format_rational(epsilon).replace('/', '-')}"
                res.trace.write(trace_dir / f"{stem}.trace")
                write_rounds_csv(res.round_log, trace_dir / f"{stem}.rounds.csv")
                write_solution(res.solution, trace_dir / f"{stem}.sol")
    ratio_dist, ratio_greedy = _ratio(cost_dist, cost_opt), _ratio(cost_greedy, cost_opt)
    row = [
        name, str(seed), format_rational(epsilon),
        _fmt(cost_dist), _fmt(cost_greedy), _fmt(cost_opt), _fmt(ratio_dist), _fmt(ratio_greedy),
        phases, rounds, max_bits, *(flags[v] for v in REPORT_VERIFIERS),
        _approx(ratio_dist), _approx(ratio_greedy),
    ]
    return row, ok


def _evaluate_packed(args: tuple) -> tuple[list[str], bool]:
    return evaluate(*args)


def cmd_run(config: ExperimentConfig) -> tuple[str, bool]:
    """Run every (instance, seed, epsilon); returns the CSV text and overall pass flag."""
    config.validate()
    if config.trace_dir is not None:
        config.trace_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (name, inst, seed, eps, config.solvers, config.verifiers, config.conservative_rounds,
         config.round_cap, config.trace_dir)
        for name, inst in config.instances
        for seed in config.seeds
        for eps in config.epsilons
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_evaluate_packed, jobs, chunksize=8))
    else:
        results = [_evaluate_packed(job) for job in jobs]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row, _ in results:
        writer.writerow(row)
    text = buf.getvalue()
    if config.out is not None:
        config.out.write_text(text, encoding="utf-8")
    return text, all(ok for _, ok in results)


# -- cmd_select_stats ------------------------------------------------------------

def read_edges(path: Path) -> ContributionGraph:
    edges = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            i, j = line.split()
            edges.append((int(i), int(j)))
    return ContributionGraph.from_edges(edges)


def cmd_select_stats(graph: ContributionGraph, trials: int, seed: int) -> tuple[str, dict]:
    runs = [facility_select(graph, seed + t) for t in range(trials)]
    summary = summarize(graph, runs)
    exp_clients, exp_edges = exact_expected_removals(graph)
    info = {
        "n": graph.n,
        "facilities": graph.num_facilities,
        "clients": graph.num_clients,
        "edges": len(graph.edges),
        "trials": summary.trials,
        "median_iterations": summary.median_iterations,
        "p95_iterations": summary.p95_iterations,
        "iteration_bound": round(summary.iteration_bound, 6),
        "mean_first_removed_clients": round(summary.mean_first_removed_clients, 6),
        "mean_first_removed_edges": round(summary.mean_first_removed_edges, 6),
        "clients_lb": format_rational(summary.clients_lb),
        "edges_lb": format_rational(summary.edges_lb),
        "edges_sqrt_lb": round(summary.edges_sqrt_lb, 6),
        "expected_removed_clients": format_rational(exp_clients),
        "expected_removed_edges": format_rational(exp_edges),
    }
    return stats_to_csv(runs), info


# -- argparse ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="congest-fl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write generated instance file(s)")
    gen.add_argument("--generate", required=True, metavar="F,C,GRID,FMIN,FMAX")
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--gen-seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True, help="directory for the .fl files")

    run = sub.add_parser("run", help="run solvers and verifiers, write a CSV report")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path, action="append", metavar="PATH")
    src.add_argument("--generate", metavar="F,C,GRID,FMIN,FMAX")
    run.add_argument("--count", type=int, default=1, help="number of generated instances")
    run.add_argument("--gen-seed", type=int, default=0)
    run.add_argument("--epsilon", default="1/2", metavar="P/Q[,P/Q...]")
    run.add_argument("--seed", default="0", metavar="N[,N...]")
    run.add_argument("--solvers", default=",".join(SOLVERS))
    run.add_argument("--verify", default="all", metavar="LIST|all")
    run.add_argument("--trials", type=int, default=1, help="accepted for config symmetry; unused by run")
    run.add_argument("--out", type=Path)
    run.add_argument("--trace-dir", type=Path, help="write trace, round log and solution per run")
    run.add_argument("--conservative-rounds", action="store_true")
    run.add_argument("--round-cap", type=int)
    run.add_argument("--jobs", type=int, default=1)

    ver = sub.add_parser("verify", help="check a trace file against an instance")
    ver.add_argument("--trace", type=Path, required=True)
    ver.add_argument("--instance", type=Path, required=True)
    ver.add_argument("--verify", default="all", metavar="LIST|all")

    sel = sub.add_parser("select-stats", help="statistics of the simplified selection process")
    graph = sel.add_mutually_exclusive_group(required=True)
    graph.add_argument("--graph", metavar="F,C,P", help="random graph with edge probability P")
    graph.add_argument("--edges", type=Path, help="file of 'facility client' lines")
    sel.add_argument("--trials", type=int, default=100)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--out", type=Path)
    sel.add_argument("--summary", type=Path)
    return parser


def _verifier_names(text: str) -> list[str]:
    return list(VERIFIERS) if text == "all" else _csv_list(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "generate":
            args.out.mkdir(parents=True, exist_ok=True)
            for name, inst in generated_corpus(args.generate, args.count, args.gen_seed):
                write_instance(inst, args.out / f"{name}.fl")
            return 0

        if args.command == "run":
            if args.instance:
                instances = [(p.stem, read_instance(p)) for p in args.instance]
            else:
                instances = generated_corpus(args.generate, args.count, args.gen_seed)
            config = ExperimentConfig(
                instances=instances,
                epsilons=[parse_rational(e) for e in _csv_list(args.epsilon)],
                seeds=[int(s) for s in _csv_list(args.seed)],
                solvers=_csv_list(args.solvers),
                verifiers=_verifier_names(args.verify),
                out=args.out,
                trace_dir=args.trace_dir,
                conservative_rounds=args.conservative_rounds,
                round_cap=args.round_cap,
                jobs=args.jobs,
            )
            text, ok = cmd_run(config)
            if args.out is None:
                sys.stdout.write(text)
            return 0 if ok else 1

        if args.command == "verify":
            inst = read_instance(args.instance)
            trace = Trace.read(args.trace)
            results = run_verifiers(trace, inst, _verifier_names(args.verify))
            failed = False
            for violations in results.values():
                for v in violations:
                    print(v)
                    failed = True
            return 1 if failed else 0

        if args.command == "select-stats":
            if args.edges:
                graph = read_edges(args.edges)
            else:
                f, c, p = args.graph.split(",")
                graph = random_contribution_graph(int(f), int(c), float(p), args.seed)
            text, info = cmd_select_stats(graph, args.trials, args.seed)
            if args.out is not None:
                args.out.write_text(text, encoding="utf-8")
            summary = json.dumps(info, indent=2, sort_keys=True) + "\n"
            if args.summary is not None:
                args.summary.write_text(summary, encoding="utf-8")
            else:
                sys.stdout.write(summary)
            return 0
    except (ConfigError, InstanceError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
