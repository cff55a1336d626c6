import csv
import json
from fractions import Fraction as Q

import pytest

from congest_fl.cli import REPORT_HEADER, ConfigError, ExperimentConfig, cmd_run, generated_corpus, main
from congest_fl.instance import Instance, write_instance


def _rows(text):
    return list(csv.DictReader(text.splitlines()))


def test_run_trivial_instance(tmp_path, capsys):
    path = tmp_path / "one.fl"
    write_instance(Instance.build([0], [[1]]), path)
    assert main(["run", "--instance", str(path), "--epsilon", "1/2", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(REPORT_HEADER)
    (row,) = _rows(out)
    assert row["instance"] == "one"
    assert (row["cost_dist"], row["cost_greedy"], row["cost_opt"]) == ("1", "1", "1")
    assert row["ratio_dist"] == row["ratio_greedy"] == "1"
    assert row["ratio_dist_approx"] == "~1.000000"
    assert all(row[v] == "pass" for v in ("fact1", "lemma1", "lemma2", "dualfit", "bracket"))


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--generate", "1-4,1-5,64,0,64", "--count", "8", "--epsilon", "1/10,1", "--seed", "3,4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a.read_text())
    assert len(rows) == 8 * 2 * 2
    # ordered by instance, then seed, then epsilon
    assert [(r["seed"], r["epsilon"]) for r in rows[:4]] == [("3", "1/10"), ("3", "1"), ("4", "1/10"), ("4", "1")]


def test_solver_subset_marks_missing_columns():
    config = ExperimentConfig(
        instances=[("t", Instance.build([1], [[1]]))], epsilons=[Q(1)], seeds=[0], solvers=["greedy"]
    )
    text, ok = cmd_run(config)
    (row,) = _rows(text)
    assert ok
    assert row["cost_greedy"] == "2" and row["cost_dist"] == "-" and row["ratio_greedy"] == "-"
    assert row["fact1"] == "skip"


@pytest.mark.parametrize(
    "overrides",
    [{"epsilons": [Q(0)]}, {"solvers": []}, {"solvers": ["magic"]}, {"seeds": []}, {"verifiers": ["nope"]}],
)
def test_config_validation(overrides):
    base = dict(instances=[("t", Instance.build([1], [[1]]))], epsilons=[Q(1)], seeds=[0])
    base.update(overrides)
    with pytest.raises(ConfigError):
        ExperimentConfig(**base).validate()


def test_round_cap_error_sets_exit_code(tmp_path, capsys):
    code = main(["run", "--generate", "4,6,64,0,64", "--round-cap", "2", "--seed", "0"])
    assert code == 1
    (row,) = _rows(capsys.readouterr().out)
    assert row["fact1"] == "error"


def test_bad_arguments_exit_two(tmp_path, capsys):
    assert main(["run", "--generate", "1,2,3", "--seed", "0"]) == 2
    assert main(["run", "--instance", str(tmp_path / "missing.fl")]) == 2
    assert main(["run", "--generate", "2,2,64,0,9", "--epsilon", "0.5"]) == 2


def test_generated_corpus_sizes():
    corpus = generated_corpus("1-6,1-8,64,0,64", 40, gen_seed=9)
    assert all(1 <= inst.num_facilities <= 6 and 1 <= inst.num_clients <= 8 for _, inst in corpus)
    assert len({inst.num_facilities for _, inst in corpus}) > 1
    assert generated_corpus("1-6,1-8,64,0,64", 40, gen_seed=9) == corpus


def test_generate_then_verify_trace(tmp_path, capsys):
    gen_dir, trace_dir = tmp_path / "gen", tmp_path / "traces"
    assert main(["generate", "--generate", "3,4,64,0,64", "--count", "2", "--out", str(gen_dir)]) == 0
    instance = gen_dir / "gen-0-1.fl"
    assert main(["run", "--instance", str(instance), "--trace-dir", str(trace_dir), "--out", str(tmp_path / "r.csv")]) == 0
    (trace,) = trace_dir.glob("*.trace")
    assert (trace_dir / trace.name.replace(".trace", ".rounds.csv")).exists()
    capsys.readouterr()
    assert main(["verify", "--trace", str(trace), "--instance", str(instance)]) == 0
    assert capsys.readouterr().out == ""

    # corrupt: claim a huge alpha for client 0 in the last phase
    lines = trace.read_text().splitlines()
    phases = int(lines[0].split()[6])
    lines.append(f"{phases - 1} 0 C 0 alpha 99")
    trace.write_text("\n".join(lines) + "\n")
    assert main(["verify", "--trace", str(trace), "--instance", str(instance), "--verify", "lemma2,dualfit"]) == 1
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("VIOLATION ") for line in out)


def test_select_stats_four_edge(tmp_path, capsys):
    edges = tmp_path / "e.txt"
    edges.write_text("# facility client\n0 0\n0 1\n1 1\n1 2\n")
    out = tmp_path / "s.csv"
    assert main(["select-stats", "--edges", str(edges), "--trials", "1000", "--seed", "0", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["mean_first_removed_edges"] == 3.0
    assert info["expected_removed_edges"] == "3"
    assert info["edges_lb"] == "2"
    assert out.read_text().startswith("trial,iteration,n_t,F_t,C_t,E_t,heavy,removed_clients,removed_edges\n")


def test_select_stats_singleton(tmp_path, capsys):
    edges = tmp_path / "e.txt"
    edges.write_text("0 0\n")
    assert main(["select-stats", "--edges", str(edges), "--trials", "25"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["median_iterations"] == 1 and info["p95_iterations"] == 1


def test_select_stats_random_graph_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        csv_path, summary = tmp_path / f"{name}.csv", tmp_path / f"{name}.json"
        args = ["select-stats", "--graph", "40,60,0.08", "--trials", "30", "--seed", "2"]
        assert main([*args, "--out", str(csv_path), "--summary", str(summary)]) == 0
        outs.append((csv_path.read_bytes(), summary.read_bytes()))
    assert outs[0] == outs[1]
