import csv
import json

import pytest

from crnsynth.cli import config_label, main, start_state
from crnsynth.crn import dump_crns, load_crns

from conftest import am39, dc_network, requires_z3


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def dc_file(tmp_path):
    path = tmp_path / "dc.json"
    dump_crns([dc_network()], path)
    return str(path)


@pytest.fixture
def small_spec(tmp_path):
    path = tmp_path / "small.json"
    pairs = [[a, b] for a in range(1, 5) for b in range(1, 5)]
    path.write_text(json.dumps({"name": "am", "N": 2, "grid": pairs}))
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_usage_errors(tmp_path, capsys):
    assert main(["synth", "--spec", "am", "--reactions", "2", "--steps", "0",
                 "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["sweep-k", "--spec", "am", "--reactions", "2", "--steps", "3",
                 "--max-steps", "2", "--backend", "builtin", "--out", str(tmp_path)]) == 2
    assert manifest(tmp_path)["exitCode"] == 2


def test_synth_builtin(tmp_path, small_spec):
    out = tmp_path / "run"
    code = main(["synth", "--spec", small_spec, "--reactions", "2", "--steps", "5",
                 "--backend", "builtin", "--out", str(out)])
    assert code == 0
    data = json.loads((out / "solutions.json").read_text())
    assert len(data) == 1 and data[0]["meta"]["index"] == 1
    (crn,) = load_crns(out / "solutions.json")
    assert crn.canonical_key() == dc_network().canonical_key()
    m = manifest(out)
    assert m["status"] == "exhausted" and m["command"] == "synth"
    assert small_spec in m["inputs"] and len(m["inputs"][small_spec]) == 64
    assert len(read_csv(out / "times.csv")) == 1


def test_synth_builtin_bounds_are_a_structural_error(tmp_path):
    code = main(["synth", "--spec", "am", "--species", "3", "--reactions", "3", "--steps", "5",
                 "--backend", "builtin", "--out", str(tmp_path)])
    assert code == 2


@requires_z3
@pytest.mark.smt
def test_synth_dc_with_z3(tmp_path):
    code = main(["synth", "--spec", "am", "--species", "2", "--reactions", "2", "--steps", "5",
                 "--out", str(tmp_path), "--dump-smt", str(tmp_path / "smt")])
    assert code == 0
    (crn,) = load_crns(tmp_path / "solutions.json")
    assert crn.canonical_key() == dc_network().canonical_key()
    assert (tmp_path / "smt" / "query_0000.smt2").exists()


@requires_z3
@pytest.mark.smt
def test_synth_timeout_exit_code(tmp_path):
    code = main(["synth", "--spec", "am", "--species", "3", "--reactions", "3", "--steps", "5",
                 "--paths", "eager", "--timeout", "0.5", "--out", str(tmp_path)])
    assert code == 3
    assert manifest(tmp_path)["status"] == "timeout"


def test_sweep_k_is_monotone_and_deterministic(tmp_path, small_spec):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["sweep-k", "--spec", small_spec, "--reactions", "2", "--steps", "1",
                     "--max-steps", "4", "--backend", "builtin", "--out", str(out)]) == 0
        rows = read_csv(out / "sweep.csv")
        runs.append([(r["K"], r["solutions"], r["status"]) for r in rows])
    assert runs[0] == runs[1]
    counts = [int(s) for _, s, _ in runs[0]]
    assert counts == sorted(counts) and counts[-1] == 1


def test_sweep_k_jobs(tmp_path, small_spec):
    assert main(["sweep-k", "--spec", small_spec, "--reactions", "2", "--steps", "1",
                 "--max-steps", "3", "--backend", "builtin", "--jobs", "2",
                 "--out", str(tmp_path)]) == 0
    assert [r["K"] for r in read_csv(tmp_path / "sweep.csv")] == ["1", "2", "3"]


def test_tune_baseline_and_reproducible(tmp_path, dc_file, small_spec):
    args = ["tune", "--crn", dc_file, "--spec", small_spec, "--burnin", "0", "--samples", "0"]
    assert main(args + ["--out", str(tmp_path / "zero")]) == 0
    (row,) = read_csv(tmp_path / "zero" / "report.csv")
    assert float(row["baseline"]) == float(row["short"])

    args = ["tune", "--crn", dc_file, "--spec", small_spec, "--burnin", "3", "--samples", "3",
            "--seed", "11"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.csv").read_text()
    assert a == (tmp_path / "b" / "report.csv").read_text()
    (row,) = read_csv(tmp_path / "a" / "report.csv")
    assert float(row["short"]) >= float(row["baseline"])
    trace = read_csv(tmp_path / "a" / "traces" / "trace_1_short.csv")
    assert list(trace[0]) == ["iteration", "k_1", "k_2", "objective", "accepted"]
    assert len(trace) == 7
    assert manifest(tmp_path / "a")["seeds"] == {"seed": 11}
    tuned = load_crns(tmp_path / "a" / "tuned.json")
    assert len(tuned) == 1


def test_tune_long_phase(tmp_path, small_spec):
    path = tmp_path / "two.json"
    dump_crns([dc_network(), dc_network((3.0, 0.2))], path)
    assert main(["tune", "--crn", str(path), "--spec", small_spec, "--burnin", "1", "--samples", "1",
                 "--long-burnin", "2", "--long-samples", "2", "--top", "1", "--gate", "-1",
                 "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "report.csv")
    assert [r["rank"] for r in rows] == ["1", "2"]
    assert rows[0]["long"] != "" and rows[1]["long"] == ""
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report[0]["final"] >= report[1]["final"]


def test_heatmap_values(tmp_path, dc_file, small_spec):
    assert main(["heatmap", "--crn", dc_file, "--spec", small_spec, "--out", str(tmp_path)]) == 0
    rows = {(int(r["a"]), int(r["b"])): float(r["probability"]) for r in read_csv(tmp_path / "heatmap.csv")}
    assert rows[(1, 1)] == pytest.approx(1.0, abs=1e-9)
    assert rows[(2, 1)] == pytest.approx(2 / 3, abs=1e-4)
    # full precision round-trip formatting
    text = (tmp_path / "heatmap.csv").read_text()
    assert any(len(line.split(",")[2]) > 10 for line in text.splitlines()[1:])


def test_heatmap_am39_tie_is_zero(tmp_path):
    path = tmp_path / "am39.json"
    dump_crns([am39()], path)
    assert main(["heatmap", "--crn", str(path), "--spec", "am", "--out", str(tmp_path / "o")]) == 0
    rows = {(int(r["a"]), int(r["b"])): float(r["probability"])
            for r in read_csv(tmp_path / "o" / "heatmap.csv")}
    assert rows[(1, 1)] == 0.0 and len(rows) == 50


def test_hitting(tmp_path, dc_file):
    assert main(["hitting", "--crn", dc_file, "--fractions", "0.5,0.6", "--n-range", "2..3",
                 "--out", str(tmp_path)]) == 0
    rows = {(int(r["n"]), r["initialConfigLabel"]): float(r["expectedTime"])
            for r in read_csv(tmp_path / "hitting.csv")}
    assert rows[(2, "0.5n/0.5n")] == pytest.approx(1.0, abs=1e-9)
    assert rows[(3, "0.6n/0.4n")] == pytest.approx(1.5, abs=1e-9)
    assert all(v >= 0 for v in rows.values())


def test_config_label():
    assert config_label(0.6) == "0.6n/0.4n"
    assert config_label(0.9) == "0.9n/0.1n"


def test_start_state_split():
    assert start_state(am39(), 10, 0.6) == (6, 4, 0)
    assert start_state(dc_network(), 3, 0.6) == (2, 1)


def test_transient(tmp_path, dc_file):
    assert main(["transient", "--crn", dc_file, "--state", "A=1,B=1", "--tfinal", "1",
                 "--points", "3", "--final", "B = 0", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "transient.csv")
    assert [r["time"] for r in rows] == ["0.0", "0.5", "1.0"]
    assert float(rows[-1]["probability"]) == pytest.approx((1 - 2.718281828459045 ** -2) / 2)
    assert main(["transient", "--crn", dc_file, "--state", "A1", "--out", str(tmp_path)]) == 2


def test_cme_bench(tmp_path):
    path = tmp_path / "am39.json"
    dump_crns([am39()], path)
    assert main(["cme-bench", "--crn", str(path), "--n-list", "10,20,30", "--points", "50",
                 "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "cme_bench.csv")
    counts = [int(r["stateCount"]) for r in rows]
    assert counts == sorted(counts) and len(set(counts)) == 3
    assert float(rows[0]["tEnd"]) == 10.0


def test_oracle_dump(tmp_path, small_spec):
    assert main(["oracle", "--spec", small_spec, "--reactions", "2", "--steps", "5",
                 "--out", str(tmp_path)]) == 0
    (crn,) = load_crns(tmp_path / "oracle.json")
    assert crn.canonical_key() == dc_network().canonical_key()


def test_replay_reproduces_outputs(tmp_path, small_spec):
    out = tmp_path / "orig"
    assert main(["synth", "--spec", small_spec, "--reactions", "2", "--steps", "3",
                 "--backend", "builtin", "--out", str(out)]) == 0
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert (out / "solutions.json").read_text().count("reactants") == \
        (tmp_path / "again" / "solutions.json").read_text().count("reactants")
    assert load_crns(out / "solutions.json") == load_crns(tmp_path / "again" / "solutions.json")


def test_replay_heatmap_is_bit_identical(tmp_path, dc_file, small_spec):
    out = tmp_path / "h"
    assert main(["heatmap", "--crn", dc_file, "--spec", small_spec, "--out", str(out)]) == 0
    assert main(["replay", str(out / "manifest.json")]) == 0
    assert (out / "heatmap.csv").read_bytes() == (out / "replay" / "heatmap.csv").read_bytes()


def test_index_counts_from_one(tmp_path, small_spec):
    path = tmp_path / "two.json"
    dump_crns([dc_network(), dc_network((1.0, 5.0))], path)
    for idx in ("1", "2"):
        assert main(["heatmap", "--crn", str(path), "--index", idx, "--spec", small_spec,
                     "--out", str(tmp_path / idx)]) == 0
    first = read_csv(tmp_path / "1" / "heatmap.csv")
    second = read_csv(tmp_path / "2" / "heatmap.csv")
    assert first != second
    assert main(["heatmap", "--crn", str(path), "--index", "3", "--spec", small_spec,
                 "--out", str(tmp_path / "3")]) == 2
    assert main(["heatmap", "--crn", str(path), "--index", "0", "--spec", small_spec,
                 "--out", str(tmp_path / "0")]) == 2
