import json
import subprocess
import sys

import numpy as np
import pytest

from decmilp.cli import EXIT_INPUT, EXIT_LIMIT, EXIT_OK, bundled_instances, main
from decmilp.sequences import all_spaces
from decmilp.valuation import build_table


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def report(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json", "-")
    return code, json.loads(out)


def strip_times(rep):
    rep = json.loads(json.dumps(rep))
    rep.pop("timings")
    rep["solver"].pop("wall_time")
    return rep


def test_bundled_instances():
    assert bundled_instances() == ["mabc", "matiger"]


def test_solve_mabc_three(capsys):
    code, rep = report(capsys, "solve", "mabc", "--horizon", "3", "--variant", "milp")
    assert code == EXIT_OK
    assert rep["status"] == "optimal" and rep["value"] == pytest.approx(2.99, abs=1e-9)
    assert rep["schema"] == 1 and rep["instance"] == "bundled:mabc"
    assert rep["solver"]["variables"] == 1108 and rep["solver"]["rows"] == 106
    assert [a["agent"] for a in rep["policy"]] == [0, 1]
    assert rep["dominance"] is None


def test_solve_text_output(capsys):
    code, out, _ = run(capsys, "solve", "matiger", "-k", "2")
    assert code == EXIT_OK
    assert "status optimal" in out and "agent 1:" in out and "listen" in out


def test_solve_pruned_matiger_reports_no_removals(capsys):
    code, rep = report(capsys, "solve", "matiger", "-k", "2", "--variant", "milp-pr")
    _, plain = report(capsys, "solve", "matiger", "-k", "2")
    assert code == EXIT_OK and rep["value"] == pytest.approx(plain["value"])
    assert rep["dominance"]["dominated_fraction"] == [0.0, 0.0] and rep["dominance"]["rounds"] == []


def test_bounds_flags(capsys):
    code, rep = report(capsys, "solve", "mabc", "-k", "3", "--lower-bound", "--upper-bound")
    assert code == EXIT_OK and rep["value"] == pytest.approx(2.99)
    assert rep["bounds"]["lower"] == pytest.approx(2.0) and rep["bounds"]["upper"] >= 2.99
    code, rep = report(capsys, "solve", "mabc", "-k", "2", "--upper-bound", "2.5")
    assert rep["bounds"]["upper"] == 2.5 and rep["bounds"]["notes"]["upper"] == "given"
    code, _, err = run(capsys, "solve", "mabc", "-k", "2", "--upper-bound", "lots")
    assert code == EXIT_INPUT and "expected a number" in err


def test_report_round_trips_through_evaluate(capsys, tmp_path):
    path = tmp_path / "rep.json"
    code, _, _ = run(capsys, "solve", "matiger", "-k", "3", "--json", str(path))
    assert code == EXIT_OK
    rep = json.loads(path.read_text())
    code, out, _ = run(capsys, "evaluate", "matiger", "-k", "3", "--policy", str(path))
    assert code == EXIT_OK
    values = dict(line.split() for line in out.splitlines())
    assert float(values["tree_value"]) == pytest.approx(rep["value"], abs=1e-6)
    assert float(values["sequence_form_value"]) == pytest.approx(rep["value"], abs=1e-6)


def test_evaluate_hand_written_policy(capsys, tmp_path, mabc):
    # Both agents always send (action 1), whatever they observe.
    seqs = ["a1", "a1 o0 a1", "a1 o1 a1"]
    path = tmp_path / "pol.json"
    path.write_text(json.dumps([{"agent": 0, "sequences": seqs}, {"agent": 1, "sequences": seqs}]))
    code, out, _ = run(capsys, "evaluate", "mabc", "-k", "2", "--policy", str(path))
    assert code == EXIT_OK
    spaces = all_spaces(mabc, 2)
    nu = build_table(mabc, spaces).nu
    terminal = [spaces[0].index_of(__import__("decmilp").Sequence.parse(0, s)) - 2 for s in seqs[1:]]
    hand = nu[terminal[0], terminal[0]] + nu[terminal[0], terminal[1]] + nu[terminal[1], terminal[0]] + nu[terminal[1], terminal[1]]
    assert float(out.split()[1]) == pytest.approx(hand, abs=1e-12)


def test_evaluate_rejects_infeasible_policy(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([{"agent": 0, "sequences": ["a1 o0 a1"]}, {"agent": 1, "sequences": ["a0"]}]))
    code, _, err = run(capsys, "evaluate", "mabc", "-k", "2", "--policy", str(path))
    assert code == EXIT_INPUT and "row 0" in err and "agent 0" in err
    path.write_text("{not json")
    assert run(capsys, "evaluate", "mabc", "-k", "2", "--policy", str(path))[0] == EXIT_INPUT
    path.write_text(json.dumps([{"agent": 0, "sequences": ["a0"]}]))
    assert run(capsys, "evaluate", "mabc", "-k", "1", "--policy", str(path))[0] == EXIT_INPUT


def test_brute_agrees_with_solve(capsys):
    code, out, _ = run(capsys, "brute", "mabc", "-k", "3")
    assert code == EXIT_OK and "joint policies 16384" in out
    brute = float(out.splitlines()[1].split()[1])
    _, rep = report(capsys, "solve", "mabc", "-k", "3")
    assert brute == pytest.approx(rep["value"], abs=1e-6)


def test_brute_one_step(capsys, matiger):
    code, out, _ = run(capsys, "brute", "matiger", "-k", "1")
    assert code == EXIT_OK and "joint policies 9" in out
    assert float(out.splitlines()[1].split()[1]) == pytest.approx(float((matiger.R @ matiger.b0).max()))


def test_brute_capacity_refusal(capsys):
    code, _, err = run(capsys, "brute", "matiger", "-k", "4")
    assert code == EXIT_LIMIT and str(3**15 * 3**15) in err


def test_limits_give_exit_two(capsys):
    code, rep = report(capsys, "solve", "mabc", "-k", "3", "--node-limit", "3")
    assert code == EXIT_LIMIT and rep["status"] == "node_limit"


def test_input_errors(capsys, tmp_path):
    assert run(capsys, "solve", "nowhere.dpomdp", "-k", "2")[0] == EXIT_INPUT
    bad = tmp_path / "bad.dpomdp"
    bad.write_text("agents: 1\nstates: x\n")
    code, _, err = run(capsys, "solve", str(bad), "-k", "1")
    assert code == EXIT_INPUT and "line 2" in err
    assert run(capsys, "solve", "mabc", "-k", "0")[0] == EXIT_INPUT


def test_emit_lp(capsys, tmp_path):
    path = tmp_path / "p.lp"
    assert run(capsys, "solve", "mabc", "-k", "2", "--emit-lp", str(path))[0] == EXIT_OK
    text = path.read_text()
    assert text.startswith("\\") and "Subject To" in text and text.rstrip().endswith("End")


def test_reports_are_reproducible(capsys):
    a = report(capsys, "solve", "matiger", "-k", "2", "--variant", "milp-pr")[1]
    b = report(capsys, "solve", "matiger", "-k", "2", "--variant", "milp-pr")[1]
    assert strip_times(a) == strip_times(b)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "decmilp.cli", "solve", "mabc", "-k", "2", "--json", "-"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value"] == pytest.approx(2.0)
