import json
import subprocess
import sys

import pytest

from dynmech.cli import main
from dynmech.instances import F2, env_opposed
from dynmech.env import save_environment


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def env_file(tmp_path):
    path = tmp_path / "env.json"
    save_environment(env_opposed(), path)
    return path


@pytest.fixture
def gap_files(tmp_path, capsys):
    env, mech = tmp_path / "gap.json", tmp_path / "ref.json"
    assert run(capsys, "gen", "memoryless-gap", "--n", 2, "--out", env, "--mech-out", mech)[0] == 0
    return env, mech


def test_validate_ok(capsys, env_file):
    assert run(capsys, "validate", "--env", env_file)[:2] == (0, "OK\n")


def test_validate_reports_problems(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    data = env_opposed().to_dict()
    data["P0"] = [0.9, 0.9]
    bad.write_text(json.dumps(data))
    code, out, _ = run(capsys, "validate", "--env", bad)
    assert code == 2 and out.strip()


def test_validate_mechanism_dims(capsys, env_file, gap_files):
    _, mech = gap_files
    code, out, _ = run(capsys, "validate", "--env", env_file, "--mech", mech)
    assert code == 2 and "mechanism" in out


def test_solve_and_evaluate(capsys, env_file, tmp_path):
    mech = tmp_path / "m.json"
    code, out, _ = run(capsys, "solve", "--env", env_file, "--out", mech)
    assert code == 0 and out == "value 0.5\n"
    code, out, _ = run(capsys, "evaluate", "--env", env_file, "--mech", mech)
    assert code == 0 and out.splitlines()[0] == "principal_total 0.5"
    assert run(capsys, "check-ic", "--env", env_file, "--mech", mech)[0] == 0


def test_solve_with_payments(capsys, env_file):
    code, out, _ = run(capsys, "solve", "--env", env_file, "--ir", "dynamic", "--payments", "nonneg")
    assert code == 0 and float(out.split()[1]) >= 0.5 - 1e-9


def test_solve_to_stdout(capsys, env_file):
    code, out, _ = run(capsys, "solve", "--env", env_file, "--out", "-")
    assert code == 0 and json.loads(out.split("\n", 1)[1])["repr"] == "table"


def test_solve_myopic(capsys, gap_files):
    env, _ = gap_files
    code, out, _ = run(capsys, "gen", "memoryless-gap", "--agent", "myopic", "--out", env)
    code, out, _ = run(capsys, "solve-myopic", "--env", env)
    assert code == 0 and out == "value 1\nstatic_calls 8\n"


def test_best_response(capsys, gap_files, tmp_path):
    env, mech = gap_files
    strat = tmp_path / "s.json"
    code, out, _ = run(capsys, "best-response", "--env", env, "--mech", mech, "--strategy-out", strat)
    assert code == 0
    assert out.splitlines() == ["agent_value 1.5", "principal_value 0.5", "truthful false"]
    assert strat.exists()


def test_best_response_tie_flags(capsys, gap_files):
    env, mech = gap_files
    for flags in (["--ties", "lowest"], ["--adversarial-ties"], ["--agent", "myopic", "--discount", "0"]):
        assert run(capsys, "best-response", "--env", env, "--mech", mech, *flags)[0] == 0


def test_check_ic_violation_exit(capsys, gap_files):
    env, mech = gap_files
    code, out, _ = run(capsys, "check-ic", "--env", env, "--mech", mech, "--ir", "dynamic")
    assert code == 2 and out.startswith("ic violated gap 1")
    assert "deviation" in out and "ir ok" in out


def test_gen_random_seeded(capsys):
    a = run(capsys, "--seed", 3, "gen", "random", "--T", 2, "--states", 3)[1]
    b = run(capsys, "--seed", 3, "gen", "random", "--T", 2, "--states", 3)[1]
    c = run(capsys, "--seed", 4, "gen", "random", "--T", 2, "--states", 3)[1]
    assert a == b != c
    assert len(json.loads(a)["P0"]) == 3


def test_gen_maxsat(capsys, tmp_path):
    cnf, env = tmp_path / "f.cnf", tmp_path / "e.json"
    cnf.write_text(F2.to_dimacs())
    assert run(capsys, "gen", "maxsat", "--cnf", cnf, "--out", env)[0] == 0
    code, out, _ = run(capsys, "solve", "--env", env)
    assert code == 0 and out == "value 0.666666667\n"


def test_gen_maxsat_needs_cnf(capsys):
    code, _, err = run(capsys, "gen", "maxsat")
    assert code == 2 and "--cnf" in err


def test_bad_dimacs(capsys, tmp_path):
    cnf = tmp_path / "f.cnf"
    cnf.write_text("p cnf 1 1\n1 q 0\n")
    code, _, err = run(capsys, "gen", "maxsat", "--cnf", cnf)
    assert code == 2 and "line 2" in err


def test_experiment_and_plot(capsys, tmp_path):
    csv, svg, svg2 = tmp_path / "r.csv", tmp_path / "a.svg", tmp_path / "b.svg"
    code, out, _ = run(capsys, "experiment", "--values=-1,1", "--seeds", 2, "--out", csv, "--plot", svg)
    assert code == 0 and out == "rows 20 failed 0\n"
    assert svg.read_text().count('class="series"') == 5
    assert run(capsys, "plot", "--csv", csv, "--out", svg2, "--combos", "naive/patient")[0] == 0
    assert svg2.read_text().count('class="series"') == 1


def test_experiment_failure_exit(capsys, tmp_path, monkeypatch):
    from dynmech import experiment

    def boom(*a, **k):
        raise RuntimeError("no")

    monkeypatch.setattr(experiment, "solve_myopic", boom)
    code, out, _ = run(capsys, "experiment", "--values", "0", "--seeds", 1, "--out", tmp_path / "r.csv")
    assert code == 3 and out == "rows 5 failed 1\n"


def test_infeasible_exit(capsys, env_file):
    code, _, err = run(capsys, "solve", "--env", env_file, "--payments", "interval:2:3", "--ir", "dynamic")
    assert code == 3 and "solver failure" in err


def test_unbounded_exit(capsys, env_file):
    assert run(capsys, "solve", "--env", env_file, "--payments", "nonneg")[0] == 3


def test_missing_file_exit(capsys, tmp_path):
    code, _, err = run(capsys, "solve", "--env", tmp_path / "nope.json")
    assert code == 4 and "nope.json" in err


def test_unwritable_output_exit(capsys, env_file, tmp_path):
    assert run(capsys, "solve", "--env", env_file, "--out", tmp_path / "no" / "m.json")[0] == 4


def test_plot_empty_selection(capsys, tmp_path):
    csv = tmp_path / "r.csv"
    csv.write_text("eta,T,S,A,combo,seed,raw,normalized\n")
    assert run(capsys, "plot", "--csv", csv, "--out", tmp_path / "x.svg")[0] == 2


def test_console_script_exit_code(env_file):
    proc = subprocess.run([sys.executable, "-m", "dynmech.cli", "solve", "--env", str(env_file)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "value 0.5\n"
