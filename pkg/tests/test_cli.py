import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pgc import circuit, cli, detring, learn, pc
from pgc.circuit import expand_joint
from pgc.compose import GroupPartition
from pgc.data import save_binary_csv

from conftest import THREE_JOINT, L_BETA, three_gp_circuit, three_pc_mass_circuit
from oracles import random_simple_model

FIX = Path(__file__).parent / "fixtures"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fixtures_match_builders():
    assert circuit.load(FIX / "three_gp.pgc").nodes == three_gp_circuit().nodes
    assert pc.load(FIX / "three_pc.pmc").nodes == three_pc_mass_circuit().nodes
    k = detring.load_kernel(FIX / "lbeta.kernel")
    assert np.array_equal(k.matrix, L_BETA)
    G = detring.load_graph(FIX / "k4.graph")
    assert circuit.evaluate_numeric(detring.spanning_tree_gp(G), np.ones(6)) == pytest.approx(16)


def test_marginal_command(capsys):
    code, out, _ = run(["marginal", FIX / "three_gp.pgc", "X2=0,X3=0"], capsys)
    assert code == 0 and float(out) == pytest.approx(0.04, abs=1e-12)
    code, out, _ = run(["marginal", FIX / "three_gp.pgc"], capsys)
    assert code == 0 and out.strip() == "1"
    code, _, err = run(["marginal", FIX / "three_gp.pgc", "X9=1"], capsys)
    assert code == 1 and "X9" in err
    code, _, _ = run(["marginal", FIX / "three_gp.pgc", "X1=1,X1=0"], capsys)
    assert code == 1
    code, _, _ = run(["marginal", FIX / "three_gp.pgc", "Y1=1"], capsys)
    assert code == 1
    code, _, _ = run(["marginal", FIX / "missing.pgc"], capsys)
    assert code == 2


def test_parse_query():
    q = cli.parse_query(" X1=1 , x3=0", 3)
    assert q.ones == {0} and q.zeros == {2}
    assert cli.parse_query("X1=1,X1=1", 3).ones == {0}
    with pytest.raises(cli.UsageError):
        cli.parse_query("X2=2", 3)


def test_convert_command(tmp_path, capsys):
    out_path = tmp_path / "three_pc.pgc"
    code, _, _ = run(["convert", FIX / "three_pc.pmc", "-o", out_path], capsys)
    assert code == 0
    g = circuit.load(out_path)
    assert np.allclose(expand_joint(g), THREE_JOINT, atol=1e-12)
    # marginal outputs on the converted file match the three-variable table sums
    code, out, _ = run(["marginal", out_path, "X2=1,X3=1"], capsys)
    assert float(out) == pytest.approx(0.64, abs=1e-12)
    # round trip: convert again to stdout, reload, identical joint
    code, text, _ = run(["convert", FIX / "three_pc.pmc"], capsys)
    assert np.array_equal(expand_joint(circuit.loads(text)), expand_joint(g))


def test_convert_non_decomposable(capsys):
    code, _, err = run(["convert", FIX / "nondecomposable.pmc"], capsys)
    assert code == 2 and "[2]" in err


def test_oracle_check(capsys):
    code, out, _ = run(["oracle-check", FIX / "three_gp.pgc"], capsys)
    assert code == 0 and out.startswith("pass")
    code, out, _ = run(["oracle-check", FIX / "three_gp_corrupt.pgc"], capsys)
    assert code == 3 and out.startswith("fail") and "max_violation=1" in out
    code, _, err = run(["oracle-check", FIX / "three_gp.pgc", "--limit", "2"], capsys)
    assert code == 1 and "refused" in err


@pytest.fixture
def toy_dir(tmp_path):
    rng = np.random.default_rng(11)
    gen = random_simple_model(6, rng, C=2, K=2)
    X = learn.sample_exact(gen, 300, rng)
    d = tmp_path / "toy"
    d.mkdir()
    for name, rows in (("train", X[:200]), ("valid", X[200:240]), ("test", X[240:])):
        save_binary_csv(rows, d / f"toy.{name}.data")
    return d


def test_train_reports_are_byte_identical(toy_dir, tmp_path, capsys):
    reports = []
    for k in range(2):
        rep = tmp_path / f"r{k}.json"
        code, out, _ = run(["train", toy_dir, "--K", 2, "--C", 2, "--epochs", 4, "--seed", 7,
                            "--report", rep, "--checkpoint", tmp_path / f"c{k}.json"], capsys)
        assert code == 0 and "avg test log-likelihood" in out
        reports.append(rep.read_bytes())
    assert reports[0] == reports[1]
    doc = json.loads(reports[0])
    assert doc["schema"] == "pgc-report/1" and doc["seed"] == 7 and doc["n"] == 6
    assert "train_seconds" not in doc["metrics"]
    assert doc["metrics"]["avg_test_ll"] < 0


def test_train_k1_c1_is_dpp(toy_dir, tmp_path, capsys):
    ck = tmp_path / "c.json"
    rep = tmp_path / "r.json"
    code, _, _ = run(["train", toy_dir, "--K", 1, "--C", 1, "--epochs", 2,
                      "--checkpoint", ck, "--report", rep, "--record-time"], capsys)
    assert code == 0
    model = learn.load_checkpoint(ck)
    assert model.C == 1 and all(len(g) == 1 for g in model.partition.groups)
    assert json.loads(rep.read_text())["metrics"]["train_seconds"] >= 0


def test_train_grid(toy_dir, tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _, _ = run(["train", toy_dir, "--grid", "--K-grid", 1, 2, "--C-grid", 1, 2,
                      "--epochs", 2, "--report", rep], capsys)
    assert code == 0
    doc = json.loads(rep.read_text())
    assert len(doc["grid"]) == 4
    assert {(c["K"], c["C"]) for c in doc["grid"]} == {(1, 1), (1, 2), (2, 1), (2, 2)}


def test_env_overrides(toy_dir, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PGC_EPOCHS", "1")
    monkeypatch.setenv("PGC_C", "3")
    rep = tmp_path / "r.json"
    code, _, _ = run(["train", toy_dir, "--C", 2, "--report", rep], capsys)
    assert code == 0
    cfg = json.loads(rep.read_text())["config"]
    assert cfg["epochs"] == 1 and cfg["C"] == 2


def test_eval_matches_training_log(toy_dir, tmp_path, capsys):
    ck, rep = tmp_path / "c.json", tmp_path / "r.json"
    run(["train", toy_dir, "--epochs", 3, "--checkpoint", ck, "--report", rep], capsys)
    doc = json.loads(rep.read_text())
    code, out, _ = run(["eval", ck, toy_dir, "--split", "train"], capsys)
    assert code == 0
    assert float(out) == pytest.approx(doc["metrics"]["avg_train_ll"], abs=1e-9)
    code, out, _ = run(["eval", ck, toy_dir], capsys)
    assert float(out) == pytest.approx(doc["metrics"]["avg_test_ll"], abs=1e-9)


def test_eval_exact_three_model(tmp_path, capsys):
    model = learn.SimplePgcModel(GroupPartition([(0,), (1,), (2,)]),
                                 np.linalg.cholesky(L_BETA)[None], np.zeros((1, 3)), np.zeros(1))
    ck = tmp_path / "lbeta.json"
    learn.save_checkpoint(model, ck)
    expect = float(np.sum(THREE_JOINT * np.log(THREE_JOINT)))
    for method in ("closed", "circuit"):
        code, out, _ = run(["eval", ck, FIX / "three", "--method", method], capsys)
        assert code == 0
        assert float(out) == pytest.approx(expect, abs=1e-10)


def test_eval_errors(tmp_path, capsys):
    model = random_simple_model(4, np.random.default_rng(0))
    ck = tmp_path / "m.json"
    learn.save_checkpoint(model, ck)
    code, _, err = run(["eval", ck, FIX / "three"], capsys)
    assert code == 1 and "variables" in err
    d = tmp_path / "e"
    d.mkdir()
    save_binary_csv(np.zeros((3, 4), dtype=int), d / "e.train.data")
    save_binary_csv(np.zeros((3, 4), dtype=int), d / "e.valid.data")
    (d / "e.test.data").write_text("")
    code, _, err = run(["eval", ck, d], capsys)
    assert code == 1 and "empty" in err
    assert run(["eval", ck, d, "--split", "valid"], capsys)[0] == 0
    assert run(["eval", tmp_path / "nope.json", d], capsys)[0] == 2


def test_train_from_baskets(tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _, _ = run(["train", FIX / "toy.baskets", "--items", 12, "--epochs", 1,
                      "--report", rep], capsys)
    # 7 lines is below the 10-row split minimum
    assert code == 2
    rng = np.random.default_rng(0)
    lines = [" ".join(str(i) for i in np.flatnonzero(rng.random(12) < 0.3) + 1) for _ in range(40)]
    p = tmp_path / "b.txt"
    p.write_text("\n".join(lines) + "\n")
    code, _, _ = run(["train", p, "--items", 12, "--epochs", 1, "--report", rep], capsys)
    assert code == 0
    assert json.loads(rep.read_text())["n"] == 12
    code, _, _ = run(["train", p, "--epochs", 1], capsys)
    assert code == 1


def test_bad_arguments(capsys):
    assert run(["marginal"], capsys)[0] == 1
    assert run(["--backend", "lu", "marginal", FIX / "three_gp.pgc"], capsys)[0] == 1


def test_console_script_runs():
    env = dict(os.environ, PYTHONPATH=str(Path(__file__).parents[1] / "src"))
    out = subprocess.run([sys.executable, "-m", "pgc.cli", "marginal", str(FIX / "three_gp.pgc"),
                          "X1=1,X2=1,X3=1"], capture_output=True, text=True, env=env)
    assert out.returncode == 0 and math.isclose(float(out.stdout), 0.16, abs_tol=1e-12)
