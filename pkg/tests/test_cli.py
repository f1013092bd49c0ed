import csv
from pathlib import Path

import numpy as np
import pytest

from solvcone.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[model]
kind = scaled_walk
d = 2
sigma.2 = 0.2
[costs]
lambda = 0.1
[utility]
gamma = 0.5
[grid]
kappa = 6
points = 21
[value]
x = 1; 0.5
method = both
n = 2
[converge]
ns = {ns}
mc_paths = {mc}
mc_steps = 8
[repair]
m = 16
overdraw = 2.5
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def small(tmp_path, ns="2", mc=0):
    return write(tmp_path, SMALL.format(ns=ns, mc=mc))


def run(*argv):
    return main([str(a) for a in argv])


def test_config_errors(tmp_path, capsys):
    assert run("cone", "--config", write(tmp_path, "[model\nd=2")) == EXIT_CONFIG
    assert run("cone", "--config", write(tmp_path, "[model]\nd=2\ncolour=3\n")) == EXIT_CONFIG
    assert run("cone", "--config", write(tmp_path, "[model]\nd=two\n")) == EXIT_CONFIG
    no_gamma = SMALL.format(ns=2, mc=0).replace("gamma = 0.5", "")
    assert run("value", "--config", write(tmp_path, no_gamma), "--out", tmp_path) == EXIT_CONFIG
    assert run("cone", "--config", tmp_path / "missing.ini") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_budget_exit(tmp_path):
    text = SMALL.format(ns=2, mc=0).replace("kappa = 6", "kappa = 40").replace("n = 2", "n = 4")
    assert run("value", "--config", write(tmp_path, text), "--method", "enumerate", "--out", tmp_path) == EXIT_BUDGET


def test_cone_outputs(tmp_path, capsys):
    assert run("cone", "--config", CONFIGS / "small.ini", "--out", tmp_path) == EXIT_OK
    gens = np.loadtxt(tmp_path / "generators.txt", ndmin=2)
    assert gens.shape == (2, 2)
    assert np.allclose(np.linalg.norm(gens, axis=1), 1.0)
    assert (tmp_path / "dual_generators.txt").exists()
    assert "proper: yes" in capsys.readouterr().out
    assert run("cone", "--config", CONFIGS / "frictionless.ini", "--out", tmp_path / "f") == EXIT_OK
    assert "proper: no" in capsys.readouterr().out
    assert run("cone", "--config", CONFIGS / "cone5.ini", "--out", tmp_path / "c5") == EXIT_OK
    assert not (tmp_path / "c5" / "dual_generators.txt").exists()


def test_value_both_reports_gap(tmp_path):
    assert run("value", "--config", small(tmp_path), "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    assert [r["method"] for r in rows] == ["enumerate", "dp"]
    assert float(rows[0]["value"]) == pytest.approx(float(rows[1]["value"]), abs=1e-9)
    assert abs(float(rows[1]["gap"])) < 1e-9
    assert rows[0]["seed"] == "0"


def test_repair_demo_files(tmp_path):
    assert run("repair-demo", "--config", small(tmp_path), "--out", tmp_path, "--seed", 3) == EXIT_OK
    tau = (tmp_path / "tau.txt").read_text().split()
    assert tau[0] != "none" and 0 < int(tau[0]) <= 16
    before = np.loadtxt(tmp_path / "wealth_before.csv", delimiter=",", skiprows=1, ndmin=2)
    after = np.loadtxt(tmp_path / "wealth_after.csv", delimiter=",", skiprows=1, ndmin=2)
    assert before.shape == after.shape == (17, before.shape[1])
    k = int(tau[0])
    assert np.allclose(before[:k], after[:k])


def test_repair_demo_zero_margin(tmp_path):
    text = SMALL.format(ns=2, mc=0).replace("overdraw = 2.5", "overdraw = 2.5\nmargin = 0")
    assert run("repair-demo", "--config", write(tmp_path, text), "--out", tmp_path) == EXIT_OK
    assert (tmp_path / "tau.txt").exists()


def test_converge_is_deterministic(tmp_path):
    cfg = small(tmp_path, ns="1, 2", mc=200)
    for name in ("a", "b"):
        assert run("converge", "--config", cfg, "--out", tmp_path / name, "--seed", 5) == EXIT_OK
    for f in ("convergence.csv", "results.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert run("converge", "--config", cfg, "--out", tmp_path / "c", "--seed", 6) == EXIT_OK
    a = (tmp_path / "a" / "convergence.csv").read_bytes()
    assert a == (tmp_path / "c" / "convergence.csv").read_bytes()
    mc = [r for r in csv.DictReader((tmp_path / "c" / "results.csv").open()) if r["method"] == "mc"]
    assert len(mc) == 1


def test_converge_single_n(tmp_path):
    assert run("converge", "--config", small(tmp_path, ns="2"), "--out", tmp_path) == EXIT_OK
    rows = list(csv.reader((tmp_path / "convergence.csv").open()))
    assert rows == [["n", "value", "increment"], [rows[1][0], rows[1][1], ""]] and rows[1][0] == "2"
    assert run("converge", "--config", small(tmp_path, ns="0"), "--out", tmp_path) == EXIT_CONFIG
