import json

import numpy as np
import pytest

from rspp.cli import main
from rspp.geometry import read_pattern
from rspp.mcmc import read_chain_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def spp_pattern(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--set", "model=strauss", "--seed", 2024, "--out", d) == 0
    return d / "pattern.csv"


def test_simulate_strauss(spp_pattern):
    p = read_pattern(spp_pattern)
    assert 50 < p.n() < 140
    man = json.loads((spp_pattern.parent / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["master_seed"] == 2024
    assert man["config"]["params"] == {"beta": 200.0, "gamma": 0.1, "R": 0.05}
    assert "version" in man


def test_simulate_dppg_many(tmp_path):
    assert run("simulate", "--set", "model=dppg", "--set", "count=20", "--seed", 3, "--out", tmp_path) == 0
    ns = [read_pattern(tmp_path / f"pattern_{i:03d}.csv").n() for i in range(20)]
    assert abs(np.mean(ns) - 99.5) < 3 * 10 / np.sqrt(20)


def test_simulate_dppg_rescaled_window(tmp_path):
    assert run("simulate", "--set", "model=dppg", "--set", "window=[0,2,0,2]", "--set", "params.tau=25",
               "--out", tmp_path) == 0
    p = read_pattern(tmp_path / "pattern.csv")
    assert p.window.x_max == 2 and np.all(p.points <= 2)


def test_simulate_rejects_sigma_above_bound(tmp_path, capsys):
    rc = run("simulate", "--set", "model=dppg", "--set", "params.sigma=0.06", "--out", tmp_path)
    assert rc == 2
    assert "sigma_max" in capsys.readouterr().err


def test_simulate_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run("simulate", "--set", "model=strauss", "--seed", 5, "--out", tmp_path / sub) == 0
    assert (tmp_path / "a" / "pattern.csv").read_bytes() == (tmp_path / "b" / "pattern.csv").read_bytes()


def test_estimate_radius(spp_pattern, tmp_path):
    assert run("estimate-radius", "--pattern", spp_pattern, "--out", tmp_path) == 0
    R = json.loads((tmp_path / "radius.json").read_text())["R_hat"]
    assert 0.035 < R < 0.065
    rows = (tmp_path / "profile.csv").read_text().splitlines()
    assert rows[0] == "r,log_pl" and len(rows) == 51


def test_estimate_radius_single_grid(spp_pattern, tmp_path):
    assert run("estimate-radius", "--pattern", spp_pattern, "--set", "radius_grid=[0.042]", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "radius.json").read_text())["R_hat"] == 0.042


def test_pilot_epsilons(spp_pattern, tmp_path):
    args = ("pilot", "--pattern", spp_pattern, "--set", "model=strauss", "--set", "R=0.05", "--set", "L=100",
            "--set", "p_values=[2.5,1,0.5,100]")
    assert run(*args, "--out", tmp_path / "a") == 0
    eps = json.loads((tmp_path / "a" / "epsilon.json").read_text())
    assert eps["0.5"] <= eps["1"] <= eps["2.5"] <= eps["100"]
    psi = [float(r.split(",")[-1]) for r in (tmp_path / "a" / "pilot.csv").read_text().splitlines()[1:]]
    assert eps["100"] == max(psi)
    assert run(*args, "--out", tmp_path / "b") == 0
    assert (tmp_path / "b" / "epsilon.json").read_text() == (tmp_path / "a" / "epsilon.json").read_text()
    reg = json.loads((tmp_path / "a" / "regression.json").read_text())
    assert set(reg) >= {"a_hat", "B_hat", "var_hat", "lambda", "R"}


def test_infer_and_diagnose(spp_pattern, tmp_path):
    common = ("--pattern", spp_pattern, "--set", "model=strauss", "--set", "R=0.05", "--set", "iterations=300",
              "--set", "burn_in=50")
    assert run("infer", *common, "--out", tmp_path / "ex") == 0
    assert run("infer", *common, "--set", "algorithm=noisy-mh", "--set", "K=2", "--out", tmp_path / "nm") == 0
    ch = read_chain_csv(tmp_path / "ex" / "chain.csv")
    assert len(ch) == 300 and ch.param_names == ("beta", "gamma")
    man = json.loads((tmp_path / "ex" / "manifest.json").read_text())
    assert man["algorithm"] == "exchange" and man["K"] == 1 and man["I"] == 7 and man["chain_seconds"] > 0
    assert run("diagnose", tmp_path / "ex" / "chain.csv", tmp_path / "nm" / "chain.csv",
               "--reference", tmp_path / "ex" / "chain.csv", "--burn-in", 50, "--out", tmp_path / "d") == 0
    summ = json.loads((tmp_path / "d" / "summary.json").read_text())
    own = summ[str(tmp_path / "ex" / "chain.csv")]["table_row"]
    assert own["|Bias(beta)|"] == 0.0 and own["|Bias(gamma)|"] == 0.0
    assert own["Time"] > 0 and own["ESS(Ave)/s"] > 0
    assert (tmp_path / "d" / "density_1_gamma.csv").exists()


def test_infer_abc_fp_inline_pilot(spp_pattern, tmp_path):
    assert run("infer", "--pattern", spp_pattern, "--set", "model=strauss", "--set", "R=0.05",
               "--set", "algorithm=abc-fp", "--set", "L=100", "--set", "p=5", "--set", "iterations=100",
               "--set", "burn_in=10", "--out", tmp_path) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["epsilon"] > 0 and man["L"] == 100 and man["p"] == 5


def test_infer_abc_with_pilot_dir(spp_pattern, tmp_path):
    assert run("pilot", "--pattern", spp_pattern, "--set", "model=strauss", "--set", "R=0.05", "--set", "L=100",
               "--out", tmp_path / "pilot") == 0
    assert run("infer", "--pattern", spp_pattern, "--set", "model=strauss", "--set", "algorithm=abc-csg",
               "--set", f"pilot_dir={tmp_path / 'pilot'}", "--set", "p=10", "--set", "I=2", "--set", "J_theta=1",
               "--set", "J_x=2", "--set", "dead_neighborhood=reject", "--set", "iterations=20", "--set", "burn_in=2",
               "--out", tmp_path / "run") == 0
    man = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert man["J_theta"] == 1 and man["J_x"] == 2 and man["I"] == 2


def test_infer_rejects_bad_k(spp_pattern, tmp_path, capsys):
    rc = run("infer", "--pattern", spp_pattern, "--set", "model=strauss", "--set", "algorithm=noisy-mh",
             "--set", "K=0", "--out", tmp_path)
    assert rc == 2 and "K must be" in capsys.readouterr().err


def test_infer_dppg_mh(tmp_path):
    assert run("simulate", "--set", "model=dppg", "--seed", 1, "--out", tmp_path) == 0
    assert run("infer", "--pattern", tmp_path / "pattern.csv", "--set", "model=dppg", "--set", "iterations=40",
               "--set", "burn_in=5", "--out", tmp_path / "mh") == 0
    assert len(read_chain_csv(tmp_path / "mh" / "chain.csv")) == 40


def test_diagnose_errors(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    assert run("diagnose", tmp_path / "empty.csv", "--out", tmp_path / "o") == 2
    a = tmp_path / "a.csv"
    a.write_text("iter,x,accepted,elapsed_ns,aux_draws\n" + "".join(f"{i},{i * 0.37 % 1},1,0,0\n" for i in range(1, 30)))
    b = tmp_path / "b.csv"
    b.write_text("iter,x,y,accepted,elapsed_ns,aux_draws\n" +
                 "".join(f"{i},{i * 0.37 % 1},{i * 0.11 % 1},1,0,0\n" for i in range(1, 30)))
    assert run("diagnose", a, b, "--out", tmp_path / "o") == 2
    assert "different numbers of parameters" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, spp_pattern):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("model: strauss\nR: 0.05\niterations: 30\nburn_in: 3\nmaster_seed: 1\n")
    assert run("infer", "--config", cfg, "--seed", 9, "--pattern", spp_pattern, "--out", tmp_path / "o") == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["master_seed"] == 9 and man["config"]["iterations"] == 30


def test_bench_spp(tmp_path):
    assert run("bench", "--suite", "spp-desk", "--scale", 0.002, "--set", "L=100", "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["n"] == 83
    assert set(s["table"]) == {"exchange", "noisy-mh-K2", "abc-fp-p1.0", "reference"}
    row = s["table"]["exchange"]
    for col in ("Time", "E(beta)", "sd(gamma)", "|Bias(beta)|", "ESS(Ave)", "ESS(Ave)/s", "ESS(Ave)/t"):
        assert col in row


def test_bench_dppg(tmp_path):
    assert run("bench", "--suite", "dppg-desk", "--scale", 0.005, "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["n"] == 99 and set(s["table"]) == {"mh", "exchange", "exchange-approx", "reference"}


def test_bench_replicates(tmp_path):
    assert run("bench", "--suite", "replicates", "--replicates", 2, "--scale", 0.002, "--set", "L=100",
               "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert len(s["replicates"]) == 2
    assert set(s["table"]["exchange"]["E(beta)"]) == {"mean", "sd"}
