import math

import pytest

from rspp.config import ConfigError, defaults_for, effective_config, load_config, merge


def test_defaults():
    s = effective_config({"model": "strauss"})
    assert s["algorithm"] == "exchange" and s["iterations"] == 120_000 and s["burn_in"] == 20_000
    assert s["prior"] == {"lower": [50.0, 0.0], "upper": [400.0, 1.0]}
    assert s["proposal"]["eps"] == [65.0, 0.16] and s["init"] == [190.0, 0.2]
    d = effective_config({"model": "dppg"})
    assert d["algorithm"] == "mh" and d["iterations"] == 12_000 and d["init"] == [125.0, 0.04]
    assert d["proposal"]["eps"] == [32.0, 0.015]
    a = effective_config({"model": "strauss", "algorithm": "abc-csg"})
    assert a["iterations"] == 6000 and a["burn_in"] == 1000 and a["I"] == 7


def test_merge_is_deep():
    out = merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
    assert out == {"a": {"b": 1, "c": 3}}


@pytest.mark.parametrize("over,match", [
    ({"algorithm": "noisy-mh", "K": 0}, "K must be"),
    ({"algorithm": "mh"}, "requires model dppg"),
    ({"algorithm": "exchange-approx"}, "requires model dppg"),
    ({"p": 0}, "p must lie"),
    ({"p": 150}, "p must lie"),
    ({"L": 20}, "L"),
    ({"iterations": 10, "burn_in": 10}, "burn_in"),
    ({"prior": {"lower": [400, 0], "upper": [50, 1]}}, "lower < upper"),
    ({"init": [10, 0.2]}, "outside the prior"),
    ({"params": {"gamma": 1.5}}, "gamma"),
    ({"algorithm": "bogus"}, "algorithm must be"),
    ({"master_seed": -3}, "master_seed"),
    ({"dead_neighborhood": "maybe"}, "dead_neighborhood"),
    ({"R": -1}, "R must be"),
])
def test_strauss_validation(over, match):
    with pytest.raises(ConfigError, match=match):
        effective_config(merge({"model": "strauss"}, over))


def test_dppg_sigma_bound_message():
    with pytest.raises(ConfigError, match=r"sigma_max=1/sqrt\(pi\*tau\)=0.0564"):
        effective_config({"model": "dppg", "params": {"tau": 100, "sigma": 0.06}})
    with pytest.raises(ConfigError, match="square"):
        effective_config({"model": "dppg", "window": [0, 1, 0, 2]})
    with pytest.raises(ConfigError, match="sigma_max"):
        effective_config({"model": "dppg", "init": [180, 0.05]})


def test_model_required():
    with pytest.raises(ConfigError):
        effective_config({})
    with pytest.raises(ConfigError):
        defaults_for("poisson")


def test_load_config(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("model: dppg\niterations: 50\nburn_in: 5\n")
    cfg = effective_config(load_config(f))
    assert cfg["iterations"] == 50 and math.isclose(cfg["prior"]["upper"][1], 1 / math.sqrt(50 * math.pi))
    g = tmp_path / "bad.yaml"
    g.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(g)
