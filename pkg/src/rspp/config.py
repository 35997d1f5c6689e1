"""Run configuration: YAML files, defaults per model, validation.

Keys (all optional unless noted)::

    model: strauss | dppg                     (required)
    algorithm: mh | exchange | noisy-mh | exchange-approx | noisy-mh-approx
               | abc-fp | abc-csg | abc-sg-testonly
    master_seed: int            workers: int
    data: path to a pattern CSV
    R: interaction radius, or "estimate" for the profile estimate
    iterations, burn_in, K, I, J_theta, J_x, p, L, folds
    prior: {lower: [..], upper: [..]}
    proposal: {eps: [..], kind: bounded | independence}
    init: [..]
    record_timing: bool         (per-iteration wall-clock in the chain file)
    dead_neighborhood: error | reject
    truncation_target: tau | observed
    n_grid: int                 (pseudo-likelihood dummy grid per side)
    radius_grid: {size: int} or explicit list
    params: {beta, gamma, R} or {tau, sigma}   (simulate)
    window: [x_min, x_max, y_min, y_max]       (simulate)
    count: int                                 (simulate)
    p_values: [..]                             (pilot)
    pilot_dir: directory holding pilot artifacts (abc algorithms)
"""
from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

__all__ = ["ConfigError", "ALGORITHMS", "load_config", "defaults_for", "merge", "validate", "effective_config"]

ALGORITHMS = ("mh", "exchange", "noisy-mh", "exchange-approx", "noisy-mh-approx",
              "abc-fp", "abc-csg", "abc-sg-testonly")
DPPG_ONLY = ("mh", "exchange-approx", "noisy-mh-approx")
ABC = ("abc-fp", "abc-csg", "abc-sg-testonly")


class ConfigError(ValueError):
    pass


_COMMON = {
    "master_seed": 0,
    "workers": 1,
    "K": 1,
    "I": 7,
    "J_theta": None,
    "J_x": None,
    "p": 0.5,
    "L": 500,
    "folds": 10,
    "record_timing": False,
    "dead_neighborhood": "error",
    "truncation_target": "tau",
    "n_grid": 32,
    "radius_grid": {"size": 50},
    "count": 1,
    "p_values": [2.5, 1.0, 0.5],
}

_MODEL_DEFAULTS = {
    "strauss": {
        "algorithm": "exchange",
        "R": "estimate",
        "iterations": 120_000,
        "burn_in": 20_000,
        "prior": {"lower": [50.0, 0.0], "upper": [400.0, 1.0]},
        "proposal": {"eps": [65.0, 0.16], "kind": "bounded"},
        "init": [190.0, 0.2],
        "params": {"beta": 200.0, "gamma": 0.1, "R": 0.05},
        "window": [0.0, 1.0, 0.0, 1.0],
    },
    "dppg": {
        "algorithm": "mh",
        "iterations": 12_000,
        "burn_in": 2_000,
        "prior": {"lower": [50.0, 0.001], "upper": [200.0, 1.0 / math.sqrt(50.0 * math.pi)]},
        "proposal": {"eps": [32.0, 0.015], "kind": "bounded"},
        "init": [125.0, 0.04],
        "params": {"tau": 100.0, "sigma": 0.05},
        "window": [0.0, 1.0, 0.0, 1.0],
    },
}

_ABC_DEFAULTS = {"iterations": 6000, "burn_in": 1000}


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path) -> dict:
    text = Path(path).read_text()
    cfg = yaml.safe_load(text) or {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def defaults_for(model: str, algorithm: str | None = None) -> dict:
    if model not in _MODEL_DEFAULTS:
        raise ConfigError(f"model must be one of {sorted(_MODEL_DEFAULTS)}, got {model!r}")
    out = merge(_COMMON, _MODEL_DEFAULTS[model])
    if algorithm in ABC:
        out = merge(out, _ABC_DEFAULTS)
    return out


def effective_config(user: dict) -> dict:
    """Model defaults overlaid with user keys; iteration defaults follow the
    algorithm family unless given explicitly."""
    model = user.get("model")
    if model is None:
        raise ConfigError("config needs a 'model' key (strauss or dppg)")
    algorithm = user.get("algorithm", _MODEL_DEFAULTS.get(model, {}).get("algorithm"))
    cfg = merge(defaults_for(model, algorithm), user)
    validate(cfg)
    return cfg


def _need(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> None:
    model = cfg.get("model")
    _need(model in _MODEL_DEFAULTS, f"model must be strauss or dppg, got {model!r}")
    alg = cfg.get("algorithm")
    _need(alg in ALGORITHMS, f"algorithm must be one of {list(ALGORITHMS)}, got {alg!r}")
    _need(not (alg in DPPG_ONLY and model != "dppg"), f"algorithm {alg} requires model dppg")
    for key in ("iterations", "K", "I", "L", "folds", "workers", "count", "n_grid"):
        v = cfg.get(key)
        _need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, f"{key} must be an integer >= 1, got {v!r}")
    _need(isinstance(cfg.get("burn_in"), int) and 0 <= cfg["burn_in"] < cfg["iterations"],
          f"burn_in must lie in [0, iterations), got {cfg.get('burn_in')!r}")
    _need(cfg["L"] >= 50, "L (pilot size) must be at least 50")
    for key in ("J_theta", "J_x"):
        v = cfg.get(key)
        _need(v is None or (isinstance(v, int) and v >= 1), f"{key} must be an integer >= 1 or null")
    p = cfg.get("p")
    _need(isinstance(p, (int, float)) and 0 < p <= 100, f"p must lie in (0, 100], got {p!r}")
    for q in cfg.get("p_values", []):
        _need(isinstance(q, (int, float)) and 0 < q <= 100, f"p_values entries must lie in (0, 100], got {q!r}")
    seed = cfg.get("master_seed")
    _need(isinstance(seed, int) and 0 <= seed < 2 ** 64, f"master_seed must be a 64-bit unsigned integer, got {seed!r}")
    _need(cfg.get("dead_neighborhood") in ("error", "reject"), "dead_neighborhood must be error or reject")
    _need(cfg.get("truncation_target") in ("tau", "observed"), "truncation_target must be tau or observed")
    prior = cfg.get("prior", {})
    lo, hi = prior.get("lower"), prior.get("upper")
    _need(isinstance(lo, list) and isinstance(hi, list) and len(lo) == len(hi) == 2,
          "prior needs two-element lower and upper lists")
    _need(all(a < b for a, b in zip(lo, hi)), f"prior bounds need lower < upper, got {lo} / {hi}")
    prop = cfg.get("proposal", {})
    eps = prop.get("eps")
    _need(isinstance(eps, list) and len(eps) == 2 and all(e > 0 for e in eps),
          f"proposal.eps must be two positive half-widths, got {eps!r}")
    _need(prop.get("kind", "bounded") in ("bounded", "independence"), "proposal.kind must be bounded or independence")
    init = cfg.get("init")
    _need(isinstance(init, list) and len(init) == 2, "init must be a two-element list")
    _need(all(a <= v <= b for a, v, b in zip(lo, init, hi)), f"init {init} lies outside the prior box")
    if model == "dppg":
        _need(init[1] <= 1.0 / math.sqrt(math.pi * init[0]),
              f"init sigma={init[1]} exceeds sigma_max=1/sqrt(pi*tau)={1.0 / math.sqrt(math.pi * init[0]):.6g}")
        _need(lo[0] > 0 and lo[1] > 0, "dppg prior lower bounds must be positive")
    else:
        _need(lo[0] > 0 and lo[1] >= 0 and hi[1] <= 1, "strauss prior needs beta > 0 and gamma within [0, 1]")
        R = cfg.get("R")
        _need(R == "estimate" or (isinstance(R, (int, float)) and R > 0), f"R must be positive or 'estimate', got {R!r}")
    _validate_params(cfg)


def _validate_params(cfg: dict) -> None:
    params = cfg.get("params") or {}
    win = cfg.get("window")
    _need(isinstance(win, list) and len(win) == 4 and win[0] < win[1] and win[2] < win[3],
          f"window must be [x_min, x_max, y_min, y_max] with positive extent, got {win!r}")
    if cfg["model"] == "strauss":
        b, g, R = params.get("beta"), params.get("gamma"), params.get("R")
        _need(isinstance(b, (int, float)) and b > 0, f"params.beta must be positive, got {b!r}")
        _need(isinstance(g, (int, float)) and 0 < g <= 1, f"params.gamma must lie in (0, 1], got {g!r}")
        _need(isinstance(R, (int, float)) and R > 0, f"params.R must be positive, got {R!r}")
    else:
        tau, sigma = params.get("tau"), params.get("sigma")
        _need(isinstance(tau, (int, float)) and tau > 0, f"params.tau must be positive, got {tau!r}")
        _need(isinstance(sigma, (int, float)) and sigma > 0, f"params.sigma must be positive, got {sigma!r}")
        side = win[1] - win[0]
        _need(math.isclose(side, win[3] - win[2]), "dppg needs a square window")
        # the existence bound is invariant under rescaling of a square window
        smax = 1.0 / math.sqrt(math.pi * tau)
        _need(sigma <= smax, f"params.sigma={sigma} exceeds sigma_max=1/sqrt(pi*tau)={smax:.6g}")
