"""Desk-scale experiment suites: simulate data, run a long ground-truth chain
and shorter candidate chains, then tabulate posterior summaries."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ABC, effective_config, merge
from .diagnostics import summarize
from .geometry import PointPattern, write_pattern
from .mcmc import write_chain_csv
from .parallel import Purpose, StreamFamily, WorkerPool
from .runner import AbcArtifacts, build_abc, build_model, prepare_data, resolve_radius, run_inference

__all__ = ["regenerate_data", "run_suite", "SUITES"]

SUITES = {
    "spp-desk": {
        "model": "strauss",
        "full_iterations": 120_000,
        "target_n": 83,
        "candidates": [
            {"algorithm": "exchange"},
            {"algorithm": "noisy-mh", "K": 2},
            {"algorithm": "abc-fp", "p": 1.0},
        ],
        "reference": {"algorithm": "exchange"},
    },
    "dppg-desk": {
        "model": "dppg",
        "full_iterations": 12_000,
        "target_n": 99,
        "candidates": [
            {"algorithm": "mh"},
            {"algorithm": "exchange"},
            {"algorithm": "exchange-approx"},
        ],
        "reference": {"algorithm": "mh"},
    },
}


def regenerate_data(cfg: dict, target_n: int | None = None, max_slots: int = 100_000):
    """Simulate the data set from the DATA streams of ``cfg['master_seed']``.

    With ``target_n`` the first slot whose draw has exactly that many points
    is used, which reproduces a published data summary. Returns
    ``(pattern, slot)``.
    """
    from .cli import simulate_pattern

    streams = StreamFamily(cfg["master_seed"])
    for slot in range(max_slots):
        y = simulate_pattern(cfg, streams.stream(0, Purpose.DATA, slot))
        if target_n is None or y.n() == target_n:
            return y, slot
    raise RuntimeError(f"no simulated pattern with n={target_n} in {max_slots} slots")


def _run_one(cfg: dict, y: PointPattern, R, out: Path, run_id: int, pool, abc_cache: dict):
    out.mkdir(parents=True, exist_ok=True)
    art = None
    if cfg["algorithm"] in ABC:
        key = (cfg["p"], cfg["L"])
        if key not in abc_cache:
            model = build_model(dict(cfg, algorithm="exchange"), y, R)
            _, _, regr, dist = build_abc(cfg, model, y, R, StreamFamily(cfg["master_seed"], run_id), pool)
            from .abc import epsilon_from_percentile

            abc_cache[key] = AbcArtifacts(regr, epsilon_from_percentile(dist, cfg["p"]).epsilon, R)
        art = abc_cache[key]
    chain = run_inference(cfg, y, R, art, pool, run_id=run_id)
    write_chain_csv(chain, out / "chain.csv")
    man = {"config": cfg, "run_id": run_id, "R": R, "acceptance_rate": chain.acceptance_rate,
           "chain_seconds": chain.meta["wall_seconds"]}
    if art is not None:
        man["epsilon"] = art.epsilon
    (out / "manifest.json").write_text(json.dumps(man, indent=2, default=float) + "\n")
    return chain


def _suite_once(name: str, out: Path, seed: int, scale: float, pool, overrides: dict,
                data_slot_offset: int | None = None):
    suite = SUITES[name]
    base = merge({"model": suite["model"], "master_seed": seed}, overrides or {})
    base["model"] = suite["model"]
    data_cfg = effective_config(base)
    if data_slot_offset is None:
        y, slot = regenerate_data(data_cfg, suite["target_n"])
    else:
        streams = StreamFamily(seed)
        from .cli import simulate_pattern

        slot = data_slot_offset
        y = simulate_pattern(data_cfg, streams.stream(0, Purpose.DATA, slot))
    (out / "data").mkdir(parents=True, exist_ok=True)
    write_pattern(y, out / "data" / "pattern.csv")
    y = prepare_data(data_cfg, y)
    R = resolve_radius(data_cfg, y)[0] if suite["model"] == "strauss" else None

    n_iter = max(200, int(round(suite["full_iterations"] * scale)))
    burn = n_iter // 6
    ref_cfg = effective_config(merge(base, dict(suite["reference"], iterations=10 * n_iter,
                                                burn_in=10 * burn, R=R if R is not None else "estimate")))
    abc_cache: dict = {}
    ref = _run_one(ref_cfg, y, R, out / "reference", 1, pool, abc_cache)
    table = {}
    for i, cand in enumerate(suite["candidates"]):
        cfg = effective_config(merge(base, dict(cand, iterations=n_iter, burn_in=burn,
                                                R=R if R is not None else "estimate")))
        label = cand["algorithm"] + (f"-K{cand['K']}" if "K" in cand else "") + (
            f"-p{cand['p']}" if "p" in cand else "")
        chain = _run_one(cfg, y, R, out / label, 2 + i, pool, abc_cache)
        table[label] = summarize(chain, burn, ref, 10 * burn).to_table_row()
    table["reference"] = summarize(ref, 10 * burn).to_table_row()
    return {"data_slot": slot, "n": y.n(), "R": R, "iterations": n_iter, "table": table}


def run_suite(name: str, out: Path, seed: int = 0, scale: float = 0.1, workers: int = 1,
              replicates: int = 3, overrides: dict | None = None) -> dict:
    """Run a suite and write ``summary.json`` under ``out``.

    ``replicates`` repeats the Strauss suite on independent data sets and
    reports the mean and standard deviation of every table entry.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    overrides = {k: v for k, v in (overrides or {}).items() if k not in ("master_seed", "workers")}
    with WorkerPool(workers) as pool:
        p = pool if workers > 1 else None
        try:
            if name in SUITES:
                result = _suite_once(name, out, seed, scale, p, overrides)
            elif name == "replicates":
                runs = []
                for r in range(replicates):
                    runs.append(_suite_once("spp-desk", out / f"replicate_{r}", seed, scale, p, overrides,
                                            data_slot_offset=r))
                result = {"replicates": runs, "table": _aggregate([r["table"] for r in runs])}
            else:
                raise ValueError(f"unknown suite {name!r}")
        except Exception as exc:
            raise RuntimeError(f"suite {name} failed: {exc}") from exc
    result["suite"] = name
    result["scale"] = scale
    result["master_seed"] = seed
    (out / "summary.json").write_text(json.dumps(result, indent=2, default=float) + "\n")
    return result


def _aggregate(tables):
    out = {}
    for label in tables[0]:
        cols = {}
        for col in tables[0][label]:
            vals = [t[label][col] for t in tables if t[label].get(col) is not None]
            if vals:
                cols[col] = {"mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0}
        out[label] = cols
    return out
