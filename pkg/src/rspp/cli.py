"""Command-line interface: ``rspp <command> [--config PATH] [--seed N] [--workers I] [--out DIR]``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import abc as abc_mod
from .config import ABC, ConfigError, effective_config, load_config, merge
from .diagnostics import export_density, summarize
from .dppg import DppgParams, sample_dppg
from .geometry import PointPattern, Window, read_pattern, write_pattern
from .mcmc import read_chain_csv, write_chain_csv
from .parallel import Purpose, StreamFamily, WorkerPool
from .runner import AbcArtifacts, build_abc, build_model, prepare_data, resolve_radius, run_inference
from .strauss import StraussParams, sample_strauss_perfect

__all__ = ["main", "simulate_pattern", "write_manifest"]


def write_manifest(out: Path, command: str, cfg: dict, outputs: list, **extra) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "master_seed": cfg.get("master_seed"),
        "config": cfg,
        "outputs": outputs,
    }
    manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def simulate_pattern(cfg: dict, rng: np.random.Generator) -> PointPattern:
    """One draw from the configured model on the configured window."""
    w = Window(*map(float, cfg["window"]))
    prm = cfg["params"]
    if cfg["model"] == "strauss":
        return sample_strauss_perfect(StraussParams(prm["beta"], prm["gamma"], prm["R"]), w, rng)
    a = w.width
    unit = sample_dppg(DppgParams(prm["tau"] * a * a, prm["sigma"] / a), Window(), rng)
    xy = unit.points * a + np.array([w.x_min, w.y_min])
    return PointPattern._trusted(np.clip(xy, [w.x_min, w.y_min], [w.x_max, w.y_max]), w)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict, out: Path, args) -> int:
    streams = StreamFamily(cfg["master_seed"])
    outputs = []
    counts = []
    for i in range(cfg["count"]):
        p = simulate_pattern(cfg, streams.stream(0, Purpose.DATA, i))
        name = "pattern.csv" if cfg["count"] == 1 else f"pattern_{i:03d}.csv"
        write_pattern(p, out / name)
        outputs.append(name)
        counts.append(p.n())
    write_manifest(out, "simulate", cfg, outputs, counts=counts)
    print(f"wrote {len(outputs)} pattern(s) to {out} (n = {counts})")
    return 0


def _load_data(cfg: dict, args) -> PointPattern:
    path = getattr(args, "pattern", None) or cfg.get("data")
    if not path:
        raise ConfigError("no data pattern given (use --pattern or the 'data' config key)")
    return read_pattern(path)


def cmd_estimate_radius(cfg: dict, out: Path, args) -> int:
    y = _load_data(cfg, args)
    cfg = dict(cfg, R="estimate")
    R, curve = resolve_radius(cfg, y)
    with open(out / "profile.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "log_pl"])
        for r, v in curve:
            w.writerow([repr(r), repr(v)])
    (out / "radius.json").write_text(json.dumps({"R_hat": R, "n": y.n()}, indent=2) + "\n")
    write_manifest(out, "estimate-radius", cfg, ["profile.csv", "radius.json"], R_hat=R)
    print(f"R_hat = {R:.6g}")
    return 0


def _pilot(cfg: dict, y: PointPattern, pool: WorkerPool | None):
    R = resolve_radius(cfg, y)[0] if cfg["model"] == "strauss" else None
    model = build_model(dict(cfg, algorithm="exchange"), y, R)
    streams = StreamFamily(cfg["master_seed"])
    ctx, pilot, regr, dist = build_abc(cfg, model, y, R, streams, pool)
    return R, pilot, regr, dist


def cmd_pilot(cfg: dict, out: Path, args) -> int:
    y = prepare_data(cfg, _load_data(cfg, args))
    with WorkerPool(cfg["workers"]) as pool:
        R, pilot, regr, dist = _pilot(cfg, y, pool if cfg["workers"] > 1 else None)
    names = pilot.param_names
    with open(out / "pilot.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"log_{n}" for n in names] + [f"eta{j + 1}" for j in range(pilot.eta.shape[1])] + ["psi"])
        for lt, e, d in zip(pilot.log_theta, pilot.eta, dist):
            w.writerow([repr(float(v)) for v in (*lt, *e, d)])
    reg = regr.to_dict()
    reg["R"] = R
    reg["model"] = cfg["model"]
    (out / "regression.json").write_text(json.dumps(reg, indent=2) + "\n")
    eps = {str(p): abc_mod.epsilon_from_percentile(dist, p).epsilon for p in cfg["p_values"]}
    (out / "epsilon.json").write_text(json.dumps(eps, indent=2) + "\n")
    write_manifest(out, "pilot", cfg, ["pilot.csv", "regression.json", "epsilon.json"],
                   resamples=pilot.resamples, R=R)
    for p, e in eps.items():
        print(f"p = {p:>5}: epsilon = {e:.6g}")
    return 0


def _abc_artifacts(cfg: dict, y: PointPattern, pool) -> AbcArtifacts:
    pilot_dir = cfg.get("pilot_dir")
    if pilot_dir:
        reg = json.loads((Path(pilot_dir) / "regression.json").read_text())
        with open(Path(pilot_dir) / "pilot.csv", newline="") as fh:
            dist = [float(r["psi"]) for r in csv.DictReader(fh)]
        regr = abc_mod.RegressionModel.from_dict(reg)
        R = reg.get("R")
    else:
        R, _, regr, dist = _pilot(cfg, y, pool)
    eps = abc_mod.epsilon_from_percentile(dist, cfg["p"]).epsilon
    return AbcArtifacts(regr, eps, R)


def cmd_infer(cfg: dict, out: Path, args) -> int:
    y = prepare_data(cfg, _load_data(cfg, args))
    t0 = time.perf_counter()
    with WorkerPool(cfg["workers"]) as pool:
        p = pool if cfg["workers"] > 1 else None
        art = None
        R = None
        if cfg["algorithm"] in ABC:
            art = _abc_artifacts(cfg, y, p)
            R = art.radius
        elif cfg["model"] == "strauss":
            R = resolve_radius(cfg, y)[0]
        chain = run_inference(cfg, y, R, art, p)
    write_chain_csv(chain, out / "chain.csv")
    extra = {"R": R, "acceptance_rate": chain.acceptance_rate,
             "wall_seconds": time.perf_counter() - t0, "chain_seconds": chain.meta["wall_seconds"],
             "algorithm": cfg["algorithm"], "K": cfg["K"], "I": cfg["I"]}
    if art is not None:
        extra.update({"epsilon": art.epsilon, "p": cfg["p"], "L": cfg["L"],
                      "J_theta": cfg.get("J_theta") or cfg["I"], "J_x": cfg.get("J_x") or 7 * cfg["I"]})
    write_manifest(out, "infer", cfg, ["chain.csv"], **extra)
    print(f"{cfg['algorithm']}: {len(chain)} iterations, acceptance {chain.acceptance_rate:.3f}")
    return 0


def _chain_with_timing(path: Path):
    chain = read_chain_csv(path)
    man = path.parent / "manifest.json"
    if man.exists():
        try:
            chain.meta["wall_seconds"] = float(json.loads(man.read_text()).get("chain_seconds", 0.0))
        except (ValueError, TypeError):
            pass
    return chain


def cmd_diagnose(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chains = [(Path(p), _chain_with_timing(Path(p))) for p in args.chains]
    ref = _chain_with_timing(Path(args.reference)) if args.reference else None
    dims = {c.draws.shape[1] for _, c in chains} | ({ref.draws.shape[1]} if ref is not None else set())
    if len(dims) != 1:
        raise ConfigError(f"chains have different numbers of parameters: {sorted(dims)}")
    result = {}
    for i, (path, chain) in enumerate(chains):
        s = summarize(chain, args.burn_in, ref)
        key = str(path)
        result[key] = s.to_dict()
        for j, name in enumerate(chain.param_names):
            hist, kde = export_density(chain.draws[args.burn_in:, j], bins=args.bins)
            with open(out / f"density_{i}_{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["kind", "x0", "x1", "value"])
                for a, b, c in hist:
                    w.writerow(["hist", repr(a), repr(b), c])
                for x, d in kde:
                    w.writerow(["kde", repr(x), "", repr(d)])
    (out / "summary.json").write_text(json.dumps(result, indent=2, default=_json_default) + "\n")
    for key, s in result.items():
        print(key, json.dumps(s["table_row"], default=_json_default))
    return 0


def cmd_bench(cfg_user: dict, args) -> int:
    from .bench import run_suite

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg_user.get("master_seed", 0)
    workers = args.workers if args.workers is not None else cfg_user.get("workers", 1)
    result = run_suite(args.suite, out, seed=seed, scale=args.scale, workers=workers,
                       replicates=args.replicates, overrides=cfg_user)
    print(json.dumps(result["table"], indent=2, default=_json_default))
    return 0


# --------------------------------------------------------------------------
# argument handling


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        node = out
        parts = k.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rspp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="."):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker threads (overrides the config)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted keys reach nested values)")
        return p

    common(sub.add_parser("simulate", help="simulate point patterns"))
    p = common(sub.add_parser("estimate-radius", help="profile pseudo-likelihood estimate of R"))
    p.add_argument("--pattern", help="pattern CSV")
    p = common(sub.add_parser("pilot", help="ABC pilot run, regression and thresholds"))
    p.add_argument("--pattern", help="pattern CSV")
    p = common(sub.add_parser("infer", help="run an inference algorithm"))
    p.add_argument("--pattern", help="pattern CSV")
    p = sub.add_parser("diagnose", help="posterior summaries and density export")
    p.add_argument("chains", nargs="+", help="chain CSV files")
    p.add_argument("--reference", help="ground-truth chain CSV")
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", default=".")
    p = common(sub.add_parser("bench", help="desk-scale experiment suites"))
    p.add_argument("--suite", required=True, choices=["spp-desk", "dppg-desk", "replicates"])
    p.add_argument("--scale", type=float, default=0.1, help="iteration scale relative to full-length runs")
    p.add_argument("--replicates", type=int, default=3)
    return ap


def _user_config(args) -> dict:
    user = load_config(args.config) if getattr(args, "config", None) else {}
    user = merge(user, _parse_set(getattr(args, "set", None)))
    if getattr(args, "seed", None) is not None:
        user["master_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        user["workers"] = args.workers
    return user


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "diagnose":
            return cmd_diagnose(args)
        user = _user_config(args)
        if args.command == "bench":
            return cmd_bench(user, args)
        if args.command == "estimate-radius":
            user.setdefault("model", "strauss")
        cfg = effective_config(user)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"simulate": cmd_simulate, "estimate-radius": cmd_estimate_radius,
                   "pilot": cmd_pilot, "infer": cmd_infer}[args.command]
        return handler(cfg, out, args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"rspp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
