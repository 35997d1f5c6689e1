"""Assemble models, priors and kernels from a validated configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import abc as abc_mod
from .config import ABC
from .dppg import to_unit_square
from .geometry import PointPattern
from .mcmc import (BoundedUniformProposal, BoxPrior, Chain, ChainState, IndependenceProposal,
                   exchange_step, mh_step, noisy_mh_approx_step, noisy_mh_step, run_chain)
from .models import DppgModel, StraussModel
from .parallel import Purpose, StreamFamily, WorkerPool
from .strauss import default_radius_grid, profile_radius

__all__ = ["prepare_data", "build_prior", "build_proposal", "build_model", "AbcArtifacts",
           "build_abc", "run_inference", "resolve_radius"]


def prepare_data(cfg: dict, y: PointPattern) -> PointPattern:
    """DPPG data is mapped onto the unit square; Strauss data is used as is."""
    if cfg["model"] == "dppg":
        return to_unit_square(y)
    return y


def resolve_radius(cfg: dict, y: PointPattern) -> tuple[float, list | None]:
    if cfg["model"] != "strauss":
        raise ValueError("only the Strauss model has an interaction radius")
    if cfg["R"] != "estimate":
        return float(cfg["R"]), None
    grid_cfg = cfg.get("radius_grid")
    if isinstance(grid_cfg, list):
        grid = np.asarray(grid_cfg, dtype=float)
    else:
        grid = default_radius_grid(y, int((grid_cfg or {}).get("size", 50)))
    R, curve = profile_radius(y, grid, n_grid=cfg["n_grid"])
    return R, curve


def build_prior(cfg: dict) -> BoxPrior:
    return BoxPrior(cfg["prior"]["lower"], cfg["prior"]["upper"], dppg_existence=cfg["model"] == "dppg")


def build_proposal(cfg: dict, prior: BoxPrior):
    if cfg["proposal"].get("kind", "bounded") == "independence":
        return IndependenceProposal(prior)
    return BoundedUniformProposal.for_prior(cfg["proposal"]["eps"], prior)


def build_model(cfg: dict, y: PointPattern, R: float | None = None):
    if cfg["model"] == "strauss":
        return StraussModel(R, y.window)
    approx = cfg["algorithm"] in ("exchange-approx", "noisy-mh-approx")
    n_obs = y.n() if cfg["truncation_target"] == "observed" else None
    return DppgModel(approx=approx, n_obs=n_obs)


@dataclass
class AbcArtifacts:
    regr: abc_mod.RegressionModel
    epsilon: float
    radius: float | None


def build_abc(cfg: dict, model, y: PointPattern, R: float | None, streams: StreamFamily,
              pool: WorkerPool | None = None):
    """Pilot run, regression and threshold for ``cfg['p']``."""
    prior = build_prior(cfg)
    ctx = abc_mod.SummaryContext(y, cfg["model"], R if cfg["model"] == "strauss" else None)
    pilot_streams = streams.child(streams.run_id + 1_000_000)
    pilot = abc_mod.pilot_run(cfg["L"], prior, model, ctx, pilot_streams, pool)
    regr = abc_mod.fit_semi_automatic(pilot, cfg["folds"], rng=pilot_streams.stream(0, Purpose.CV))
    dist = abc_mod.pilot_distances(pilot, regr)
    return ctx, pilot, regr, dist


def _step_fn(cfg: dict, model, y: PointPattern, prior, proposal, streams: StreamFamily,
             pool: WorkerPool | None, abc_setup=None):
    alg = cfg["algorithm"]
    ys = model.suff(y)
    if alg == "mh":
        return partial(_mh, target=partial(model.log_lik, y), prior=prior, proposal=proposal, streams=streams)
    if alg == "exchange":
        return lambda s, t: exchange_step(s, model, ys, prior, proposal, streams, t)
    if alg == "exchange-approx":
        return lambda s, t: noisy_mh_approx_step(s, model, ys, prior, proposal, streams, t, 1, pool)
    if alg == "noisy-mh":
        return lambda s, t: noisy_mh_step(s, model, ys, prior, proposal, streams, t, cfg["K"], pool)
    if alg == "noisy-mh-approx":
        return lambda s, t: noisy_mh_approx_step(s, model, ys, prior, proposal, streams, t, cfg["K"], pool)
    if alg == "abc-fp":
        return lambda s, t: abc_mod.abc_fp_step(s, abc_setup, t)
    I, Jt, Jx = cfg["I"], cfg.get("J_theta"), cfg.get("J_x")
    if alg == "abc-csg":
        return lambda s, t: abc_mod.abc_csg_step(s, abc_setup, t, I, Jt, Jx,
                                                 dead_current=cfg["dead_neighborhood"])
    if alg == "abc-sg-testonly":
        return lambda s, t: abc_mod.abc_sg_step(s, abc_setup, t, I)
    raise ValueError(f"unknown algorithm {alg}")


def _mh(state, t, target, prior, proposal, streams):
    return mh_step(state, target, prior, proposal, streams, t)


def initial_state(cfg: dict, model, y: PointPattern) -> ChainState:
    theta0 = np.asarray(cfg["init"], dtype=float)
    alg = cfg["algorithm"]
    if alg in ABC:
        return ChainState(theta0, 0.0)
    if alg == "mh":
        ll = model.log_lik(y, theta0)
    else:
        ll = model.log_q(model.suff(y), theta0)
    if not math.isfinite(ll):
        raise ValueError(f"log-likelihood at the initial state {theta0.tolist()} is {ll}")
    return ChainState(theta0, ll)


def run_inference(cfg: dict, y: PointPattern, R: float | None = None, abc_artifacts: AbcArtifacts | None = None,
                  pool: WorkerPool | None = None, run_id: int = 0, progress=None) -> Chain:
    """Run the configured engine on data ``y`` (already prepared)."""
    streams = StreamFamily(cfg["master_seed"], run_id)
    model = build_model(cfg, y, R)
    prior = build_prior(cfg)
    proposal = build_proposal(cfg, prior)
    setup = None
    if cfg["algorithm"] in ABC:
        if abc_artifacts is None:
            raise ValueError("ABC algorithms need a regression model and threshold")
        ctx = abc_mod.SummaryContext(y, cfg["model"], abc_artifacts.radius if cfg["model"] == "strauss" else None)
        setup = abc_mod.AbcSetup(model, ctx, abc_artifacts.regr, abc_artifacts.epsilon, prior, proposal,
                                 streams, pool)
    step = _step_fn(cfg, model, y, prior, proposal, streams, pool, setup)
    init = initial_state(cfg, model, y)
    chain = run_chain(step, init, cfg["iterations"], model.param_names, cfg["record_timing"], progress)
    chain.meta.update({"algorithm": cfg["algorithm"], "model": cfg["model"], "R": R})
    return chain
