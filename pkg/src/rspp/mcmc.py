"""Metropolis-Hastings family for doubly-intractable targets.

Every acceptance test is done in log space as ``log(u) < log(alpha)``. Each
iteration ``t`` draws its randomness from purpose-tagged streams of a
:class:`~rspp.parallel.StreamFamily`, so a step can be replayed in isolation
and auxiliary draws can be farmed out to a pool without changing results.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .parallel import Purpose, StreamFamily, WorkerPool, map_parallel

__all__ = [
    "BoxPrior",
    "BoundedUniformProposal",
    "ChainState",
    "Chain",
    "ChainError",
    "proposal_logpdf",
    "accept",
    "mh_step",
    "exchange_step",
    "noisy_mh_step",
    "noisy_mh_approx_step",
    "run_chain",
    "write_chain_csv",
    "read_chain_csv",
]


class ChainError(RuntimeError):
    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


def _dppg_sigma_cap(theta) -> float:
    return 1.0 / math.sqrt(math.pi * theta[0])


class BoxPrior:
    """Uniform prior on a box, optionally cut by the DPPG existence condition
    ``sigma <= 1/sqrt(pi tau)``. The density inside is a constant, so only
    support membership matters for acceptance ratios."""

    def __init__(self, lower, upper, dppg_existence: bool = False):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("prior bounds need lower < upper in every component")
        self.dppg_existence = dppg_existence
        self._log_const = -float(np.sum(np.log(self.upper - self.lower)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < self.lower) or np.any(theta > self.upper):
            return False
        if self.dppg_existence and theta[1] > _dppg_sigma_cap(theta):
            return False
        return True

    def logpdf(self, theta) -> float:
        return self._log_const if self.contains(theta) else -math.inf

    def sample(self, rng: np.random.Generator, max_tries: int = 100_000) -> np.ndarray:
        for _ in range(max_tries):
            theta = self.lower + rng.random(self.dim) * (self.upper - self.lower)
            if self.contains(theta):
                return theta
        raise RuntimeError("prior support is too small to sample by rejection")


class BoundedUniformProposal:
    """Independent uniform moves of half-width ``eps`` clipped to the prior box.

    For the DPPG the upper end of the sigma interval is additionally capped at
    ``1/sqrt(pi tau')`` with ``tau'`` the proposed intensity, so tau is drawn
    first. An empty sigma interval means the move is impossible and the chain
    stays put.
    """

    def __init__(self, eps, lower, upper, couple_sigma: bool = False):
        self.eps = np.asarray(eps, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.eps <= 0):
            raise ValueError("proposal half-widths must be positive")
        self.couple_sigma = couple_sigma

    @classmethod
    def for_prior(cls, eps, prior: BoxPrior) -> "BoundedUniformProposal":
        return cls(eps, prior.lower, prior.upper, couple_sigma=prior.dppg_existence)

    def _interval(self, i: int, frm: np.ndarray, to_partial: np.ndarray):
        lo = max(self.lower[i], frm[i] - self.eps[i])
        hi = min(self.upper[i], frm[i] + self.eps[i])
        if self.couple_sigma and i == 1:
            hi = min(hi, _dppg_sigma_cap(to_partial))
        return lo, hi

    def sample(self, frm, rng: np.random.Generator):
        frm = np.asarray(frm, dtype=float)
        u = rng.random(len(frm))
        out = np.empty_like(frm)
        for i in range(len(frm)):
            lo, hi = self._interval(i, frm, out)
            if not hi > lo:
                return None
            out[i] = lo + u[i] * (hi - lo)
        return out

    def logpdf(self, frm, to) -> float:
        frm = np.asarray(frm, dtype=float)
        to = np.asarray(to, dtype=float)
        total = 0.0
        for i in range(len(frm)):
            lo, hi = self._interval(i, frm, to)
            if not hi > lo or to[i] < lo or to[i] > hi:
                return -math.inf
            total -= math.log(hi - lo)
        return total


class IndependenceProposal:
    """Draws from the prior regardless of the current state."""

    def __init__(self, prior: BoxPrior):
        self.prior = prior

    def sample(self, frm, rng: np.random.Generator):
        return self.prior.sample(rng)

    def logpdf(self, frm, to) -> float:
        return self.prior.logpdf(to)


def proposal_logpdf(frm, to, proposal) -> float:
    return proposal.logpdf(frm, to)


def accept(log_alpha: float, rng: np.random.Generator) -> bool:
    if math.isnan(log_alpha):
        return False
    return math.log(rng.random()) < log_alpha


@dataclass
class ChainState:
    theta: np.ndarray
    log_lik: float  # engine-specific log-likelihood of the data at theta


@dataclass
class StepOutcome:
    state: ChainState
    accepted: bool
    aux_draws: int = 0


def _propose(state: ChainState, prior: BoxPrior, proposal, streams: StreamFamily, t: int):
    rng = streams.stream(t, Purpose.PROPOSE)
    cand = proposal.sample(state.theta, rng)
    if cand is None or not prior.contains(cand):
        return None, -math.inf
    log_pp = (prior.logpdf(cand) - prior.logpdf(state.theta)) + (
        proposal.logpdf(cand, state.theta) - proposal.logpdf(state.theta, cand)
    )
    return cand, log_pp


def _check_current(state: ChainState):
    if not math.isfinite(state.log_lik):
        raise ValueError(f"log-likelihood at the current state {state.theta} is {state.log_lik}")


def mh_step(state: ChainState, log_target: Callable, prior: BoxPrior, proposal,
            streams: StreamFamily, t: int) -> StepOutcome:
    """Plain Metropolis-Hastings with a tractable (normalised) likelihood."""
    _check_current(state)
    cand, log_pp = _propose(state, prior, proposal, streams, t)
    if cand is None or log_pp == -math.inf:
        return StepOutcome(state, False)
    ll = log_target(cand)
    if ll == -math.inf:
        return StepOutcome(state, False)
    log_alpha = (ll - state.log_lik) + log_pp
    if accept(log_alpha, streams.stream(t, Purpose.ACCEPT)):
        return StepOutcome(ChainState(cand, ll), True)
    return StepOutcome(state, False)


def _aux_draw(args):
    model, theta, streams, t, slot = args
    return model.suff(model.simulate(theta, streams.stream(t, Purpose.AUX, slot)))


def exchange_step(state: ChainState, model, y_suff, prior: BoxPrior, proposal,
                  streams: StreamFamily, t: int) -> StepOutcome:
    """Exchange move: one auxiliary draw at the proposal cancels the
    normalising constants."""
    _check_current(state)
    cand, log_pp = _propose(state, prior, proposal, streams, t)
    if cand is None or log_pp == -math.inf:
        return StepOutcome(state, False)
    ll = model.log_q(y_suff, cand)
    if ll == -math.inf:
        return StepOutcome(state, False)
    x = _aux_draw((model, cand, streams, t, 0))
    aux = model.log_q(x, state.theta) - model.log_q(x, cand)
    log_alpha = (ll - state.log_lik) + log_pp + aux
    if accept(log_alpha, streams.stream(t, Purpose.ACCEPT)):
        return StepOutcome(ChainState(cand, ll), True, 1)
    return StepOutcome(state, False, 1)


def noisy_mh_step(state: ChainState, model, y_suff, prior: BoxPrior, proposal,
                  streams: StreamFamily, t: int, K: int, pool: WorkerPool | None = None) -> StepOutcome:
    """Noisy exchange: the ratio of normalising constants is replaced by the
    average of ``K`` importance ratios from draws at the proposal."""
    if K < 1:
        raise ValueError("K must be >= 1")
    _check_current(state)
    cand, log_pp = _propose(state, prior, proposal, streams, t)
    if cand is None or log_pp == -math.inf:
        return StepOutcome(state, False)
    ll = model.log_q(y_suff, cand)
    if ll == -math.inf:
        return StepOutcome(state, False)
    xs = map_parallel(_aux_draw, [(model, cand, streams, t, k) for k in range(K)], pool)
    terms = np.array([model.log_q(x, state.theta) - model.log_q(x, cand) for x in xs])
    aux = float(logsumexp(terms)) - math.log(K)
    log_alpha = (ll - state.log_lik) + log_pp + aux
    if accept(log_alpha, streams.stream(t, Purpose.ACCEPT)):
        return StepOutcome(ChainState(cand, ll), True, K)
    return StepOutcome(state, False, K)


def noisy_mh_approx_step(state: ChainState, model, y_suff, prior: BoxPrior, proposal,
                         streams: StreamFamily, t: int, K: int, pool: WorkerPool | None = None) -> StepOutcome:
    """Noisy exchange for the DPPG with every unnormalised likelihood replaced
    by the Gaussian-kernel determinant (``model.approx`` must be set)."""
    if getattr(model, "kind", None) != "dppg" or not model.approx:
        raise ValueError("the approximate noisy step needs a DppgModel with approx=True")
    return noisy_mh_step(state, model, y_suff, prior, proposal, streams, t, K, pool)


@dataclass
class Chain:
    param_names: tuple
    draws: np.ndarray
    accepted: np.ndarray
    elapsed_ns: np.ndarray
    aux_draws: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self.accepted) else float("nan")

    @property
    def seconds(self) -> float:
        """Recorded per-iteration time, or the run's total wall-clock when
        per-iteration timing was switched off."""
        total = float(np.sum(self.elapsed_ns)) * 1e-9
        if total == 0.0:
            return float(self.meta.get("wall_seconds", 0.0))
        return total


def run_chain(step: Callable[[ChainState, int], StepOutcome], init: ChainState, iterations: int,
              param_names: Sequence[str], record_timing: bool = True,
              progress: Callable[[int], None] | None = None) -> Chain:
    """Iterate ``step`` for ``iterations`` steps (t = 1..T) from ``init``.

    With ``record_timing=False`` the elapsed column is all zeros, which makes
    the chain file a pure function of seed and configuration.
    """
    d = len(init.theta)
    draws = np.empty((iterations, d))
    accepted = np.zeros(iterations, dtype=bool)
    elapsed = np.zeros(iterations, dtype=np.int64)
    aux = np.zeros(iterations, dtype=np.int64)
    state = init
    start = time.perf_counter_ns()
    for i in range(iterations):
        t = i + 1
        t0 = time.perf_counter_ns()
        try:
            out = step(state, t)
        except Exception as exc:
            raise ChainError(t, exc) from exc
        if record_timing:
            elapsed[i] = time.perf_counter_ns() - t0
        state = out.state
        draws[i] = state.theta
        accepted[i] = out.accepted
        aux[i] = out.aux_draws
        if progress is not None:
            progress(t)
    wall = (time.perf_counter_ns() - start) * 1e-9
    return Chain(tuple(param_names), draws, accepted, elapsed, aux,
                 {"final_log_lik": state.log_lik, "wall_seconds": wall})


def write_chain_csv(chain: Chain, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", *chain.param_names, "accepted", "elapsed_ns", "aux_draws"])
        for i in range(len(chain)):
            w.writerow([i + 1, *(repr(float(v)) for v in chain.draws[i]), int(chain.accepted[i]),
                        int(chain.elapsed_ns[i]), int(chain.aux_draws[i])])


def read_chain_csv(path) -> Chain:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty chain file")
    header = rows[0]
    if header[:1] != ["iter"] or header[-3:] != ["accepted", "elapsed_ns", "aux_draws"] or len(header) < 5:
        raise ValueError(f"{path}: unexpected chain header {header}")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: chain file has no draws")
    names = tuple(header[1:-3])
    try:
        arr = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if arr.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    d = len(names)
    return Chain(names, arr[:, 1:1 + d], arr[:, 1 + d].astype(bool), arr[:, 2 + d].astype(np.int64),
                 arr[:, 3 + d].astype(np.int64))
