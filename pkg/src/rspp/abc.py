"""ABC-MCMC with a regression-based summary statistic.

Pipeline: a pilot run draws ``theta_l`` from the prior and simulates
``x_l``; a lasso regression of ``log theta`` on the summary vector
``eta(x_l, y)`` gives ``theta_hat = a + B eta``; the distance between a
simulation and the data is the variance-scaled squared error between its
``theta_hat`` and ``a`` (the prediction at ``eta = 0``, i.e. at the data).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointPattern, ripley_k_hat_many
from .lasso import SingularDesignError, lasso_cv
from .mcmc import BoxPrior, ChainState, StepOutcome, accept
from .parallel import Purpose, StreamFamily, WorkerPool, map_parallel

__all__ = [
    "DPPG_RADII",
    "SummaryContext",
    "summary_eta",
    "PilotTable",
    "pilot_run",
    "RegressionModel",
    "fit_semi_automatic",
    "psi_distance",
    "AbcThreshold",
    "epsilon_from_percentile",
    "pilot_distances",
    "AbcSetup",
    "DeadNeighborhoodError",
    "RepeatCapError",
    "abc_fp_step",
    "zeta_log_estimate",
    "parallel_repeat_propose",
    "abc_csg_step",
    "abc_sg_step",
]

DPPG_RADII = np.linspace(0.01, 0.1, 10)


class DeadNeighborhoodError(RuntimeError):
    pass


class RepeatCapError(RuntimeError):
    pass


class DegenerateSummaryError(ValueError):
    pass


# --------------------------------------------------------------------------
# summaries


class SummaryContext:
    """Observed-data quantities reused by every summary evaluation.

    ``kind='strauss'`` uses the single radius ``R_hat``; ``kind='dppg'``
    uses the ten radii 0.01, ..., 0.1 unless ``radii`` is given.
    """

    def __init__(self, y_obs: PointPattern, kind: str, radii=None):
        if kind not in ("strauss", "dppg"):
            raise ValueError(f"unknown model kind {kind!r}")
        if radii is None:
            if kind == "strauss":
                raise ValueError("the Strauss summary needs the radius R_hat")
            radii = DPPG_RADII
        self.kind = kind
        self.radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if kind == "strauss" and self.radii.size != 1:
            raise ValueError("the Strauss summary uses exactly one radius")
        self.y_obs = y_obs
        self.log_n_obs, self.sqrt_k_obs = _stats(y_obs, self.radii)

    @property
    def dim(self) -> int:
        return 1 + len(self.radii)

    def eta(self, x: PointPattern) -> np.ndarray:
        log_n, sqrt_k = _stats(x, self.radii)
        return np.concatenate([[log_n - self.log_n_obs], (sqrt_k - self.sqrt_k_obs) ** 2])


def _stats(x: PointPattern, radii):
    if x.n() < 1:
        raise DegenerateSummaryError("summary needs a non-empty pattern")
    if x.n() < 2:
        raise DegenerateSummaryError("K estimate needs at least two points")
    return math.log(x.n()), np.sqrt(ripley_k_hat_many(x, radii))


def summary_eta(x: PointPattern, y_obs: PointPattern, kind: str, radii=None) -> np.ndarray:
    return SummaryContext(y_obs, kind, radii).eta(x)


# --------------------------------------------------------------------------
# pilot and regression


@dataclass
class PilotTable:
    theta: np.ndarray  # (L, d) parameter draws
    eta: np.ndarray  # (L, q) summaries
    resamples: int
    param_names: tuple = ()

    @property
    def log_theta(self) -> np.ndarray:
        return np.log(self.theta)


def _pilot_row(args):
    l, prior, model, ctx, streams, max_attempts = args
    for a in range(max_attempts):
        theta = prior.sample(streams.stream(l, Purpose.PILOT, 2 * a))
        x = model.simulate(theta, streams.stream(l, Purpose.PILOT, 2 * a + 1))
        try:
            return theta, ctx.eta(x), a
        except DegenerateSummaryError:
            continue
    raise RuntimeError(f"pilot row {l}: no usable simulation in {max_attempts} attempts")


def pilot_run(L: int, prior: BoxPrior, model, ctx: SummaryContext, streams: StreamFamily,
              pool: WorkerPool | None = None, max_attempts: int = 100) -> PilotTable:
    """``L`` prior draws with simulated summaries; degenerate simulations
    (fewer than two points) are redrawn and counted in ``resamples``."""
    if L < 50:
        raise ValueError("pilot size L must be at least 50")
    rows = map_parallel(_pilot_row, [(l, prior, model, ctx, streams, max_attempts) for l in range(L)], pool)
    theta = np.array([r[0] for r in rows])
    eta = np.array([r[1] for r in rows])
    return PilotTable(theta, eta, int(sum(r[2] for r in rows)), tuple(model.param_names))


@dataclass(frozen=True)
class RegressionModel:
    a_hat: np.ndarray
    B_hat: np.ndarray
    var_hat: np.ndarray
    lam: float
    cv_errors: dict = field(default_factory=dict, compare=False, repr=False)

    def predict(self, eta) -> np.ndarray:
        return self.a_hat + self.B_hat @ np.asarray(eta, dtype=float)

    def to_dict(self) -> dict:
        return {"a_hat": self.a_hat.tolist(), "B_hat": self.B_hat.tolist(),
                "var_hat": self.var_hat.tolist(), "lambda": self.lam}

    @classmethod
    def from_dict(cls, d) -> "RegressionModel":
        return cls(np.array(d["a_hat"], float), np.array(d["B_hat"], float),
                   np.array(d["var_hat"], float), float(d["lambda"]))


def fit_semi_automatic(pilot: PilotTable, folds: int = 10, lambdas=None,
                       rng: np.random.Generator | None = None) -> RegressionModel:
    """Lasso regression of log-parameters on summaries; ``var_hat`` is the
    sample variance of the fitted predictions over the pilot rows."""
    X = pilot.eta
    Y = pilot.log_theta
    if len(X) < 10 * X.shape[1]:
        raise ValueError(f"pilot has {len(X)} rows, need at least {10 * X.shape[1]}")
    if lambdas is not None and len(lambdas) == 0:
        raise ValueError("empty lambda grid")
    fit, errs = lasso_cv(X, Y, lambdas, folds, rng)
    pred = fit.predict(X)
    var_hat = pred.var(axis=0, ddof=1)
    if np.any(~(var_hat > 0)):
        raise SingularDesignError(
            f"predicted log-parameters have zero variance (var_hat={var_hat.tolist()}); "
            "the pilot carries no information"
        )
    return RegressionModel(fit.intercept.copy(), fit.coef.copy(), var_hat, fit.lam, errs)


def psi_distance(theta_hat, model: RegressionModel) -> float:
    d = np.asarray(theta_hat, dtype=float) - model.a_hat
    return float(np.sum(d * d / model.var_hat))


@dataclass(frozen=True)
class AbcThreshold:
    p: float
    epsilon: float
    pilot_distances: np.ndarray


def epsilon_from_percentile(distances, p: float) -> AbcThreshold:
    if not 0 < p <= 100:
        raise ValueError("p must lie in (0, 100]")
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("no pilot distances")
    return AbcThreshold(float(p), float(np.percentile(d, p, method="linear")), d)


def pilot_distances(pilot: PilotTable, regr: RegressionModel) -> np.ndarray:
    return np.array([psi_distance(regr.predict(e), regr) for e in pilot.eta])


# --------------------------------------------------------------------------
# ABC-MCMC kernels


@dataclass
class AbcSetup:
    """Everything an ABC kernel needs besides the state and the iteration."""

    model: object
    ctx: SummaryContext
    regr: RegressionModel
    epsilon: float
    prior: BoxPrior
    proposal: object
    streams: StreamFamily
    pool: WorkerPool | None = None

    def distance(self, x: PointPattern) -> float:
        try:
            eta = self.ctx.eta(x)
        except DegenerateSummaryError:
            return math.inf
        return psi_distance(self.regr.predict(eta), self.regr)

    def log_pp(self, frm, to) -> float:
        return (self.prior.logpdf(to) - self.prior.logpdf(frm)) + (
            self.proposal.logpdf(to, frm) - self.proposal.logpdf(frm, to)
        )


def abc_fp_step(state: ChainState, setup: AbcSetup, t: int) -> StepOutcome:
    """One proposal and one simulation; if the simulation is too far the chain
    stays, otherwise a prior-times-proposal Metropolis-Hastings test."""
    s = setup
    cand = s.proposal.sample(state.theta, s.streams.stream(t, Purpose.PROPOSE))
    if cand is None or not s.prior.contains(cand):
        return StepOutcome(state, False)
    if s.epsilon != math.inf:
        x = s.model.simulate(cand, s.streams.stream(t, Purpose.SIMULATE))
        if not s.distance(x) <= s.epsilon:
            return StepOutcome(state, False, 1)
        sims = 1
    else:
        sims = 0
    log_alpha = (0.0 - 0.0) + s.log_pp(state.theta, cand)
    if accept(log_alpha, s.streams.stream(t, Purpose.ACCEPT)):
        return StepOutcome(ChainState(cand, 0.0), True, sims)
    return StepOutcome(state, False, sims)


def _repeat_slot(args):
    setup, theta, t, a = args
    cand = setup.proposal.sample(theta, setup.streams.stream(t, Purpose.PROPOSE, a))
    if cand is None or not setup.prior.contains(cand):
        return cand, math.inf
    x = setup.model.simulate(cand, setup.streams.stream(t, Purpose.SIMULATE, a))
    return cand, setup.distance(x)


def parallel_repeat_propose(theta, setup: AbcSetup, t: int, I: int, max_batches: int = 100_000):
    """Draw ``(theta', x')`` pairs in batches of ``I`` until one is within
    ``epsilon``; the lowest slot of the first successful batch wins.

    Slot ``i`` of batch ``b`` uses the streams of attempt ``b * I + i``, so the
    returned candidate is the first passing attempt of the serial loop for
    every ``I``. Returns ``(theta', batches, simulations)``.
    """
    if I < 1:
        raise ValueError("I must be >= 1")
    for b in range(max_batches):
        res = map_parallel(_repeat_slot, [(setup, theta, t, b * I + i) for i in range(I)], setup.pool)
        for cand, dist in res:
            if dist <= setup.epsilon:
                return cand, b + 1, (b + 1) * I
    raise RepeatCapError(f"iteration {t}: no proposal within epsilon after {max_batches} batches of {I}")


def _zeta_slot(args):
    setup, theta, t, purpose, j, J_theta, J_x = args
    s = setup
    th = s.proposal.sample(theta, s.streams.stream(t, purpose, j))
    if th is None or not s.prior.contains(th):
        return np.zeros(J_x, dtype=bool)
    hits = np.empty(J_x, dtype=bool)
    for m in range(J_x):
        x = s.model.simulate(th, s.streams.stream(t, purpose, J_theta + j * J_x + m))
        hits[m] = s.distance(x) <= s.epsilon
    return hits


def zeta_log_estimate(theta, setup: AbcSetup, t: int, J_theta: int, J_x: int,
                      purpose: int = Purpose.ZETA_CURRENT) -> float:
    """log of the fraction of ``J_theta * J_x`` nested simulations
    (``theta'' ~ p(.|theta)``, ``x'' ~ L(.|theta'')``) within epsilon."""
    if J_theta < 1 or J_x < 1:
        raise ValueError("J_theta and J_x must be >= 1")
    if setup.epsilon == math.inf:
        return 0.0
    hits = map_parallel(_zeta_slot, [(setup, theta, t, purpose, j, J_theta, J_x) for j in range(J_theta)],
                        setup.pool)
    count = int(sum(int(h.sum()) for h in hits))
    if count == 0:
        return -math.inf
    return math.log(count / (J_theta * J_x))


def abc_csg_step(state: ChainState, setup: AbcSetup, t: int, I: int, J_theta: int | None = None,
                 J_x: int | None = None, correct: bool = True, common_zeta_streams: bool = False,
                 dead_current: str = "error") -> StepOutcome:
    """Corrected repeat-until-close ABC-MCMC step.

    With ``correct=False`` the normaliser ratio is dropped, which gives the
    uncorrected scheme (kept for comparison only). ``common_zeta_streams``
    estimates both normalisers from the same streams. A zero estimate at the
    proposal rejects the move; a zero estimate at the current state raises
    :class:`DeadNeighborhoodError`, or rejects when ``dead_current='reject'``
    (the plug-in ratio is then 0).
    """
    if dead_current not in ("error", "reject"):
        raise ValueError("dead_current must be 'error' or 'reject'")
    J_theta = I if J_theta is None else J_theta
    J_x = 7 * I if J_x is None else J_x
    cand, _, sims = parallel_repeat_propose(state.theta, setup, t, I)
    log_alpha = setup.log_pp(state.theta, cand)
    if correct:
        z_cur = zeta_log_estimate(state.theta, setup, t, J_theta, J_x, Purpose.ZETA_CURRENT)
        if z_cur == -math.inf:
            if dead_current == "reject":
                return StepOutcome(state, False, sims + J_theta * J_x)
            raise DeadNeighborhoodError(
                f"iteration {t}: no simulation from the neighbourhood of {state.theta.tolist()} "
                f"came within epsilon={setup.epsilon:g} (set dead_current='reject' to keep going)"
            )
        purpose = Purpose.ZETA_CURRENT if common_zeta_streams else Purpose.ZETA_PROPOSED
        z_new = zeta_log_estimate(cand, setup, t, J_theta, J_x, purpose)
        sims += 2 * J_theta * J_x
        if z_new == -math.inf:
            return StepOutcome(state, False, sims)
        log_alpha = log_alpha + (z_cur - z_new)
    if accept(log_alpha, setup.streams.stream(t, Purpose.ACCEPT)):
        return StepOutcome(ChainState(cand, 0.0), True, sims)
    return StepOutcome(state, False, sims)


def abc_sg_step(state: ChainState, setup: AbcSetup, t: int, I: int) -> StepOutcome:
    """Uncorrected repeat-until-close step (comparison mode)."""
    return abc_csg_step(state, setup, t, I, correct=False)
