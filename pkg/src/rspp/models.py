"""Model adapters used by the inference engines.

Parameters travel as float vectors: ``(beta, gamma)`` for Strauss with the
radius held fixed, ``(tau, sigma)`` for the Gaussian DPP. Engines only see
``suff`` (data reduction reused across parameter values), ``log_q``
(unnormalised log-likelihood of a reduced pattern) and ``simulate``.
"""
from __future__ import annotations

import math

import numpy as np

from .dppg import DppgParams, dppg_log_fhat, dppg_log_qhat, dppg_log_rho, sample_dppg, select_truncation
from .geometry import UNIT_SQUARE, PointPattern, Window, close_pair_count
from .strauss import StraussParams, sample_strauss_perfect

__all__ = ["StraussModel", "DppgModel"]


class StraussModel:
    kind = "strauss"
    param_names = ("beta", "gamma")

    def __init__(self, R: float, window: Window = UNIT_SQUARE):
        if not R > 0:
            raise ValueError("R must be positive")
        self.R = float(R)
        self.window = window

    def params(self, theta) -> StraussParams:
        return StraussParams(float(theta[0]), float(theta[1]), self.R)

    def suff(self, x: PointPattern):
        return (x.n(), close_pair_count(x, self.R))

    def log_q(self, s, theta) -> float:
        n, pairs = s
        beta, gamma = float(theta[0]), float(theta[1])
        out = n * math.log(beta)
        if pairs == 0:
            return out
        if gamma == 0.0:
            return -math.inf
        return out + pairs * math.log(gamma)

    def simulate(self, theta, rng: np.random.Generator) -> PointPattern:
        return sample_strauss_perfect(self.params(theta), self.window, rng)


class DppgModel:
    """Gaussian DPP on the unit square.

    With ``approx=True`` the unnormalised likelihood is the determinant of the
    Gaussian kernel matrix itself instead of its Fourier approximation;
    auxiliary draws still come from the Fourier sampler.
    """

    kind = "dppg"
    param_names = ("tau", "sigma")

    def __init__(self, approx: bool = False, n_obs: int | None = None):
        self.approx = approx
        self.n_obs = n_obs
        self.window = UNIT_SQUARE

    def params(self, theta) -> DppgParams:
        return DppgParams(float(theta[0]), float(theta[1]))

    def truncation(self, theta):
        return select_truncation(self.params(theta), self.window, self.n_obs)

    def suff(self, x: PointPattern):
        return x

    def log_q(self, x, theta) -> float:
        if self.approx:
            return dppg_log_rho(x, self.params(theta))
        return dppg_log_qhat(x, self.truncation(theta))

    def log_lik(self, x, theta) -> float:
        """Normalised log-likelihood of the Fourier approximation."""
        return dppg_log_fhat(x, self.truncation(theta), self.window)

    def simulate(self, theta, rng: np.random.Generator) -> PointPattern:
        return sample_dppg(self.params(theta), self.window, rng, tr=self.truncation(theta))
