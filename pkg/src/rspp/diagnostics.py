"""Chain diagnostics: effective sample size, posterior summaries, density export."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .mcmc import Chain

__all__ = [
    "UndefinedEssError",
    "autocorrelation",
    "ess",
    "ParamSummary",
    "PosteriorSummary",
    "summarize",
    "export_density",
    "silverman_bandwidth",
]

ESS_CUTOFF = 0.05


class UndefinedEssError(ValueError):
    pass


def autocorrelation(x, lag: int) -> float:
    """Lag-``lag`` sample autocorrelation with the usual 1/T normalisation."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if lag == 0:
        return 1.0
    return float(np.dot(d[:-lag], d[lag:])) / denom


def ess(series, cutoff: float = ESS_CUTOFF) -> float:
    """``T / (1 + 2 sum nu_i)`` with the sum stopped before the first lag
    whose autocorrelation drops below ``cutoff``; clamped to ``(0, T]``."""
    x = np.asarray(series, dtype=float)
    T = len(x)
    if T < 10:
        raise ValueError("ESS needs at least 10 values")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if not denom > 0 or np.ptp(x) == 0:
        raise UndefinedEssError("ESS is undefined for a constant series")
    total = 0.0
    for lag in range(1, T):
        nu = float(np.dot(d[:-lag], d[lag:])) / denom
        if nu < cutoff:
            break
        total += nu
    value = T / (1.0 + 2.0 * total)
    return float(min(max(value, np.nextafter(0.0, 1.0)), T))


@dataclass
class ParamSummary:
    name: str
    mean: float
    sd: float
    ess: float
    ess_per_sec: float
    ess_per_iter: float
    abs_bias: float | None = None


@dataclass
class PosteriorSummary:
    params: list
    time_sec: float
    iterations: int
    acceptance_rate: float

    @property
    def ess_ave(self) -> float:
        return float(np.mean([p.ess for p in self.params]))

    def to_table_row(self) -> dict:
        """Flat record with the usual posterior-table columns."""
        row = {"Time": self.time_sec}
        for p in self.params:
            row[f"E({p.name})"] = p.mean
            row[f"sd({p.name})"] = p.sd
            if p.abs_bias is not None:
                row[f"|Bias({p.name})|"] = p.abs_bias
        ess_ave = self.ess_ave
        row["ESS(Ave)"] = ess_ave
        row["ESS(Ave)/s"] = ess_ave / self.time_sec if self.time_sec > 0 else None
        row["ESS(Ave)/t"] = ess_ave / self.iterations
        row["acceptance_rate"] = self.acceptance_rate
        return row

    def to_dict(self) -> dict:
        return {"table_row": self.to_table_row(), "params": [asdict(p) for p in self.params],
                "time_sec": self.time_sec, "iterations": self.iterations,
                "acceptance_rate": self.acceptance_rate}


def _col_mean(draws: np.ndarray, j: int) -> float:
    return float(np.mean(np.ascontiguousarray(draws[:, j])))


def summarize(chain: Chain, burn_in: int = 0, reference: Chain | None = None,
              reference_burn_in: int | None = None) -> PosteriorSummary:
    """Posterior mean/sd/ESS per parameter after dropping ``burn_in`` draws.

    Time is the recorded wall-clock of the whole run (burn-in included);
    ESS/iter divides by the post-burn-in length.
    """
    T = len(chain)
    if burn_in < 0 or burn_in >= T:
        raise ValueError(f"burn_in={burn_in} must lie in [0, {T})")
    draws = chain.draws[burn_in:]
    ref_means = None
    if reference is not None:
        if reference.draws.shape[1] != draws.shape[1]:
            raise ValueError("reference chain has a different number of parameters")
        rb = burn_in if reference_burn_in is None else reference_burn_in
        ref_means = [_col_mean(reference.draws[rb:], j) for j in range(draws.shape[1])]
    secs = chain.seconds
    out = []
    for j, name in enumerate(chain.param_names):
        col = np.ascontiguousarray(draws[:, j])
        e = ess(col)
        out.append(ParamSummary(
            name=name,
            mean=_col_mean(draws, j),
            sd=float(col.std(ddof=1)) if len(col) > 1 else 0.0,
            ess=e,
            ess_per_sec=e / secs if secs > 0 else math.nan,
            ess_per_iter=e / len(col),
            abs_bias=None if ref_means is None else abs(_col_mean(draws, j) - ref_means[j]),
        ))
    return PosteriorSummary(out, secs, len(draws), float(np.mean(chain.accepted[burn_in:])))


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * len(x) ** (-0.2))


def export_density(values, bins: int = 50, grid_size: int = 512):
    """Histogram rows ``(left, right, count)`` and Gaussian KDE rows
    ``(x, density)`` on an evenly spaced grid.

    The KDE is omitted (empty list) when the values have no spread.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot export the density of an empty chain")
    counts, edges = np.histogram(x, bins=bins)
    hist = [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
    h = silverman_bandwidth(x) if x.size > 1 else 0.0
    if not h > 0:
        return hist, []
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    dens = np.zeros(grid_size)
    for s in range(0, x.size, 4096):
        z = (grid[:, None] - x[None, s:s + 4096]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * math.sqrt(2 * math.pi)
    return hist, list(zip(grid.tolist(), dens.tolist()))
