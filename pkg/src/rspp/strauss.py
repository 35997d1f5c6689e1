"""Strauss process: density, conditional intensity, perfect simulation and
pseudo-likelihood fitting.

The unnormalised density with respect to a unit-rate Poisson process is
``beta**n(x) * gamma**s_R(x)`` where ``s_R`` counts the unordered pairs closer
than ``R``. The sampler is dominated coupling from the past over a spatial
birth-death process whose dominating process is Poisson(``beta``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .geometry import PointPattern, Window, close_pair_count

__all__ = [
    "StraussParams",
    "PseudoLikelihoodFit",
    "NonCoalescenceError",
    "ConvergenceError",
    "strauss_log_unnorm",
    "papangelou_log",
    "sample_strauss_perfect",
    "log_pseudolikelihood",
    "fit_pseudolikelihood",
    "profile_radius",
    "default_radius_grid",
]


class NonCoalescenceError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StraussParams:
    beta: float
    gamma: float
    R: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"R must be positive, got {self.R}")


@dataclass(frozen=True)
class PseudoLikelihoodFit:
    beta_hat: float
    gamma_hat: float
    log_pl: float
    R: float
    quad_points: int


def strauss_log_unnorm(p: PointPattern, theta: StraussParams) -> float:
    n = p.n()
    if n == 0:
        return 0.0
    s = close_pair_count(p, theta.R)
    out = n * math.log(theta.beta)
    if s == 0:
        return out
    if theta.gamma == 0.0:
        return -math.inf
    return out + s * math.log(theta.gamma)


def papangelou_log(u, p: PointPattern, theta: StraussParams) -> float:
    """log(beta) + t * log(gamma), t = points of ``p`` within R of ``u``
    (``u`` itself excluded when it belongs to ``p``)."""
    xy = p.points
    u = np.asarray(u, dtype=float)
    if len(xy):
        d2 = np.sum((xy - u) ** 2, axis=1)
        t = int(np.count_nonzero((d2 <= theta.R ** 2) & (d2 > 0.0)))
    else:
        t = 0
    if t == 0:
        return math.log(theta.beta)
    if theta.gamma == 0.0:
        return -math.inf
    return math.log(theta.beta) + t * math.log(theta.gamma)


# --------------------------------------------------------------------------
# dominated coupling from the past


@nb.njit(cache=True, nogil=True)
def _sandwich_pass(x, y, birth, death, mark, ev_code, horizon, gamma, r, x0, y0, cell, ncx, ncy):
    """Run upper/lower processes forward from ``-horizon`` to 0.

    Dominating points carry birth/death times (death = +inf for points alive
    at time 0) and a uniform mark used for the thinning test at birth.
    ``ev_code`` lists the events in (-horizon, 0] in time order, ``2*i`` for
    the birth of point ``i`` and ``2*i+1`` for its death. The
    upper process is kept in per-cell lists of a grid with cells of side at
    least ``r`` so a birth only inspects the 3x3 block around it.
    """
    m = x.shape[0]
    t0 = -horizon
    r2 = r * r
    n_ev = ev_code.shape[0]

    # cell membership is fixed per point, so CSR capacities are known upfront
    pcell = np.empty(m, np.int64)
    start = np.zeros(ncx * ncy + 1, np.int64)
    for i in range(m):
        cx = min(int((x[i] - x0) / cell), ncx - 1)
        cy = min(int((y[i] - y0) / cell), ncy - 1)
        c = cx * ncy + cy
        pcell[i] = c
        start[c + 1] += 1
    for c in range(ncx * ncy):
        start[c + 1] += start[c]
    fill = np.zeros(ncx * ncy, np.int64)
    slots = np.empty(m, np.int64)
    where = -np.ones(m, np.int64)
    in_lower = np.zeros(m, np.bool_)
    gap = 0  # points in upper but not in lower

    for i in range(m):
        if birth[i] <= t0 and death[i] > t0:
            c = pcell[i]
            p = start[c] + fill[c]
            slots[p] = i
            where[i] = p
            fill[c] += 1
            gap += 1

    for e in range(n_ev):
        code = ev_code[e]
        i = code // 2
        c = pcell[i]
        if code % 2 == 0:
            xi = x[i]
            yi = y[i]
            cx = c // ncy
            cy = c % ncy
            t_up = 0
            t_lo = 0
            for ax in range(max(cx - 1, 0), min(cx + 2, ncx)):
                for ay in range(max(cy - 1, 0), min(cy + 2, ncy)):
                    cc = ax * ncy + ay
                    base = start[cc]
                    for q in range(base, base + fill[cc]):
                        j = slots[q]
                        dx = x[j] - xi
                        dy = y[j] - yi
                        if dx * dx + dy * dy <= r2:
                            t_up += 1
                            if in_lower[j]:
                                t_lo += 1
            u = mark[i]
            # anti-monotone coupling: upper is thinned by lower and vice versa
            if u <= gamma ** t_lo:
                p = start[c] + fill[c]
                slots[p] = i
                where[i] = p
                fill[c] += 1
                if u <= gamma ** t_up:
                    in_lower[i] = True
                else:
                    gap += 1
        else:
            p = where[i]
            if p >= 0:
                last = slots[start[c] + fill[c] - 1]
                slots[p] = last
                where[last] = p
                fill[c] -= 1
                where[i] = -1
                if in_lower[i]:
                    in_lower[i] = False
                else:
                    gap -= 1

    n_up = 0
    for i in range(m):
        if where[i] >= 0:
            n_up += 1
    out = np.empty(n_up, np.int64)
    k = 0
    for i in range(m):
        if where[i] >= 0:
            out[k] = i
            k += 1
    return gap == 0, out


@dataclass
class _DominatingPath:
    x: np.ndarray
    y: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    mark: np.ndarray
    covered: float  # path is complete on (-covered, 0]
    events: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    events_horizon: float = 0.0


def _initial_path(rate_total: float, window: Window, rng: np.random.Generator) -> _DominatingPath:
    n0 = int(rng.poisson(rate_total))
    xy = rng.random((n0, 2))
    lifetimes = rng.standard_exponential(n0)
    marks = rng.random(n0)
    return _DominatingPath(
        x=window.x_min + xy[:, 0] * window.width,
        y=window.y_min + xy[:, 1] * window.height,
        birth=-lifetimes,
        death=np.full(n0, np.inf),
        mark=marks,
        covered=0.0,
    )


def _extend_path(path: _DominatingPath, horizon: float, rate_total: float, window: Window,
                 rng: np.random.Generator) -> None:
    # points that die (forward time) inside (-horizon, -covered]; in reversed
    # time these are the births of the reversed dominating process
    span = horizon - path.covered
    m = int(rng.poisson(rate_total * span))
    xy = rng.random((m, 2))
    death = -path.covered - rng.random(m) * span
    lifetimes = rng.standard_exponential(m)
    marks = rng.random(m)
    path.x = np.concatenate([path.x, window.x_min + xy[:, 0] * window.width])
    path.y = np.concatenate([path.y, window.y_min + xy[:, 1] * window.height])
    path.birth = np.concatenate([path.birth, death - lifetimes])
    path.death = np.concatenate([path.death, death])
    path.mark = np.concatenate([path.mark, marks])
    path.covered = horizon


def _event_codes(path: _DominatingPath, horizon: float) -> np.ndarray:
    """Time-ordered event codes on (-horizon, 0].

    Events on (-h, 0] do not change when the path is extended further back,
    so only the new stretch (-horizon, -h] is sorted and prepended.
    """
    lo, hi = -horizon, -path.events_horizon
    born = np.flatnonzero((path.birth > lo) & (path.birth <= hi))
    dead = np.flatnonzero((path.death > lo) & (path.death <= min(hi, 0.0)))
    times = np.concatenate([path.birth[born], path.death[dead]])
    codes = np.concatenate([2 * born, 2 * dead + 1])
    path.events = np.concatenate([codes[np.argsort(times)], path.events])
    path.events_horizon = horizon
    return path.events


@dataclass(frozen=True)
class CftpInfo:
    horizon: float
    doublings: int
    dominating_points: int


def sample_strauss_perfect(theta: StraussParams, window: Window, rng: np.random.Generator, *,
                           initial_horizon: float = 1.0, max_doublings: int = 40,
                           return_info: bool = False):
    """Exact draw from the Strauss process on ``window``.

    Horizons ``T, 2T, 4T, ...`` extend one backward dominating path, so all
    randomness drawn for shorter horizons is reused. Raises
    :class:`NonCoalescenceError` rather than returning an approximate draw.
    """
    if not theta.gamma > 0.0:
        raise ValueError("the perfect sampler requires gamma > 0")
    rate_total = theta.beta * window.area()
    path = _initial_path(rate_total, window, rng)
    cell = max(float(theta.R), min(window.width, window.height) / 256.0)
    ncx = max(1, int(window.width / cell))
    ncy = max(1, int(window.height / cell))
    cell = max(window.width / ncx, window.height / ncy)
    horizon = float(initial_horizon)
    for doubling in range(max_doublings + 1):
        _extend_path(path, horizon, rate_total, window, rng)
        coalesced, idx = _sandwich_pass(path.x, path.y, path.birth, path.death, path.mark,
                                        _event_codes(path, horizon), horizon, float(theta.gamma), float(theta.R),
                                        window.x_min, window.y_min, cell, ncx, ncy)
        if coalesced:
            xy = np.column_stack([path.x[idx], path.y[idx]])
            pattern = PointPattern._trusted(xy, window)
            if return_info:
                return pattern, CftpInfo(horizon, doubling, len(path.x))
            return pattern
        horizon *= 2.0
    raise NonCoalescenceError(
        f"no coalescence after {max_doublings} doublings (horizon {horizon / 2:g}) "
        f"for beta={theta.beta}, gamma={theta.gamma}, R={theta.R}"
    )


# --------------------------------------------------------------------------
# pseudo-likelihood


@nb.njit(cache=True, nogil=True)
def _neighbour_counts(query, data, r, exclude_self):
    nq = query.shape[0]
    nd = data.shape[0]
    r2 = r * r
    out = np.zeros(nq, np.int64)
    for a in range(nq):
        qx = query[a, 0]
        qy = query[a, 1]
        c = 0
        for b in range(nd):
            dx = data[b, 0] - qx
            dy = data[b, 1] - qy
            d2 = dx * dx + dy * dy
            if d2 <= r2:
                c += 1
        if exclude_self:
            c -= 1
        out[a] = c
    return out


def _quadrature(p: PointPattern, R: float, n_grid: int):
    """Berman-Turner scheme: grid-cell-centre dummies plus the data points,
    with counting weights (cell area / points in the cell)."""
    w = p.window
    hx = w.width / n_grid
    hy = w.height / n_grid
    gx = w.x_min + (np.arange(n_grid) + 0.5) * hx
    gy = w.y_min + (np.arange(n_grid) + 0.5) * hy
    dummy = np.column_stack([np.repeat(gx, n_grid), np.tile(gy, n_grid)])
    data = p.points
    col = np.minimum(((data[:, 0] - w.x_min) / hx).astype(np.int64), n_grid - 1)
    row = np.minimum(((data[:, 1] - w.y_min) / hy).astype(np.int64), n_grid - 1)
    cell = col * n_grid + row
    per_cell = np.bincount(cell, minlength=n_grid * n_grid) + 1
    cell_area = hx * hy
    w_dummy = cell_area / per_cell
    w_data = cell_area / per_cell[cell]
    t_dummy = _neighbour_counts(dummy, data, R, False)
    t_data = _neighbour_counts(data, data, R, True)
    weights = np.concatenate([w_data, w_dummy])
    counts = np.concatenate([t_data, t_dummy])
    return weights, counts, t_data


def _log_pl(log_beta, gamma, weights, counts, t_data):
    n = len(t_data)
    s = int(t_data.sum())
    if gamma == 0.0:
        if s > 0:
            return -math.inf
        integral = weights[counts == 0].sum()
        return n * log_beta - math.exp(log_beta) * integral
    integral = float(np.sum(weights * gamma ** counts))
    return n * log_beta + s * math.log(gamma) - math.exp(log_beta) * integral


def log_pseudolikelihood(p: PointPattern, beta: float, gamma: float, R: float, n_grid: int = 32) -> float:
    """Berman-Turner approximation of the log pseudo-likelihood at (beta, gamma)."""
    weights, counts, t_data = _quadrature(p, R, n_grid)
    return _log_pl(math.log(beta), gamma, weights, counts, t_data)


def fit_pseudolikelihood(p: PointPattern, R: float, n_grid: int = 32, max_iter: int = 200,
                         tol: float = 1e-10) -> PseudoLikelihoodFit:
    """Maximise the log pseudo-likelihood over beta > 0, gamma in [0, 1].

    For fixed gamma the optimal beta is ``n / sum_j w_j gamma**t_j``; the
    remaining problem is concave in log(gamma) and solved by safeguarded
    Newton steps.
    """
    n = p.n()
    if n < 1:
        raise ValueError("pseudo-likelihood fit needs at least one point")
    weights, counts, t_data = _quadrature(p, R, n_grid)
    s = float(t_data.sum())
    tq = counts.astype(float)

    def profile(log_gamma):
        if log_gamma == -math.inf:
            mass = weights[counts == 0].sum()
            return mass, 0.0, 0.0
        z = weights * np.exp(log_gamma * tq)
        mass = z.sum()
        mean_t = (z * tq).sum() / mass
        var_t = (z * tq * tq).sum() / mass - mean_t ** 2
        return mass, mean_t, var_t

    if s == 0:
        log_gamma = -math.inf
    else:
        _, mean0, _ = profile(0.0)
        if s - n * mean0 >= 0:
            log_gamma = 0.0
        else:
            hi = 0.0
            lo = -1.0
            while s - n * profile(lo)[1] <= 0:
                lo *= 2.0
                if lo < -1e6:
                    raise ConvergenceError(f"could not bracket the gamma estimate at R={R}")
            log_gamma = 0.5 * (lo + hi)
            for it in range(max_iter):
                _, mean_t, var_t = profile(log_gamma)
                grad = s - n * mean_t
                if grad > 0:
                    lo = log_gamma
                else:
                    hi = log_gamma
                if abs(grad) < tol * max(1.0, s) or hi - lo < tol:
                    break
                step = grad / (n * var_t) if var_t > 0 else 0.0
                cand = log_gamma + step
                log_gamma = cand if lo < cand < hi else 0.5 * (lo + hi)
            else:
                raise ConvergenceError(f"pseudo-likelihood optimiser hit {max_iter} iterations at R={R}")
    mass, _, _ = profile(log_gamma)
    gamma_hat = 0.0 if log_gamma == -math.inf else math.exp(log_gamma)
    beta_hat = float(n / mass)
    log_pl = _log_pl(math.log(beta_hat), gamma_hat, weights, counts, t_data)
    return PseudoLikelihoodFit(beta_hat, gamma_hat, log_pl, float(R), len(weights))


def default_radius_grid(p: PointPattern, size: int = 50) -> np.ndarray:
    """Equally spaced radii over [0.5, 3] times the mean nearest-neighbour distance."""
    xy = p.points
    if len(xy) < 2:
        raise ValueError("need at least two points to build a radius grid")
    d2 = np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    dbar = float(np.sqrt(d2.min(axis=1)).mean())
    return np.linspace(0.5 * dbar, 3.0 * dbar, size)


def profile_radius(p: PointPattern, r_grid=None, n_grid: int = 32):
    """Profile pseudo-likelihood estimate of the interaction radius.

    Returns ``(R_hat, curve)`` with ``curve`` a list of ``(r, max log PL)``;
    ties go to the smaller radius.
    """
    grid = default_radius_grid(p) if r_grid is None else np.asarray(r_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("radius grid must be non-empty and positive")
    if np.any(np.diff(grid) < 0):
        raise ValueError("radius grid must be sorted")
    curve = []
    for r in grid:
        try:
            fit = fit_pseudolikelihood(p, float(r), n_grid=n_grid)
        except (ConvergenceError, ValueError) as exc:
            raise type(exc)(f"profile fit failed at r={r}: {exc}") from exc
        curve.append((float(r), fit.log_pl))
    values = np.array([v for _, v in curve])
    best = int(np.argmax(values))
    return curve[best][0], curve
