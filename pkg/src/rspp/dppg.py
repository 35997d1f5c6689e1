"""Determinantal point process with Gaussian kernel on the unit square.

Kernel ``C(x, y) = tau * exp(-|x - y|**2 / sigma**2)``. The periodic Fourier
approximation uses eigenvalues ``phi(k)`` for ``k`` in ``{-M..M}**2`` where
``phi`` is the spectral density of the kernel. All routines work on
``[0, 1]**2``; square windows are mapped there with :func:`to_unit_square`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import UNIT_SQUARE, PointPattern, Window

__all__ = [
    "DppgParams",
    "SpectralTruncation",
    "ExistenceError",
    "sigma_max",
    "spectral_density",
    "select_truncation",
    "dppg_log_qhat",
    "dppg_log_fhat",
    "dppg_log_rho",
    "sample_dppg",
    "theoretical_k",
    "to_unit_square",
]

MASS_FRACTION = 0.99
MAX_M = 2000


class ExistenceError(ValueError):
    pass


def sigma_max(tau: float) -> float:
    return 1.0 / math.sqrt(math.pi * tau)


@dataclass(frozen=True)
class DppgParams:
    tau: float
    sigma: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sigma > sigma_max(self.tau):
            raise ExistenceError(
                f"sigma={self.sigma} exceeds sigma_max=1/sqrt(pi*tau)={sigma_max(self.tau):.6g}"
            )


def spectral_density(k, theta: DppgParams):
    """``tau * pi * sigma**2 * exp(-pi**2 sigma**2 |k|**2)``; ``k`` may be (..., 2)."""
    k = np.asarray(k, dtype=float)
    k2 = np.sum(k * k, axis=-1)
    return theta.tau * math.pi * theta.sigma ** 2 * np.exp(-(math.pi * theta.sigma) ** 2 * k2)


@dataclass(frozen=True)
class SpectralTruncation:
    M: int
    indices: np.ndarray  # (K, 2) integer frequencies, k1 major
    phi: np.ndarray
    phi_tilde: np.ndarray
    D_hat: float
    mass: float
    theta: DppgParams

    @property
    def size(self) -> int:
        return len(self.phi)


def _mass_1d(theta: DppgParams, M: int) -> float:
    j = np.arange(-M, M + 1, dtype=float)
    return float(np.sum(np.exp(-(math.pi * theta.sigma) ** 2 * j * j)))


def _truncation_order(theta: DppgParams, target: float) -> int:
    c = theta.tau * math.pi * theta.sigma ** 2
    a = (math.pi * theta.sigma) ** 2
    s = 1.0  # one-dimensional partial sum, M = 0
    for M in range(0, MAX_M + 1):
        if M > 0:
            s += 2.0 * math.exp(-a * M * M)
        if c * s * s > target:
            return M
    raise ExistenceError(f"spectral mass never exceeds {target:g} for M <= {MAX_M} at {theta}")


@lru_cache(maxsize=512)
def _cached_truncation(tau: float, sigma: float, target: float) -> SpectralTruncation:
    theta = DppgParams(tau, sigma)
    M = _truncation_order(theta, target)
    r = np.arange(-M, M + 1)
    indices = np.column_stack([np.repeat(r, len(r)), np.tile(r, len(r))])
    phi = spectral_density(indices, theta)
    if np.any(phi >= 1.0):
        raise ExistenceError(f"phi(k) >= 1 at {theta}")
    phi_tilde = phi / (1.0 - phi)
    D_hat = float(np.sum(np.log1p(phi_tilde)))
    for arr in (indices, phi, phi_tilde):
        arr.setflags(write=False)
    return SpectralTruncation(M, indices, phi, phi_tilde, D_hat, float(phi.sum()), theta)


def select_truncation(theta: DppgParams, w: Window = UNIT_SQUARE, n_obs: int | None = None) -> SpectralTruncation:
    """Smallest ``M`` whose spectral mass exceeds 99% of the target intensity.

    The target is ``tau`` by default, or ``n_obs / |S|`` when an observed
    count is supplied. Tables are cached per exact ``(tau, sigma, target)``.
    """
    if w != UNIT_SQUARE:
        raise ValueError("DPPG routines operate on the unit square; rescale with to_unit_square")
    intensity = theta.tau if n_obs is None else n_obs / w.area()
    return _cached_truncation(float(theta.tau), float(theta.sigma), MASS_FRACTION * intensity)


def to_unit_square(p: PointPattern, theta: DppgParams | None = None):
    """Map a pattern on a square window to ``[0, 1]**2``; rescale parameters to match."""
    w = p.window
    if not w.is_square():
        raise ValueError(f"DPPG models need a square window, got {w.as_tuple()}")
    a = w.width
    xy = (p.points - np.array([w.x_min, w.y_min])) / a
    xy = np.clip(xy, 0.0, 1.0)
    q = PointPattern._trusted(xy, UNIT_SQUARE)
    if theta is None:
        return q
    return q, DppgParams(theta.tau * a * a, theta.sigma / a)


# --------------------------------------------------------------------------
# densities


def _fourier_features(xy: np.ndarray, M: int) -> np.ndarray:
    """``exp(2 pi i k.x)`` for every point and every k in {-M..M}^2, k1 major."""
    r = np.arange(-M, M + 1)
    ex = np.exp(2j * math.pi * np.outer(xy[:, 0], r))
    ey = np.exp(2j * math.pi * np.outer(xy[:, 1], r))
    return (ex[:, :, None] * ey[:, None, :]).reshape(len(xy), -1)


def _logdet_psd(C: np.ndarray) -> float:
    if not np.all(np.isfinite(C)):
        raise ValueError("kernel matrix has non-finite entries")
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return -math.inf
    d = np.diag(L)
    # a pivot this small means the matrix is singular to working precision
    if np.any(d * d <= 1e-13 * np.max(np.diag(C))):
        return -math.inf
    return float(2.0 * np.sum(np.log(d)))


def approx_kernel_matrix(xy: np.ndarray, tr: SpectralTruncation, chunk: int = 4096) -> np.ndarray:
    """``sum_k phi_tilde(k) cos(2 pi k.(x_i - x_j))`` for all point pairs."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    feats = _fourier_features(xy, tr.M)
    w = np.asarray(tr.phi_tilde)
    C = np.zeros((len(xy), len(xy)))
    for s in range(0, feats.shape[1], chunk):
        B = feats[:, s:s + chunk] * np.sqrt(w[s:s + chunk])
        C += (B @ B.conj().T).real
    return 0.5 * (C + C.T)


def dppg_log_qhat(p, tr: SpectralTruncation) -> float:
    """log det of the approximate kernel matrix with eigenvalues ``phi_tilde``."""
    xy = p.points if isinstance(p, PointPattern) else np.asarray(p, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return 0.0
    return _logdet_psd(approx_kernel_matrix(xy, tr))


def dppg_log_fhat(p, tr: SpectralTruncation, w: Window = UNIT_SQUARE) -> float:
    """Normalised log-likelihood ``|S| - D_hat + log qhat``."""
    return w.area() - tr.D_hat + dppg_log_qhat(p, tr)


def dppg_log_rho(p, theta: DppgParams) -> float:
    """log det of the Gaussian kernel matrix itself."""
    xy = p.points if isinstance(p, PointPattern) else np.asarray(p, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return 0.0
    d2 = np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=-1)
    return _logdet_psd(theta.tau * np.exp(-d2 / theta.sigma ** 2))


def theoretical_k(r, sigma: float):
    r = np.asarray(r, dtype=float)
    out = math.pi * r * r - (1.0 - np.exp(-2.0 * r * r / sigma ** 2)) * math.pi * sigma ** 2 / 2.0
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# simulation


class RejectionCapError(RuntimeError):
    pass


def _feature_rows(xy: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    return np.exp(2j * math.pi * (xy @ freqs.T))


def sample_dppg(theta: DppgParams, w: Window, rng: np.random.Generator, *,
                tr: SpectralTruncation | None = None, max_tries: int = 1_000_000) -> PointPattern:
    """Exact draw from the truncated Fourier approximation on the unit square.

    Frequencies enter independently with probability ``phi(k)``; the resulting
    projection process is sampled one point at a time by rejection from the
    uniform envelope, keeping an orthonormal basis of the already-used span.
    """
    if tr is None:
        tr = select_truncation(theta, w)
    keep = rng.random(tr.size) < tr.phi
    freqs = np.asarray(tr.indices[keep], dtype=float)
    n = len(freqs)
    if n == 0:
        return PointPattern._trusted(np.empty((0, 2)), w)
    basis = np.empty((n, n), dtype=complex)  # rows: orthonormal vectors found so far
    pts = np.empty((n, 2))
    tries = 0
    for m in range(n):
        # expected number of proposals at this step is n / (n - m)
        batch = min(4096, int(math.ceil(2.0 * n / (n - m))) + 1)
        while True:
            cand = rng.random((batch, 2))
            u = rng.random(batch)
            V = _feature_rows(cand, freqs)
            if m:
                proj = V @ basis[:m].conj().T
                resid = n - np.sum(proj.real ** 2 + proj.imag ** 2, axis=1)
            else:
                resid = np.full(batch, float(n))
            ok = np.flatnonzero(u * n <= resid)
            tries += batch
            if ok.size:
                i = int(ok[0])
                break
            if tries > max_tries:
                raise RejectionCapError(f"rejection sampler exceeded {max_tries} proposals")
        pts[m] = cand[i]
        v = V[i]
        if m:
            v = v - (basis[:m].conj() @ v) @ basis[:m]
        nv = np.linalg.norm(v)
        basis[m] = v / nv
    return PointPattern._trusted(pts, w)
