"""Planar point patterns on rectangular windows.

Distances are Euclidean in window units; nothing wraps around the torus. The
K-function estimator uses Ripley's isotropic edge correction, with the
in-window arc fraction of a circle computed in closed form for rectangles.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np
import yaml

__all__ = [
    "Window",
    "PointPattern",
    "PatternParseError",
    "close_pair_count",
    "isotropic_edge_weight",
    "ripley_k_hat",
    "ripley_k_hat_many",
    "read_pattern",
    "write_pattern",
]


class PatternParseError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("window bounds must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate window {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (
            (xy[:, 0] >= self.x_min) & (xy[:, 0] <= self.x_max)
            & (xy[:, 1] >= self.y_min) & (xy[:, 1] <= self.y_max)
        )

    def is_square(self) -> bool:
        return self.width == self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)


UNIT_SQUARE = Window()


class PointPattern:
    """A finite simple point configuration inside a window.

    Coordinates are held as a read-only ``(n, 2)`` float array in insertion
    order. Every statistic in the package is invariant to that order.
    """

    __slots__ = ("_xy", "window")

    def __init__(self, points, window: Window = UNIT_SQUARE, *, validate: bool = True):
        xy = np.array(points, dtype=np.float64).reshape(-1, 2)
        if validate:
            if not np.all(np.isfinite(xy)):
                raise ValueError("point coordinates must be finite")
            outside = ~window.contains(xy) if len(xy) else np.zeros(0, bool)
            if outside.any():
                i = int(np.flatnonzero(outside)[0])
                raise ValueError(f"point {i} {tuple(xy[i])} lies outside {window.as_tuple()}")
            if len(xy) > 1 and len(np.unique(xy, axis=0)) != len(xy):
                raise ValueError("duplicate points are not allowed in a simple point pattern")
        xy.setflags(write=False)
        self._xy = xy
        self.window = window

    @classmethod
    def _trusted(cls, xy: np.ndarray, window: Window) -> "PointPattern":
        # samplers produce valid patterns by construction
        obj = cls.__new__(cls)
        xy = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 2)
        xy.setflags(write=False)
        obj._xy = xy
        obj.window = window
        return obj

    @property
    def points(self) -> np.ndarray:
        return self._xy

    def n(self) -> int:
        return len(self._xy)

    def __len__(self) -> int:
        return len(self._xy)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.window == other.window and np.array_equal(self._xy, other._xy)

    def __repr__(self) -> str:
        return f"PointPattern(n={self.n()}, window={self.window.as_tuple()})"

    def add(self, u) -> "PointPattern":
        return PointPattern(np.vstack([self._xy, np.reshape(u, (1, 2))]), self.window)

    def remove(self, i: int) -> "PointPattern":
        return PointPattern._trusted(np.delete(self._xy, i, axis=0), self.window)


# --------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True, nogil=True)
def _close_pairs(xy, r):
    n = xy.shape[0]
    r2 = r * r
    count = 0
    for i in range(n):
        xi = xy[i, 0]
        yi = xy[i, 1]
        for j in range(i + 1, n):
            dx = xy[j, 0] - xi
            dy = xy[j, 1] - yi
            if dx * dx + dy * dy <= r2:
                count += 1
    return count


@nb.njit(cache=True, nogil=True)
def _edge_weight(ux, uy, r, x0, x1, y0, y1):
    half_pi = 0.5 * math.pi
    # half-angles of the arcs cut off by each edge
    a_l = math.acos(min((ux - x0) / r, 1.0))
    a_r = math.acos(min((x1 - ux) / r, 1.0))
    a_b = math.acos(min((uy - y0) / r, 1.0))
    a_t = math.acos(min((y1 - uy) / r, 1.0))
    outside = 2.0 * (a_l + a_r + a_b + a_t)
    outside -= max(0.0, a_l + a_b - half_pi)
    outside -= max(0.0, a_l + a_t - half_pi)
    outside -= max(0.0, a_r + a_b - half_pi)
    outside -= max(0.0, a_r + a_t - half_pi)
    inside = 1.0 - outside / (2.0 * math.pi)
    if inside <= 0.0:
        return math.inf
    return 1.0 / inside


@nb.njit(cache=True, nogil=True)
def _k_hat_sums(xy, radii, x0, x1, y0, y1):
    # radii must be sorted ascending; returns edge-weighted ordered-pair sums
    n = xy.shape[0]
    m = radii.shape[0]
    acc = np.zeros(m)
    rmax = radii[m - 1]
    rmax2 = rmax * rmax
    for i in range(n):
        xi = xy[i, 0]
        yi = xy[i, 1]
        for j in range(n):
            if j == i:
                continue
            dx = xy[j, 0] - xi
            dy = xy[j, 1] - yi
            d2 = dx * dx + dy * dy
            if d2 <= 0.0 or d2 > rmax2:
                continue
            d = math.sqrt(d2)
            w = _edge_weight(xi, yi, d, x0, x1, y0, y1)
            # first radius bin that includes d
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) // 2
                if radii[mid] < d:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < m:
                acc[lo] += w
    for k in range(1, m):
        acc[k] += acc[k - 1]
    return acc


# --------------------------------------------------------------------------
# public API


def close_pair_count(p: PointPattern, R: float) -> int:
    """Number of unordered pairs at distance at most ``R``."""
    if R <= 0:
        raise ValueError("R must be positive")
    if p.n() < 2:
        return 0
    return int(_close_pairs(p.points, float(R)))


def isotropic_edge_weight(u, v, w: Window) -> float:
    """Ripley's isotropic weight: inverse in-window fraction of the circle
    centred at ``u`` through ``v``."""
    ux, uy = float(u[0]), float(u[1])
    vx, vy = float(v[0]), float(v[1])
    if ux == vx and uy == vy:
        raise ValueError("edge weight is undefined for coincident points")
    if not (w.contains((ux, uy))[0] and w.contains((vx, vy))[0]):
        raise ValueError("both points must lie inside the window")
    r = math.hypot(vx - ux, vy - uy)
    return float(_edge_weight(ux, uy, r, *w.as_tuple()))


def ripley_k_hat_many(p: PointPattern, radii) -> np.ndarray:
    """Edge-corrected K estimates at several radii (any order)."""
    n = p.n()
    if n < 2:
        raise ValueError("K estimator is undefined for fewer than two points")
    radii = np.asarray(radii, dtype=np.float64).ravel()
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    order = np.argsort(radii, kind="stable")
    sums = _k_hat_sums(p.points, radii[order], *p.window.as_tuple())
    out = np.empty_like(radii)
    out[order] = p.window.area() * sums / (n * (n - 1))
    return out


def ripley_k_hat(p: PointPattern, r: float) -> float:
    """|S| * sum over ordered pairs of 1[0 < d <= r] e(u, v) / (n (n - 1))."""
    return float(ripley_k_hat_many(p, [r])[0])


# --------------------------------------------------------------------------
# CSV I/O


def _window_from_sidecar(path: Path) -> Window | None:
    side = path.with_suffix(path.suffix + ".yaml")
    if not side.exists():
        return None
    cfg = yaml.safe_load(side.read_text()) or {}
    bounds = cfg.get("window")
    if bounds is None:
        return None
    return Window(*map(float, bounds))


def read_pattern(path, window: Window | None = None) -> PointPattern:
    """Read the ``x,y`` CSV format; an explicit ``window`` overrides the file."""
    path = Path(path)
    file_window = None
    rows = []
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    body_start = None
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            parts = stripped[1:].split()
            if parts and parts[0] == "window":
                if len(parts) != 5:
                    raise PatternParseError(f"line {lineno}: window comment needs four bounds")
                try:
                    file_window = Window(*map(float, parts[1:]))
                except ValueError as exc:
                    raise PatternParseError(f"line {lineno}: {exc}") from None
            continue
        if stripped.replace(" ", "") != "x,y":
            raise PatternParseError(f"line {lineno}: expected header 'x,y', got {stripped!r}")
        body_start = lineno
        break
    if body_start is None:
        raise PatternParseError(f"{path}: missing 'x,y' header")
    for row_no, rec in enumerate(csv.reader(lines[body_start:]), start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 2:
            raise PatternParseError(f"row {row_no}: expected 2 fields, got {len(rec)}")
        try:
            x, y = float(rec[0]), float(rec[1])
        except ValueError:
            raise PatternParseError(f"row {row_no}: non-numeric value {rec!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise PatternParseError(f"row {row_no}: non-finite coordinate")
        rows.append((x, y))
    win = window or file_window or _window_from_sidecar(path) or UNIT_SQUARE
    xy = np.array(rows, dtype=np.float64).reshape(-1, 2)
    bad = ~win.contains(xy) if len(xy) else np.zeros(0, bool)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PatternParseError(f"row {i + 1}: point {rows[i]} lies outside window {win.as_tuple()}")
    if len(xy) > 1:
        _, first, counts = np.unique(xy, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = xy[first[np.argmax(counts > 1)]]
            i = int(np.flatnonzero((xy == dup).all(axis=1))[1])
            raise PatternParseError(f"row {i + 1}: duplicate point {tuple(dup)}")
    return PointPattern._trusted(xy, win)


def write_pattern(p: PointPattern, path) -> None:
    w = p.window
    with open(path, "w", newline="") as fh:
        fh.write(f"# window {w.x_min!r} {w.x_max!r} {w.y_min!r} {w.y_max!r}\n")
        fh.write("x,y\n")
        for x, y in p.points:
            fh.write(f"{x:.17g},{y:.17g}\n")
