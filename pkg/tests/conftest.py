import math

import numpy as np
import pytest

from rspp.geometry import UNIT_SQUARE, PointPattern, Window


def uniform_pattern(rng, n, window=UNIT_SQUARE):
    xy = np.column_stack([
        window.x_min + rng.random(n) * window.width,
        window.y_min + rng.random(n) * window.height,
    ])
    return PointPattern(xy, window)


def arc_fraction_oracle(u, r, w):
    """In-window fraction of the circle of radius r about u, found by cutting
    the circle at its crossings with the four window edges and testing the
    midpoint of each arc."""
    ux, uy = u
    cuts = [0.0, 2 * math.pi]
    for c, along_x in ((w.x_min, True), (w.x_max, True), (w.y_min, False), (w.y_max, False)):
        d = (c - ux) if along_x else (c - uy)
        if abs(d) < r:
            a = math.acos(d / r)
            base = 0.0 if along_x else math.pi / 2
            for s in (a, -a):
                cuts.append((base + s) % (2 * math.pi))
    cuts.sort()
    inside = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = 0.5 * (a + b)
        x, y = ux + r * math.cos(m), uy + r * math.sin(m)
        if w.x_min <= x <= w.x_max and w.y_min <= y <= w.y_max:
            inside += b - a
    return inside / (2 * math.pi)


def det_cofactor(a):
    """Determinant by Laplace expansion along the first row."""
    n = len(a)
    if n == 1:
        return a[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in a[1:]]
        total += (-1) ** j * a[0][j] * det_cofactor(minor)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line and print it; returns ``ok``."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
