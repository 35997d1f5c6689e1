import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rspp.diagnostics import UndefinedEssError, autocorrelation, ess, export_density, silverman_bandwidth, summarize
from rspp.mcmc import Chain


def make_chain(draws, seconds=0.0, names=("a", "b")):
    draws = np.asarray(draws, dtype=float)
    T = len(draws)
    acc = np.zeros(T, bool)
    acc[::3] = True
    return Chain(tuple(names), draws, acc, np.zeros(T, np.int64), np.zeros(T, np.int64), {"wall_seconds": seconds})


def ar1(phi, T, seed):
    g = np.random.default_rng(seed)
    e = g.normal(size=T)
    x = np.empty(T)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    return x


def analytic_ar1_ess(phi, T, cutoff=0.05):
    total, lag = 0.0, 1
    while phi ** lag >= cutoff:
        total += phi ** lag
        lag += 1
    return T / (1 + 2 * total)


def test_iid_ess():
    x = np.random.default_rng(0).normal(size=100_000)
    assert abs(ess(x) - 1e5) < 0.1 * 1e5


def test_ar1_ess():
    want = analytic_ar1_ess(0.9, 100_000)
    assert abs(ess(ar1(0.9, 100_000, 1)) - want) < 0.15 * want
    # the truncated sum lands near the untruncated value T(1-phi)/(1+phi)
    assert want == pytest.approx(1e5 * 0.1 / 1.9, rel=0.15)


def test_repeated_series_small_ess():
    x = np.repeat(np.random.default_rng(2).normal(size=500), 2)
    assert ess(x) < 0.75 * len(x)


def test_ess_errors():
    with pytest.raises(UndefinedEssError):
        ess(np.ones(50))
    with pytest.raises(ValueError):
        ess(np.arange(5.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 1e3), st.floats(-1e3, 1e3))
def test_ess_affine_invariant(seed, scale, shift):
    x = ar1(0.5, 2000, seed)
    assert ess(scale * x + shift) == pytest.approx(ess(x), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=300))
def test_ess_in_range(x):
    x = np.array(x)
    if np.ptp(x) == 0:
        return
    e = ess(x)
    assert 0 < e <= len(x)


def test_autocorrelation_lag0():
    assert autocorrelation([1.0, 2.0, 4.0], 0) == 1.0


def test_summary_self_reference_zero_bias():
    ch = make_chain(np.random.default_rng(3).normal(size=(400, 2)), seconds=2.0)
    s = summarize(ch, 100, ch)
    assert all(p.abs_bias == 0.0 for p in s.params)
    row = s.to_table_row()
    for col in ("Time", "E(a)", "sd(a)", "|Bias(a)|", "ESS(Ave)", "ESS(Ave)/s", "ESS(Ave)/t"):
        assert col in row
    assert row["ESS(Ave)/t"] == pytest.approx(row["ESS(Ave)"] / 300)
    assert row["ESS(Ave)/s"] == pytest.approx(row["ESS(Ave)"] / 2.0)


def test_summary_two_pass_oracle():
    x = np.random.default_rng(4).normal(size=(1000, 2)) * [3, 0.1] + [100, 0.2]
    s = summarize(make_chain(x), 200)
    for j, p in enumerate(s.params):
        col = x[200:, j]
        mean = sum(col) / len(col)
        var = sum((v - mean) ** 2 for v in col) / (len(col) - 1)
        assert p.mean == pytest.approx(mean, rel=1e-12)
        assert p.sd == pytest.approx(math.sqrt(var), rel=1e-12)
        assert 0 < p.ess <= 800


def test_split_halves_agree():
    x = np.column_stack([ar1(0.8, 40_000, 5), ar1(0.3, 40_000, 6)])
    a = summarize(make_chain(x[:20_000]))
    b = summarize(make_chain(x[20_000:]))
    for pa, pb in zip(a.params, b.params):
        se = math.hypot(pa.sd / math.sqrt(pa.ess), pb.sd / math.sqrt(pb.ess))
        assert abs(pa.mean - pb.mean) < 3 * se


def test_summary_errors():
    ch = make_chain(np.random.default_rng(0).normal(size=(50, 2)))
    with pytest.raises(ValueError):
        summarize(ch, 50)
    with pytest.raises(ValueError):
        summarize(ch, 0, make_chain(np.zeros((50, 3)), names=("a", "b", "c")))


def test_density_single_value():
    hist, kde = export_density(np.full(40, 2.5), bins=10)
    assert sum(1 for h in hist if h[2] > 0) == 1 and kde == []


def test_density_normal_peak():
    x = np.random.default_rng(7).normal(size=5000)
    hist, kde = export_density(x)
    h = silverman_bandwidth(x)
    peak = max(kde, key=lambda r: r[1])[0]
    assert abs(peak) < h and len(kde) == 512
    grid = np.array([r[0] for r in kde])
    dens = np.array([r[1] for r in kde])
    assert np.sum(dens) * (grid[1] - grid[0]) == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=500), st.integers(1, 80))
def test_histogram_conserves_mass(x, bins):
    hist, _ = export_density(np.array(x), bins=bins)
    assert sum(h[2] for h in hist) == len(x)


def test_density_empty():
    with pytest.raises(ValueError):
        export_density([])
