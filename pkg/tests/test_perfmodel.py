import pytest
from hypothesis import given, strategies as st

from fabricbench import perfmodel as pm
from fabricbench.errors import ValidationError


@pytest.mark.parametrize("args,expected", [((8, 2, 2, 3.5), 112.0), ((8, 2, 2, 3.0), 96.0), ((1, 1, 1, 1.0), 1.0)])
def test_core_peak_flops(args, expected):
    assert pm.core_peak_flops(*args) == expected


def test_cn_node_from_core_peak():
    assert round(24 * pm.core_peak_flops(8, 2, 2, 3.0) / 1000, 1) == 2.3


@pytest.mark.parametrize("bad", [(0, 2, 2, 3.0), (8, -1, 2, 3.0), (8, 2, 2, 0.0)])
def test_core_peak_rejects_non_positive(bad):
    with pytest.raises(ValidationError):
        pm.core_peak_flops(*bad)


def test_little_law():
    est = pm.little_law_bandwidth(pm.MemoryParams(27.4, 384))
    assert est.per_channel == pytest.approx(14.01, abs=0.01)
    six = pm.little_law_bandwidth(pm.MemoryParams(27.4, 384, 6))
    assert six.total == pytest.approx(84.1, abs=0.05)
    assert pm.little_law_bandwidth(pm.MemoryParams(1.0, 64)).per_channel == 64.0
    # default in-flight volume is six cache lines
    assert pm.MemoryParams(27.4).bytes_in_flight == 384


@pytest.mark.parametrize("latency", [0.0, -1.0])
def test_little_law_bad_latency(latency):
    with pytest.raises(ValidationError):
        pm.MemoryParams(latency)


def test_linpack_runs(data_dir):
    runs = pm.load_linpack_runs(data_dir / "linpack.json")
    effs = [pm.linpack_efficiency(r) for r in runs]
    assert effs[0] == pytest.approx(61.1, abs=0.1)
    assert effs[1] == pytest.approx(75.74, abs=0.01)
    assert abs(effs[1] - 75.6) <= 0.2
    assert runs[1].power_estimated and not runs[0].power_estimated
    assert pm.linpack_efficiency(pm.LinpackRun(100, 100)) == 100.0


def test_linpack_above_peak():
    with pytest.raises(ValidationError, match="efficiency above 100%"):
        pm.linpack_efficiency(pm.LinpackRun(101, 100))


@given(rpeak=st.floats(1e-3, 1e4), frac=st.floats(1e-6, 1.0))
def test_linpack_efficiency_range(rpeak, frac):
    eff = pm.linpack_efficiency(pm.LinpackRun(rpeak * frac, rpeak))
    assert 0 < eff <= 100


def test_perf_per_watt_examples():
    pts = [pm.FreqSweepPoint(1.0, 67.4, 1.0), pm.FreqSweepPoint(1.5, 47.7, 1.0)]
    assert pm.perf_per_watt(pts).best_freq == 1.0
    assert pm.perf_per_watt([pm.FreqSweepPoint(2.0, 10, 5)]).best_freq == 2.0


def test_perf_per_watt_tie_goes_low():
    pts = [pm.FreqSweepPoint(2.0, 10, 1), pm.FreqSweepPoint(1.0, 10, 1)]
    assert pm.perf_per_watt(pts).best_freq == 1.0


def test_perf_per_watt_missing_power():
    with pytest.raises(ValidationError, match=r"\[1.5, 2.0\]"):
        pm.perf_per_watt([pm.FreqSweepPoint(1.0, 1, 1), pm.FreqSweepPoint(2.0, 1), pm.FreqSweepPoint(1.5, 1)])


@given(st.lists(st.tuples(st.integers(1, 50), st.floats(0, 1e3), st.floats(0.1, 500)), min_size=1, max_size=8,
                unique_by=lambda t: t[0]))
def test_perf_per_watt_matches_scan(rows):
    pts = [pm.FreqSweepPoint(f / 10, g, p) for f, g, p in rows]
    curve = pm.perf_per_watt(pts)
    best = max(g / p for _, g, p in rows)
    assert curve.best_efficiency == best
    assert curve.best_freq == min(f / 10 for f, g, p in rows if g / p == best)


def test_concave_sweep_argmax():
    freqs = [1.0, 1.5, 2.0, 2.5, 3.0]
    pts = [pm.FreqSweepPoint(f, 100 - (f - 2.0) ** 2 * 10, 1.0) for f in freqs]
    assert pm.perf_per_watt(pts).best_freq == 2.0


def _series(data_dir, name):
    return pm.load_scaling_series(data_dir / name)


def test_table_speedups(data_dir):
    t4 = pm.speedup_table(_series(data_dir, "aggregation_binary.csv"))[-1]
    assert (t4.workers, round(t4.speedup, 2), round(100 * t4.efficiency, 1)) == (128, 85.66, 66.9)
    t5 = pm.speedup_table(_series(data_dir, "advection_coagulation.csv"))[-1]
    assert (t5.workers, round(t5.speedup, 1)) == (768, 379.2)
    dev = pm.ideal_deviation(_series(data_dir, "aggregation_ternary.csv"))[-1]
    assert round(585.90 / 6.84 / 128, 3) == 0.669
    assert dev.workers == 128 and round(624.19 / 24.80, 2) == 25.17 and round(dev.ratio, 3) == 0.197


def test_superlinear_point_flagged(data_dir):
    rows = pm.speedup_table(_series(data_dir, "aggregation_binary.csv"))
    # 585.90 / 291.69 > 2
    assert rows[1].superlinear and not rows[-1].superlinear


def test_single_point_series():
    (row,) = pm.speedup_table(pm.ScalingSeries("x", ((4, 10.0),)))
    assert row.speedup == 1.0 and row.efficiency == 1.0


def test_duplicate_workers():
    with pytest.raises(ValidationError, match="duplicate worker count"):
        pm.ScalingSeries("x", ((1, 2.0), (1, 3.0)))


@given(t0=st.floats(1, 1e4), ws=st.lists(st.integers(1, 4096), min_size=1, max_size=10, unique=True))
def test_linear_series_ratio_one(t0, ws):
    p0 = min(ws)
    series = pm.ScalingSeries("lin", tuple((w, t0 * p0 / w) for w in ws))
    for d in pm.ideal_deviation(series, tolerance=1e-9):
        assert d.ratio == pytest.approx(1.0, rel=1e-12)


@given(st.lists(st.tuples(st.integers(1, 1000), st.floats(1e-3, 1e5)), min_size=1, max_size=10,
                unique_by=lambda t: t[0]))
def test_speedup_baseline_and_roundtrip(points):
    series = pm.ScalingSeries("s", tuple(points), {"n": "1"})
    rows = pm.speedup_table(series)
    assert rows[0].speedup == 1.0
    assert [r.workers for r in rows] == sorted(w for w, _ in points)
    again = pm.parse_scaling_csv(pm.format_scaling_csv(series))
    assert again.points == series.points and again.metadata == series.metadata


def test_scaling_csv_bad_header():
    with pytest.raises(ValidationError, match="workers,time_s"):
        pm.parse_scaling_csv("cores,t\n1,2\n")
