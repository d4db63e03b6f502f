import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fabricbench import analysis as an, netsim, topology as tp
from fabricbench.errors import ValidationError
from fabricbench.matrix import BandwidthMatrix, parse_matrix_csv
from fabricbench.report import RunManifest, emit_report
from fabricbench.units import parse_size


def matrix_of(values: dict, nodes=None) -> BandwidthMatrix:
    nodes = nodes or sorted({n for pair in values for n in pair})
    m = BandwidthMatrix(tuple(nodes), mode="serial", msg_size=1 << 20)
    for (a, b), bw in values.items():
        m.add(a, b, bw, 1.0 / bw)
    return m


def uniform(n=8, bw=10.0):
    ids = [str(i) for i in range(n)]
    return matrix_of({(ids[i], ids[j]): bw for i in range(n) for j in range(i + 1, n)}, ids)


def test_histogram_identical_values():
    h = an.build_histogram([3.0] * 7, bins=10)
    assert sorted(h.counts)[-1] == 7 and h.total == 7


def test_histogram_explicit_edges():
    h = an.build_histogram([1, 2, 3, 4], edges=[1, 2.5, 4])
    assert h.counts == (2, 2)


def test_histogram_last_bin_closed_and_outside_values():
    h = an.build_histogram([0, 1, 2, 5], edges=[1, 2])
    assert h.counts == (2,) and h.underflow == 1 and h.overflow == 1


def test_histogram_errors():
    with pytest.raises(ValidationError):
        an.build_histogram([])
    with pytest.raises(ValidationError):
        an.build_histogram([1, 2], edges=[2, 1])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 30))
def test_histogram_counts_conserved(values, bins):
    h = an.build_histogram(values, bins=bins)
    assert h.total == len(values) and h.underflow == h.overflow == 0
    assert all(c >= 0 for c in h.counts) and len(h.counts) == bins


def test_synthetic_fabric_like_distribution():
    rng = np.random.default_rng(20181)
    samples = rng.normal(10.2, 0.5, 10_000)
    ids = [str(i) for i in range(142)]
    pairs = [(ids[i], ids[j]) for i in range(142) for j in range(i + 1, 142)][:10_000]
    st_ = an.summarize(matrix_of(dict(zip(pairs, samples)), ids))
    assert abs(st_.mean - 10.2) < 0.02 and abs(st_.stddev - 0.5) < 0.02
    h = an.build_histogram(samples, bins=20)
    assert h.total == 10_000


def test_gnuplot_columns():
    h = an.build_histogram([1.0, 2.0, 3.0], bins=2)
    lines = h.to_gnuplot().splitlines()
    assert lines[0].startswith("#") and len(lines) == 3
    centre, count = lines[1].split()
    assert float(centre) == 1.5 and int(count) == 1


def test_summarize_and_empty():
    s = an.summarize(matrix_of({("a", "b"): 1.0, ("a", "c"): 3.0}))
    assert (s.mean, s.stddev, s.min, s.max, s.n) == (2.0, 1.0, 1.0, 3.0, 2)
    with pytest.raises(ValidationError, match="empty matrix"):
        an.summarize(BandwidthMatrix(("a", "b")))


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40))
def test_summary_invariants(values):
    ids = [str(i) for i in range(10)]
    pairs = [(ids[i], ids[j]) for i in range(10) for j in range(i + 1, 10)]
    s = an.summarize(matrix_of(dict(zip(pairs, values)), ids))
    assert s.min <= s.mean <= s.max and s.stddev >= 0


def test_failing_link_detection():
    assert an.detect_failing_links(uniform()) == []
    m = uniform()
    m.add("2", "5", 1.0, 1.0)
    assert an.detect_failing_links(m, k=4) == [("2", "5", 1.0)]
    assert [(s, d) for s, d, _ in an.summarize(m).outliers] == [("2", "5")]


def test_failing_k_zero_flags_below_mean():
    m = matrix_of({("a", "b"): 1.0, ("a", "c"): 2.0, ("b", "c"): 6.0})
    assert [p[:2] for p in an.detect_failing_links(m, k=0)] == [("a", "b"), ("a", "c")]


def test_failing_errors():
    with pytest.raises(ValidationError, match="at least 3"):
        an.detect_failing_links(matrix_of({("a", "b"): 1.0}))
    with pytest.raises(ValidationError):
        an.detect_failing_links(uniform(), k=-1)


def test_compare_identical():
    rep = an.compare_modes(uniform(), uniform())
    assert rep.contended == () and all(r.ratio == 1.0 for r in rep.ratios) and rep.mean_ratio == 1.0


def test_compare_disjoint_nodes():
    with pytest.raises(ValidationError):
        an.compare_modes(uniform(4), uniform(5))


def test_compare_msg_size_mismatch():
    other = uniform()
    other.msg_size = 1
    with pytest.raises(ValidationError, match="message sizes"):
        an.compare_modes(uniform(), other)


def test_compare_on_oversubscribed_simulation():
    t = tp.build_fat_tree(2, 2, 4, 1, 12.5)
    serial = netsim.simulate(netsim.SimPlan(t, mode="serial"))
    parallel = netsim.simulate(netsim.SimPlan(t, mode="parallel"))
    rep = an.compare_modes(serial, parallel)
    cross = {r for r in rep.ratios if t.leaf_of(int(r.src)) != t.leaf_of(int(r.dst))}
    same = set(rep.ratios) - cross
    assert cross <= set(rep.contended)
    assert max(r.ratio for r in cross) < min(r.ratio for r in same)
    assert rep.spread_increased


def test_matrix_csv_roundtrip_with_missing():
    m = uniform(4)
    m.entries.pop(("1", "3"))
    m.flag_missing("1", "3")
    again = parse_matrix_csv(m.to_csv())
    assert again.missing == [("1", "3")] and not again.complete
    assert again.nodes == m.nodes and again.to_csv() == m.to_csv()


def test_matrix_parse_errors():
    with pytest.raises(ValidationError, match="empty matrix"):
        parse_matrix_csv("# mode=serial\nsrc,dst,bandwidth_gbps,time_s\n")
    with pytest.raises(ValidationError, match="line 2"):
        parse_matrix_csv("src,dst,bandwidth_gbps,time_s\na,b,x,1\n")
    with pytest.raises(ValidationError):
        uniform().add("a", "a", 1.0, 1.0)


@pytest.mark.parametrize("text,value", [("1MiB", 1 << 20), ("64KB", 64000), ("4096", 4096), (512, 512), ("2k", 2048)])
def test_parse_size(text, value):
    assert parse_size(text) == value


@pytest.mark.parametrize("bad", ["", "1XB", "-1", "0", "0.5"])
def test_parse_size_bad(bad):
    with pytest.raises(ValidationError):
        parse_size(bad)


def test_emit_report_json_and_csv(tmp_path):
    src = tmp_path / "in.txt"
    src.write_bytes(b"abc")
    man = RunManifest("x", config={"b": 1})
    assert man.read_text(src) == "abc"
    emit_report({"v": 1}, "json", tmp_path / "r.json", man)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["report"] == {"v": 1}
    assert doc["manifest"]["inputs"][str(src)] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    emit_report([{"a": 1, "b": 2}], "csv", tmp_path / "r.csv", man)
    assert (tmp_path / "r.csv").read_text() == "a,b\n1,2\n"
    assert json.loads((tmp_path / "r.csv.manifest.json").read_text())["subcommand"] == "x"
