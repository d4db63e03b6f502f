import json
import math

import pytest
from hypothesis import given, strategies as st

from fabricbench import inventory as inv
from fabricbench.errors import ValidationError
from fabricbench.jsonfile import JsonDocument


def cpu(sockets=2, cores=12, freq=3.0):
    return inv.CpuSpec("Xeon", sockets, cores, freq)


def node(name="cn", count=1, gpu=None, listed=None, **kw):
    return inv.NodeSpec(name, cpu(**kw), gpu, 192.0, 0.48, count, listed)


def test_cn_node_peak_formula():
    # 2 sockets x 12 cores x 32 flop/cycle x 3.0 GHz
    assert inv.node_cpu_peak(node()) == pytest.approx(2 * 12 * 32 * 3.0 / 1000)
    assert round(inv.node_cpu_peak(node()), 1) == 2.3


def test_gpu_peak_and_absent_accelerator():
    v100 = inv.GpuSpec("V100", 4, 2560, 1.52)
    peak = inv.node_gpu_peak(v100)
    assert peak.tflops == pytest.approx(4 * 2560 * 2 * 1.52 / 1000)
    assert peak.status == "ok"
    assert inv.node_gpu_peak(None) == (0.0, inv.NO_ACCELERATOR)


def test_shipped_inventory_reproduces_listed_totals(data_dir):
    report = inv.cluster_peak(inv.load_inventory(data_dir / "zhores.json"))
    assert report.total_tflops == pytest.approx(1018.2)
    assert report.total_nodes == 82
    assert report.total_cores == 2296
    rows = {r.class_name: r for r in report.rows}
    assert abs(rows["cn"].cpu_node_tflops - 2.3) < 0.05
    assert abs(rows["gn"].cpu_node_tflops - 2.6) < 0.05
    assert abs(rows["gn"].gpu_node_tflops - 31.2) < 0.1
    # the table's own inconsistencies surface as warnings, not errors
    assert any("anlab" in w for w in report.warnings)
    assert any("node count" in w for w in report.warnings)
    assert report.computed_total_nodes == 84


def test_listed_sum_drives_total_without_listed_totals():
    classes = [node("a", 2, listed=inv.ListedPeak(cpu_class_tflops=5.0)), node("b", 1)]
    report = inv.cluster_peak(inv.ClusterInventory(classes))
    assert report.total_tflops == pytest.approx(5.0 + inv.node_cpu_peak(classes[1]))
    assert report.total_nodes == 3


def test_empty_inventory():
    with pytest.raises(ValidationError, match="empty inventory"):
        inv.cluster_peak(inv.ClusterInventory(()))


def test_duplicate_class_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        inv.ClusterInventory((node("x"), node("x")))


@pytest.mark.parametrize("field,value", [("sockets", 0), ("cores_per_socket", -1), ("base_freq", 0.0)])
def test_cpu_invariants(field, value):
    kw = {"model_name": "x", "sockets": 2, "cores_per_socket": 4, "base_freq": 2.0}
    kw[field] = value
    with pytest.raises(ValidationError):
        inv.CpuSpec(**kw)


def test_parse_error_reports_line(data_dir):
    text = json.dumps({"classes": [{"class_name": "cn", "cpu": {"model_name": "x", "sockets": "two",
                       "cores_per_socket": 1, "base_freq": 1.0, "flops_per_cycle_per_core": 32},
                       "memory": 1, "node_count": 1}]}, indent=2)
    with pytest.raises(ValidationError) as exc:
        inv.parse_inventory(JsonDocument(text, source="bad.json"))
    msg = str(exc.value)
    assert "bad.json" in msg and "sockets" in msg
    line = next(i for i, l in enumerate(text.splitlines(), 1) if '"sockets"' in l)
    assert f"line {line}" in msg


@given(
    sockets=st.integers(1, 8), cores=st.integers(1, 64), freq=st.floats(0.5, 5.0),
    count=st.integers(1, 100),
)
def test_class_peak_is_count_times_node_peak(sockets, cores, freq, count):
    spec = node("p", count, sockets=sockets, cores=cores, freq=freq)
    report = inv.cluster_peak(inv.ClusterInventory((spec,)))
    expected = count * sockets * cores * 32 * freq / 1000
    assert math.isclose(report.computed_total_tflops, expected, rel_tol=1e-12)
    assert report.total_cores == count * sockets * cores


def test_reported_node_columns_prefer_listed(data_dir):
    rows = {r.class_name: r for r in inv.cluster_peak(inv.load_inventory(data_dir / "zhores.json")).rows}
    assert rows["gn"].reported_gpu_node_tflops == 31.2
    assert rows["gn"].gpu_node_tflops == pytest.approx(31.1296)
    assert abs(rows["gn"].gpu_node_tflops - 31.2) / 31.2 < 0.005
    plain = inv.cluster_peak(inv.ClusterInventory((node("x"),))).rows[0]
    assert plain.reported_cpu_node_tflops == plain.cpu_node_tflops


def test_additive_over_disjoint_classes():
    a, b = node("a", 3), node("b", 5, sockets=1, cores=8, freq=2.0)
    both = inv.cluster_peak(inv.ClusterInventory((a, b))).computed_total_tflops
    parts = sum(inv.cluster_peak(inv.ClusterInventory((x,))).computed_total_tflops for x in (a, b))
    assert both == pytest.approx(parts, rel=1e-15)
    assert inv.node_cpu_peak(node(freq=4.0)) == 2 * inv.node_cpu_peak(node(freq=2.0))
