import json
import socket
import threading
import time

import pytest
from hypothesis import given, strategies as st

from conftest import RateCap, make_plan, start_thread_agents
from fabricbench.errors import ProtocolError, ValidationError
from fabricbench.jsonfile import JsonDocument
from fabricbench.linkbench import (
    Agent, Connection, Coordinator, MsgType, WireMessage, intervals_disjoint, parse_plan, pingpong,
    reflect,
)
from fabricbench.linkbench.session import summarize_samples
from fabricbench.linkbench.wire import HEADER_SIZE, decode_header, encode_header


def pair():
    a, b = socket.socketpair()
    return Connection(a, "left"), Connection(b, "right")


def serve(fn, conn):
    t = threading.Thread(target=fn, args=(conn,), daemon=True)
    t.start()
    return t


# -- wire ------------------------------------------------------------------


def test_header_layout():
    raw = encode_header(MsgType.PING, 7, 3)
    assert len(raw) == HEADER_SIZE == 17 and raw[:4] == b"ZHB1"
    assert decode_header(raw) == (MsgType.PING, 7, 3)


@given(st.sampled_from(list(MsgType)), st.integers(0, 2**64 - 1), st.binary(max_size=256))
def test_message_roundtrip(msg_type, seq, payload):
    left, right = pair()
    try:
        left.send(msg_type, seq, payload)
        got = right.recv()
        assert got == WireMessage(msg_type, seq, payload)
        assert left.bytes_sent == right.bytes_received == HEADER_SIZE + len(payload)
    finally:
        left.close()
        right.close()


def test_bad_magic_and_type():
    with pytest.raises(ProtocolError, match="magic"):
        decode_header(b"XXXX" + encode_header(1, 0, 0)[4:])
    with pytest.raises(ProtocolError, match="unknown message type"):
        decode_header(encode_header(1, 0, 0)[:4] + bytes([99]) + encode_header(1, 0, 0)[5:])


def test_clean_eof_and_short_read():
    left, right = pair()
    left.close()
    assert right.recv() is None
    a, b = socket.socketpair()
    a.sendall(encode_header(MsgType.PING, 0, 10) + b"abc")
    a.close()
    with pytest.raises(ConnectionError):
        Connection(b).recv()


# -- session ------------------------------------------------------------------


def test_pingpong_against_reflector():
    left, right = pair()
    t = serve(reflect, right)
    res = pingpong(left, 4096, repetitions=8, warmup=3, src="x", dst="y")
    left.send(MsgType.BYE)
    t.join(5)
    assert len(res.samples) == 5 and res.bandwidth > 0 and res.msg_size == 4096
    # every PING is answered by a PONG of identical size
    assert res.bytes_sent == res.bytes_received == 8 * (HEADER_SIZE + 4096)


def test_bad_seq_from_double():
    left, right = pair()

    def liar(conn):
        msg = conn.recv()
        conn.send(MsgType.PONG, msg.seq + 1, msg.payload)

    serve(liar, right)
    with pytest.raises(ProtocolError, match="seq"):
        pingpong(left, 16, repetitions=4, warmup=1)


def test_short_pong_from_double():
    left, right = pair()
    serve(lambda c: c.send(MsgType.PONG, c.recv().seq, b"x"), right)
    with pytest.raises(ProtocolError, match="expected 16"):
        pingpong(left, 16, repetitions=4, warmup=1)


def test_peer_vanishes():
    left, right = pair()
    serve(lambda c: (c.recv(), c.close()), right)
    with pytest.raises(ConnectionError):
        pingpong(left, 16, repetitions=4, warmup=1)


def test_median_governs_bandwidth():
    res = summarize_samples("a", "b", 1 << 20, [0.002, 0.002, 0.002, 0.100])
    assert res.median_rtt == 0.002
    assert res.bandwidth == pytest.approx((1 << 20) / 0.001 / 1e9)


def test_median_with_slow_double():
    left, right = pair()
    delays = {3: 0.002, 4: 0.002, 5: 0.002, 6: 0.100}

    def slow(conn):
        while (msg := conn.recv()) is not None and msg.msg_type == MsgType.PING:
            time.sleep(delays.get(msg.seq, 0))
            conn.send(MsgType.PONG, msg.seq, msg.payload)

    serve(slow, right)
    res = pingpong(left, 64, repetitions=7, warmup=3)
    assert len(res.samples) == 4
    assert 0.002 <= res.median_rtt < 0.05


def test_repetitions_must_exceed_warmup():
    left, _ = pair()
    with pytest.raises(ValidationError):
        pingpong(left, 16, repetitions=3, warmup=3)


# -- plan ---------------------------------------------------------------------------


def test_plan_parse_and_pairs():
    doc = JsonDocument(json.dumps({"agents": [{"id": "b", "address": "127.0.0.1:1"}, {"id": "a", "address": "h:2"},
                                              {"id": "c", "address": "h:3"}], "msg_size": "1MiB"}))
    plan = parse_plan(doc)
    assert plan.msg_size == 1 << 20 and plan.repetitions == 16 and plan.warmup == 3 and plan.timeout == 30
    assert plan.pairs() == [("b", "a"), ("b", "c"), ("a", "c")]


@pytest.mark.parametrize("body,msg", [
    ({"agents": [{"id": "a", "address": "h:1"}]}, "at least 2"),
    ({"agents": [{"id": "a", "address": "h:1"}, {"id": "b", "address": "h:2"}], "repetitions": 3}, "warm-up"),
    ({"agents": [{"id": "a", "address": "h:1"}, {"id": "a", "address": "h:2"}]}, "unique"),
    ({"agents": [{"id": "a", "address": "h:1"}, {"id": "b", "address": "nope"}]}, "host:port"),
])
def test_plan_errors(body, msg):
    with pytest.raises(ValueError, match=msg):
        parse_plan(JsonDocument(json.dumps(body), source="plan.json"))


# -- coordinator + agents in-process ------------------------------------------------------


def run_in_process(plan, **agent_kw):
    coord = Coordinator(plan, "127.0.0.1:0")
    address = coord.bind()
    start_thread_agents(plan, address, **agent_kw)
    return coord.run()


@pytest.mark.parametrize("mode", ["serial", "parallel"])
def test_full_matrix(mode):
    plan = make_plan(4, mode)
    out = run_in_process(plan)
    assert out.matrix.complete and not out.partial and len(out.matrix) == 6
    for e in out.matrix:
        r = out.results[(e.src, e.dst)]
        assert len(r.samples) == plan.repetitions - plan.warmup
        assert r.bytes_sent == r.bytes_received == plan.repetitions * (HEADER_SIZE + plan.msg_size)


def test_two_agents_smallest_instance():
    out = run_in_process(make_plan(2, "serial"))
    assert len(out.matrix) == 1 and out.matrix.bandwidths()[0] > 0


def test_serial_exclusivity():
    out = run_in_process(make_plan(4, "serial"))
    assert [iv[0] for iv in out.intervals] == make_plan(4).pairs()
    assert intervals_disjoint(out.intervals)


def test_intervals_disjoint_helper():
    assert intervals_disjoint([(("a", "b"), 0, 1), (("a", "c"), 1, 2)])
    assert not intervals_disjoint([(("a", "b"), 0, 1.5), (("a", "c"), 1, 2)])


def test_parallel_not_faster_under_rate_cap():
    # one token bucket per agent: concurrent pairs on an agent share its budget
    results = {}
    for mode in ("serial", "parallel"):
        plan = make_plan(4, mode, msg_size=128 << 10, repetitions=6)
        coord = Coordinator(plan, "127.0.0.1:0")
        address = coord.bind()
        for spec in plan.agents:
            agent = Agent(spec.address, address, throttle=RateCap(40e6))
            threading.Thread(target=agent.serve, daemon=True).start()
        results[mode] = coord.run().matrix
    serial, parallel = results["serial"], results["parallel"]
    assert serial.complete and parallel.complete
    for e in parallel:
        assert e.bandwidth <= serial.get(e.src, e.dst).bandwidth * 1.05
    assert sum(parallel.bandwidths()) < sum(serial.bandwidths())


def test_agent_that_never_registers_is_flagged():
    plan = make_plan(3, "serial", timeout=2.0)
    coord = Coordinator(plan, "127.0.0.1:0")
    address = coord.bind()
    for spec in plan.agents[:2]:
        threading.Thread(target=Agent(spec.address, address).serve, daemon=True).start()
    out = coord.run()
    assert out.partial and sorted(out.matrix.missing) == [("a0", "a2"), ("a1", "a2")]
    assert len(out.matrix) == 1


def test_protocol_violation_names_agent():
    plan = make_plan(2, "serial")
    coord = Coordinator(plan, "127.0.0.1:0")
    address = coord.bind()
    threading.Thread(target=Agent(plan.agents[1].address, address).serve, daemon=True).start()

    def rogue():
        conn = Connection.connect(address, timeout=5)
        conn.send_json(MsgType.HELLO, {"listen": plan.agents[0].address})
        conn.recv()  # PLAN
        conn.send_json(MsgType.RESULT, {"src": "a0", "dst": "zz", "bandwidth": 1})
        conn.recv()

    threading.Thread(target=rogue, daemon=True).start()
    with pytest.raises(ProtocolError, match=r"\(agent a0\)"):
        coord.run()


def test_agent_gives_up_after_retries():
    plan = make_plan(2)
    dead = plan.agents[1].address  # nothing listens here
    agent = Agent(plan.agents[0].address, dead, retries=3, backoff=0.01)
    t0 = time.monotonic()
    assert agent.serve() == 2
    assert time.monotonic() - t0 < 5
