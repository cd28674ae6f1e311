import json
import shutil
import socket
import subprocess
import sys
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ectl import zq_lwe as zq
from ectl.config import Scenario, load_scenario, shipped_scenario_path
from ectl.netloop import (ACTUATE, BYE, HELLO, REENC, SENSOR, Frame, KeyMaterialError,
                          ProtocolError, assert_key_free, cipher_payload, connect_plant,
                          expect, hello_info, json_payload, parse_ciphers, recv_frame,
                          send_frame, serve_controller, serve_plant)
from ectl.plant_sim.runner import EncryptedLoop, LocalLink, run_closed_loop


# ---------------------------------------------------------------- frames

@given(st.sampled_from([HELLO, SENSOR, ACTUATE, REENC, BYE]), st.integers(0, 2**64 - 1),
       st.binary(max_size=256))
def test_frame_round_trip(t, step, payload):
    f = Frame(t, step, payload)
    raw = f.pack()
    assert raw[:4] == b"ECTL" and raw[4] == 1 and len(raw) == 18 + len(payload)
    assert Frame.unpack(raw) == f


def test_frame_rejects_garbage():
    good = Frame(SENSOR, 3, b"abcdefgh").pack()
    for bad in (b"XXXX" + good[4:], good[:4] + b"\x02" + good[5:], good[:5] + b"\x09" + good[6:],
                good[:-1], good[:10]):
        with pytest.raises(ProtocolError):
            Frame.unpack(bad)


def test_cipher_payload_round_trip_and_validation(rng):
    p = zq.setup(24, 24, 8)
    sk = zq.keygen(p, 0)
    c = zq.encrypt(rng.integers(0, p.q, 3, dtype=np.uint64), sk, p, zq.make_rng(0))
    f = Frame(SENSOR, 0, cipher_payload(c, p.q))
    assert np.array_equal(parse_ciphers(Frame.unpack(f.pack()), 3, p.width, p.q), c)
    assert Frame(SENSOR, 0, cipher_payload(parse_ciphers(f, 3, p.width, p.q), p.q)).pack() == f.pack()
    with pytest.raises(ProtocolError):
        parse_ciphers(f, 2, p.width, p.q)
    big = c.copy()
    big[0, 0] = p.q
    with pytest.raises(ProtocolError):
        parse_ciphers(Frame(SENSOR, 0, cipher_payload(big, p.q)), 3, p.width, p.q)


def test_key_free_assertion():
    p = zq.debug_setup(16)
    sk = zq.keygen(p, 0)

    class Holder:
        pass

    h = Holder()
    h.inner = {"a": [1, (2, sk)]}
    with pytest.raises(KeyMaterialError):
        assert_key_free(h)
    h.inner = {"a": [1, 2]}
    h.self_ref = h
    assert_key_free(h)


# ---------------------------------------------------------------- loopback

@pytest.fixture(scope="module")
def small_scenario():
    # preset controller on a short-key LWE instance that still hosts the window
    cfg = load_scenario("three_inertia")
    cfg.horizon = 120
    return cfg, zq.setup(48, 16, 24)


def _start_controller(ectl, **kw):
    ready = threading.Event()
    addr = {}

    def on_listen(a):
        addr["a"] = a
        ready.set()

    th = threading.Thread(target=serve_controller, args=(("127.0.0.1", 0), ectl),
                          kwargs=dict(on_listen=on_listen, **kw), daemon=True)
    th.start()
    assert ready.wait(10)
    return th, addr["a"]


def _parts(cfg, params):
    sc = Scenario(cfg, params=params)
    ectl, codec, _ = sc.encrypted_parts()
    dims = (sc.conv.n_prime, sc.ctl.p, sc.ctl.nr, sc.ctl.m)
    return sc, ectl, codec, dims


def test_loopback_equals_in_process(small_scenario):
    cfg, params = small_scenario
    sc, ectl, codec, _ = _parts(cfg, params)
    local = run_closed_loop(sc.plant, EncryptedLoop(LocalLink(ectl), codec), cfg.horizon,
                            sc.reference(), 1)
    sc, ectl, codec, dims = _parts(cfg, params)
    th, addr = _start_controller(ectl, max_sessions=1)
    net = serve_plant(addr, sc.plant, codec, dims, cfg.horizon, sc.reference())
    th.join(10)
    assert not th.is_alive()
    assert np.array_equal(net.Y, local.Y) and np.array_equal(net.U, local.U)
    assert net.extras["u_win"] == local.extras["u_win"]
    assert ectl.step == cfg.horizon


def test_hello_mismatch_rejected_before_step0(small_scenario):
    cfg, params = small_scenario
    sc, ectl, codec, dims = _parts(cfg, params)
    th, addr = _start_controller(ectl, max_sessions=2)
    info = hello_info(codec.params, dims, codec.scales, codec.window)
    for key, val in (("q0", 40), ("dims", [6, 1, 1, 1])):
        with pytest.raises(ProtocolError, match=key):
            connect_plant(addr, dict(info, **{key: val}), 5.0)
    th.join(10)
    assert ectl.step == 0


def _manual_steps(sock, codec, steps, start=0):
    p = codec.params
    for t in range(start, start + steps):
        yE = codec.encrypt_codes([0])
        rE = codec.encrypt_codes([1 << 15])
        send_frame(sock, Frame(SENSOR, t, cipher_payload(np.concatenate([yE, rE]), p.q)))
        uE = parse_ciphers(expect(sock, ACTUATE, t), 1, p.width, p.q)
        _, reenc, _ = codec.decode(uE)
        send_frame(sock, Frame(REENC, t, cipher_payload(reenc, p.q)))


def test_out_of_order_and_refused_resume(small_scenario):
    cfg, params = small_scenario
    sc, ectl, codec, dims = _parts(cfg, params)
    th, addr = _start_controller(ectl, max_sessions=4)
    info = hello_info(codec.params, dims, codec.scales, codec.window)

    # session 1: three steps, then the plant dies
    s = connect_plant(addr, info, 5.0)
    _manual_steps(s, codec, 3)
    s.close()

    # session 2: a restarted plant at step 0 is refused
    with pytest.raises(ProtocolError, match="step"):
        connect_plant(addr, info, 5.0)

    # session 3: matching step index, but a SENSOR frame skips ahead
    s = connect_plant(addr, dict(info, step=3), 5.0)
    send_frame(s, Frame(SENSOR, 7, b""))
    with pytest.raises((ConnectionError, ProtocolError, OSError)):
        recv_frame(s)
    s.close()

    # session 4: resume exactly at step 3 and finish
    s = connect_plant(addr, dict(info, step=3), 5.0)
    _manual_steps(s, codec, 2, start=3)
    send_frame(s, Frame(BYE, 5, json_payload({})))
    s.close()
    th.join(10)
    assert ectl.step == 5


def test_plant_timeout(small_scenario):
    cfg, params = small_scenario
    sc, ectl, codec, dims = _parts(cfg, params)
    srv = socket.create_server(("127.0.0.1", 0))
    addr = srv.getsockname()

    def silent():
        conn, _ = srv.accept()
        f = recv_frame(conn)
        info = json.loads(f.payload)
        send_frame(conn, Frame(HELLO, 0, json_payload(info)))
        recv_frame(conn)  # swallow SENSOR and never answer
        threading.Event().wait(2)
        conn.close()

    th = threading.Thread(target=silent, daemon=True)
    th.start()
    with pytest.raises(socket.timeout):
        serve_plant(addr, sc.plant, codec, dims, 5, sc.reference(), timeout=0.2)
    srv.close()


def test_reenc_stream_matches_integer_requantization():
    cfg = load_scenario("three_inertia")
    cfg.horizon = 80
    p = zq.debug_setup(43)
    sc = Scenario(cfg, params=p)
    ectl, codec, _ = sc.encrypted_parts()
    th, addr = _start_controller(ectl, max_sessions=1)

    seen = []
    orig = codec.decode

    def spy(uE):
        u, reenc, w = orig(uE)
        seen.append(int(zq.centered(zq.decrypt(reenc, codec.sk, p), p.q)[0]))
        return u, reenc, w

    codec.decode = spy
    dims = (sc.conv.n_prime, 1, 1, 1)
    tr = serve_plant(addr, sc.plant, codec, dims, cfg.horizon, sc.reference())
    th.join(10)

    # replay the integer controller on the same quantized measurements
    ic = sc.integer()
    want = []
    for y, r in zip(tr.y, tr.r):
        yb, rb = codec.quantize_inputs(y, r)
        ub = ic.output(yb, rb)
        up = ic.requantize(ub)
        ic.update(up)
        want.append(int(up[0]) * sc.scales.inv_L)
    assert seen == want


# ---------------------------------------------------------------- processes

def test_controller_process_runs_without_key(tmp_path):
    doc = json.load(open(shipped_scenario_path()))
    doc["horizon"] = 30
    scen = tmp_path / "scen.json"
    scen.write_text(json.dumps(doc))
    enc = tmp_path / "enc"
    subprocess.run([sys.executable, "-m", "ectl", "encrypt", "--scenario", str(scen),
                    "--out", str(enc)], check=True, capture_output=True)
    # the controller runs from a directory that holds no key
    ctl_dir = tmp_path / "controller_side"
    ctl_dir.mkdir()
    shutil.move(str(enc / "controller.bin"), ctl_dir / "controller.bin")
    key = tmp_path / "plant_side" / "key.bin"
    key.parent.mkdir()
    shutil.move(str(enc / "key.bin"), key)
    proc = subprocess.Popen([sys.executable, "-m", "ectl", "serve-controller", "--controller",
                             "controller.bin", "--max-sessions", "1"], cwd=ctl_dir,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        addr = json.loads(line)["listening"]
        assert not any(f.suffix == ".bin" and f.name != "controller.bin"
                       for f in ctl_dir.iterdir())
        out = tmp_path / "net"
        subprocess.run([sys.executable, "-m", "ectl", "serve-plant", "--scenario", str(scen),
                        "--connect", addr, "--key", str(key), "--out", str(out)],
                       check=True, capture_output=True, timeout=120)
        proc.wait(30)
    finally:
        proc.kill()
    assert proc.returncode == 0
    sim = tmp_path / "sim"
    subprocess.run([sys.executable, "-m", "ectl", "simulate", "--scenario", str(scen),
                    "--mode", "encrypted", "--out", str(sim)], check=True, capture_output=True)
    assert (out / "encrypted.csv").read_bytes() == (sim / "encrypted.csv").read_bytes()
