"""Split deployment over TCP: key-holding plant side, key-free controller side.

Every frame is ``magic "ECTL" | version u8 | type u8 | step u64 | len u32``
followed by ``len`` payload bytes (little endian).  Ciphertext payloads are
flat streams of 8-byte residues; HELLO and BYE carry UTF-8 JSON.

One sampling instant is exactly one exchange::

    plant -> SENSOR(t)  [y ciphertexts, r ciphertexts]
    ctrl  -> ACTUATE(t) [u ciphertexts]
    plant -> REENC(t)   [re-encrypted u ciphertexts]
"""
from __future__ import annotations

import json
import logging
import socket
import struct
from dataclasses import dataclass

import numpy as np

from .serial import decode_residues, encode_residues
from .zq_lwe import SecretKey

log = logging.getLogger(__name__)

MAGIC = b"ECTL"
VERSION = 1
HELLO, SENSOR, ACTUATE, REENC, BYE = 1, 2, 3, 4, 5
TYPE_NAMES = {HELLO: "HELLO", SENSOR: "SENSOR", ACTUATE: "ACTUATE", REENC: "REENC", BYE: "BYE"}
_FRAME = struct.Struct("<4sBBQI")
MAX_PAYLOAD = 1 << 30


class ProtocolError(RuntimeError):
    """Malformed frame, unexpected message or step mismatch."""

    def __init__(self, msg, step=None):
        super().__init__(msg if step is None else f"step {step}: {msg}")
        self.step = step


class KeyMaterialError(RuntimeError):
    """Secret-key material found on the controller side."""


@dataclass(frozen=True)
class Frame:
    msg_type: int
    step: int
    payload: bytes = b""

    def pack(self) -> bytes:
        return _FRAME.pack(MAGIC, VERSION, self.msg_type, self.step, len(self.payload)) + self.payload

    @classmethod
    def unpack(cls, buf: bytes) -> "Frame":
        if len(buf) < _FRAME.size:
            raise ProtocolError("truncated frame header")
        magic, ver, typ, step, n = _FRAME.unpack_from(buf)
        _check_header(magic, ver, typ, n)
        payload = buf[_FRAME.size:]
        if len(payload) != n:
            raise ProtocolError(f"payload length {len(payload)} != declared {n}", step)
        return cls(typ, step, payload)


def _check_header(magic, ver, typ, n):
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if ver != VERSION:
        raise ProtocolError(f"unsupported version {ver}")
    if typ not in TYPE_NAMES:
        raise ProtocolError(f"unknown message type {typ}")
    if n > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {n} bytes exceeds limit")


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    while n:
        b = sock.recv(min(n, 1 << 20))
        if not b:
            raise ConnectionError("peer closed the connection")
        chunks.append(b)
        n -= len(b)
    return b"".join(chunks)


def send_frame(sock, frame: Frame):
    sock.sendall(frame.pack())


def recv_frame(sock) -> Frame:
    magic, ver, typ, step, n = _FRAME.unpack(_recv_exact(sock, _FRAME.size))
    _check_header(magic, ver, typ, n)
    return Frame(typ, step, _recv_exact(sock, n) if n else b"")


def expect(sock, msg_type: int, step: int | None = None) -> Frame:
    f = recv_frame(sock)
    if f.msg_type == BYE and msg_type != BYE:
        raise ProtocolError(f"peer closed: {f.payload.decode(errors='replace')}", f.step)
    if f.msg_type != msg_type:
        raise ProtocolError(f"expected {TYPE_NAMES[msg_type]}, got {TYPE_NAMES[f.msg_type]}", f.step)
    if step is not None and f.step != step:
        raise ProtocolError(f"out-of-order step index {f.step}, expected {step}", step)
    return f


def cipher_payload(c, q: int) -> bytes:
    return encode_residues(np.asarray(c, dtype=np.uint64).ravel())


def parse_ciphers(frame: Frame, count: int, width: int, q: int) -> np.ndarray:
    """Residues of ``count`` LWE ciphertexts, validated against ``q``."""
    if len(frame.payload) != 8 * count * width:
        raise ProtocolError(f"{TYPE_NAMES[frame.msg_type]} payload has {len(frame.payload)} "
                            f"bytes, expected {8 * count * width}", frame.step)
    c = decode_residues(frame.payload, (count, width))
    if c.size and int(c.max()) >= q:
        raise ProtocolError("residue out of range", frame.step)
    return c


def json_payload(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode()


# ---------------------------------------------------------------- handshake

def hello_info(params, dims, scales, window, step: int = 0) -> dict:
    """Compatibility record exchanged before step 0."""
    return {"q0": params.q0, "nu0": params.nu0, "d": params.d, "n": params.n,
            "backend": params.backend, "dims": list(dims), "scales": scales.to_json(),
            "window": window.to_json(), "step": int(step)}


def _mismatch(mine: dict, theirs: dict):
    for k in ("q0", "nu0", "d", "n", "backend", "dims", "scales", "window"):
        if mine.get(k) != theirs.get(k):
            return f"{k} mismatch: {theirs.get(k)!r} != {mine.get(k)!r}"
    if mine["step"] != theirs.get("step"):
        return f"step index {theirs.get('step')} does not match controller step {mine['step']}"
    return None


def assert_key_free(obj, _seen=None):
    """Raise if any secret key is reachable from ``obj``."""
    _seen = set() if _seen is None else _seen
    if id(obj) in _seen:
        return
    _seen.add(id(obj))
    if isinstance(obj, SecretKey):
        raise KeyMaterialError("controller object graph holds a secret key")
    if isinstance(obj, dict):
        for v in obj.values():
            assert_key_free(v, _seen)
    elif isinstance(obj, (list, tuple, set)):
        for v in obj:
            assert_key_free(v, _seen)
    elif hasattr(obj, "__dict__"):
        for v in vars(obj).values():
            assert_key_free(v, _seen)


# ---------------------------------------------------------------- controller

def _session(conn, ectl) -> bool:
    """Serve one plant connection; True when the plant ended with BYE."""
    p = ectl.params
    n, ny, nr, m = ectl.dims
    w = p.width
    mine = hello_info(p, ectl.dims, ectl.scales, ectl.window, ectl.step)
    hello = expect(conn, HELLO)
    theirs = json.loads(hello.payload)
    reason = _mismatch(mine, theirs)
    if reason:
        send_frame(conn, Frame(BYE, ectl.step, json_payload({"error": reason})))
        log.warning("rejected plant: %s", reason)
        return False
    send_frame(conn, Frame(HELLO, ectl.step, json_payload(mine)))
    while True:
        f = recv_frame(conn)
        if f.msg_type == BYE:
            log.info("plant finished at step %d", ectl.step)
            return True
        if f.msg_type != SENSOR:
            raise ProtocolError(f"expected SENSOR, got {TYPE_NAMES[f.msg_type]}", f.step)
        if f.step != ectl.step:
            raise ProtocolError(f"out-of-order step index {f.step}, expected {ectl.step}", f.step)
        c = parse_ciphers(f, ny + nr, w, p.q)
        uE = ectl.output(c[:ny], c[ny:])
        send_frame(conn, Frame(ACTUATE, f.step, cipher_payload(uE, p.q)))
        re = expect(conn, REENC, f.step)
        ectl.update(parse_ciphers(re, m, w, p.q))


def serve_controller(listen_addr, ectl, max_sessions: int | None = None, on_listen=None):
    """Run the controller side until a plant finishes with BYE.

    A broken connection or protocol violation ends that session only; the
    encrypted state is kept and the next plant must resume at the same step
    index.

    Parameters
    ----------
    listen_addr : (host, port)
        Port 0 picks a free port; ``on_listen`` receives the bound address.
    ectl : EncryptedController
        Must not reference any secret key.
    """
    assert_key_free(ectl)
    with socket.create_server(tuple(listen_addr)) as srv:
        if on_listen is not None:
            on_listen(srv.getsockname())
        sessions = 0
        while max_sessions is None or sessions < max_sessions:
            conn, peer = srv.accept()
            sessions += 1
            with conn:
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                try:
                    if _session(conn, ectl):
                        return ectl
                except (ProtocolError, ConnectionError, OSError, ValueError) as e:
                    log.warning("session from %s aborted: %s", peer, e)
    return ectl


# ---------------------------------------------------------------- plant

class NetworkLink:
    """Plant-side link: one SENSOR/ACTUATE/REENC exchange per instant."""

    def __init__(self, sock, params, dims):
        self.sock = sock
        self.params = params
        self.m = dims[3]

    def output(self, t, yE, rE):
        p = self.params
        send_frame(self.sock, Frame(SENSOR, t, cipher_payload(np.concatenate([yE, rE]), p.q)))
        return parse_ciphers(expect(self.sock, ACTUATE, t), self.m, p.width, p.q)

    def update(self, t, reenc):
        send_frame(self.sock, Frame(REENC, t, cipher_payload(reenc, self.params.q)))


def connect_plant(connect_addr, info: dict, timeout: float, handshake_timeout: float = 30.0):
    """Open the link and complete the HELLO exchange."""
    sock = socket.create_connection(tuple(connect_addr), timeout=handshake_timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    try:
        send_frame(sock, Frame(HELLO, info["step"], json_payload(info)))
        reply = expect(sock, HELLO)
        reason = _mismatch(info, json.loads(reply.payload))
        if reason:
            raise ProtocolError(f"controller incompatible: {reason}")
    except BaseException:
        sock.close()
        raise
    sock.settimeout(timeout)
    return sock


def serve_plant(connect_addr, plant, codec, dims, horizon: int, reference=None,
                timeout: float | None = None, ring=None, oracle=None, realtime=False):
    """Run the plant side for ``horizon`` instants over TCP and return the trace.

    ``timeout`` (default ``5 Ts``) bounds every wait for the controller.
    """
    from .plant_sim.runner import EncryptedLoop, run_closed_loop

    timeout = 5 * plant.Ts if timeout is None else timeout
    info = hello_info(codec.params, dims, codec.scales, codec.window)
    sock = connect_plant(connect_addr, info, timeout)
    with sock:
        loop = EncryptedLoop(NetworkLink(sock, codec.params, dims), codec,
                             ring=None, oracle=oracle)
        trace = run_closed_loop(plant, loop, horizon, reference, nr=dims[2], realtime=realtime)
        send_frame(sock, Frame(BYE, horizon, json_payload({"steps": horizon})))
    return trace
