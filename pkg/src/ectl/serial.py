"""Binary container for keys, ciphertexts and encrypted controllers.

Every file starts with the magic ``ECT1`` followed by the parameter header
``q0, nu0, d, n`` and ``backend``.  Arrays are written as a kind tag, a
shape, and little-endian uint64 residues.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

from .zq_lwe import GswMatrix, LweParams, SecretKey, centered

MAGIC = b"ECT1"
_HDR = struct.Struct("<4sBBBIB")  # magic, q0, nu0, d, n, backend
_BACKEND_CODE = {"lwe": 0, "debug": 1}
_BACKEND_NAME = {v: k for k, v in _BACKEND_CODE.items()}

KIND_KEY = 1
KIND_CIPHERTEXTS = 2
KIND_CONTROLLER = 3


class FormatError(ValueError):
    """Malformed or incompatible serialized object."""


def encode_residues(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<u8").tobytes()


def decode_residues(buf: bytes, shape) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64))
    if len(buf) != 8 * count:
        raise FormatError(f"expected {8 * count} bytes of residues, got {len(buf)}")
    return np.frombuffer(buf, dtype="<u8").astype(np.uint64).reshape(shape)


def _write_header(f, params: LweParams, kind: int):
    f.write(_HDR.pack(MAGIC, params.q0, params.nu0, params.d, params.n,
                      _BACKEND_CODE[params.backend]))
    f.write(struct.pack("<B", kind))


def _read_header(f, kind: int):
    raw = f.read(_HDR.size + 1)
    if len(raw) != _HDR.size + 1:
        raise FormatError("truncated header")
    magic, q0, nu0, d, n, backend = _HDR.unpack(raw[:-1])
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    got = raw[-1]
    if got != kind:
        raise FormatError(f"expected object kind {kind}, found {got}")
    return q0, nu0, d, n, _BACKEND_NAME.get(backend)


def _write_array(f, a: np.ndarray):
    f.write(struct.pack("<B", a.ndim))
    f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    f.write(encode_residues(a))


def _read_array(f) -> np.ndarray:
    (ndim,) = struct.unpack("<B", f.read(1))
    shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
    count = int(np.prod(shape, dtype=np.int64))
    return decode_residues(f.read(8 * count), shape)


def _params_from(meta, q0, nu0, d, n, backend) -> LweParams:
    p = LweParams(q0, nu0, n, float(meta["sigma"]), int(meta["k0"]), backend=backend)
    if p.d != d:
        raise FormatError("inconsistent digit count in header")
    return p


def _write_meta(f, meta: dict):
    raw = json.dumps(meta, sort_keys=True).encode()
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_meta(f) -> dict:
    (ln,) = struct.unpack("<I", f.read(4))
    return json.loads(f.read(ln).decode())


def dump_key(sk: SecretKey, path):
    with open(path, "wb") as f:
        _write_header(f, sk.params, KIND_KEY)
        _write_meta(f, {"sigma": sk.params.sigma, "k0": sk.params.k0})
        _write_array(f, sk.residues)


def load_key(path) -> SecretKey:
    with open(path, "rb") as f:
        hdr = _read_header(f, KIND_KEY)
        meta = _read_meta(f)
        params = _params_from(meta, *hdr)
        s = centered(_read_array(f), params.q) if params.n else np.zeros(0, np.int64)
    return SecretKey(params, s.astype(np.int64))


def dump_ciphertexts(c: np.ndarray, params: LweParams) -> bytes:
    f = io.BytesIO()
    _write_header(f, params, KIND_CIPHERTEXTS)
    _write_meta(f, {"sigma": params.sigma, "k0": params.k0})
    _write_array(f, np.asarray(c, dtype=np.uint64))
    return f.getvalue()


def load_ciphertexts(buf: bytes):
    f = io.BytesIO(buf)
    hdr = _read_header(f, KIND_CIPHERTEXTS)
    params = _params_from(_read_meta(f), *hdr)
    return _read_array(f), params


def dump_controller(ectl, path):
    """Write an encrypted controller (no key material) to ``path``."""
    p = ectl.params
    with open(path, "wb") as f:
        _write_header(f, p, KIND_CONTROLLER)
        _write_meta(f, {"sigma": p.sigma, "k0": p.k0, **ectl.metadata()})
        _write_array(f, ectl.out_block.data)
        _write_array(f, ectl.state_block.data)
        _write_array(f, ectl.z)


def load_controller(path):
    from .controllers import EncryptedController

    with open(path, "rb") as f:
        hdr = _read_header(f, KIND_CONTROLLER)
        meta = _read_meta(f)
        params = _params_from(meta, *hdr)
        out_block = GswMatrix(_read_array(f), params)
        state_block = GswMatrix(_read_array(f), params)
        z = _read_array(f)
    return EncryptedController.from_parts(params, out_block, state_block, z, meta)
