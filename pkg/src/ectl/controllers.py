"""Controller realizations from quantized plaintext down to encrypted.

Every realization follows the same output-first schedule inside one
sampling instant::

    u = ctl.output(y, r)      # sent to the actuator
    ctl.update(u_feedback)    # state update with the re-quantized output

``output`` caches its inputs so that ``update`` uses the same ``y`` and
``r``.  The ``step_*`` helpers run both halves with the feedback computed
locally, which is how the plaintext realizations are driven.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import zq_lwe as zq
from .convert import ConversionResult, GivenController, converted_inputs
from .quantize import (OutputWindow, ScaleSet, biased_mod, quantize_signal,
                       recover_u, round_fraction, round_pow2, scale_matrix)


class IntegerOverflowError(OverflowError):
    """A value exceeded the declared working integer width."""


class ControllerShapeError(ValueError):
    """Inputs do not match the controller dimensions."""


def _ints(a) -> np.ndarray:
    """Object array of Python ints (exact, unbounded)."""
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = int(v)
    return out


def int_round(M, exp: int) -> np.ndarray:
    """``round(M * 2**exp)`` of a float matrix as exact Python ints."""
    M = np.asarray(M, dtype=float)
    scaled = np.ldexp(M, exp)
    r = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return _ints(r)


def _dot(A, x) -> np.ndarray:
    A = np.asarray(A, dtype=object)
    x = np.asarray(x, dtype=object)
    if A.shape[1] == 0:
        return np.array([0] * A.shape[0], dtype=object)
    return A.dot(x)


def _check_width(values, bits):
    if bits is None:
        return
    lim = 1 << (bits - 1)
    for v in np.ravel(values):
        if not -lim <= int(v) < lim:
            raise IntegerOverflowError(f"value {int(v)} exceeds {bits}-bit working width")


def _vec(x, k, name):
    x = np.ravel(np.asarray(x))
    if x.shape != (k,):
        raise ControllerShapeError(f"{name} must have length {k}, got {x.shape}")
    return x


# ---------------------------------------------------------------- quantized

class QuantizedController:
    """Integer controller with per-step truncation of the state product.

    ``x(t+1) = round(s1 Fb x) + Gb y + Pb r``, ``u = Hb x + Jb y + Qb r``.
    """

    def __init__(self, ctl: GivenController, scales: ScaleSet, int_bits: int | None = 64):
        e = ctl.exact
        self.scales = scales
        self.Fb = scale_matrix(e["F"], scales.inv_s1)
        self.Gb = scale_matrix(e["G"], scales.inv_s1)
        self.Pb = scale_matrix(e["P"], scales.inv_s1)
        self.Hb = scale_matrix(e["H"], scales.inv_s2)
        self.Jb = scale_matrix(e["J"], scales.inv_s1 * scales.inv_s2)
        self.Qb = scale_matrix(e["Q"], scales.inv_s1 * scales.inv_s2)
        x0_scale = Fraction(2) ** -(scales.r1_exp + scales.s1_exp)
        self.x = np.array([round_fraction(v * x0_scale) for v in e["x0"]] or [], dtype=object)
        self.int_bits = int_bits
        self.dims = (ctl.n, ctl.p, ctl.nr, ctl.m)
        self._yr = None

    def output(self, y_bar, r_bar) -> np.ndarray:
        n, p, nr, m = self.dims
        y = _ints(_vec(y_bar, p, "y_bar"))
        r = _ints(_vec(r_bar, nr, "r_bar"))
        self._yr = (y, r)
        u = _dot(self.Hb, self.x) + _dot(self.Jb, y) + _dot(self.Qb, r)
        _check_width(u, self.int_bits)
        return u

    def update(self, u_feedback=None):
        y, r = self._yr
        self.x = round_pow2(_dot(self.Fb, self.x), self.scales.s1_exp) \
            + _dot(self.Gb, y) + _dot(self.Pb, r)
        _check_width(self.x, self.int_bits)

    def recover(self, u_bar) -> np.ndarray:
        return recover_u(u_bar, self.scales)


def step_quantized(ctl: QuantizedController, y_bar, r_bar) -> np.ndarray:
    u = ctl.output(y_bar, r_bar)
    ctl.update()
    return u


# ---------------------------------------------------------------- integer

class IntegerController:
    """Converted controller over unbounded integers.

    ``z(t+1) = F' z + G' y + P' r + R u'``, ``u = H' z + J y + Q r`` with
    ``u' = round(s1 s2 u)``.
    """

    def __init__(self, Fp, Gp, Pp, Rbar, Hbar, Jbar, Qbar, z0, scales: ScaleSet,
                 int_bits: int | None = None):
        self.Fp, self.Gp, self.Pp, self.Rbar = map(_ints, (Fp, Gp, Pp, Rbar))
        self.Hbar, self.Jbar, self.Qbar = map(_ints, (Hbar, Jbar, Qbar))
        self.z = _ints(np.ravel(z0))
        self.scales = scales
        self.int_bits = int_bits
        self._yr = None

    @property
    def dims(self):
        return self.Fp.shape[0], self.Gp.shape[1], self.Pp.shape[1], self.Hbar.shape[0]

    def requantize(self, u_bar) -> np.ndarray:
        return _ints(round_pow2(_ints(u_bar), self.scales.s1_exp + self.scales.s2_exp))

    def output(self, y_bar, r_bar) -> np.ndarray:
        n, p, nr, m = self.dims
        y = _ints(_vec(y_bar, p, "y_bar"))
        r = _ints(_vec(r_bar, nr, "r_bar"))
        self._yr = (y, r)
        u = _dot(self.Hbar, self.z) + _dot(self.Jbar, y) + _dot(self.Qbar, r)
        _check_width(u, self.int_bits)
        return u

    def update(self, u_prime):
        y, r = self._yr
        up = _ints(_vec(u_prime, self.dims[3], "u_prime"))
        self.z = _dot(self.Fp, self.z) + _dot(self.Gp, y) + _dot(self.Pp, r) + _dot(self.Rbar, up)
        _check_width(self.z, self.int_bits)

    def to_ring(self, window: OutputWindow) -> "RingController":
        return RingController(self, window)

    def copy(self) -> "IntegerController":
        c = IntegerController(self.Fp, self.Gp, self.Pp, self.Rbar, self.Hbar, self.Jbar,
                              self.Qbar, self.z, self.scales, self.int_bits)
        return c


def build_integer(ctl: GivenController, conv: ConversionResult, scales: ScaleSet,
                  int_bits: int | None = None) -> IntegerController:
    """Scale the converted realization to integers."""
    Gc, Pc = converted_inputs(ctl, conv)
    s1, s2 = scales.s1_exp, scales.s2_exp
    z0 = conv.T @ ctl.x0
    return IntegerController(
        conv.Fp, int_round(Gc, -s1), int_round(Pc, -s1), int_round(conv.R, -s1),
        int_round(conv.Hp, -s2), int_round(ctl.J, -s1 - s2), int_round(ctl.Q, -s1 - s2),
        int_round(z0, -(scales.r1_exp + s1)), scales, int_bits)


def step_integer(ctl: IntegerController, y_bar, r_bar, u_feedback=None) -> np.ndarray:
    """One instant: output, then update with ``u_feedback`` or ``round(s1 s2 u)``."""
    u = ctl.output(y_bar, r_bar)
    ctl.update(ctl.requantize(u) if u_feedback is None else u_feedback)
    return u


# ---------------------------------------------------------------- ring

class RingController:
    """The integer controller scaled by ``1/L`` and reduced modulo ``q``.

    Inputs enter as ``y/L mod q``; the output residue is mapped into the
    window by the actuator.
    """

    def __init__(self, ictl: IntegerController, window: OutputWindow):
        q = window.q
        self.q = q
        self.mask = np.uint64(q - 1)
        self.window = window
        self.scales = ictl.scales
        res = lambda M: zq.to_residue(np.asarray(M, dtype=object), q)
        self.Fp, self.Gp, self.Pp, self.Rbar = map(res, (ictl.Fp, ictl.Gp, ictl.Pp, ictl.Rbar))
        self.Hbar, self.Jbar, self.Qbar = map(res, (ictl.Hbar, ictl.Jbar, ictl.Qbar))
        self.z = zq.to_residue(_ints(ictl.z) * self.scales.inv_L, q)
        self.dims = ictl.dims
        self._yr = None

    def scale_input(self, v_bar) -> np.ndarray:
        """``v / L mod q`` for integer codes ``v``."""
        return zq.to_residue(_ints(np.ravel(v_bar)) * self.scales.inv_L, self.q)

    def output_ring(self, y_ring, r_ring) -> np.ndarray:
        y_ring = np.asarray(y_ring, dtype=np.uint64)
        r_ring = np.asarray(r_ring, dtype=np.uint64)
        self._yr = (y_ring, r_ring)
        return (self.Hbar @ self.z + self.Jbar @ y_ring + self.Qbar @ r_ring) & self.mask

    def output(self, y_bar, r_bar) -> np.ndarray:
        n, p, nr, m = self.dims
        return self.output_ring(self.scale_input(_vec(y_bar, p, "y_bar")),
                                self.scale_input(_vec(r_bar, nr, "r_bar")))

    def update(self, u_ring_feedback):
        y, r = self._yr
        v = np.asarray(u_ring_feedback, dtype=np.uint64)
        self.z = (self.Fp @ self.z + self.Gp @ y + self.Pp @ r + self.Rbar @ v) & self.mask

    def windowed(self, u_ring) -> np.ndarray:
        return biased_mod(u_ring, self.window)

    def feedback(self, u_ring) -> np.ndarray:
        """Ring encoding of ``round(L s1 s2 u~) / L`` from a raw output residue."""
        return feedback_residue(self.windowed(u_ring), self.scales, self.q, "paper")


def feedback_value(u_win, scales: ScaleSet, rule: str = "paper") -> np.ndarray:
    """Integer re-quantized output from the windowed ring output.

    ``paper``: ``round(L s1 s2 u~)``, to be re-entered divided by ``L``.
    ``footnote``: ``round(s1 s2 u~)``, re-entered as is.
    """
    shift = scales.s1_exp + scales.s2_exp + (scales.L_exp if rule == "paper" else 0)
    if rule not in ("paper", "footnote"):
        raise ValueError(f"unknown re-encryption rule {rule!r}")
    return _ints(round_pow2(_ints(u_win), shift))


def feedback_residue(u_win, scales: ScaleSet, q: int, rule: str = "paper") -> np.ndarray:
    v = feedback_value(u_win, scales, rule)
    if rule == "paper":
        v = v * scales.inv_L
    return zq.to_residue(v, q)


def step_ring(ctl: RingController, y_bar, r_bar, u_feedback=None) -> np.ndarray:
    """One instant of the ring controller; returns the raw output residues."""
    u = ctl.output(y_bar, r_bar)
    ctl.update(ctl.feedback(u) if u_feedback is None else u_feedback)
    return u


# ---------------------------------------------------------------- encrypted

class EncryptedController:
    """Ring controller evaluated on ciphertexts.

    Matrices are stored as two fused GSW blocks: ``[H' J Q]`` for the output
    and ``[F' G' P' R]`` for the state update.  The object holds no key.
    """

    def __init__(self, params: zq.LweParams, out_block: zq.GswMatrix,
                 state_block: zq.GswMatrix, z, dims, scales: ScaleSet,
                 window: OutputWindow, step: int = 0):
        self.params = params
        self.out_block = out_block
        self.state_block = state_block
        self.z = np.asarray(z, dtype=np.uint64)
        self.dims = tuple(int(d) for d in dims)
        self.scales = scales
        self.window = window
        self.step = step
        self._yr = None
        n, p, nr, m = self.dims
        if out_block.shape != (m, n + p + nr) or state_block.shape != (n, n + p + nr + m):
            raise ControllerShapeError("GSW block shapes do not match the dimensions")

    def output(self, yE, rE) -> np.ndarray:
        n, p, nr, m = self.dims
        yE = np.asarray(yE, dtype=np.uint64).reshape(p, self.params.width)
        rE = np.asarray(rE, dtype=np.uint64).reshape(nr, self.params.width)
        self._yr = (yE, rE)
        return self.out_block.matvec(np.concatenate([self.z, yE, rE]))

    def update(self, uE_reenc):
        yE, rE = self._yr
        m = self.dims[3]
        u = np.asarray(uE_reenc, dtype=np.uint64).reshape(m, self.params.width)
        self.z = self.state_block.matvec(np.concatenate([self.z, yE, rE, u]))
        self.step += 1

    def metadata(self) -> dict:
        return {"dims": list(self.dims), "scales": self.scales.to_json(),
                "window": self.window.to_json(), "step": self.step}

    @classmethod
    def from_parts(cls, params, out_block, state_block, z, meta) -> "EncryptedController":
        return cls(params, out_block, state_block, z, meta["dims"],
                   ScaleSet.from_json(meta["scales"]), OutputWindow.from_json(meta["window"]),
                   int(meta.get("step", 0)))


class AdditiveController(EncryptedController):
    """Variant with plaintext integer matrices; only additions and scalar products."""

    def __init__(self, params, out_mat, state_mat, z, dims, scales, window, step=0):
        self.params = params
        self.out_mat = zq.to_residue(np.asarray(out_mat, dtype=object), params.q)
        self.state_mat = zq.to_residue(np.asarray(state_mat, dtype=object), params.q)
        self.z = np.asarray(z, dtype=np.uint64)
        self.dims = tuple(dims)
        self.scales = scales
        self.window = window
        self.step = step
        self._yr = None

    def output(self, yE, rE):
        n, p, nr, m = self.dims
        yE = np.asarray(yE, dtype=np.uint64).reshape(p, self.params.width)
        rE = np.asarray(rE, dtype=np.uint64).reshape(nr, self.params.width)
        self._yr = (yE, rE)
        return zq.plain_matvec(self.out_mat, np.concatenate([self.z, yE, rE]), self.params)

    def update(self, uE_reenc):
        yE, rE = self._yr
        u = np.asarray(uE_reenc, dtype=np.uint64).reshape(self.dims[3], self.params.width)
        self.z = zq.plain_matvec(self.state_mat, np.concatenate([self.z, yE, rE, u]), self.params)
        self.step += 1


def _blocks(ring: RingController):
    out = np.hstack([ring.Hbar, ring.Jbar, ring.Qbar])
    state = np.hstack([ring.Fp, ring.Gp, ring.Pp, ring.Rbar])
    return out, state


def _check_modulus(ring: RingController, params: zq.LweParams):
    if ring.q != params.q:
        raise zq.ParameterError(
            f"ring modulus {ring.q} differs from the cryptosystem modulus {params.q}")


def encrypt_controller(ring: RingController, sk: zq.SecretKey,
                       rng: np.random.Generator) -> EncryptedController:
    """GSW-encrypt every matrix and LWE-encrypt the initial state."""
    params = sk.params
    _check_modulus(ring, params)
    out, state = _blocks(ring)
    out_e = zq.encrypt_matrix(out, sk, params, rng)
    state_e = zq.encrypt_matrix(state, sk, params, rng)
    z = zq.encrypt(ring.z, sk, params, rng)
    return EncryptedController(params, out_e, state_e, z, ring.dims, ring.scales, ring.window)


def additive_controller(ring: RingController, sk: zq.SecretKey,
                        rng: np.random.Generator) -> AdditiveController:
    params = sk.params
    _check_modulus(ring, params)
    out, state = _blocks(ring)
    z = zq.encrypt(ring.z, sk, params, rng)
    return AdditiveController(params, out.astype(object), state.astype(object), z,
                              ring.dims, ring.scales, ring.window)


# ---------------------------------------------------------------- actuator

class ActuatorCodec:
    """Plant-side encryption of measurements and decoding of control inputs."""

    def __init__(self, sk: zq.SecretKey, window: OutputWindow, scales: ScaleSet,
                 rng: np.random.Generator, rule: str = "paper"):
        if window.q != sk.params.q:
            raise zq.ParameterError("window modulus differs from the cryptosystem modulus")
        if rule not in ("paper", "footnote"):
            raise ValueError(f"unknown re-encryption rule {rule!r}")
        self.sk = sk
        self.params = sk.params
        self.window = window
        self.scales = scales
        self.rng = rng
        self.rule = rule

    def quantize_inputs(self, y, r):
        return (quantize_signal(np.ravel(y), self.scales.r1),
                quantize_signal(np.ravel(r), self.scales.r1))

    def encrypt_codes(self, codes) -> np.ndarray:
        v = _ints(np.ravel(codes)) * self.scales.inv_L
        return zq.encrypt(zq.to_residue(v, self.params.q), self.sk, self.params, self.rng)

    def decode(self, uE):
        """Decrypt, window, recover the real input and re-encrypt it.

        Returns
        -------
        u_real : ndarray
        uE_reenc : ndarray
        u_win : ndarray of int
            Windowed decrypted output in ring units.
        """
        dec = zq.decrypt(uE, self.sk, self.params)
        u_win = biased_mod(dec, self.window)
        u_real = recover_u(u_win, self.scales, extra_exp=self.scales.L_exp)
        fb = feedback_residue(u_win, self.scales, self.params.q, self.rule)
        return u_real, zq.encrypt(fb, self.sk, self.params, self.rng), u_win


def actuator_decode(uE, codec: ActuatorCodec):
    u_real, reenc, _ = codec.decode(uE)
    return u_real, reenc


def step_encrypted(ctl: EncryptedController, yE, rE, codec: ActuatorCodec):
    """One instant with the actuator exchange done in-process."""
    uE = ctl.output(yE, rE)
    u_real, reenc, u_win = codec.decode(uE)
    ctl.update(reenc)
    return u_real, uE


step_additive = step_encrypted


# ---------------------------------------------------------------- real-valued

class ConvertedRealController:
    """Converted realization in floating point, fed with its own output."""

    def __init__(self, ctl: GivenController, conv: ConversionResult):
        self.Fp = conv.Fp.astype(float)
        self.Gc, self.Pc = converted_inputs(ctl, conv)
        self.R = conv.R
        self.Hp = conv.Hp
        self.J, self.Q = ctl.J, ctl.Q
        self.z = conv.T @ ctl.x0
        self._yr = None

    def output(self, y, r):
        y, r = np.ravel(y).astype(float), np.ravel(r).astype(float)
        self._yr = (y, r)
        return self.Hp @ self.z + self.J @ y + self.Q @ r

    def update(self, u):
        y, r = self._yr
        self.z = self.Fp @ self.z + self.Gc @ y + self.Pc @ r + self.R @ np.ravel(u)


class IdealController:
    """The given controller in floating point."""

    def __init__(self, ctl: GivenController):
        self.F, self.G, self.P, self.H, self.J, self.Q = ctl.F, ctl.G, ctl.P, ctl.H, ctl.J, ctl.Q
        self.x = ctl.x0.copy()
        self._yr = None

    def output(self, y, r):
        y, r = np.ravel(y).astype(float), np.ravel(r).astype(float)
        self._yr = (y, r)
        return self.H @ self.x + self.J @ y + self.Q @ r

    def update(self, u=None):
        y, r = self._yr
        self.x = self.F @ self.x + self.G @ y + self.P @ r
