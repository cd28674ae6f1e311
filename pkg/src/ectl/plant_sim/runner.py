"""Closed-loop simulation of a sampled plant with any controller realization."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .. import zq_lwe as zq
from ..controllers import (ActuatorCodec, ConvertedRealController, IdealController,
                           IntegerController, QuantizedController, RingController,
                           feedback_residue)
from ..quantize import WindowOverflow, biased_mod, quantize_signal, recover_u
from .plant import PlantLti

MODES = ("ideal", "converted", "quantized", "integer", "ring", "encrypted", "additive")


class EquivalenceError(AssertionError):
    """Two realizations that must agree exactly did not."""


@dataclass
class Trace:
    """Per-step record of a closed-loop run."""

    mode: str
    Ts: float
    y: list = field(default_factory=list)
    u: list = field(default_factory=list)
    r: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    step_seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def record(self, y, u, r, extras=None):
        self.y.append(np.array(y, dtype=float))
        self.u.append(np.array(u, dtype=float))
        self.r.append(np.array(r, dtype=float))
        for k, v in (extras or {}).items():
            self.extras.setdefault(k, []).append(v)

    @property
    def Y(self) -> np.ndarray:
        return np.array(self.y)

    @property
    def U(self) -> np.ndarray:
        return np.array(self.u)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.y)) * self.Ts

    def extra(self, name) -> np.ndarray:
        return np.array(self.extras[name])

    def errors_vs(self, ref: "Trace"):
        """Per-step infinity-norm errors of ``y`` and ``u`` against ``ref``."""
        k = min(len(self), len(ref))
        ey = np.abs(self.Y[:k] - ref.Y[:k]).max(axis=1)
        eu = np.abs(self.U[:k] - ref.U[:k]).max(axis=1)
        return ey, eu

    def to_csv(self, path, ref: "Trace | None" = None):
        names = sorted(self.extras)
        header = ["t", "time_s", "mode"]
        header += [f"y{i}" for i in range(self.Y.shape[1])]
        header += [f"u{i}" for i in range(self.U.shape[1])]
        header += [f"r{i}" for i in range(np.array(self.r).shape[1])]
        if ref is not None:
            header += ["err_y", "err_u"]
            ey, eu = self.errors_vs(ref)
        widths = {k: len(np.ravel(self.extras[k][0])) for k in names}
        for k in names:
            header += [k] if widths[k] == 1 else [f"{k}{i}" for i in range(widths[k])]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for t in range(len(self)):
                row = [t, repr(t * self.Ts), self.mode]
                row += [repr(float(v)) for v in self.y[t]]
                row += [repr(float(v)) for v in self.u[t]]
                row += [repr(float(v)) for v in self.r[t]]
                if ref is not None:
                    row += [repr(float(ey[t])), repr(float(eu[t]))]
                for k in names:
                    row += [_fmt(v) for v in np.ravel(self.extras[k][t])]
                w.writerow(row)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def make_reference(source, nr: int = 1):
    """Reference as a function of the step index.

    ``source`` is a callable, a constant vector, or a schedule
    ``[[t_start, value], ...]`` of piecewise-constant segments.
    """
    if callable(source):
        return source
    if source is None:
        return lambda t: np.zeros(nr)
    arr = np.asarray(source, dtype=object)
    if arr.ndim == 2 and arr.shape[1] == 2 and isinstance(source[0], (list, tuple)):
        sched = sorted((int(a), np.ravel(np.asarray(b, dtype=float))) for a, b in source)

        def ref(t):
            val = sched[0][1]
            for t0, v in sched:
                if t >= t0:
                    val = v
            return val
        return ref
    const = np.ravel(np.asarray(source, dtype=float))
    return lambda t: const


# ---------------------------------------------------------------- loops

class IdealLoop:
    mode = "ideal"

    def __init__(self, ctl):
        self.c = IdealController(ctl)

    def control(self, t, y, r):
        u = self.c.output(y, r)
        self.c.update()
        return u, {}


class ConvertedLoop:
    mode = "converted"

    def __init__(self, ctl, conv):
        self.c = ConvertedRealController(ctl, conv)

    def control(self, t, y, r):
        u = self.c.output(y, r)
        self.c.update(u)
        return u, {}


class QuantizedLoop:
    mode = "quantized"

    def __init__(self, qctl: QuantizedController):
        self.c = qctl

    def control(self, t, y, r):
        sc = self.c.scales
        ub = self.c.output(quantize_signal(y, sc.r1), quantize_signal(r, sc.r1))
        self.c.update()
        return recover_u(ub, sc), {"u_bar": [int(v) for v in ub]}


class IntegerLoop:
    """Converted integer controller; optionally logs perturbation diagnostics.

    With ``diag = (ctl, conv)`` each step records ``e_z`` and ``e_u``, the
    differences between the integer controller (mapped to real units) and
    the unperturbed converted realization, together with the instantaneous
    bounds ``beta_z`` and ``beta_u``.
    """

    mode = "integer"

    def __init__(self, ictl: IntegerController, diag=None, bounds=None):
        self.c = ictl
        self.diag = diag
        self.bounds = bounds

    def control(self, t, y, r):
        sc = self.c.scales
        yb, rb = quantize_signal(y, sc.r1), quantize_signal(r, sc.r1)
        z_before = self.c.z.copy()
        ub = self.c.output(yb, rb)
        up = self.c.requantize(ub)
        self.c.update(up)
        u = recover_u(ub, sc)
        extras = {"u_bar": [int(v) for v in ub]}
        if self.diag is not None:
            extras.update(self._perturbations(y, r, u, ub, z_before))
        return u, extras

    def _perturbations(self, y, r, u, ub, z_before):
        from ..convert import converted_inputs
        from .bounds import beta_u, beta_z

        ctl, conv = self.diag
        sc = self.c.scales
        unit = 2.0 ** (sc.r1_exp + sc.s1_exp)
        z = np.array([float(v) for v in z_before]) * unit
        z_next = np.array([float(v) for v in self.c.z]) * unit
        Gc, Pc = converted_inputs(ctl, conv)
        u_lin = float(2.0 ** sc.u_exp) * np.array([float(v) for v in ub])
        e_z = z_next - (conv.Fp @ z + Gc @ y + Pc @ r + conv.R @ u_lin)
        e_u = u - (conv.Hp @ z + ctl.J @ y + ctl.Q @ r)
        out = {"e_z": float(np.abs(e_z).max()), "e_u": float(np.abs(e_u).max())}
        if self.bounds is not None:
            w = float(np.abs(np.concatenate([y, r, u])).max())
            out["beta_z"] = beta_z(w, sc.r1, sc.r2, sc.s1, sc.s2, self.bounds)
            out["beta_u"] = beta_u(float(np.abs(z).max()), sc.r1, sc.r2, sc.s2, self.bounds)
        return out


class RingLoop:
    """Ring controller checked against an unbounded-integer oracle.

    The oracle shares the measured inputs and computes its own feedback.
    Leaving the window raises :class:`WindowOverflow`; a disagreement
    inside the window raises :class:`EquivalenceError`.
    """

    mode = "ring"

    def __init__(self, rctl: RingController, oracle: IntegerController | None = None):
        self.c = rctl
        self.oracle = oracle

    def control(self, t, y, r):
        sc = self.c.scales
        yb, rb = quantize_signal(y, sc.r1), quantize_signal(r, sc.r1)
        u_ring = self.c.output(yb, rb)
        u_win = self.c.windowed(u_ring)
        self.c.update(feedback_residue(u_win, sc, self.c.q))
        extras = {"u_win": [int(v) for v in u_win],
                  "margin": self.c.window.margin(u_win)}
        if self.oracle is not None:
            ub = self.oracle.output(yb, rb)
            self.oracle.update(self.oracle.requantize(ub))
            target = [int(v) * sc.inv_L for v in ub]
            if not self.c.window.contains(target):
                raise WindowOverflow(t, target, self.c.window)
            if [int(v) for v in u_win] != target:
                raise EquivalenceError(f"ring output {list(u_win)} != integer {target} at step {t}")
            zc = zq.centered(self.c.z, self.c.q)
            zi = np.array([int(v) * sc.inv_L for v in self.oracle.z], dtype=object)
            extras["state_cut"] = int(any(int(a) != b for a, b in zip(zc, zi)))
        return recover_u(u_win, sc, extra_exp=sc.L_exp), extras


class LocalLink:
    """In-process stand-in for the network link to the controller."""

    def __init__(self, ectl):
        self.ectl = ectl

    def output(self, t, yE, rE):
        return self.ectl.output(yE, rE)

    def update(self, t, reenc):
        self.ectl.update(reenc)


class EncryptedLoop:
    """Plant side of the encrypted loop.

    ``link`` reaches the controller (in-process or over TCP).  With
    ``ring`` given, the decrypted controller state is compared against the
    plaintext ring recursion to log the injected errors ``Delta1`` and
    ``Delta2`` (simulation only, uses the key).  With ``oracle`` given, an
    unbounded-integer controller fed the same measurements checks that the
    output stays inside the window.
    """

    mode = "encrypted"

    def __init__(self, link, codec: ActuatorCodec, ring: RingController | None = None,
                 oracle: IntegerController | None = None, ectl=None):
        self.link = link
        self.codec = codec
        self.ring = ring
        self.oracle = oracle
        self.ectl = ectl if ectl is not None else getattr(link, "ectl", None)

    def control(self, t, y, r):
        codec = self.codec
        sc = codec.scales
        yb, rb = codec.quantize_inputs(y, r)
        yE = codec.encrypt_codes(yb)
        rE = codec.encrypt_codes(rb)
        z_dec = self._dec_state()
        uE = self.link.output(t, yE, rE)
        u_real, reenc, u_win = codec.decode(uE)
        self.link.update(t, reenc)
        extras = {"u_win": [int(v) for v in u_win], "margin": codec.window.margin(u_win)}
        if self.ring is not None and z_dec is not None:
            extras.update(self._deltas(yb, rb, z_dec, uE, reenc))
        if self.oracle is not None:
            ub = self.oracle.output(yb, rb)
            self.oracle.update(self.oracle.requantize(ub))
            target = [int(v) * sc.inv_L for v in ub]
            if not codec.window.contains(target):
                raise WindowOverflow(t, target, codec.window)
            extras["oracle_diff"] = max(abs(int(a) - b) for a, b in zip(u_win, target))
            if z_dec is not None:
                zc = zq.centered(z_dec, codec.params.q)
                zi = [int(v) * sc.inv_L for v in self.oracle.z]
                extras["state_gap"] = max(abs(int(a) - b) for a, b in zip(zc, zi))
        return u_real, extras

    def _dec_state(self):
        if self.ectl is None:
            return None
        return zq.decrypt(self.ectl.z, self.codec.sk, self.codec.params)

    def _deltas(self, yb, rb, z_dec, uE, reenc):
        p = self.codec.params
        ring = self.ring
        q = p.q
        sk = self.codec.sk
        y_r, r_r = ring.scale_input(yb), ring.scale_input(rb)
        u_dec = zq.decrypt(uE, sk, p)
        u_pred = (ring.Hbar @ z_dec + ring.Jbar @ y_r + ring.Qbar @ r_r) & p.mask
        v = zq.decrypt(reenc, sk, p)
        z_next = self._dec_state()
        # the plaintext input the actuator meant to send
        v_true = feedback_residue(biased_mod(u_dec, self.codec.window), self.codec.scales, q,
                                  self.codec.rule)
        z_pred = (ring.Fp @ z_dec + ring.Gp @ y_r + ring.Pp @ r_r + ring.Rbar @ v_true) & p.mask
        d1 = zq.centered((z_next - z_pred) & p.mask, q)
        d2 = zq.centered((u_dec - u_pred) & p.mask, q)
        dv = zq.centered((v - v_true) & p.mask, q)
        return {"delta1": int(np.abs(d1).max()), "delta2": int(np.abs(d2).max()),
                "reenc_err": int(np.abs(dv).max())}


class AdditiveLoop(EncryptedLoop):
    mode = "additive"


# ---------------------------------------------------------------- runner

def run_closed_loop(plant: PlantLti, loop, horizon: int, reference=None,
                    nr: int = 1, realtime: bool = False) -> Trace:
    """Simulate ``horizon`` sampling instants.

    Each instant samples ``y``, lets ``loop`` compute the input (quantize,
    encrypt, controller, decode as the mode requires), holds it over the
    period and integrates the plant.
    """
    ref = make_reference(reference, nr)
    trace = Trace(loop.mode, plant.Ts)
    x = plant.xp0.copy()
    t_next = time.perf_counter()
    for t in range(horizon):
        y = plant.output(x)
        r = np.ravel(ref(t)).astype(float)
        t0 = time.perf_counter()
        u, extras = loop.control(t, y, r)
        trace.step_seconds.append(time.perf_counter() - t0)
        u = np.ravel(np.asarray(u, dtype=float))
        trace.record(y, u, r, extras)
        x = plant.advance(x, u)
        if realtime:
            t_next += plant.Ts
            time.sleep(max(0.0, t_next - time.perf_counter()))
    return trace
