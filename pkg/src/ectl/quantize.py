"""Quantizers, power-of-two scale sets and the modular output window.

All rounding is to nearest with ties away from zero.  Scales are powers of
two kept as integer exponents so that rescaling an integer is an exact
shift instead of a floating-point multiply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

INT64_LIMIT = 1 << 62


class WindowSizingError(ValueError):
    """Requested window does not fit the available modulus."""


class WindowOverflow(RuntimeError):
    """A control output left the modular window during a run."""

    def __init__(self, step, value, window):
        super().__init__(
            f"output {value} outside window [{window.u_min}, {window.u_max}] at step {step}")
        self.step = step
        self.value = value


def round_half_away(x):
    """Round to nearest integer, ties away from zero (float in, float out)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_signal(v, step: float) -> np.ndarray:
    """Integer codes ``round(v / step)`` as int64."""
    q = round_half_away(np.asarray(v, dtype=float) / step)
    if not np.all(np.isfinite(q)) or np.any(np.abs(q) >= INT64_LIMIT):
        raise OverflowError("quantized value exceeds 62 bits")
    return q.astype(np.int64)


def scale_matrix(M, inv_scale: int) -> np.ndarray:
    """``round(M * inv_scale)`` exactly for rational entries.

    ``M`` may hold floats or :class:`fractions.Fraction`; the result is an
    object array of Python ints.
    """
    A = np.asarray(M, dtype=object)
    out = np.empty(A.shape, dtype=object)
    for idx, v in np.ndenumerate(A):
        out[idx] = round_fraction(Fraction(v) * inv_scale)
    return out


def round_fraction(x: Fraction) -> int:
    """Round a rational number, ties away from zero."""
    x = Fraction(x)
    mag = math.floor(abs(x) + Fraction(1, 2))
    return mag if x >= 0 else -mag


def round_pow2(v, k: int):
    """Exact ``round(v * 2**k)`` for integer ``v`` (scalar or array).

    Works on int64 and object (Python int) arrays.
    """
    if isinstance(v, (int, np.integer)):
        v = int(v)
        if k >= 0:
            return v << k
        s = -k
        mag = (abs(v) + (1 << (s - 1))) >> s
        return mag if v >= 0 else -mag
    a = np.asarray(v)
    if a.dtype == object:
        return np.vectorize(lambda t: round_pow2(int(t), k), otypes=[object])(a)
    a = a.astype(np.int64)
    if k >= 0:
        return a << k
    s = -k
    mag = (np.abs(a) + np.int64(1 << (s - 1))) >> s
    return np.where(a < 0, -mag, mag)


@dataclass(frozen=True)
class ScaleSet:
    """Quantization steps ``r1, r2`` and inverse-integer scales ``s1, s2, L``.

    Each value is ``2**exp``; ``s1``, ``s2`` and ``L`` must satisfy
    ``1/s in N`` so their exponents are non-positive.
    """

    r1_exp: int
    r2_exp: int
    s1_exp: int
    s2_exp: int
    L_exp: int

    def __post_init__(self):
        for name in ("r1_exp", "r2_exp", "s1_exp", "s2_exp", "L_exp"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise TypeError(f"{name} must be an integer exponent")
        for name in ("s1_exp", "s2_exp", "L_exp"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0 so that 1/scale is an integer")

    r1 = property(lambda self: 2.0 ** self.r1_exp)
    r2 = property(lambda self: 2.0 ** self.r2_exp)
    s1 = property(lambda self: 2.0 ** self.s1_exp)
    s2 = property(lambda self: 2.0 ** self.s2_exp)
    L = property(lambda self: 2.0 ** self.L_exp)
    inv_s1 = property(lambda self: 1 << -self.s1_exp)
    inv_s2 = property(lambda self: 1 << -self.s2_exp)
    inv_L = property(lambda self: 1 << -self.L_exp)

    @property
    def u_exp(self) -> int:
        """Exponent of one unit of the integer controller output, ``r1 s1 s2``."""
        return self.r1_exp + self.s1_exp + self.s2_exp

    def to_json(self) -> dict:
        return {k: int(getattr(self, k)) for k in ("r1_exp", "r2_exp", "s1_exp", "s2_exp", "L_exp")}

    @classmethod
    def from_json(cls, d: dict) -> "ScaleSet":
        return cls(**{k: int(d[k]) for k in ("r1_exp", "r2_exp", "s1_exp", "s2_exp", "L_exp")})


def recover_u(u_int, scales: ScaleSet, extra_exp: int = 0) -> np.ndarray:
    """Real input ``r2 round(r1 s1 s2 2**extra u_int / r2)``.

    ``extra_exp = L_exp`` recovers from the ring output ``u~``.
    """
    k = scales.u_exp + extra_exp - scales.r2_exp
    codes = round_pow2(u_int, k)
    return np.array([float(c) for c in np.ravel(codes)]).reshape(np.shape(codes)) * scales.r2


@dataclass(frozen=True)
class OutputWindow:
    """Interval ``[u_min, u_min + q)`` per output channel, in ring units."""

    u_min: tuple
    u_max: tuple
    q: int

    def __post_init__(self):
        span = max(int(b) - int(a) for a, b in zip(self.u_min, self.u_max))
        if span + 1 > self.q:
            raise WindowSizingError(f"window span {span + 1} exceeds modulus {self.q}")

    @property
    def span(self) -> int:
        return max(int(b) - int(a) for a, b in zip(self.u_min, self.u_max)) + 1

    def with_modulus(self, q: int) -> "OutputWindow":
        return OutputWindow(self.u_min, self.u_max, int(q))

    def contains(self, v) -> bool:
        return all(int(a) <= int(x) <= int(b) for a, x, b in zip(self.u_min, np.ravel(v), self.u_max))

    def margin(self, v) -> int:
        """Distance from ``v`` to the nearest window edge (negative if outside)."""
        return min(min(int(x) - int(a), int(b) - int(x))
                   for a, x, b in zip(self.u_min, np.ravel(v), self.u_max))

    def to_json(self) -> dict:
        return {"u_min": [str(v) for v in self.u_min], "u_max": [str(v) for v in self.u_max],
                "q": str(self.q)}

    @classmethod
    def from_json(cls, d: dict) -> "OutputWindow":
        return cls(tuple(int(v) for v in d["u_min"]), tuple(int(v) for v in d["u_max"]), int(d["q"]))


def biased_mod(v, window: OutputWindow) -> np.ndarray:
    """``v - floor((v - u_min) / q) q``, the representative inside the window."""
    vals = [int(x) for x in np.ravel(v)]
    out = [((x - int(a)) % window.q) + int(a) for x, a in zip(vals, window.u_min)]
    return np.array(out, dtype=object)


def size_window(u_min_real, u_max_real, eps: float, scales: ScaleSet,
                crypto_q: int | None = None, quant_pad: bool = True) -> OutputWindow:
    """Smallest power-of-two window covering the real input range.

    The range is widened by ``eps`` plus (with ``quant_pad``) half a
    quantization step ``r2`` and expressed in ring units ``L r1 s1 s2``.
    If ``crypto_q`` is given the window must fit it.
    """
    unit = Fraction(2) ** (scales.L_exp + scales.u_exp)
    pad = Fraction(eps) + (Fraction(2) ** scales.r2_exp / 2 if quant_pad else 0)
    lo = tuple(math.floor((Fraction(float(a)) - pad) / unit) for a in np.ravel(u_min_real))
    hi = tuple(math.ceil((Fraction(float(b)) + pad) / unit) for b in np.ravel(u_max_real))
    span = max(b - a for a, b in zip(lo, hi)) + 1
    q = 1 << max(0, (span - 1).bit_length())
    if crypto_q is not None and q > crypto_q:
        raise WindowSizingError(
            f"window needs q >= {q} but the modulus is {crypto_q}; "
            "increase q0 or coarsen the scales")
    return OutputWindow(lo, hi, q)
