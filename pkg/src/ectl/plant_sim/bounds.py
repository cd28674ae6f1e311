"""Error-bound evaluators and the power-of-two parameter designer.

All norms are induced infinity norms.  The evaluators use plain arithmetic
so they accept floats or :class:`fractions.Fraction` alike.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..quantize import ScaleSet


class DesignError(ValueError):
    """No admissible parameter set was found."""


def inf_norm(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the bounds: signal bound, margin and matrix norms."""

    M: float
    eps: float
    eta: float
    norm_Tp: float
    norm_R: float
    norm_T: float
    norm_GP: float
    norm_JQ: float
    norm_S: float
    p: int
    nr: int
    m: int
    n_prime: int

    def __post_init__(self):
        if not (self.M > 0 and self.eps > 0 and self.eta > 0):
            raise ValueError("M, eps and eta must be positive")

    @property
    def l2(self) -> int:
        return self.p + self.nr + self.m

    @classmethod
    def from_controller(cls, ctl, conv, M, eps, eta) -> "BoundInputs":
        from ..convert import s_matrix

        return cls(M=M, eps=eps, eta=eta,
                   norm_Tp=inf_norm(conv.T_right_inv), norm_R=inf_norm(conv.R),
                   norm_T=inf_norm(conv.T),
                   norm_GP=inf_norm(np.hstack([ctl.G, ctl.P])),
                   norm_JQ=inf_norm(np.hstack([ctl.J, ctl.Q])),
                   norm_S=inf_norm(s_matrix(ctl, conv)),
                   p=ctl.p, nr=ctl.nr, m=ctl.m, n_prime=conv.n_prime)

    def to_json(self) -> dict:
        return dict(self.__dict__)


def eval_alpha_prime(r1, r2, s1, nm: BoundInputs):
    """Perturbation bound of the quantized controller."""
    return max((r1 * s1 + nm.norm_GP * r1) / 2, (r2 + nm.norm_JQ * r1) / 2)


def eval_theta(eta, nm: BoundInputs):
    return eta / max(1, nm.norm_Tp * (1 + nm.norm_R))


def beta_z(w, r1, r2, s1, s2, nm: BoundInputs):
    """State perturbation bound given ``w = ||[y; r; u]||``."""
    return nm.l2 * w * s1 / 2 + nm.norm_S * r1 / 2 + nm.l2 * (r1 + r2) * s1 / 4


def beta_u(zn, r1, r2, s2, nm: BoundInputs):
    """Output perturbation bound given ``zn = ||z||``."""
    return r2 / 2 + nm.n_prime * zn * s2 / 2 + nm.norm_JQ * r1 / 2


def eval_beta(r1, r2, s1, s2, nm: BoundInputs):
    Me = nm.M + nm.eps
    return max(beta_z(Me, r1, r2, s1, s2, nm), beta_u(nm.norm_T * Me, r1, r2, s2, nm),
               r1 * s1 / 2)


def gamma1(s1, delta_enc, delta_mult, nm: BoundInputs):
    """Bound on the per-step state error injected by encryption."""
    return (nm.norm_S / s1 + nm.l2 / 2) * delta_enc + (nm.n_prime + nm.l2) * delta_mult


def gamma2(s1, s2, delta_enc, delta_mult, nm: BoundInputs):
    """Bound on the per-step output error injected by encryption."""
    return nm.norm_JQ / (s1 * s2) * delta_enc + (nm.n_prime + nm.p + nm.nr) * delta_mult


def crypto_terms(L, r1, r2, s1, s2, delta_enc, delta_mult, nm: BoundInputs):
    """The three encryption terms, multiplied out so that ``s1 = 0`` is allowed."""
    t1 = L * r1 * ((nm.norm_S + s1 * nm.l2 / 2) * delta_enc
                   + s1 * (nm.n_prime + nm.l2) * delta_mult)
    t2 = L * r1 * (nm.norm_JQ * delta_enc + s1 * s2 * (nm.n_prime + nm.p + nm.nr) * delta_mult)
    t3 = L * r1 * s1 * delta_enc
    return t1, t2, t3


def eval_gamma(L, r1, r2, s1, s2, delta_enc, delta_mult, nm: BoundInputs):
    return eval_beta(r1, r2, s1, s2, nm) + max(
        crypto_terms(L, r1, r2, s1, s2, delta_enc, delta_mult, nm))


def _next_pow2_exp_above(x) -> int:
    """Smallest ``e`` with ``2**e > x``."""
    e = int(np.floor(np.log2(x))) + 1
    while 2.0 ** (e - 1) > x:
        e -= 1
    while 2.0 ** e <= x:
        e += 1
    return e


def design_parameters(r1p, r2p, s1p, nm: BoundInputs, delta_enc, delta_mult,
                      max_exp: int = 62) -> ScaleSet:
    """Power-of-two scales meeting the encrypted performance bound.

    ``r1``, ``r2`` are refined from the quantized-design targets so that the
    zero-headroom limit stays below the target margin, then a common
    ``l = L = s1 = s2`` is halved until ``gamma(l, r1, r2, l, l)`` is below
    ``alpha'(r1', r2', s1') theta / eta``.
    """
    a = eval_alpha_prime(r1p, r2p, s1p, nm)
    if a > nm.eta:
        raise DesignError(f"alpha' = {a:.3g} exceeds eta = {nm.eta:.3g}")
    c = max(1.0, nm.norm_Tp * (1 + nm.norm_R))
    num = max(nm.norm_S, nm.norm_JQ)
    den = max(nm.norm_GP, nm.norm_JQ)
    ratio = c * num / den if den > 0 else c
    r1_exp = -_next_pow2_exp_above(max(ratio, 1e-300) / r1p)
    r2_exp = -_next_pow2_exp_above(c / r2p)
    r1, r2 = 2.0 ** r1_exp, 2.0 ** r2_exp
    goal = a * eval_theta(nm.eta, nm) / nm.eta
    for k in range(0, max_exp + 1):
        l = 2.0 ** -k
        if eval_gamma(l, r1, r2, l, l, delta_enc, delta_mult, nm) - goal <= 0:
            return ScaleSet(r1_exp, r2_exp, -k, -k, -k)
    raise DesignError(f"no 1/L = 1/s1 = 1/s2 up to 2^{max_exp} meets the bound")


def estimate_eta(plant, ctl, eps: float, horizon: int = 4000) -> float:
    """Margin ``eta`` from the closed-loop peak gain of perturbations to ``u``.

    The discrete closed loop is driven by ``[e_x; e_u]``; the l1 norm of its
    impulse response to ``u`` bounds the l-infinity gain, so perturbations
    no larger than ``eps / gain`` keep ``u`` within ``eps``.
    """
    from .plant import discretize_zoh

    Ad, Bd = discretize_zoh(plant)
    Cp = plant.Cp
    n, nx, m = plant.n, ctl.n, ctl.m
    # state [xp; x]; u = H x + J Cp xp + e_u
    A = np.block([[Ad + Bd @ ctl.J @ Cp, Bd @ ctl.H],
                  [ctl.G @ Cp, ctl.F]])
    Bx = np.vstack([np.zeros((n, nx)), np.eye(nx)])
    Bu = np.vstack([Bd, np.zeros((nx, m))])
    B = np.hstack([Bx, Bu])
    C = np.hstack([ctl.J @ Cp, ctl.H])
    D = np.hstack([np.zeros((m, nx)), np.eye(m)])
    acc = np.abs(D).copy()
    X = B.copy()
    for _ in range(horizon):
        acc += np.abs(C @ X)
        X = A @ X
    gain = float(acc.sum(axis=1).max())
    return eps / gain
