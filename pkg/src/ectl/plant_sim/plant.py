"""Continuous-time LTI plant under zero-order hold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


@dataclass
class PlantLti:
    """``dx/dt = Ap x + Bp u``, ``y = Cp x``, sampled every ``Ts`` seconds."""

    Ap: np.ndarray
    Bp: np.ndarray
    Cp: np.ndarray
    xp0: np.ndarray
    Ts: float
    substeps: int = 20

    def __post_init__(self):
        self.Ap = np.atleast_2d(np.asarray(self.Ap, dtype=float))
        n = self.Ap.shape[0]
        self.Bp = np.asarray(self.Bp, dtype=float).reshape(n, -1)
        self.Cp = np.asarray(self.Cp, dtype=float).reshape(-1, n)
        self.xp0 = np.asarray(self.xp0, dtype=float).reshape(n)
        if self.Ap.shape != (n, n):
            raise ValueError("Ap must be square")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be positive")
        self._maps = None

    n = property(lambda self: self.Ap.shape[0])
    m = property(lambda self: self.Bp.shape[1])
    p = property(lambda self: self.Cp.shape[0])

    def rk4_maps(self):
        """One sampling period of RK4 substeps under a held input.

        For a linear plant each RK4 substep is ``x <- Ph x + Gh u``; the
        period map chains ``substeps`` of them.
        """
        if self._maps is None:
            h = self.Ts / self.substeps
            A = h * self.Ap
            I = np.eye(self.n)
            A2 = A @ A
            A3 = A2 @ A
            Ph = I + A + A2 / 2 + A3 / 6 + A3 @ A / 24
            Gh = h * (I + A / 2 + A2 / 6 + A3 / 24) @ self.Bp
            Phi, Gam = I, np.zeros_like(self.Bp)
            for _ in range(self.substeps):
                Phi, Gam = Ph @ Phi, Ph @ Gam + Gh
            self._maps = (Phi, Gam)
        return self._maps

    def advance(self, x, u) -> np.ndarray:
        Phi, Gam = self.rk4_maps()
        return Phi @ x + Gam @ np.ravel(u)

    def output(self, x) -> np.ndarray:
        return self.Cp @ x


def discretize_zoh(plant: PlantLti):
    """Exact zero-order-hold discretization ``(Ad, Bd)``.

    ``Bd`` comes from the exponential of the augmented matrix
    ``[[Ap, Bp], [0, 0]] Ts``.
    """
    n, m = plant.n, plant.m
    M = np.zeros((n + m, n + m))
    M[:n, :n] = plant.Ap
    M[:n, n:] = plant.Bp
    E = expm(M * plant.Ts)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("matrix exponential is not finite")
    return E[:n, :n], E[:n, n:]
