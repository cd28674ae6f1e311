"""Three-inertia benchmark: plant, observer-based integral controller, defaults."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..convert import GivenController
from ..quantize import ScaleSet
from .plant import PlantLti, discretize_zoh

J_INERTIA = 0.01
B_FRICTION = 0.007
K_SPRING = 1.37
TS = 0.05

K_GAIN = [-2.32, -0.25, 2.47, -0.04, -1.70, -0.12]
KI_GAIN = 0.1
L_GAIN = [0.47, 4.07, -0.03, -6.80, 1.39, 6.21]

# Placed characteristic polynomial of the converted state matrix.
CHARPOLY = [1, -3, 3, -3, 1, 0, 0, -1]

# Scales of the encrypted benchmark run and of the quantized comparator.
ENCRYPTED_SCALES = ScaleSet(r1_exp=-15, r2_exp=-15, s1_exp=-19, s2_exp=0, L_exp=-11)
QUANTIZED_SCALES = ScaleSet(r1_exp=-12, r2_exp=-12, s1_exp=-12, s2_exp=-12, L_exp=0)

# Estimates from an ideal-mode run (u range, signal bound) with margin.
U_RANGE = (-0.0412, 0.1153)
EPS = 0.01
M_ESTIMATE = 16.0

PROFILES = {
    "paper": dict(q0=48, nu0=16, n=249, sigma=1.0, k0=6),
    "desk": dict(q0=24, nu0=24, n=32, sigma=1.0, k0=6),
}


def three_inertia_plant() -> PlantLti:
    J, b, k = J_INERTIA, B_FRICTION, K_SPRING
    Ap = np.array([
        [0, 1, 0, 0, 0, 0],
        [-k / J, -b / J, k / J, 0, 0, 0],
        [0, 0, 0, 1, 0, 0],
        [k / J, 0, -2 * k / J, -b / J, k / J, 0],
        [0, 0, 0, 0, 0, 1],
        [0, 0, k / J, 0, -k / J, -b / J],
    ])
    Bp = np.array([[0], [1 / J], [0], [0], [0], [0]])
    Cp = np.array([[0, 0, 0, 0, 1, 0]], dtype=float)
    return PlantLti(Ap, Bp, Cp, np.zeros(6), TS, substeps=20)


def three_inertia_preset():
    """Plant and the 7-state observer plus integrator controller.

    Controller state ``[xhat; xi]``::

        xhat+ = (Ad + Bd K - L Cp) xhat + Bd KI xi + L y
        xi+   = xi + r - Cp xhat
        u     = K xhat + KI xi
    """
    plant = three_inertia_plant()
    Ad, Bd = discretize_zoh(plant)
    K = np.array([K_GAIN])
    Lg = np.array([L_GAIN]).T
    Cp = plant.Cp
    F = np.zeros((7, 7))
    F[:6, :6] = Ad + Bd @ K - Lg @ Cp
    F[:6, 6:] = Bd * KI_GAIN
    F[6, :6] = -Cp
    F[6, 6] = 1.0
    # Gains are decimal constants; Ad, Bd are exact binary floats.
    Fx = np.array([[Fraction(v) for v in row] for row in F], dtype=object)
    ctl = GivenController(Fx, [[Fraction(str(v))] for v in L_GAIN] + [[Fraction(0)]],
                          [[Fraction(str(v)) for v in K_GAIN] + [Fraction(str(KI_GAIN))]],
                          P=[[0]] * 6 + [[1]], x0=[0] * 7)
    return plant, ctl


def reference_one(t: int) -> np.ndarray:
    return np.array([1.0])
