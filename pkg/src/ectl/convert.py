"""Conversion of a real state matrix into an integer one via output feedback.

Given ``x(t+1) = F x + G y + P r``, ``u = H x + J y + Q r``, find ``T``,
an integer ``F'``, ``H'`` and ``R`` with

    T F = (F' + R H') T,   H = H' T.

The controller then re-enters its own output: ``z = T x`` obeys
``z(t+1) = F' z + (T G - R J) y + (T P - R Q) r + R u`` with ``u = H' z + J y + Q r``.

Three routes are available:

* ``identity``: ``F`` is already integer; ``T = I`` and ``R = 0``.
* ``charpoly``: observable canonical form with a prescribed monic integer
  characteristic polynomial, giving ``F'`` in companion form.
* ``modal``: prescribed Gaussian-integer poles, giving ``F'`` in real
  Jordan form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class ConversionError(ValueError):
    """The requested integer realization cannot be built."""


class RankAmbiguityError(ConversionError):
    """A singular value is too close to the rank threshold to decide."""


class ModalIntegerizeError(ConversionError):
    """A matrix has no integer real Jordan form within tolerance."""


# ---------------------------------------------------------------- data

def as_fraction(v) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest decimal representation.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, (float, np.floating)):
        return Fraction(repr(float(v)))
    if isinstance(v, str):
        return Fraction(v.strip())
    raise TypeError(f"cannot interpret {v!r} as a rational number")


def exact_matrix(M, shape=None) -> np.ndarray:
    if M is None:
        return np.empty(shape, dtype=object)
    A = np.array(M, dtype=object)
    if A.ndim == 1 and shape is not None and len(shape) == 2:
        A = A.reshape(shape)
    out = np.empty(A.shape, dtype=object)
    for idx, v in np.ndenumerate(A):
        out[idx] = as_fraction(v)
    return out


def to_float(A) -> np.ndarray:
    return np.array(A, dtype=float).reshape(np.shape(A))


class GivenController:
    """Linear controller with exact rational matrices.

    ``x(t+1) = F x + G y + P r``, ``u(t) = H x + J y + Q r``.
    ``P`` and ``Q`` may have zero columns when there is no reference.
    """

    def __init__(self, F, G, H, J=None, P=None, Q=None, x0=None):
        self.exact = {}
        F = exact_matrix(F)
        n = F.shape[0]
        if F.shape != (n, n):
            raise ValueError("F must be square")
        G = exact_matrix(G)
        if G.ndim == 1:
            G = G.reshape(n, -1)
        H = exact_matrix(H)
        if H.ndim == 1:
            H = H.reshape(-1, n)
        p, m = G.shape[1], H.shape[0]
        J = exact_matrix(J, (m, p)) if J is not None else _zeros(m, p)
        P = exact_matrix(P, (n, -1)) if P is not None else _zeros(n, 0)
        if P.ndim == 1:
            P = P.reshape(n, -1)
        nr = P.shape[1]
        Q = exact_matrix(Q, (m, nr)) if Q is not None else _zeros(m, nr)
        x0 = exact_matrix(x0).reshape(n) if x0 is not None else _zeros(n, 1).reshape(n)
        checks = {"G": (n, p), "H": (m, n), "J": (m, p), "P": (n, nr), "Q": (m, nr)}
        for name, shp in checks.items():
            if locals()[name].shape != shp:
                raise ValueError(f"{name} has shape {locals()[name].shape}, expected {shp}")
        self.exact = dict(F=F, G=G, H=H, J=J, P=P, Q=Q, x0=x0)
        for k, v in self.exact.items():
            setattr(self, k, to_float(v))

    n = property(lambda self: self.F.shape[0])
    p = property(lambda self: self.G.shape[1])
    nr = property(lambda self: self.P.shape[1])
    m = property(lambda self: self.H.shape[0])

    def to_json(self) -> dict:
        return {k: [[str(v) for v in row] for row in np.atleast_2d(a)] if k != "x0"
                else [str(v) for v in a] for k, a in self.exact.items()}

    @classmethod
    def from_json(cls, d: dict) -> "GivenController":
        n = len(d["F"])
        return cls(d["F"], d["G"], d["H"], J=d.get("J"), P=d.get("P"), Q=d.get("Q"),
                   x0=d.get("x0", ["0"] * n))

    def transfer(self, z: complex) -> np.ndarray:
        """Frequency response ``H (zI - F)^-1 G + J`` at ``z``."""
        X = np.linalg.solve(z * np.eye(self.n) - self.F, self.G)
        return self.H @ X + self.J


def _zeros(a, b):
    out = np.empty((a, b), dtype=object)
    out[...] = Fraction(0)
    return out


def load_controller_json(path) -> GivenController:
    with open(path) as f:
        return GivenController.from_json(json.load(f))


# ---------------------------------------------------------------- exact polys

def charpoly_exact(A) -> list:
    """Monic characteristic polynomial of a rational matrix, descending powers.

    Faddeev-LeVerrier recursion in exact rational arithmetic.
    """
    A = [[Fraction(v) for v in row] for row in np.asarray(A, dtype=object)]
    n = len(A)
    coeffs = [Fraction(1)]
    Mk = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        c_prev = coeffs[-1]
        Mk = [[Mk[i][j] + (c_prev if i == j else 0) for j in range(n)] for i in range(n)]
        AM = [[sum(A[i][l] * Mk[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        coeffs.append(-sum(AM[i][i] for i in range(n)) / k)
        Mk = AM
    return coeffs


def charpoly_from_roots(roots) -> list:
    """Integer coefficients (descending, monic) of ``prod (z - root)``.

    Roots must be Gaussian integers closed under conjugation.
    """
    gi = []
    for r in roots:
        c = complex(r)
        re, im = round(c.real), round(c.imag)
        if abs(c.real - re) > 1e-9 or abs(c.imag - im) > 1e-9:
            raise ConversionError(f"target pole {r} is not a Gaussian integer")
        gi.append((int(re), int(im)))
    if sorted(gi) != sorted((a, -b) for a, b in gi):
        raise ConversionError("target poles must be closed under conjugation")
    poly = [(1, 0)]
    for a, b in gi:
        nxt = poly + [(0, 0)]
        for i, (pr, pi) in enumerate(poly):
            # subtract root * coefficient shifted one place
            nr, ni = nxt[i + 1]
            nxt[i + 1] = (nr - (a * pr - b * pi), ni - (a * pi + b * pr))
        poly = nxt
    if any(im != 0 for _, im in poly):
        raise ConversionError("characteristic polynomial is not real")
    return [re for re, _ in poly]


def companion(k) -> np.ndarray:
    """Companion matrix whose last column holds ``k_0..k_{n-1}``.

    Its characteristic polynomial is ``z^n - k_{n-1} z^{n-1} - ... - k_0``.
    """
    k = list(k)
    n = len(k)
    C = np.zeros((n, n), dtype=np.int64)
    if n:
        C[1:, :-1] = np.eye(n - 1, dtype=np.int64)
        C[:, -1] = k
    return C


def k_from_charpoly(coeffs) -> list:
    """Companion column ``k`` from descending monic coefficients."""
    c = [int(v) for v in coeffs]
    if c[0] != 1:
        raise ConversionError("characteristic polynomial must be monic")
    n = len(c) - 1
    return [-c[n - i] for i in range(n)]


# ---------------------------------------------------------------- observability

def _observable_basis(F, H, tol=1e-9, band=100.0):
    """Orthonormal basis of the observable row space (as columns)."""
    n = F.shape[0]
    basis = np.zeros((n, 0))
    block = np.array(H, dtype=float).T
    ref = max(np.linalg.norm(block, 2), 1e-300)
    fnorm = max(np.linalg.norm(F, 2), 1.0)
    while basis.shape[1] < n and block.shape[1]:
        for _ in range(2):
            block = block - basis @ (basis.T @ block)
        U, s, _ = np.linalg.svd(block, full_matrices=False)
        cut = tol * ref
        amb = s[(s > cut / band) & (s < cut * band)]
        if amb.size:
            raise RankAmbiguityError(
                f"singular value {amb[0]:.3e} is within a factor {band:g} of the rank "
                f"threshold {cut:.3e}")
        new = U[:, s > cut]
        if not new.shape[1]:
            break
        basis = np.hstack([basis, new])
        block = F.T @ new
        ref = fnorm
    return basis


def is_observable(F, H, tol=1e-9) -> bool:
    return _observable_basis(np.asarray(F, float), np.atleast_2d(H), tol).shape[1] == F.shape[0]


@dataclass
class DecompositionResult:
    """Orthogonal split into observable and unobservable coordinates."""

    W1: np.ndarray
    W2: np.ndarray
    F11: np.ndarray
    F21: np.ndarray
    F22: np.ndarray
    H1: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.W1.shape[0]


def observable_decomposition(F, H, tol=1e-9) -> DecompositionResult:
    """Split ``(F, H)`` into observable and unobservable parts.

    With ``W = [W1; W2]`` orthogonal, ``W F W^T`` is block lower triangular
    and ``H W^T = [H1, 0]``.  An observable pair keeps its coordinates
    (``W1 = I``).
    """
    F = np.asarray(F, dtype=float)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = F.shape[0]
    B = _observable_basis(F, H, tol)
    if B.shape[1] == n:
        W1, W2 = np.eye(n), np.zeros((0, n))
    else:
        W1 = B.T
        U, _, _ = np.linalg.svd(B, full_matrices=True)
        W2 = U[:, B.shape[1]:].T
    return DecompositionResult(W1, W2, W1 @ F @ W1.T, W2 @ F @ W1.T, W2 @ F @ W2.T, H @ W1.T)


def prune_outputs(F, H, tol=1e-9) -> list:
    """Greedily drop output rows while ``(F, H[kept])`` stays observable."""
    H = np.atleast_2d(H)
    kept = list(range(H.shape[0]))
    if not is_observable(F, H, tol):
        raise ConversionError("pair is not observable")
    for i in reversed(range(H.shape[0])):
        trial = [j for j in kept if j != i]
        if trial and is_observable(F, H[trial], tol):
            kept = trial
    return kept


def observable_canonical(F, h):
    """Transform ``T`` and coefficients ``a`` of the observable canonical form.

    ``T F T^-1 = companion(a)`` and ``h T^-1 = [0 .. 0 1]`` where
    ``h F^n = sum_i a_i h F^i``.
    """
    F = np.asarray(F, dtype=float)
    h = np.ravel(h).astype(float)
    n = F.shape[0]
    rows = [h]
    for _ in range(n):
        rows.append(rows[-1] @ F)
    O = np.array(rows[:n])
    a = np.linalg.solve(O.T, rows[n])
    t = [None] * (n + 1)
    t[n] = h
    for i in range(n, 0, -1):
        t[i - 1] = t[i] @ F - a[i - 1] * h
    return np.array(t[1:]), a


def _pick_cyclic_output(F11, H1, tol, seed=0):
    """Output combination ``c`` making ``(F11, c^T H1)`` observable."""
    kept = prune_outputs(F11, H1, tol)
    m = H1.shape[0]
    best = None
    for i in kept:
        h = H1[i]
        if is_observable(F11, h[None, :], tol):
            T, _ = observable_canonical(F11, h)
            cond = np.linalg.cond(T)
            if best is None or cond < best[0]:
                best = (cond, np.eye(m)[i])
    if best is not None:
        return best[1]
    rng = np.random.default_rng(seed)
    for _ in range(32):
        c = np.zeros(m)
        c[kept] = rng.integers(1, 4, size=len(kept)) * rng.choice([-1, 1], size=len(kept))
        if is_observable(F11, (c @ H1)[None, :], tol):
            return c
    raise ConversionError(
        "no single output combination observes the state; F has no cyclic vector "
        "for these outputs")


def integer_pole_placement(F11, H1, targets=None, charpoly=None, tol=1e-9):
    """Output injection ``R1`` giving ``F11 - R1 H1`` the target spectrum.

    Exactly one of ``targets`` (Gaussian-integer poles) or ``charpoly``
    (monic integer coefficients, descending) must be given.

    Returns
    -------
    R1 : ndarray, shape (n', m)
    T1 : ndarray
        Canonical transform of ``(F11, c^T H1)``.
    k : list of int
        Companion column of the placed polynomial.
    c : ndarray
        Output combination used.
    """
    F11 = np.asarray(F11, dtype=float)
    H1 = np.atleast_2d(np.asarray(H1, dtype=float))
    n = F11.shape[0]
    if (targets is None) == (charpoly is None):
        raise ValueError("give exactly one of targets or charpoly")
    if targets is not None:
        if len(targets) != n:
            raise ConversionError(f"need {n} target poles, got {len(targets)}")
        charpoly = charpoly_from_roots(targets)
    if len(charpoly) != n + 1:
        raise ConversionError(f"characteristic polynomial must have degree {n}")
    if not is_observable(F11, H1, tol):
        raise ConversionError("pair is not observable")
    k = k_from_charpoly(charpoly)
    c = np.array([1.0]) if H1.shape[0] == 1 else _pick_cyclic_output(F11, H1, tol)
    T1, a = observable_canonical(F11, c @ H1)
    rvec = np.linalg.solve(T1, a - np.array(k, dtype=float))
    return np.outer(rvec, c), T1, k, c


def modal_integerize(A, tol=1e-8, eig_tol=1e-4):
    """Invertible ``T`` with ``T A T^-1`` an integer real Jordan form.

    Every eigenvalue of ``A`` must be a Gaussian integer.  Real eigenvalues
    give ordinary Jordan blocks; a pair ``sigma +- j omega`` gives 2x2 blocks
    ``[[sigma, omega], [-omega, sigma]]`` coupled by identities.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    lam = np.linalg.eigvals(A)
    snapped = np.round(lam.real) + 1j * np.round(lam.imag)
    anorm = max(np.linalg.norm(A, 2), 1.0)
    for g in set(snapped):
        idx = np.where(snapped == g)[0]
        allow = max(eig_tol, 10.0 * (1e-15 * anorm) ** (1.0 / len(idx)))
        bad = idx[np.abs(lam[idx] - g) > allow]
        if bad.size:
            raise ModalIntegerizeError(
                f"eigenvalue {lam[bad[0]]:.6g} is not within {allow:.1e} of a Gaussian integer")
    cols = []
    groups = sorted(set(snapped), key=lambda g: (g.imag != 0, g.real, g.imag))
    for g in groups:
        if g.imag < 0:
            continue
        k = int(np.sum(snapped == g))
        if g.imag == 0:
            for chain in _jordan_chains(A - g.real * np.eye(n), k):
                cols.extend(chain)
        else:
            if int(np.sum(snapped == np.conj(g))) != k:
                raise ModalIntegerizeError("complex eigenvalues are not paired")
            for chain in _jordan_chains(A.astype(complex) - g * np.eye(n), k):
                for v in chain:
                    cols.extend([v.real, v.imag])
    Tinv = np.array(cols).T
    if Tinv.shape != (n, n) or np.linalg.matrix_rank(Tinv) < n:
        raise ModalIntegerizeError("could not assemble a full Jordan basis")
    T = np.linalg.inv(Tinv)
    M = T @ A @ Tinv
    err = np.abs(M - np.round(M)).max()
    if err > tol:
        raise ModalIntegerizeError(f"modal form residual {err:.2e} exceeds {tol:.1e}")
    return T


def _null(M, dim):
    _, _, Vh = np.linalg.svd(M)
    return Vh[M.shape[1] - dim:].conj().T


def _orth(M, tol=1e-10):
    if M.shape[1] == 0:
        return M
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, s > tol * max(s[0], 1e-300)]


def _jordan_chains(N, k):
    """Jordan chains (eigenvector first) of ``N`` on its ``k``-dim nilspace."""
    V = _null(np.linalg.matrix_power(N, k), k)
    Nr = V.conj().T @ N @ V
    scale = max(np.linalg.norm(Nr, 2), 1.0)
    ranks = [k]
    P = np.eye(k, dtype=Nr.dtype)
    for _ in range(k):
        P = P @ Nr
        s = np.linalg.svd(P, compute_uv=False)
        ranks.append(int(np.sum(s > 1e-6 * scale ** len(ranks))))
    smax = next(j for j in range(k + 1) if ranks[j] == 0)
    kers = [np.zeros((k, 0), dtype=Nr.dtype)]
    for j in range(1, smax + 1):
        kers.append(_null(np.linalg.matrix_power(Nr, j), k - ranks[j]))
    chains = []
    level = np.zeros((k, 0), dtype=Nr.dtype)
    for s in range(smax, 0, -1):
        pushed = Nr @ level
        B = _orth(np.hstack([kers[s - 1], pushed]))
        C = kers[s] - B @ (B.conj().T @ kers[s])
        want = kers[s].shape[1] - B.shape[1]
        heads = np.zeros((k, 0), dtype=Nr.dtype)
        if want > 0:
            U, _, _ = np.linalg.svd(C, full_matrices=False)
            heads = U[:, :want]
        for h in heads.T:
            chain = [h]
            for _ in range(s - 1):
                chain.append(Nr @ chain[-1])
            chains.append([V @ v for v in reversed(chain)])
        level = np.hstack([pushed, heads])
    if sum(len(c) for c in chains) != k:
        raise ModalIntegerizeError("Jordan structure could not be resolved")
    return chains


# ---------------------------------------------------------------- conversion

@dataclass
class ConversionResult:
    """Integer realization ``(F', H', R, T)`` and its diagnostics."""

    Fp: np.ndarray
    Hp: np.ndarray
    T: np.ndarray
    R: np.ndarray
    route: str
    charpoly: list
    n_obs: int
    residuals: dict = field(default_factory=dict)
    targets: list | None = None

    @property
    def T_right_inv(self) -> np.ndarray:
        return np.linalg.pinv(self.T)

    @property
    def n_prime(self) -> int:
        return self.Fp.shape[0]

    def to_json(self) -> dict:
        return {
            "route": self.route,
            "Fp": self.Fp.astype(int).tolist(),
            "Hp": self.Hp.tolist(),
            "T": self.T.tolist(),
            "R": self.R.tolist(),
            "charpoly": [int(c) for c in self.charpoly],
            "n_obs": self.n_obs,
            "residuals": self.residuals,
            "targets": None if self.targets is None else [[t.real, t.imag] for t in self.targets],
        }

    @classmethod
    def from_json(cls, d) -> "ConversionResult":
        return cls(np.array(d["Fp"], dtype=np.int64), np.atleast_2d(np.array(d["Hp"], float)),
                   np.array(d["T"], float), np.array(d["R"], float), d["route"],
                   [int(c) for c in d["charpoly"]], int(d["n_obs"]), d.get("residuals", {}),
                   None if d.get("targets") is None else [complex(a, b) for a, b in d["targets"]])


def conversion_residuals(F, H, Fp, Hp, T, R) -> dict:
    lhs = T @ F
    rhs = (Fp + R @ Hp) @ T
    scale = max(1.0, np.abs(T).max() * max(1.0, np.abs(F).max()))
    return {
        "similarity": float(np.abs(lhs - rhs).max()),
        "output": float(np.abs(Hp @ T - H).max()),
        "similarity_rel": float(np.abs(lhs - rhs).max() / scale),
        "fp_integrality": float(np.abs(Fp - np.round(Fp)).max()) if Fp.size else 0.0,
    }


def _is_integer_matrix(A) -> bool:
    return all(Fraction(v).denominator == 1 for v in np.ravel(A))


def default_targets(F11) -> list:
    """Nearest Gaussian integer to each eigenvalue, ties toward zero."""
    def snap(x):
        r = np.floor(abs(x) + 0.5)
        if abs(abs(x) - np.floor(abs(x)) - 0.5) < 1e-12:
            r = np.floor(abs(x))
        return float(np.copysign(r, x))
    lam = np.linalg.eigvals(np.asarray(F11, dtype=float))
    return [complex(snap(v.real), snap(v.imag)) for v in lam]


def convert_controller(ctl: GivenController, targets=None, charpoly=None,
                       route=None, tol=1e-9) -> ConversionResult:
    """Integer realization of ``ctl``'s state matrix.

    An already-integer ``F`` is kept as is unless poles are requested.
    Otherwise the poles default to :func:`default_targets`; single-output
    controllers use the companion form and multi-output ones the real
    Jordan form, unless ``route`` says otherwise.
    """
    if targets is None and charpoly is None and _is_integer_matrix(ctl.exact["F"]):
        n = ctl.n
        Fp = np.array([[int(v) for v in row] for row in ctl.exact["F"]], dtype=np.int64).reshape(n, n)
        R = np.zeros((n, ctl.m))
        res = conversion_residuals(ctl.F, ctl.H, Fp, ctl.H, np.eye(n), R)
        cp = [int(c) for c in charpoly_exact(ctl.exact["F"])]
        return ConversionResult(Fp, ctl.H.copy(), np.eye(n), R, "identity", cp, n, res)

    dec = observable_decomposition(ctl.F, ctl.H, tol)
    n1 = dec.n_obs
    if n1 == 0:
        raise ConversionError("no observable modes; the controller output is constant")
    if targets is None and charpoly is None:
        targets = default_targets(dec.F11)
    if route is None:
        route = "charpoly" if (charpoly is not None or ctl.m == 1) else "modal"
    if route == "modal" and targets is None:
        raise ConversionError("the modal route needs Gaussian-integer target poles")
    if targets is not None:
        charpoly = charpoly_from_roots(targets)
    R1, T1, k, c = integer_pole_placement(dec.F11, dec.H1, charpoly=charpoly, tol=tol)
    C = companion(k)
    if route == "modal":
        # Jordan basis of the integer companion matrix, composed with T1.
        Mc = modal_integerize(C.astype(float))
        Fp = np.round(Mc @ C @ np.linalg.inv(Mc)).astype(np.int64)
        T1 = Mc @ T1
    elif route == "charpoly":
        Fp = C
    else:
        raise ValueError(f"unknown route {route!r}")
    T = T1 @ dec.W1
    R = T1 @ R1
    Hp = dec.H1 @ np.linalg.inv(T1)
    res = conversion_residuals(ctl.F, ctl.H, Fp, Hp, T, R)
    cp = [int(v) for v in charpoly]
    exact_cp = [int(v) for v in charpoly_exact(Fp.astype(object))]
    if exact_cp != cp:
        raise ConversionError(f"integer matrix has characteristic polynomial {exact_cp}, "
                              f"expected {cp}")
    tg = [complex(t) for t in targets] if targets is not None else None
    return ConversionResult(Fp, Hp, T, R, route, cp, n1, res, tg)


def converted_inputs(ctl: GivenController, conv: ConversionResult):
    """Input matrices ``T G - R J``, ``T P - R Q`` of the re-fed controller."""
    return conv.T @ ctl.G - conv.R @ ctl.J, conv.T @ ctl.P - conv.R @ ctl.Q


def s_matrix(ctl: GivenController, conv: ConversionResult) -> np.ndarray:
    """``S = [T G - R J, T P - R Q, R]``."""
    Gc, Pc = converted_inputs(ctl, conv)
    return np.hstack([Gc, Pc, conv.R])


# ---------------------------------------------------------------- builders

def build_fir(b) -> GivenController:
    """FIR filter ``u(t) = sum_i b_i y(t - i)`` with a shift-register state."""
    b = [as_fraction(v) for v in b]
    n = len(b) - 1
    if n < 1:
        return GivenController(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), J=[[b[0]]])
    F = np.zeros((n, n), dtype=object)
    F[...] = Fraction(0)
    for i in range(1, n):
        F[i, i - 1] = Fraction(1)
    G = _zeros(n, 1)
    G[0, 0] = Fraction(1)
    return GivenController(F, G, [b[1:]], J=[[b[0]]])


def build_pid(kp, ki, kd, Ts, Nd) -> GivenController:
    """Discrete PID with filtered derivative in a realization with integer ``F``."""
    kp, ki, kd, Ts, Nd = (as_fraction(v) for v in (kp, ki, kd, Ts, Nd))
    if Nd.denominator != 1 or Nd < 1:
        raise ConversionError(f"Nd must be a positive integer, got {Nd}")
    if Ts <= 0:
        raise ConversionError("Ts must be positive")
    b1 = ki * Ts - kd * Nd**2 / Ts
    b0 = ki * Ts * Nd - ki * Ts + kd * Nd**2 / Ts
    b2 = kp + kd * Nd / Ts
    F = [[2 - Nd, Nd - 1], [1, 0]]
    return GivenController(F, [[1], [0]], [[b1, b0]], J=[[b2]])


def pid_parallel_response(kp, ki, kd, Ts, Nd, z):
    """``kp + ki Ts / (z - 1) + kd Nd / (Ts (1 + Nd / (z - 1)))``."""
    return kp + ki * Ts / (z - 1) + kd * Nd / Ts / (1 + Nd / (z - 1))


def divergent_demo(ctl: GivenController, inv_s1: int, y_bar, r_bar, steps: int) -> list:
    """State growth of the scaling-only quantized controller.

    Without truncation the state must carry ``(1/s1)^t`` to stay exact:
    ``x(t+1) = round(F / s1) x + (1/s1)^(t+1) (round(G / s1) y + round(P / s1) r)``.

    Returns the infinity norm of the integer state at each step.
    """
    from .quantize import scale_matrix

    Fb = scale_matrix(ctl.exact["F"], inv_s1)
    Gb = scale_matrix(ctl.exact["G"], inv_s1)
    Pb = scale_matrix(ctl.exact["P"], inv_s1)
    y = np.array([int(v) for v in np.ravel(y_bar)], dtype=object)
    r = np.array([int(v) for v in np.ravel(r_bar)], dtype=object)
    x = np.array([0] * ctl.n, dtype=object)
    norms = []
    for t in range(steps):
        drive = Gb.dot(y) + (Pb.dot(r) if ctl.nr else 0)
        x = Fb.dot(x) + drive * (inv_s1 ** (t + 1))
        norms.append(max((abs(int(v)) for v in x), default=0))
    return norms
