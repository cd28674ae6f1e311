"""LWE and GSW encryption over Z_q with a power-of-two modulus.

Residues are stored as ``uint64`` arrays.  Because ``q`` divides ``2**64``,
native wrap-around arithmetic followed by a bit mask gives exact results
modulo ``q``, which keeps the homomorphic matrix-vector product a single
BLAS-free integer matmul.

Ciphertext layout
-----------------
An LWE ciphertext is a length ``n + 1`` vector ``[b, a_1..a_n]`` (last axis).
A GSW ciphertext is an ``(n + 1, n')`` matrix with ``n' = d (n + 1)``.
Batches of either simply add leading axes.

The ``debug`` backend is the degenerate instance ``n = 0``, ``nu = q``,
``sigma = 0``: ciphertexts carry the plaintext verbatim and every operation
reduces to plain ring arithmetic on the same code path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BACKENDS = ("lwe", "debug")


class ParameterError(ValueError):
    """Raised for inconsistent cryptosystem parameters."""


def _is_pow2_exp(x, lo, hi):
    return isinstance(x, (int, np.integer)) and lo <= int(x) <= hi


@dataclass(frozen=True)
class LweParams:
    """Public parameters of the scheme.

    ``q = 2**q0`` and ``nu = 2**nu0``; ``d`` is the number of base-``nu``
    digits needed to cover ``Z_q`` and ``n_prime = d (n + 1)``.
    """

    q0: int
    nu0: int
    n: int
    sigma: float = 1.0
    k0: int = 6
    backend: str = "lwe"
    d: int = field(init=False)

    def __post_init__(self):
        if not _is_pow2_exp(self.q0, 1, 63):
            raise ParameterError(f"q0 must be an integer in [1, 63], got {self.q0!r}")
        if not _is_pow2_exp(self.nu0, 1, self.q0):
            raise ParameterError(f"nu0 must be an integer in [1, q0], got {self.nu0!r}")
        if int(self.n) < 0:
            raise ParameterError("n must be non-negative")
        if self.backend not in BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}")
        if self.sigma < 0 or int(self.k0) < 0:
            raise ParameterError("sigma and k0 must be non-negative")
        d = -(-int(self.q0) // int(self.nu0))
        object.__setattr__(self, "d", d)
        # nu^(d-1) < q <= nu^d
        assert self.nu0 * (d - 1) < self.q0 <= self.nu0 * d

    @property
    def q(self) -> int:
        return 1 << int(self.q0)

    @property
    def nu(self) -> int:
        return 1 << int(self.nu0)

    @property
    def mask(self) -> np.uint64:
        return np.uint64(self.q - 1)

    @property
    def width(self) -> int:
        """Length of one LWE ciphertext."""
        return int(self.n) + 1

    @property
    def n_prime(self) -> int:
        return self.d * self.width

    @property
    def delta_enc(self) -> float:
        """Bound on the fresh encryption error."""
        return self.k0 * self.sigma

    @property
    def delta_mult(self) -> float:
        """Bound on the error added by one external product."""
        return self.d * self.width * self.k0 * self.sigma * self.nu

    def header(self) -> dict:
        return {"q0": int(self.q0), "nu0": int(self.nu0), "d": self.d, "n": int(self.n)}


def setup(q0: int, nu0: int, n: int, sigma: float = 1.0, k0: int = 6) -> LweParams:
    """Build LWE parameters with ``q = 2**q0`` and ``nu = 2**nu0``.

    Examples
    --------
    >>> p = setup(48, 16, 249, 1.0, 6)
    >>> p.d, p.n_prime
    (3, 750)
    """
    if not isinstance(q0, (int, np.integer)) or q0 < 16:
        raise ParameterError(f"q0 must be an integer >= 16, got {q0!r}")
    if not isinstance(nu0, (int, np.integer)) or not 1 <= nu0 <= q0:
        raise ParameterError(f"nu0 must satisfy 1 <= nu0 <= q0, got {nu0!r}")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    if k0 < 1:
        raise ParameterError("k0 must be positive")
    return LweParams(int(q0), int(nu0), int(n), float(sigma), int(k0))


def debug_setup(q0: int) -> LweParams:
    """Noise-free pass-through backend with modulus ``2**q0``."""
    return LweParams(int(q0), int(q0), 0, 0.0, 0, backend="debug")


# ---------------------------------------------------------------- residues

def to_residue(x, q: int) -> np.ndarray:
    """Reduce integers (int64 or Python ints) into ``[0, q)`` as uint64."""
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a & np.uint64(q - 1)
    if a.dtype.kind in "iu":
        return a.astype(np.int64).view(np.uint64) & np.uint64(q - 1)
    if a.dtype == object:
        return np.array([int(v) % q for v in a.ravel()], dtype=np.uint64).reshape(a.shape)
    raise TypeError(f"expected an integer array, got dtype {a.dtype}")


def centered(v, q: int) -> np.ndarray:
    """Map residues in ``[0, q)`` to the signed range ``[-q/2, q/2)``."""
    sh = np.uint64(64 - (q.bit_length() - 1))
    v = np.asarray(v, dtype=np.uint64)
    return (v << sh).view(np.int64) >> np.int64(sh)


# ---------------------------------------------------------------- sampling

class DiscreteGaussian:
    """Truncated discrete Gaussian on ``[-floor(k0 sigma), floor(k0 sigma)]``.

    Sampling is inverse-CDF on a precomputed table, driven by a uniform
    draw from the supplied generator.
    """

    def __init__(self, sigma: float, k0: int):
        self.sigma = float(sigma)
        self.bound = int(np.floor(k0 * sigma)) if sigma > 0 else 0
        self.support = np.arange(-self.bound, self.bound + 1, dtype=np.int64)
        if self.bound == 0:
            self.cdf = np.array([1.0])
        else:
            w = np.exp(-(self.support.astype(float) ** 2) / (2.0 * self.sigma**2))
            self.cdf = np.cumsum(w) / w.sum()
            self.cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.bound == 0:
            return np.zeros(size, dtype=np.int64)
        u = rng.random(size)
        return self.support[np.searchsorted(self.cdf, u, side="right")]


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator so every stream is reproducible from a seed."""
    return np.random.Generator(np.random.Philox(seed))


def _uniform(rng, params, size):
    return rng.integers(0, params.q, size=size, dtype=np.uint64, endpoint=False)


def _noise(rng, params, size):
    s = DiscreteGaussian(params.sigma, params.k0).sample(rng, size)
    return to_residue(s, params.q)


# ---------------------------------------------------------------- keys

@dataclass(frozen=True)
class SecretKey:
    """Secret vector with entries from the truncated Gaussian."""

    params: LweParams
    s: np.ndarray  # signed int64, shape (n,)

    @property
    def residues(self) -> np.ndarray:
        return to_residue(self.s, self.params.q)

    def __repr__(self):
        return f"SecretKey(n={self.params.n}, backend={self.params.backend!r})"


def keygen(params: LweParams, seed) -> SecretKey:
    rng = make_rng(seed)
    s = DiscreteGaussian(params.sigma, params.k0).sample(rng, (params.n,))
    return SecretKey(params, s.astype(np.int64))


# ---------------------------------------------------------------- LWE

def encrypt(m, sk: SecretKey, params: LweParams, rng: np.random.Generator) -> np.ndarray:
    """Encrypt residues ``m`` (any shape) into ciphertexts of shape ``m.shape + (n+1,)``."""
    mu = to_residue(m, params.q)
    shape = mu.shape
    a = _uniform(rng, params, shape + (params.n,))
    e = _noise(rng, params, shape)
    b = (mu + e - a @ sk.residues) & params.mask
    return np.concatenate([b[..., None], a], axis=-1)


def decrypt(c, sk: SecretKey, params: LweParams) -> np.ndarray:
    """Return residues ``[1, s] c mod q`` for a batch of ciphertexts."""
    c = np.asarray(c, dtype=np.uint64)
    return (c[..., 0] + c[..., 1:] @ sk.residues) & params.mask


def add(c1, c2, params: LweParams) -> np.ndarray:
    return (np.asarray(c1, dtype=np.uint64) + np.asarray(c2, dtype=np.uint64)) & params.mask


def int_mult(k, c, params: LweParams) -> np.ndarray:
    """Multiply ciphertext(s) by a plaintext integer ``k`` (broadcasting)."""
    kq = to_residue(k, params.q)
    return (np.asarray(kq)[..., None] * np.asarray(c, dtype=np.uint64)) & params.mask


# ---------------------------------------------------------------- GSW

def gadget(params: LweParams) -> np.ndarray:
    """``[I, nu I, ..., nu^(d-1) I]`` of shape ``(n+1, n')``."""
    w = params.width
    g = np.zeros((w, params.n_prime), dtype=np.uint64)
    for i in range(params.d):
        g[:, i * w:(i + 1) * w] = np.eye(w, dtype=np.uint64) * np.uint64(1 << (params.nu0 * i))
    return g & params.mask


def gadget_decompose(c, params: LweParams) -> np.ndarray:
    """Base-``nu`` digits of each entry, shape ``c.shape[:-1] + (d, c.shape[-1])``.

    Digit ``i`` is ``floor(c / nu^i) - floor(c / nu^(i+1)) nu``.
    """
    c = np.asarray(c, dtype=np.uint64)
    digit_mask = np.uint64(params.nu - 1)
    out = np.empty(c.shape[:-1] + (params.d, c.shape[-1]), dtype=np.uint64)
    for i in range(params.d):
        out[..., i, :] = (c >> np.uint64(params.nu0 * i)) & digit_mask
    return out


def gadget_recompose(digits, params: LweParams) -> np.ndarray:
    digits = np.asarray(digits, dtype=np.uint64)
    acc = np.zeros(digits.shape[:-2] + digits.shape[-1:], dtype=np.uint64)
    for i in range(params.d):
        acc += digits[..., i, :] << np.uint64(params.nu0 * i)
    return acc & params.mask


def _gsw_noise_part(sk, params, rng, lead):
    a = _uniform(rng, params, lead + (params.n, params.n_prime))
    e = _noise(rng, params, lead + (params.n_prime,))
    b = (e - np.einsum("k,...kj->...j", sk.residues, a)) & params.mask
    return np.concatenate([b[..., None, :], a], axis=-2)


def encrypt_mult(k, sk: SecretKey, params: LweParams, rng: np.random.Generator) -> np.ndarray:
    """GSW-encrypt plaintext integers ``k``; result shape ``k.shape + (n+1, n')``."""
    kq = to_residue(k, params.q)
    noise = _gsw_noise_part(sk, params, rng, kq.shape)
    return (noise + kq[..., None, None] * gadget(params)) & params.mask


def mult(C, c, params: LweParams) -> np.ndarray:
    """External product: GSW ``C`` times LWE ``c``, giving an LWE ciphertext."""
    g = gadget_decompose(c, params)
    g = g.reshape(g.shape[:-2] + (params.n_prime,))
    return np.matmul(np.asarray(C, dtype=np.uint64), g[..., None])[..., 0] & params.mask


class GswMatrix:
    """Encrypted ``m x k`` integer matrix stored for a fused matvec.

    ``data`` has shape ``(m, n+1, k, n')`` so that reshaping to
    ``(m (n+1), k n')`` is free and one matmul evaluates every product
    and the row sums at once.
    """

    def __init__(self, data: np.ndarray, params: LweParams):
        data = np.ascontiguousarray(data, dtype=np.uint64)
        if data.ndim != 4 or data.shape[1] != params.width or data.shape[3] != params.n_prime:
            raise ParameterError(f"bad GSW matrix shape {data.shape}")
        self.data = data
        self.params = params
        self._flat = data.reshape(data.shape[0] * data.shape[1], data.shape[2] * data.shape[3])

    @property
    def shape(self):
        return self.data.shape[0], self.data.shape[2]

    def entry(self, i, j) -> np.ndarray:
        return self.data[i, :, j, :]

    def matvec(self, cvec) -> np.ndarray:
        m, k = self.shape
        cvec = np.asarray(cvec, dtype=np.uint64)
        if cvec.shape != (k, self.params.width):
            raise ParameterError(f"expected {k} ciphertexts, got shape {cvec.shape}")
        g = gadget_decompose(cvec, self.params).reshape(k * self.params.n_prime)
        return (self._flat @ g).reshape(m, self.params.width) & self.params.mask

    def __getitem__(self, rows):
        return GswMatrix(self.data[rows], self.params)


def encrypt_matrix(K, sk: SecretKey, params: LweParams, rng: np.random.Generator) -> GswMatrix:
    """Entry-wise GSW encryption of an integer matrix, built in fused layout."""
    Kq = to_residue(np.asarray(K), params.q)
    if Kq.ndim != 2:
        raise ParameterError("expected a 2-D integer matrix")
    m, k = Kq.shape
    data = np.empty((m, params.width, k, params.n_prime), dtype=np.uint64)
    G = gadget(params)
    for i in range(m):
        for j in range(k):
            noise = _gsw_noise_part(sk, params, rng, ())
            data[i, :, j, :] = (noise + Kq[i, j] * G) & params.mask
    return GswMatrix(data, params)


def enc_matvec(Cmat, cvec, params: LweParams) -> np.ndarray:
    """Homomorphic product of an encrypted matrix and a vector of ciphertexts.

    ``Cmat`` is a :class:`GswMatrix` or an array of shape ``(m, k, n+1, n')``.
    """
    if not isinstance(Cmat, GswMatrix):
        Cmat = GswMatrix(np.asarray(Cmat, dtype=np.uint64).transpose(0, 2, 1, 3), params)
    return Cmat.matvec(cvec)


def plain_matvec(K, cvec, params: LweParams) -> np.ndarray:
    """Product of a plaintext integer matrix with a vector of ciphertexts."""
    Kq = to_residue(np.asarray(K), params.q)
    return (Kq @ np.asarray(cvec, dtype=np.uint64)) & params.mask
