"""Independent reference implementations used by the tests.

Everything here works on plain Python integers and fractions, one entry at
a time, so it shares no code path with the vectorized package.
"""
from fractions import Fraction


def lwe_decrypt(c, s, q):
    """``c[0] + sum(c[i+1] s[i]) mod q`` with exact integers."""
    acc = int(c[0])
    for ci, si in zip(c[1:], s):
        acc += int(ci) * int(si)
    return acc % q


def centered(v, q):
    v %= q
    return v - q if v >= q // 2 else v


def digits(c, nu, d):
    out = []
    for _ in range(d):
        out.append(c % nu)
        c //= nu
    return out


def external_product(C, c, nu, d, q):
    """GSW matrix ``C`` (``(n+1) x d(n+1)`` list of lists) times LWE vector ``c``."""
    w = len(c)
    g = [0] * (d * w)
    for j, cj in enumerate(c):
        for i, dig in enumerate(digits(int(cj), nu, d)):
            g[i * w + j] = dig
    return [sum(int(C[r][k]) * g[k] for k in range(d * w)) % q for r in range(len(C))]


def mat_mul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))]
            for i in range(len(A))]


def det(M):
    """Bareiss fraction-free determinant over Fractions."""
    M = [[Fraction(v) for v in row] for row in M]
    n = len(M)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) / prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


def charpoly_by_interpolation(A):
    """Monic coefficients of ``det(zI - A)`` from its values at ``z = 0..n``."""
    n = len(A)
    xs = list(range(n + 1))
    ys = [det([[(Fraction(x) if i == j else 0) - Fraction(A[i][j]) for j in range(n)]
               for i in range(n)]) for x in xs]
    # Newton divided differences, then expand
    coef = list(ys)
    for j in range(1, n + 1):
        for i in range(n, j - 1, -1):
            coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - j])
    poly = [Fraction(0)] * (n + 1)  # ascending powers
    poly[0] = coef[n]
    for k in range(n - 1, -1, -1):
        new = [Fraction(0)] * (n + 1)
        for i in range(n):
            new[i + 1] += poly[i]
            new[i] -= xs[k] * poly[i]
        new[0] += coef[k]
        poly = new
    return list(reversed(poly))


def expm_series(A, t, terms=50, squarings=5, bits=256):
    """``exp(A t)`` from a ``terms``-term Taylor series, evaluated by Horner.

    Arithmetic is on dyadic rationals ``k / 2**bits`` held as Python ints;
    ``A t / 2**squarings`` is expanded and the result squared back.
    """
    n = len(A)
    one = 1 << bits
    X = [[int(Fraction(A[i][j]) * Fraction(t) * one / 2**squarings) for j in range(n)]
         for i in range(n)]

    def mul(P, Q):
        return [[sum(P[i][k] * Q[k][j] for k in range(n)) >> bits for j in range(n)]
                for i in range(n)]

    eye = [[one if i == j else 0 for j in range(n)] for i in range(n)]
    acc = [row[:] for row in eye]
    for k in range(terms, 0, -1):
        acc = mul(X, acc)
        acc = [[eye[i][j] + acc[i][j] // k for j in range(n)] for i in range(n)]
    for _ in range(squarings):
        acc = mul(acc, acc)
    return [[Fraction(v, one) for v in row] for row in acc]


def round_half_away(x: Fraction) -> int:
    x = Fraction(x)
    fl = x.numerator // x.denominator
    frac = x - fl
    if frac > Fraction(1, 2) or (frac == Fraction(1, 2) and x > 0):
        return fl + 1
    return fl
