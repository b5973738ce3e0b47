"""Elementary arithmetic functions and exact Kloosterman sums.

The Kloosterman evaluator is the workhorse of the trace-formula series:
it keeps per-modulus tables of units, modular inverses and the c-th
roots of unity, a value cache keyed by (m mod c, n mod c, c), and an
FFT-based row evaluator that produces S(m, n; c) for every residue m at
once (used by the moment grids).  Cache writes are idempotent, so
concurrent readers and a racing writer are benign.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Factorization",
    "ArithProfile",
    "factorize",
    "is_prime",
    "arith_fn",
    "divisor_count",
    "kloosterman",
    "kloosterman_row",
    "kloosterman_bound",
    "tau_tail_bound",
    "divisor_sum_profile",
    "tau_sieve",
    "save_kloosterman_cache",
    "load_kloosterman_cache",
    "clear_caches",
]


@dataclass(frozen=True)
class Factorization:
    """Prime-power factorization with strictly increasing primes."""

    prime_powers: tuple[tuple[int, int], ...]

    def n(self) -> int:
        out = 1
        for p, e in self.prime_powers:
            out *= p**e
        return out


def factorize(n: int) -> Factorization:
    """Trial-division factorization; n must fit in 64 bits."""
    n = int(n)
    if n < 1:
        raise ValueError("factorize requires n >= 1")
    if n >= 1 << 63:
        raise OverflowError("n exceeds the 64-bit contract")
    out = []
    for p in (2, 3, 5):
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
    # 2,3,5-wheel
    incr = (4, 2, 4, 2, 4, 6, 2, 6)
    p, i = 7, 0
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += incr[i]
        i = (i + 1) & 7
    if n > 1:
        out.append((n, 1))
    return Factorization(tuple(out))


def is_prime(n: int) -> bool:
    n = int(n)
    if n < 2:
        return False
    f = factorize(n)
    return len(f.prime_powers) == 1 and f.prime_powers[0][1] == 1


@dataclass(frozen=True)
class ArithProfile:
    """tau, omega, mu, phi and the multiplicative index n prod(1 + 1/p)."""

    n: int
    tau: int
    omega: int
    mu: int
    euler_phi: int
    nu_index: int


def arith_fn(n: int) -> ArithProfile:
    """Exact divisor count, prime-factor count, Moebius, totient and index.

    The index n prod_{p|n}(1 + 1/p) equals prod p^{e-1}(p + 1), an exact
    integer.
    """
    fac = factorize(n)
    tau, omega, mu, phi, nu = 1, 0, 1, 1, 1
    for p, e in fac.prime_powers:
        tau *= e + 1
        omega += 1
        mu = 0 if e >= 2 else -mu
        phi *= (p - 1) * p ** (e - 1)
        nu *= (p + 1) * p ** (e - 1)
    return ArithProfile(n=int(n), tau=tau, omega=omega, mu=mu, euler_phi=phi, nu_index=nu)


def divisor_count(n: int) -> int:
    return arith_fn(n).tau


# ---------------------------------------------------------------------------
# Kloosterman sums
# ---------------------------------------------------------------------------

# Per-modulus tables: (units, inverses, cos table, sin table).
_TABLES: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
# Scalar value cache keyed by (min(m,n) mod c, max(m,n) mod c, c).
_SUM_CACHE: dict[tuple[int, int, int], float] = {}
# Row cache keyed by (n mod c, c) -> float array of length c.
_ROW_CACHE: dict[tuple[int, int], np.ndarray] = {}
_ROW_CACHE_MAX = 512

_IMAG_TOL = 1e-10


def clear_caches() -> None:
    _TABLES.clear()
    _SUM_CACHE.clear()
    _ROW_CACHE.clear()


def _tables(c: int):
    tab = _TABLES.get(c)
    if tab is None:
        d = np.arange(c, dtype=np.int64)
        units = d[np.gcd(d, c) == 1]
        inv = np.array([pow(int(u), -1, c) for u in units], dtype=np.int64)
        ang = 2.0 * np.pi * np.arange(c, dtype=float) / c
        tab = (units, inv, np.cos(ang), np.sin(ang))
        if len(_TABLES) > 4096:
            _TABLES.clear()
        _TABLES[c] = tab
    return tab


def kloosterman(m: int, n: int, c: int) -> float:
    """S(m, n; c) = sum over units d mod c of e((d m + d-bar n)/c), exact
    to rounding.

    The sum is real (d and -d contribute conjugate terms); the imaginary
    part is asserted below 1e-10 and discarded.
    """
    m, n, c = int(m), int(n), int(c)
    if c < 1:
        raise ValueError("c must be >= 1")
    if c == 1:
        return 1.0
    mm, nn = m % c, n % c
    if mm > nn:
        mm, nn = nn, mm  # S(m,n;c) = S(n,m;c)
    key = (mm, nn, c)
    val = _SUM_CACHE.get(key)
    if val is None:
        units, inv, cos_t, sin_t = _tables(c)
        idx = (units * mm + inv * nn) % c
        val = float(cos_t[idx].sum())
        imag = float(sin_t[idx].sum())
        if abs(imag) > _IMAG_TOL * max(1.0, math.sqrt(c)):
            raise ArithmeticError(f"Kloosterman imaginary residue {imag} at c={c}")
        _SUM_CACHE[key] = val
    return val


def kloosterman_row(n: int, c: int) -> np.ndarray:
    """S(m, n; c) for every m in 0..c-1, as one length-c float array.

    Computed as c * ifft(h) with h supported on the units, h(d) =
    e(d-bar n / c); one FFT replaces c direct sums.  Agrees with
    kloosterman() to ~1e-10 absolute (checked in the test suite).
    """
    n, c = int(n) % int(c), int(c)
    if c == 1:
        return np.ones(1)
    key = (n, c)
    row = _ROW_CACHE.get(key)
    if row is None:
        units, inv, cos_t, sin_t = _tables(c)
        h = np.zeros(c, dtype=complex)
        idx = (inv * n) % c
        h[units] = cos_t[idx] + 1j * sin_t[idx]
        row = np.fft.ifft(h)
        row = np.ascontiguousarray(row.real * c)
        if len(_ROW_CACHE) >= _ROW_CACHE_MAX:
            _ROW_CACHE.clear()
        _ROW_CACHE[key] = row
    return row


def kloosterman_bound(m: int, n: int, c: int) -> float:
    """Weil-type bound 2^omega(c) (m, n, c)^{1/2} c^{1/2}."""
    m, n, c = int(m), int(n), int(c)
    if c < 1:
        raise ValueError("c must be >= 1")
    if c == 1:
        return 1.0
    om = arith_fn(c).omega
    g = math.gcd(math.gcd(m, n), c)
    return (2.0**om) * math.sqrt(g) * math.sqrt(c)


def tau_tail_bound(r: int, theta: float) -> float:
    """Closed over-estimate of sum_{t > r} tau(t) t^{-theta}, theta > 1.

    Partial summation against the elementary bound sum_{t<=x} tau(t) <=
    x (log x + 1).
    """
    r = max(int(r), 1)
    if theta <= 1.0:
        raise ValueError("tau_tail_bound requires theta > 1")
    lr = math.log(r)
    return theta * r ** (1.0 - theta) * ((lr + 1.0) / (theta - 1.0) + 1.0 / (theta - 1.0) ** 2)


# ---------------------------------------------------------------------------
# Divisor-sum growth profiles
# ---------------------------------------------------------------------------


def tau_sieve(limit: int) -> np.ndarray:
    """tau(n) for 0 <= n <= limit (index 0 unused), by pair counting."""
    limit = int(limit)
    tau = np.zeros(limit + 1, dtype=np.int32)
    root = int(math.isqrt(limit))
    for d in range(1, root + 1):
        tau[d * d :: d] += 2
        tau[d * d] -= 1
    return tau


@dataclass(frozen=True)
class DivisorSumProfile:
    sum_upto: float
    sum_sqrt_weighted: float
    tail_theta2: float


_TAIL_HORIZON = 50  # tail summed on (x, 50x]; truncation is a few percent


def divisor_sum_profile(i: int, j: int, x: float) -> DivisorSumProfile:
    """Partial sums of tau(n)^i (log n)^j with unit, n^{-1/2} and (for the
    tail over n > x) n^{-2} weights.

    The partial sums are exact to rounding.  The tail is a finite horizon
    sum over (x, 50x]; the omitted mass is a few percent at most, which
    is immaterial for the growth-exponent checks this feeds.
    """
    i, j = int(i), int(j)
    x = float(x)
    if i not in (1, 2, 3) or j not in (0, 1, 2):
        raise ValueError("supported ranges: i in {1,2,3}, j in {0,1,2}")
    if not 10.0 <= x <= 1e6:
        raise ValueError("x must lie in [10, 1e6]")
    nx = int(x)
    horizon = min(_TAIL_HORIZON * nx, 50_000_000)
    tau = tau_sieve(horizon).astype(float)
    ns = np.arange(horizon + 1, dtype=float)
    ns[0] = 1.0
    weights = tau**i
    if j:
        weights = weights * np.log(ns) ** j
    head = weights[1 : nx + 1]
    sum_upto = float(head.sum())
    sum_sqrt = float((head / np.sqrt(ns[1 : nx + 1])).sum())
    tail_part = weights[nx + 1 :] / ns[nx + 1 :] ** 2
    tail = float(tail_part.sum())
    return DivisorSumProfile(sum_upto=sum_upto, sum_sqrt_weighted=sum_sqrt, tail_theta2=tail)


# ---------------------------------------------------------------------------
# Kloosterman cache persistence
# ---------------------------------------------------------------------------

_CACHE_MAGIC = b"KLSC"
_CACHE_VERSION = 1
_REC = struct.Struct("<qqqd")


def save_kloosterman_cache(path: str) -> int:
    """Write the scalar value cache as a flat binary file; returns the
    number of records."""
    items = sorted(_SUM_CACHE.items())
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(bytes([_CACHE_VERSION]))
        fh.write(struct.pack("<q", len(items)))
        for (m, n, c), v in items:
            fh.write(_REC.pack(m, n, c, v))
    return len(items)


def load_kloosterman_cache(path: str) -> int:
    """Load a persisted cache; a corrupt or mismatched file is discarded
    (returns 0) rather than trusted."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != _CACHE_MAGIC or blob[4] != _CACHE_VERSION:
            return 0
        (count,) = struct.unpack_from("<q", blob, 5)
        expect = 13 + count * _REC.size
        if count < 0 or len(blob) != expect:
            return 0
        loaded = 0
        off = 13
        for _ in range(count):
            m, n, c, v = _REC.unpack_from(blob, off)
            off += _REC.size
            if c < 1 or not (0 <= m <= n < max(c, 2)) or not math.isfinite(v):
                return 0
            _SUM_CACHE[(m, n, c)] = v
            loaded += 1
        return loaded
    except (OSError, struct.error, IndexError):
        return 0
