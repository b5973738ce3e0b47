"""Self-contained special-function kernel.

Complex Gamma, log-derivatives of Gamma at real points, integer-order
Bessel J, Riemann zeta on vertical lines, and Stieltjes constants.  All
routines are double precision with stated accuracy targets and use no
external special-function libraries, so the rest of the package can be
cross-checked against independent oracles without circularity.

Everything here is a pure function of its arguments and safe to call
from parallel workers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import PoleError

__all__ = [
    "ComplexValue",
    "GammaDerivatives",
    "gamma_complex",
    "log_gamma_complex",
    "gamma_log_derivatives",
    "digamma",
    "bessel_j",
    "bessel_j_grid",
    "zeta_complex",
    "zeta_alternating",
    "stieltjes",
]

# A complex value in this module is an ordinary Python complex; the alias
# documents intent in signatures.
ComplexValue = complex

# Bernoulli numbers B_2, B_4, ..., B_24 (exact rationals, rounded once).
_BERNOULLI = [
    float(Fraction(1, 6)),
    float(Fraction(-1, 30)),
    float(Fraction(1, 42)),
    float(Fraction(-1, 30)),
    float(Fraction(5, 66)),
    float(Fraction(-691, 2730)),
    float(Fraction(7, 6)),
    float(Fraction(-3617, 510)),
    float(Fraction(43867, 798)),
    float(Fraction(-174611, 330)),
    float(Fraction(854513, 138)),
    float(Fraction(-236364091, 2730)),
]

# ---------------------------------------------------------------------------
# Gamma
# ---------------------------------------------------------------------------

# Lanczos approximation, g = 7, 9 coefficients (Godfrey's tabulation of the
# classic set; reproduced in many numerics libraries).  Valid on Re s > 0.5
# after the shift below; measured relative error < 2e-13 on |s| <= 50.
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _is_nonpositive_integer(s: complex) -> bool:
    return s.imag == 0.0 and s.real <= 0.0 and s.real == int(s.real)


def gamma_complex(s: ComplexValue) -> ComplexValue:
    """Gamma(s) for complex s, via Lanczos plus reflection.

    Raises PoleError at the poles s = 0, -1, -2, ...  Relative error is
    below 1e-12 for |s| <= 50 (the range the line quadratures use).
    """
    s = complex(s)
    if _is_nonpositive_integer(s):
        raise PoleError(f"gamma pole at s = {s}")
    if not (math.isfinite(s.real) and math.isfinite(s.imag)):
        raise ValueError("gamma_complex requires finite input")
    if s.real < 0.5:
        # Reflection: Gamma(s) Gamma(1-s) = pi / sin(pi s).
        return math.pi / (cmath.sin(math.pi * s) * gamma_complex(1.0 - s))
    z = s - 1.0
    acc = _LANCZOS_C[0]
    for i in range(1, len(_LANCZOS_C)):
        acc += _LANCZOS_C[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * cmath.exp(-t) * acc


def log_gamma_complex(s: ComplexValue) -> ComplexValue:
    """log Gamma(s) via upward recurrence plus the Stirling series.

    Independent of the Lanczos path; used where Gamma itself would
    overflow (large |s| on vertical lines).  Principal branch for
    Re s > 0.
    """
    s = complex(s)
    if _is_nonpositive_integer(s):
        raise PoleError(f"log-gamma pole at s = {s}")
    shift = 0j
    while s.real < 12.0 or abs(s) < 12.0:
        shift += cmath.log(s)
        s += 1.0
    out = (s - 0.5) * cmath.log(s) - s + 0.5 * math.log(2.0 * math.pi)
    zinv = 1.0 / s
    zp = zinv
    z2 = zinv * zinv
    for j, b in enumerate(_BERNOULLI, start=1):
        out += b / ((2 * j) * (2 * j - 1)) * zp
        zp *= z2
    return out - shift


# ---------------------------------------------------------------------------
# Log-derivatives of Gamma at real points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaDerivatives:
    """Gamma'/Gamma, Gamma''/Gamma, Gamma'''/Gamma at a real argument."""

    argument: float
    values: tuple[float, ...]


def _polygamma_raw(order: int, x: float) -> float:
    # psi^{(order)}(x) for order in {0,1,2}, by recurrence to x >= 12 and
    # the asymptotic Bernoulli series there.
    if x <= 0.0:
        raise ValueError("polygamma requires x > 0")
    acc = 0.0
    while x < 12.0:
        if order == 0:
            acc -= 1.0 / x
        elif order == 1:
            acc += 1.0 / (x * x)
        else:
            acc -= 2.0 / (x * x * x)
        x += 1.0
    z = 1.0 / x
    z2 = z * z
    if order == 0:
        out = math.log(x) - 0.5 * z
        zp = z2
        for j, b in enumerate(_BERNOULLI[:9], start=1):
            out -= b / (2 * j) * zp
            zp *= z2
    elif order == 1:
        out = z + 0.5 * z2
        zp = z2 * z
        for b in _BERNOULLI[:9]:
            out += b * zp
            zp *= z2
    else:
        out = -z2 - z2 * z
        zp = z2 * z2
        for j, b in enumerate(_BERNOULLI[:9], start=1):
            out -= b * (2 * j + 1) * zp
            zp *= z2
    return out + acc


def digamma(x: float) -> float:
    """Gamma'/Gamma at real x > 0."""
    return _polygamma_raw(0, float(x))


def gamma_log_derivatives(x: float, max_order: int = 3) -> GammaDerivatives:
    """Gamma^{(j)}/Gamma at real x > 0 for j = 1..max_order (max_order <= 3).

    Converted from psi, psi', psi'' via

        Gamma'/Gamma   = psi
        Gamma''/Gamma  = psi' + psi^2
        Gamma'''/Gamma = psi'' + 3 psi psi' + psi^3
    """
    x = float(x)
    if x <= 0.0:
        raise ValueError("gamma_log_derivatives requires x > 0")
    if not 1 <= max_order <= 3:
        raise ValueError("max_order must be 1, 2, or 3")
    psi = _polygamma_raw(0, x)
    vals = [psi]
    if max_order >= 2:
        psi1 = _polygamma_raw(1, x)
        vals.append(psi1 + psi * psi)
    if max_order >= 3:
        psi2 = _polygamma_raw(2, x)
        vals.append(psi2 + 3.0 * psi * psi1 + psi**3)
    return GammaDerivatives(argument=x, values=tuple(vals))


# ---------------------------------------------------------------------------
# Bessel J of integer order
# ---------------------------------------------------------------------------

# J0/J1 rational approximations ported from the Cephes Math Library
# (Release 2.1, Stephen L. Moshier, 1984-1989); peak absolute error about
# 4e-16 on [0, 30] per the original documentation.
_SQ2OPI = 7.9788456080286535587989e-1
_PIO4 = 7.85398163397448309616e-1
_THPIO4 = 2.35619449019234492885

_PP0 = (7.96936729297347051624e-4, 8.28352392107440799803e-2, 1.23953371646414299388,
        5.44725003058768775090, 8.74716500199817011941, 5.30324038235394892183,
        9.99999999999999997821e-1)
_PQ0 = (9.24408810558863637013e-4, 8.56288474354474431428e-2, 1.25352743901058953537,
        5.47097740330417105182, 8.76190883237069594232, 5.30605288235394617618,
        1.00000000000000000218)
_RP0 = (-4.79443220978201773821e9, 1.95617491946556577543e12,
        -2.49248344360967716204e14, 9.70862251047306323952e15)
_RQ0 = (4.99563147152651017219e2, 1.73785401676374683123e5, 4.84409658339962045305e7,
        1.11855537045356834862e10, 2.11277520115489217587e12,
        3.10518229857422583814e14, 3.18121955943204943306e16,
        1.71086294081043136091e18)
_QP0 = (-1.13663838898469149931e-2, -1.28252718670509318512, -1.95539544257735972385e1,
        -9.32060152123768231369e1, -1.77681167980488050595e2, -1.47077505154951170175e2,
        -5.14105326766599330220e1, -6.05014350600728481186)
_QQ0 = (6.43178256118178023184e1, 8.56430025976980587198e2, 3.88240183605401609683e3,
        7.24046774195652478189e3, 5.93072701187316984827e3, 2.06209331660327847417e3,
        2.42005740240291393179e2)
_DR1 = 5.78318596294678452118
_DR2 = 3.04712623436620863991

_RP1 = (-8.99971225705559398224e8, 4.52228297998194034323e11,
        -7.27494245221818276015e13, 3.68295732863852883286e15)
_RQ1 = (6.20836478118054335476e2, 2.56987256757748830383e5, 8.35146791431949253037e7,
        2.21511595479792499675e10, 4.74914122079991414898e12,
        7.84369607876235854894e14, 8.95222336184627338078e16,
        5.32278620332680085395e18)
_PP1 = (7.62125616208173112003e-4, 7.31397056940917570436e-2, 1.12719608129684925192,
        5.11207951146807644818, 8.42404590141772420927, 5.21451598682361504063,
        1.00000000000000000254)
_PQ1 = (5.71323128072548699714e-4, 6.88455908754495404082e-2, 1.10514232634061696926,
        5.07386386128601488557, 8.39985554327604159757, 5.20982848682361821619,
        9.99999999999999997461e-1)
_QP1 = (5.10862594750176621635e-2, 4.98213872951233449420, 7.58238284132545283818e1,
        3.66779609360150777800e2, 7.10856304998926107277e2, 5.97489612400613639965e2,
        2.11688757100572135698e2, 2.52070205858023719784e1)
_QQ1 = (7.42373277035675149943e1, 1.05644886038262816351e3, 4.98641058337653607651e3,
        9.56231892404756170795e3, 7.99704160447350683650e3, 2.82619278517639096600e3,
        3.36093607810698293419e2)
_Z1 = 1.46819706421238932572e1
_Z2 = 4.92184563216946036703e1


def _polevl(x, coef):
    r = coef[0]
    for c in coef[1:]:
        r = r * x + c
    return r


def _p1evl(x, coef):
    r = x + coef[0]
    for c in coef[1:]:
        r = r * x + c
    return r


def _j0(x: float) -> float:
    x = abs(x)
    if x <= 5.0:
        if x < 1e-5:
            return 1.0 - x * x / 4.0
        z = x * x
        return (z - _DR1) * (z - _DR2) * _polevl(z, _RP0) / _p1evl(z, _RQ0)
    w = 5.0 / x
    z = w * w
    p = _polevl(z, _PP0) / _polevl(z, _PQ0)
    q = _polevl(z, _QP0) / _p1evl(z, _QQ0)
    xn = x - _PIO4
    return (p * math.cos(xn) - w * q * math.sin(xn)) * _SQ2OPI / math.sqrt(x)


def _j1(x: float) -> float:
    x = abs(x)
    if x <= 5.0:
        z = x * x
        w = _polevl(z, _RP1) / _p1evl(z, _RQ1)
        return w * x * (z - _Z1) * (z - _Z2)
    w = 5.0 / x
    z = w * w
    p = _polevl(z, _PP1) / _polevl(z, _PQ1)
    q = _polevl(z, _QP1) / _p1evl(z, _QQ1)
    xn = x - _THPIO4
    return (p * math.cos(xn) - w * q * math.sin(xn)) * _SQ2OPI / math.sqrt(x)


def _bessel_series(order: int, x: float) -> float:
    # Ascending power series.  Tracks the largest term; if cancellation
    # would push the absolute error above ~5e-14, redo the sum in exact
    # rational arithmetic (slow path, only reachable for large order near
    # the regime switch).
    half = 0.5 * x
    term = 1.0
    for i in range(1, order + 1):
        term *= half / i
        if term == 0.0:
            return 0.0
    acc = term
    peak = abs(term)
    z = -half * half
    m = 0
    while True:
        m += 1
        term *= z / (m * (order + m))
        acc += term
        peak = max(peak, abs(term))
        if m > 4 and abs(term) <= 1e-18 * max(abs(acc), 1e-30):
            break
        if m > 400:
            break
    if 2.3e-16 * peak > 5e-14:
        return _bessel_series_exact(order, x)
    return acc


def _bessel_series_exact(order: int, x: float) -> float:
    # Exact-rational evaluation of the power series; the float x is used
    # exactly, so the only rounding is the final conversion.
    half = Fraction(x) / 2
    term = half**order / math.factorial(order)
    acc = term
    z = -half * half
    m = 0
    bound = Fraction(1, 10**26)
    while True:
        m += 1
        term = term * z / (m * (order + m))
        acc += term
        if abs(term) < bound:
            break
    return float(acc)


def bessel_j(order: int, x: float) -> float:
    """Bessel function of the first kind, integer order >= 1, x >= 0.

    Power series for x <= 2*order, else J0/J1 plus upward recurrence
    (stable there since the recurrence coefficients 2m/x stay below 1).
    Absolute error <= 1e-13 for x <= 1e4.
    """
    order = int(order)
    x = float(x)
    if order < 1:
        raise ValueError("order must be a positive integer")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    if x <= 2.0 * order:
        return _bessel_series(order, x)
    if order == 1:
        return _j1(x)
    jm, jc = _j0(x), _j1(x)
    for m in range(1, order):
        jm, jc = jc, (2.0 * m / x) * jc - jm
    return jc


def bessel_j_grid(order: int, x: np.ndarray) -> np.ndarray:
    """Vectorized bessel_j over a nonnegative float array.

    Same regimes as the scalar routine minus the exact-rational rescue,
    which is unreachable for the orders the grid paths use (k <= 14 with
    arguments away from the switch corner, checked against the scalar
    routine in the test suite).
    """
    order = int(order)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 2.0 * order

    if small.any():
        xs = x[small]
        half = 0.5 * xs
        term = np.ones_like(xs)
        for i in range(1, order + 1):
            term = term * half / i
        acc = term.copy()
        z = -half * half
        for m in range(1, 120):
            term = term * z / (m * (order + m))
            acc += term
            if not np.any(np.abs(term) > 1e-18 * np.maximum(np.abs(acc), 1e-30)):
                break
        out[small] = acc

    big = ~small
    if big.any():
        xb = x[big]
        j0v = _j0_vec(xb)
        j1v = _j1_vec(xb)
        if order == 1:
            out[big] = j1v
        else:
            jm, jc = j0v, j1v
            for m in range(1, order):
                jm, jc = jc, (2.0 * m / xb) * jc - jm
            out[big] = jc
    return out


def _polevl_vec(x, coef):
    r = np.full_like(x, coef[0])
    for c in coef[1:]:
        r = r * x + c
    return r


def _p1evl_vec(x, coef):
    r = x + coef[0]
    for c in coef[1:]:
        r = r * x + c
    return r


def _j0_vec(x: np.ndarray) -> np.ndarray:
    x = np.abs(x)
    out = np.empty_like(x)
    lo = x <= 5.0
    if lo.any():
        xl = x[lo]
        z = xl * xl
        v = (z - _DR1) * (z - _DR2) * _polevl_vec(z, _RP0) / _p1evl_vec(z, _RQ0)
        tiny = xl < 1e-5
        if tiny.any():
            v = np.where(tiny, 1.0 - z / 4.0, v)
        out[lo] = v
    hi = ~lo
    if hi.any():
        xh = x[hi]
        w = 5.0 / xh
        z = w * w
        p = _polevl_vec(z, _PP0) / _polevl_vec(z, _PQ0)
        q = _polevl_vec(z, _QP0) / _p1evl_vec(z, _QQ0)
        xn = xh - _PIO4
        out[hi] = (p * np.cos(xn) - w * q * np.sin(xn)) * _SQ2OPI / np.sqrt(xh)
    return out


def _j1_vec(x: np.ndarray) -> np.ndarray:
    x = np.abs(x)
    out = np.empty_like(x)
    lo = x <= 5.0
    if lo.any():
        xl = x[lo]
        z = xl * xl
        w = _polevl_vec(z, _RP1) / _p1evl_vec(z, _RQ1)
        out[lo] = w * xl * (z - _Z1) * (z - _Z2)
    hi = ~lo
    if hi.any():
        xh = x[hi]
        w = 5.0 / xh
        z = w * w
        p = _polevl_vec(z, _PP1) / _polevl_vec(z, _PQ1)
        q = _polevl_vec(z, _QP1) / _p1evl_vec(z, _QQ1)
        xn = xh - _THPIO4
        out[hi] = (p * np.cos(xn) - w * q * np.sin(xn)) * _SQ2OPI / np.sqrt(xh)
    return out


# ---------------------------------------------------------------------------
# Riemann zeta on vertical lines
# ---------------------------------------------------------------------------


def zeta_complex(s: ComplexValue) -> ComplexValue:
    """zeta(s) by Euler-Maclaurin, for Re s > 0, s != 1.

    Relative error <= 1e-10 for Re s >= 1/2, |Im s| <= 200 (except within
    a machine-noise neighbourhood of a zero, where relative error is the
    wrong yardstick; absolute error stays at the 1e-15 scale).
    """
    s = complex(s)
    if s.real <= 0.0:
        raise ValueError("zeta_complex requires Re s > 0")
    if s == 1.0:
        raise PoleError("zeta pole at s = 1")
    n_cut = max(18, int(1.4 * abs(s.imag)) + 8)
    ns = np.arange(1, n_cut, dtype=float)
    # n^{-s} = exp(-s log n), evaluated with numpy for speed.
    logs = np.log(ns)
    acc = complex(np.sum(np.exp(-s * logs)))
    acc += n_cut ** (1.0 - s) / (s - 1.0) + 0.5 * n_cut ** (-s)
    fac = 1.0
    prod = s
    npow = n_cut ** (-s - 1.0)
    inv_n2 = 1.0 / (n_cut * n_cut)
    for j, b in enumerate(_BERNOULLI, start=1):
        fac *= (2 * j) * (2 * j - 1)
        acc += (b / fac) * prod * npow
        prod *= (s + (2 * j - 1)) * (s + 2 * j)
        npow *= inv_n2
    return acc


def zeta_alternating(s: ComplexValue) -> ComplexValue:
    """zeta(s) via the alternating (eta) series with Chebyshev acceleration.

    Second, independent route used by the consistency suite; valid for
    Re s > 0, s != 1 (and away from the zeros of 1 - 2^{1-s}).
    """
    s = complex(s)
    if s.real <= 0.0:
        raise ValueError("zeta_alternating requires Re s > 0")
    if s == 1.0:
        raise PoleError("zeta pole at s = 1")
    n = 24 + int(1.3 * abs(s.imag))
    d = [0] * (n + 1)
    for k in range(n + 1):
        acc = 0
        for i in range(k + 1):
            acc += math.factorial(n + i - 1) * 4**i // (math.factorial(n - i) * math.factorial(2 * i))
        d[k] = n * acc
    out = 0j
    for k in range(n):
        out += (-1) ** k * (d[k] - d[n]) * (k + 1.0) ** (-s)
    return -out / (d[n] * (1.0 - 2.0 ** (1.0 - s)))


# ---------------------------------------------------------------------------
# Stieltjes constants
# ---------------------------------------------------------------------------

# gamma_0, gamma_1, gamma_2 frozen from an Euler-Maclaurin evaluation of
# the defining limit (the generator lives in the test suite and checks
# these literals on every run).
_STIELTJES = (
    0.5772156649015329,
    -0.07281584548367672,
    -0.009690363192872318,
)


def stieltjes(i: int) -> float:
    """The i-th Stieltjes constant, i in {0, 1, 2}; gamma_0 is Euler's gamma."""
    if not 0 <= int(i) <= 2:
        raise IndexError("stieltjes constants are tabulated for i in {0, 1, 2}")
    return _STIELTJES[int(i)]
