"""Orthogonalization algebra for shifted-oldform spaces.

Everything is an exact polynomial computation in the free Hecke number
x (the level-one eigenvalue stand-in, constrained to [-2, 2]); at levels
divisible by the prime, x is pinned to 0 or +-1/sqrt(p).  The module
builds the Gram matrix of the shifted forms, the sparse change of basis
that orthonormalizes it, and the Rankin-type series identity that the
shifted inner products come from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError

__all__ = [
    "CASE_LEVEL_ONE",
    "CASE_P_EXACT",
    "CASE_P_SQUARE",
    "HeckeParam",
    "GramSpec",
    "hecke_power",
    "p_polynomial",
    "basis_coefficients",
    "gram_matrix",
    "gram_spec",
    "x1_squared_sum",
    "rho_factor",
    "sigma_normalizer",
    "RankinCheck",
    "rankin_series_check",
]

CASE_LEVEL_ONE = "level_one"
CASE_P_EXACT = "p_exact_divides"
CASE_P_SQUARE = "p_square_divides"
_CASES = (CASE_LEVEL_ONE, CASE_P_EXACT, CASE_P_SQUARE)


@dataclass(frozen=True)
class HeckeParam:
    """Prime p, level case, and the Hecke number x at p.

    level_one: x free in [-2, 2].
    p_exact_divides: x = +-1/sqrt(p)  (x^2 = 1/p).
    p_square_divides: x = 0.
    """

    p: int
    case: str
    x: float

    def __post_init__(self):
        if self.case not in _CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.case == CASE_LEVEL_ONE:
            if abs(self.x) > 2.0:
                raise ValueError("level-one Hecke number must lie in [-2, 2]")
        elif self.case == CASE_P_EXACT:
            if not math.isclose(self.x * self.x, 1.0 / self.p, rel_tol=1e-12):
                raise ValueError("p||m' requires x = +-1/sqrt(p)")
        else:
            if self.x != 0.0:
                raise ValueError("p^2|m' requires x = 0")

    @classmethod
    def level_one(cls, p: int, x: float) -> "HeckeParam":
        return cls(p=p, case=CASE_LEVEL_ONE, x=float(x))

    @classmethod
    def p_exact(cls, p: int, sign: int = 1) -> "HeckeParam":
        return cls(p=p, case=CASE_P_EXACT, x=float(sign) / math.sqrt(p))

    @classmethod
    def p_square(cls, p: int) -> "HeckeParam":
        return cls(p=p, case=CASE_P_SQUARE, x=0.0)

    @property
    def nu_prime(self) -> float:
        return 1.0 + 1.0 / self.p


def hecke_power(param: HeckeParam, r: int) -> float:
    """Hecke number at p^r.

    Level one: the three-term recurrence u_r = x u_{r-1} - u_{r-2} with
    u_0 = 1, u_1 = x.  Levels divisible by p: plain power x^r by
    multiplicativity.
    """
    r = int(r)
    if r < 0:
        raise ValueError("r must be >= 0")
    if param.case != CASE_LEVEL_ONE:
        return param.x**r if r else 1.0
    um, uc = 1.0, param.x
    if r == 0:
        return um
    for _ in range(r - 1):
        um, uc = uc, param.x * uc - um
    return uc


def _p_recurrence(x, r: int, p1):
    if r == 0:
        return 1.0 if not isinstance(p1, complex) else complex(1.0)
    pm1, pc = 1.0, p1
    for _ in range(r - 1):
        pm1, pc = pc, x * pc - pm1
    return pc


def p_polynomial(x: float, r: int, p: int, s: complex = 1.0) -> complex:
    """P_r(x, s): P_0 = 1, P_1 = x/(1 + p^{-s}), P_r = x P_{r-1} - P_{r-2}.

    At s = 1 the denominator is the index factor 1 + 1/p.  Returns a real
    float when s is real.
    """
    r = int(r)
    if r < 0:
        raise ValueError("r must be >= 0")
    if isinstance(s, complex) and s.imag != 0.0:
        t = complex(p) ** (-s)
    else:
        t = float(p) ** (-float(s.real if isinstance(s, complex) else s))
    return _p_recurrence(x, r, x / (1.0 + t))


def rho_factor(param: HeckeParam, delta: int) -> float:
    """rho(p^delta) = sum_{t | p^delta} mu(t) x(t)^2 / t = 1 - x^2/p for
    delta >= 1 (and 1 for delta = 0); always in (0, 1]."""
    if delta == 0:
        return 1.0
    rho = 1.0 - param.x * param.x / param.p
    if not 0.0 < rho <= 1.0:
        raise DegenerateError(f"rho = {rho} outside (0, 1]")
    return rho


def sigma_normalizer(param: HeckeParam) -> float:
    """sigma = 1 - P_1(x)^2 / p for the level-one construction; bounded
    below by 1/9 on x in [-2, 2]."""
    p1 = param.x / param.nu_prime
    sigma = 1.0 - p1 * p1 / param.p
    if sigma <= 0.0:
        raise DegenerateError("sigma normalizer must be positive")
    return sigma


def basis_coefficients(param: HeckeParam, a: int) -> np.ndarray:
    """Change-of-basis matrix X, rows indexed by shift exponent gamma
    (form f|p^gamma), columns by basis label delta, both 0..a.

    Levels divisible by p: column delta has entries at gamma = delta
    (value 1/sqrt(rho)) and gamma = delta - 1 (value -x/sqrt(p rho)),
    the squarefree-ratio sparsity.  Level one: column 0 is the unit
    vector; column 1 mixes two shifts with 1/sqrt(sigma); columns
    r >= 2 are the banded three-term combination with normalizer
    1/sqrt((1 - p^{-2}) sigma).
    """
    a = int(a)
    if a < 0:
        raise ValueError("a must be >= 0")
    dim = a + 1
    X = np.zeros((dim, dim))
    p = param.p
    if param.case != CASE_LEVEL_ONE:
        for delta in range(dim):
            rho = rho_factor(param, delta)
            X[delta, delta] = 1.0 / math.sqrt(rho)
            if delta >= 1:
                X[delta - 1, delta] = -param.x / math.sqrt(p * rho)
        return X
    sigma = sigma_normalizer(param)
    p1 = param.x / param.nu_prime
    X[0, 0] = 1.0
    if a >= 1:
        norm = 1.0 / math.sqrt(sigma)
        X[1, 1] = norm
        X[0, 1] = -norm * p1 / math.sqrt(p)
    for r in range(2, dim):
        norm = 1.0 / math.sqrt((1.0 - p**-2.0) * sigma)
        X[r, r] = norm
        X[r - 1, r] = -norm * param.nu_prime * p1 / math.sqrt(p)
        X[r - 2, r] = norm / p
    return X


def gram_matrix(param: HeckeParam, a: int) -> np.ndarray:
    """Gram matrix of the shifted forms f|p^0 .. f|p^a, unit diagonal.

    Entry (i, j) is u(p^{|i-j|}) / p^{|i-j|/2} with u the Hecke number at
    levels divisible by p, and P_{|i-j|}(x) / p^{|i-j|/2} at level one.
    """
    a = int(a)
    if a < 0:
        raise ValueError("a must be >= 0")
    dim = a + 1
    G = np.empty((dim, dim))
    vals = []
    for j in range(dim):
        if param.case == CASE_LEVEL_ONE:
            num = float(np.real(p_polynomial(param.x, j, param.p)))
        else:
            num = hecke_power(param, j)
        vals.append(num / param.p ** (j / 2.0))
    for i in range(dim):
        for j in range(dim):
            G[i, j] = vals[abs(i - j)]
    return G


@dataclass(frozen=True)
class GramSpec:
    """Gram matrix and orthonormalizing basis matrix for one level case."""

    case: str
    dim: int
    G: np.ndarray
    X: np.ndarray


def gram_spec(param: HeckeParam, a: int) -> GramSpec:
    return GramSpec(case=param.case, dim=a + 1, G=gram_matrix(param, a), X=basis_coefficients(param, a))


def x1_squared_sum(param: HeckeParam, a: int) -> float:
    """sum over basis columns of the squared f|1 coefficient, computed
    from the matrix and from the closed form, asserted equal to 1e-12.

    Closed forms: (1 - mu(m')^2/p^2)^{-omega(l)} at levels divisible by
    p; 1/sigma for a single shift, 1/((1 - p^{-2}) sigma) for two or
    more, at level one.
    """
    X = basis_coefficients(param, a)
    from_cols = float((X[0, :] ** 2).sum())
    p = param.p
    if param.case == CASE_P_SQUARE:
        closed = 1.0
    elif param.case == CASE_P_EXACT:
        closed = 1.0 if a == 0 else (1.0 - p**-2.0) ** -1.0
    else:
        sigma = sigma_normalizer(param)
        if a == 0:
            closed = 1.0
        elif a == 1:
            closed = 1.0 / sigma
        else:
            closed = 1.0 / ((1.0 - p**-2.0) * sigma)
    if abs(from_cols - closed) > 1e-12 * max(1.0, abs(closed)):
        raise DegenerateError(
            f"coefficient-sum closed form mismatch: {from_cols} vs {closed}"
        )
    return from_cols


@dataclass(frozen=True)
class RankinCheck:
    lhs: float
    rhs: float
    residual: float
    envelope: float


def rankin_series_check(
    param: HeckeParam, t: float, r: int, terms: int = 30
) -> RankinCheck:
    """Truncated check of the shifted-series factorization

        sum_j u(p^j) u(p^{j+r}) t^j = Z_r(x, t) * sum_j u(p^j)^2 t^j

    with multiplier Z_r = u(p^r) at levels divisible by p (exact at any
    truncation) and Z_r = P_r(x, s), t = p^{-s}, at level one.  The
    residual of the two truncations is bounded by the crude divisor-bound
    envelope 4^{terms+1} |t|^{terms} / (1 - 4|t|), which requires
    |t| < 1/4.
    """
    terms = int(terms)
    if terms < 10:
        raise ValueError("terms must be >= 10")
    if abs(t) > 0.3:
        raise ValueError("|t| must be <= 0.3")
    lhs = 0.0
    base = 0.0
    tp = 1.0
    for j in range(terms):
        uj = hecke_power(param, j)
        lhs += uj * hecke_power(param, j + r) * tp
        base += uj * uj * tp
        tp *= t
    if param.case == CASE_LEVEL_ONE:
        # t = p^{-s}, so P_1 = x / (1 + t) directly
        mult = float(_p_recurrence(param.x, r, param.x / (1.0 + t)))
    else:
        mult = hecke_power(param, r)
    rhs = mult * base
    envelope = math.inf
    if 4.0 * abs(t) < 1.0:
        envelope = 4.0 ** (terms + 1) * abs(t) ** terms / (1.0 - 4.0 * abs(t))
    return RankinCheck(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), envelope=envelope)
