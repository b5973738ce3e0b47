"""Analytic layer: mollified cutoffs by vertical-line quadrature,
Laurent data of the level-restricted zeta factor near its pole, the
residue engine, and the cubic polynomial whose value at log q-hat gives
the third-moment main term.

The two cutoffs are inverse-Mellin integrals on the line Re s = 2,

    T(y) = (1/2 pi i) int Gamma(s + k/2)/Gamma(k/2) * G(s)/s * y^{-s} ds
    U(y) = (2/2 pi i) int zq(1+2s) (Gamma(s+k/2)/Gamma(k/2))^2 G(s)^2/s
                         * y^{-s} ds

with zq(s) = zeta(s)(1 - p^{-s}) and G an even polynomial with G(0) = 1,
G(-1) = G(-2) = 0.  The integrand factor is independent of y, so a
kernel of node values is built once per (k, p, G) and reused; the
trapezoid rule on these entire, exponentially decaying integrands
converges geometrically and is monitored by step halving.
"""

from __future__ import annotations

import math
import cmath
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import arith
from .errors import QuadratureError, VerificationError
from .numkernel import (
    gamma_log_derivatives,
    log_gamma_complex,
    stieltjes,
    zeta_complex,
)

__all__ = [
    "CutoffPolynomial",
    "default_G",
    "alternative_G",
    "T_cutoff",
    "U_cutoff",
    "cutoff_kernel",
    "g_k",
    "LaurentSeries",
    "laurent_constants",
    "cross_b1_circle",
    "residue_engine",
    "residue_circle_oracle",
    "QPolynomial",
    "q_polynomial",
    "xi_constants",
]

_STEP = 0.05           # trapezoid step on the line (halved internally)
_LINE_SIGMA = 2.0
_HALVING_TOL = 1e-8
_Y_MIN = 1e-6          # smallest y the fixed truncation must support


@dataclass(frozen=True)
class CutoffPolynomial:
    """Even polynomial G with G(0) = 1 and G(-1) = G(-2) = 0.

    Coefficients are ascending; admissibility is checked on creation.
    """

    coefficients: tuple[float, ...]

    def __post_init__(self):
        c = self.coefficients
        if len(c) < 3:
            raise ValueError("G must have degree >= 2")
        if any(c[i] != 0.0 for i in range(1, len(c), 2)):
            raise ValueError("G must be even")
        if abs(self(0.0) - 1.0) > 1e-14:
            raise ValueError("G(0) must equal 1")
        if abs(self(-1.0)) > 1e-12 or abs(self(-2.0)) > 1e-12:
            raise ValueError("G(-1) and G(-2) must vanish")

    def __call__(self, s):
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * s + c
        return acc

    def second_derivative_at_zero(self) -> float:
        return 2.0 * self.coefficients[2]


def default_G() -> CutoffPolynomial:
    """G(s) = (1 - s^2)(1 - s^2/4) = 1 - (5/4)s^2 + s^4/4."""
    return CutoffPolynomial((1.0, 0.0, -1.25, 0.0, 0.25))


def alternative_G() -> CutoffPolynomial:
    """G(s) = (1 - s^2)^2 (1 - s^2/4), an admissible degree-6 choice used
    to confirm that leading asymptotics do not depend on G."""
    return CutoffPolynomial((1.0, 0.0, -2.25, 0.0, 1.5, 0.0, -0.25))


def _gamma_ratio(s: complex, k: int) -> complex:
    # Gamma(s + k/2) / Gamma(k/2) through log-gamma (no overflow on the line)
    return cmath.exp(log_gamma_complex(s + 0.5 * k) - log_gamma_complex(0.5 * k))


def _zeta_q(w: complex, p: int) -> complex:
    return zeta_complex(w) * (1.0 - complex(p) ** (-w))


class _LineKernel:
    """Node values of the y-independent integrand factor on Re s = sigma.

    eval() forms sum_j W_j y^{-sigma - i t_j} with the trapezoid weights,
    at both the nominal step and half step, and raises QuadratureError if
    they disagree beyond the halving tolerance.
    """

    def __init__(self, kind: str, k: int, p: int | None, G: CutoffPolynomial,
                 sigma: float = _LINE_SIGMA):
        if kind not in ("T", "U"):
            raise ValueError("kind must be 'T' or 'U'")
        self.kind, self.k, self.p, self.G, self.sigma = kind, k, p, G, sigma
        h_fine = 0.5 * _STEP
        t_max = self._truncation_height()
        n_nodes = int(math.ceil(t_max / h_fine)) + 1
        ts = h_fine * np.arange(n_nodes)
        w = np.empty(n_nodes, dtype=complex)
        for i, t in enumerate(ts):
            s = complex(sigma, t)
            gr = _gamma_ratio(s, k)
            gs = complex(self.G(s))
            if kind == "T":
                w[i] = gr * gs / s
            else:
                w[i] = _zeta_q(1.0 + 2.0 * s, p) * gr * gr * gs * gs / s
        self.ts = ts
        self.values = w
        # (1/pi) for T, (2/pi) for U; times the half-weight structure below.
        self.prefactor = (1.0 if kind == "T" else 2.0) / math.pi
        self._envelope: tuple[np.ndarray, np.ndarray] | None = None

    def _truncation_height(self) -> float:
        # Stirling-envelope search: the integrand modulus at height t is
        # below e^{-a t} t^b * |G-part| * caps, with a = pi/2 per Gamma
        # factor; stop once the analytic tail of that envelope, amplified
        # by y_min^{-sigma}, is negligible.
        k, sigma = self.k, self.sigma
        n_gamma = 1 if self.kind == "T" else 2
        a = n_gamma * math.pi / 2.0
        b = n_gamma * (sigma + 0.5 * k - 0.5)
        zeta_cap = 1.0 if self.kind == "T" else 2.0
        gamma_half_k = abs(cmath.exp(log_gamma_complex(0.5 * k)))
        stirling_slack = 1.5
        t = 12.0
        while t <= 400.0:
            g_mod = abs(complex(self.G(complex(sigma, t)))) ** n_gamma
            env = (
                (math.sqrt(2.0 * math.pi) * stirling_slack / gamma_half_k) ** n_gamma
                * math.exp(-a * t)
                * t**b
                * g_mod
                * zeta_cap
                / t
            )
            tail = env * (2.0 / a) if a * t > 2.0 * b else math.inf
            if tail * _Y_MIN ** (-sigma) < 1e-16:
                return t
            t += 4.0
        raise QuadratureError("failed to locate a truncation height")

    def eval_many(self, y: np.ndarray, check: bool = True) -> np.ndarray:
        """Vectorized evaluation over positive y (chunked internally)."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0.0):
            raise ValueError("y must be positive")
        out = np.empty(y.shape, dtype=float)
        h_fine = float(self.ts[1] - self.ts[0])
        vals = self.values
        flat = y.ravel()
        res = out.ravel()
        chunk = max(1, 2_000_000 // len(vals))
        for lo in range(0, len(flat), chunk):
            yc = flat[lo : lo + chunk, None]
            phases = np.exp(-1j * np.log(yc) * self.ts[None, :])
            f = (vals[None, :] * phases).real
            fine = (0.5 * f[:, 0] + f[:, 1:].sum(axis=1)) * h_fine
            if check:
                coarse = (0.5 * f[:, 0] + f[:, 2::2].sum(axis=1)) * (2.0 * h_fine)
                bad = np.abs(fine - coarse) > _HALVING_TOL
                if bad.any():
                    i = int(np.argmax(bad))
                    raise QuadratureError(
                        f"step-halving disagreement {abs(fine[i]-coarse[i]):.2e} "
                        f"at y={flat[lo + i]:.6g}"
                    )
            res[lo : lo + chunk] = self.prefactor * fine * flat[lo : lo + chunk] ** (-self.sigma)
        return out

    def eval(self, y: float, check: bool = True) -> float:
        return float(self.eval_many(np.array([y]), check=check)[0])

    # -- empirical power envelopes -------------------------------------

    _ENV_ORDERS = (1, 2, 3, 4, 5, 6)
    _ENV_SAFETY = 4.0
    _ENV_YMAX = 3000.0

    def envelope_constants(self) -> np.ndarray:
        """Fitted constants C_j with |value(y)| <= C_j y^{-j} on the fitted
        grid; empirical stand-ins for the unspecified decay constants."""
        if self._envelope is None:
            grid = np.geomspace(0.8, self._ENV_YMAX, 160)
            vals = np.abs(self.eval_many(grid, check=False))
            cs = np.array(
                [float((vals * grid**j).max()) * self._ENV_SAFETY for j in self._ENV_ORDERS]
            )
            self._envelope = (np.array(self._ENV_ORDERS, dtype=float), cs)
        return self._envelope[1]

    def envelope(self, y: float) -> float:
        orders, cs = self._envelope or (None, None)
        if cs is None:
            self.envelope_constants()
            orders, cs = self._envelope
        return float(np.min(cs * np.asarray(y, dtype=float) ** (-orders)))

    def envelope_tail_weighted(self, n_cut: int, scale: float, extra_theta: float = 0.5) -> float:
        """Bound sum_{n > n_cut} tau(n) n^{-extra_theta} * envelope(n/scale)
        using the steepest fitted power (closed form via tau_tail_bound)."""
        orders, cs = self._envelope or (None, None)
        if cs is None:
            self.envelope_constants()
            orders, cs = self._envelope
        best = math.inf
        for j, c in zip(orders, cs):
            theta = j + extra_theta
            if theta <= 1.0:
                continue
            best = min(best, c * scale**j * arith.tau_tail_bound(n_cut, theta))
        return best


@lru_cache(maxsize=32)
def cutoff_kernel(kind: str, k: int, p: int | None, coeffs: tuple[float, ...]) -> _LineKernel:
    return _LineKernel(kind, k, p, CutoffPolynomial(coeffs))


def T_cutoff(y: float, k: int, G: CutoffPolynomial | None = None) -> float:
    """The odd-moment cutoff T(y); T(y) -> 1 as y -> 0 and decays faster
    than any power as y -> infinity."""
    if y <= 0.0:
        raise ValueError("y must be positive")
    G = G or default_G()
    return cutoff_kernel("T", int(k), None, G.coefficients).eval(float(y))


def U_cutoff(y: float, k: int, p: int, nu: int = 1, G: CutoffPolynomial | None = None) -> float:
    """The squared-moment cutoff U(y); for small y it behaves like
    (phi(q)/q)(log(1/y) + g_k(p)).  Depends on the level only through p."""
    if y <= 0.0:
        raise ValueError("y must be positive")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    G = G or default_G()
    return cutoff_kernel("U", int(k), int(p), G.coefficients).eval(float(y))


def g_k(k: int, p: int) -> float:
    """The constant 2 (log p/(p-1) + Gamma'/Gamma(k/2) + gamma) from the
    logarithmic small-y law of U."""
    if k < 2 or k % 2:
        raise ValueError("k must be an even integer >= 2")
    if not arith.is_prime(p):
        raise ValueError("p must be prime")
    psi = gamma_log_derivatives(0.5 * k, 1).values[0]
    return 2.0 * (math.log(p) / (p - 1.0) + psi + stieltjes(0))


# ---------------------------------------------------------------------------
# Laurent data of zq(1+s)^2 and zq(1+s) zq'(1+s) around s = 0
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaurentSeries:
    """Finitely many Laurent coefficients starting at min_order."""

    min_order: int
    coefficients: tuple[float, ...]

    def evaluate(self, s: complex) -> complex:
        acc = 0j
        for i, c in enumerate(self.coefficients):
            acc += c * complex(s) ** (self.min_order + i)
        return acc


def _laurent_closed(p: int, choice: str) -> LaurentSeries:
    L = math.log(p)
    g0, g1, g2 = stieltjes(0), stieltjes(1), stieltjes(2)
    u = L / (p - 1.0)
    if choice == "squared":
        a2 = 1.0
        a1 = 2.0 * u + 2.0 * g0
        a0 = u * u - (L * L - 4.0 * g0 * L) / (p - 1.0) + g0 * g0 - 2.0 * g1
        return LaurentSeries(-2, (a2, a1, a0))
    if choice == "cross":
        b3 = -1.0
        b2 = -u - g0
        b0 = (
            -(L**3 - 2.0 * g0 * L * L) / (2.0 * (p - 1.0) ** 2)
            + (L**3 - 6.0 * g0 * L * L + 6.0 * (g0 * g0 - 2.0 * g1) * L) / (6.0 * (p - 1.0))
            - g0 * g1
            + 0.5 * g2
        )
        return LaurentSeries(-3, (b3, b2, 0.0, b0))
    raise ValueError("choice must be 'squared' or 'cross'")


def _zeta_q_prime(w: complex, p: int, step: float = 1e-5) -> complex:
    # five-point central difference; balanced step for |w - 1| >= 0.01
    f = lambda x: _zeta_q(x, p)
    return (-f(w + 2 * step) + 8.0 * f(w + step) - 8.0 * f(w - step) + f(w - 2 * step)) / (
        12.0 * step
    )


def _fit_laurent_tail(p: int, choice: str) -> np.ndarray:
    """Fit the Laurent coefficients from plain samples of the product.

    squared: solve for the s^1..s^4 coefficients of s^2 zq(1+s)^2/(phi/q)^2
    at s = +-0.01, +-0.02 (the leading 1 is subtracted).  cross: least
    squares for b_{-3}..b_1 on s = +-{0.01, 0.02, 0.03}, with zq' by
    finite differences.
    """
    scale = (1.0 - 1.0 / p) ** 2
    if choice == "squared":
        pts = np.array([-0.02, -0.01, 0.01, 0.02])
        rhs = np.array(
            [(_zeta_q(1.0 + s, p) ** 2).real * s * s / scale - 1.0 for s in pts]
        )
        A = np.vander(pts, 5, increasing=True)[:, 1:]  # s^1..s^4
        coef = np.linalg.solve(A, rhs)
        return np.concatenate(([1.0], coef[:2]))  # a_{-2}, a_{-1}, a_0
    pts = np.array([-0.03, -0.02, -0.01, 0.01, 0.02, 0.03])
    rhs = np.array(
        [
            (_zeta_q(1.0 + s, p) * _zeta_q_prime(1.0 + s, p)).real * s**3 / scale
            for s in pts
        ]
    )
    A = np.vander(pts, 6, increasing=True)  # b_{-3} .. b_2 against s^0..s^5
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return coef[:4]  # b_{-3}, b_{-2}, b_{-1}, b_0


_FIT_TOL = 1e-4


@lru_cache(maxsize=64)
def laurent_constants(p: int, choice: str) -> LaurentSeries:
    """Laurent data of the squared (1/s^2 + ...) or cross (1/s^3 + ...)
    zeta product, normalized by (phi(q)/q)^2.

    Closed forms are assembled from the Stieltjes constants, then checked
    against a numeric fit of samples near s = 0 (including the vanishing
    1/s coefficient of the cross product); disagreement raises
    VerificationError.
    """
    if not arith.is_prime(p):
        raise ValueError("p must be prime")
    closed = _laurent_closed(p, choice)
    fitted = _fit_laurent_tail(p, choice)
    for got, want in zip(fitted, closed.coefficients):
        if abs(got - want) > _FIT_TOL * max(1.0, abs(want)):
            raise VerificationError(
                f"Laurent fit mismatch for {choice} at p={p}: {fitted} vs "
                f"{closed.coefficients}"
            )
    return closed


def cross_b1_circle(p: int, radius: float = 0.05, nodes: int = 1024) -> float:
    """The 1/s coefficient of zq(1+s) zq'(1+s)/(phi/q)^2, extracted by a
    circle contour; analytically zero, so this measures the numeric floor."""
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    ss = radius * np.exp(1j * theta)
    vals = np.array([_zeta_q(1.0 + s, p) * _zeta_q_prime(1.0 + s, p) for s in ss])
    scale = (1.0 - 1.0 / p) ** 2
    # b_{-1} = (1/2 pi i) oint f(s) ds = mean of f(s) * s over the circle
    return float(np.mean(vals * ss).real / scale)


# ---------------------------------------------------------------------------
# Residues and the cubic polynomial
# ---------------------------------------------------------------------------


def xi_constants(k: int, G: CutoffPolynomial | None = None) -> dict[tuple[int, int], float]:
    """Taylor data xi[j, i] with F^{(j)}(0) = sum_i xi[j,i] (log q-hat)^{j-i}
    for F(s) = Gamma(s+k/2)/Gamma(k/2) q-hat^s G(s)."""
    G = G or default_G()
    d = gamma_log_derivatives(0.5 * k, 3)
    psi, g2g, g3g = d.values
    gpp = G.second_derivative_at_zero()
    xi = {(j, 0): 1.0 for j in range(4)}
    for j in (1, 2, 3):
        xi[(j, 1)] = j * psi
    for j in (2, 3):
        xi[(j, 2)] = (2 * j - 3) * (g2g + gpp)
    xi[(3, 3)] = g3g + 3.0 * psi * gpp
    return xi


def _f_derivatives(k: int, log_qhat: float, G: CutoffPolynomial) -> tuple[float, ...]:
    xi = xi_constants(k, G)
    L = log_qhat
    f0 = 1.0
    f1 = L + xi[(1, 1)]
    f2 = L * L + xi[(2, 1)] * L + xi[(2, 2)]
    f3 = L**3 + xi[(3, 1)] * L * L + xi[(3, 2)] * L + xi[(3, 3)]
    return f0, f1, f2, f3


def residue_engine(
    k: int,
    p: int,
    nu: int,
    laurent: LaurentSeries,
    G: CutoffPolynomial | None = None,
) -> float:
    """Residue at s = 0 of  laurent-product(s) * F(s)/s  via the closed
    coefficient pairing; `laurent` decides the squared (min_order -2) or
    cross (min_order -3) pairing.  Normalization (phi(q)/q)^2 included.
    """
    G = G or default_G()
    params_qhat = math.sqrt(float(p) ** nu) / (2.0 * math.pi)
    f0, f1, f2, f3 = _f_derivatives(k, math.log(params_qhat), G)
    scale = (1.0 - 1.0 / p) ** 2
    c = laurent.coefficients
    if laurent.min_order == -2:
        a2, a1, a0 = c
        return scale * (a2 * f2 / 2.0 + a1 * f1 + a0 * f0)
    if laurent.min_order == -3:
        b3, b2, b1, b0 = c
        return scale * (b3 * f3 / 6.0 + b2 * f2 / 2.0 + b1 * f1 + b0 * f0)
    raise ValueError("laurent series must start at order -2 or -3")


def residue_circle_oracle(
    k: int,
    p: int,
    nu: int,
    choice: str,
    G: CutoffPolynomial | None = None,
    radius: float = 0.05,
    nodes: int = 4096,
) -> float:
    """Independent contour evaluation of the same residue:
    (1/2 pi i) oint zq(1+s)^2 F(s)/s ds (or the cross product), with F
    built directly from gamma/zeta evaluations on the circle."""
    G = G or default_G()
    qhat = math.sqrt(float(p) ** nu) / (2.0 * math.pi)
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    ss = radius * np.exp(1j * theta)
    acc = 0j
    for s in ss:
        F = cmath.exp(log_gamma_complex(s + 0.5 * k) - log_gamma_complex(0.5 * k))
        F *= qhat**s * complex(G(s))
        if choice == "squared":
            zfac = _zeta_q(1.0 + s, p) ** 2
        elif choice == "cross":
            zfac = _zeta_q(1.0 + s, p) * _zeta_q_prime(1.0 + s, p)
        else:
            raise ValueError("choice must be 'squared' or 'cross'")
        acc += zfac * F
    return float((acc / nodes).real)


@dataclass(frozen=True)
class QPolynomial:
    """Cubic main-term polynomial and its value at X = log q-hat."""

    A3: float
    A2: float
    A1: float
    A0: float
    log_qhat: float
    value: float

    def __call__(self, X: float) -> float:
        return ((self.A3 * X + self.A2) * X + self.A1) * X + self.A0


def q_polynomial(k: int, p: int, q_hat: float, G: CutoffPolynomial | None = None) -> QPolynomial:
    """Assemble the cubic Q from the Laurent and Taylor constants.

    Internal consistency gates: A3 must equal 2/3 exactly (rational
    assembly), and A2 must match its simplified closed form
    2 (2 log p/(p-1) + Gamma'/Gamma(k/2) + 2 gamma) to 1e-10.
    """
    G = G or default_G()
    xi = xi_constants(k, G)
    a2, a1, a0 = laurent_constants(p, "squared").coefficients
    b3, b2, _b1, b0 = laurent_constants(p, "cross").coefficients
    g = g_k(k, p)

    # A3 carries only the integer xi weights; assemble it exactly.
    from fractions import Fraction

    A3_exact = Fraction(1) * 1 + Fraction(1, 3) * (-1) * 1
    assert A3_exact == Fraction(2, 3)
    A3 = float(A3_exact)

    A2 = a2 * xi[(2, 1)] + 2.0 * a1 + 0.5 * a2 * g + b3 * xi[(3, 1)] / 3.0 + b2
    A1 = (
        a2 * xi[(2, 2)]
        + 2.0 * a1 * xi[(1, 1)]
        + 2.0 * a0
        + (0.5 * a2 * xi[(2, 1)] + a1) * g
        + b3 * xi[(3, 2)] / 3.0
        + b2 * xi[(2, 1)]
    )
    A0 = (
        (0.5 * a2 * xi[(2, 2)] + a1 * xi[(1, 1)] + a0) * g
        + b3 * xi[(3, 3)] / 3.0
        + b2 * xi[(2, 2)]
        + 2.0 * b0
    )

    psi = gamma_log_derivatives(0.5 * k, 1).values[0]
    a2_printed = 2.0 * (2.0 * math.log(p) / (p - 1.0) + psi + 2.0 * stieltjes(0))
    if abs(A2 - a2_printed) > 1e-10 * max(1.0, abs(a2_printed)):
        raise VerificationError(
            f"A2 assembly {A2} disagrees with its closed form {a2_printed}"
        )

    X = math.log(q_hat)
    value = ((A3 * X + A2) * X + A1) * X + A0
    return QPolynomial(A3=A3, A2=A2, A1=A1, A0=A0, log_qhat=X, value=value)
