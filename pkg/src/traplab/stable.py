"""One-sided stable laws, stable subordinators and generalized arcsine laws.

Conventions: ``S`` has Laplace transform ``E exp(-lam S) = exp(-lam^alpha)``
and the subordinator satisfies ``E exp(-lam V(t)) = exp(-t lam^alpha)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import GridError, ParameterDomainError, PathExhaustedError

ALPHA_MIN, ALPHA_MAX = 0.05, 0.95


def _check_sampler_alpha(alpha: float) -> None:
    if not (ALPHA_MIN <= alpha <= ALPHA_MAX):
        raise ParameterDomainError("alpha", alpha, f"[{ALPHA_MIN}, {ALPHA_MAX}] for stable samplers")


def sample_positive_stable(alpha: float, gen: np.random.Generator, size=None):
    """Kanter's representation: S = (a(U) / E)^((1-alpha)/alpha).

    U is uniform on (0, pi), E is a mean-one exponential and
    a(u) = [sin(alpha u)^alpha sin((1-alpha) u)^(1-alpha) / sin u]^(1/(1-alpha)).
    """
    _check_sampler_alpha(alpha)
    u = np.pi * gen.random(size)
    # random() may return 0 exactly; keep U in the open interval
    u = np.where(u == 0.0, np.pi * 2.0**-54, u)
    e = gen.standard_exponential(size)
    log_a = (
        alpha * np.log(np.sin(alpha * u))
        + (1.0 - alpha) * np.log(np.sin((1.0 - alpha) * u))
        - np.log(np.sin(u))
    ) / (1.0 - alpha)
    return np.exp((1.0 - alpha) / alpha * (log_a - np.log(e)))


@dataclass(frozen=True)
class SubordinatorPath:
    alpha: float
    grid: np.ndarray
    values: np.ndarray


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or np.any(np.diff(g) <= 0):
        raise GridError("grid must start at 0 and be strictly increasing with >= 2 points")
    return g


def sample_subordinator(alpha: float, grid, gen: np.random.Generator) -> SubordinatorPath:
    """V on ``grid``: independent increments (t - s)^(1/alpha) * S."""
    g = _check_grid(grid)
    inc = np.diff(g) ** (1.0 / alpha) * sample_positive_stable(alpha, gen, g.size - 1)
    values = np.concatenate(([0.0], np.cumsum(inc)))
    return SubordinatorPath(alpha=alpha, grid=g, values=values)


def inverse_at(path: SubordinatorPath, t: float) -> float:
    """First-passage time of level ``t``, interpolated linearly inside the crossing cell."""
    if t < 0:
        raise ParameterDomainError("t", t, ">= 0")
    v = path.values
    if t >= v[-1]:
        raise PathExhaustedError(f"level {t} not reached by path (max {v[-1]})")
    i = int(np.searchsorted(v, t, side="right"))
    s0, s1 = path.grid[i - 1], path.grid[i]
    return float(s0 + (s1 - s0) * (t - v[i - 1]) / (v[i] - v[i - 1]))


def sample_inverse(alpha: float, t: float, gen: np.random.Generator, size=None):
    """Grid-free samples of V^-1(t).

    P(V^-1(t) <= u) = P(V(u) >= t) = P(u^(1/alpha) S >= t), so V^-1(t) has
    the law of (t / S)^alpha. No discretization error.
    """
    if t < 0:
        raise ParameterDomainError("t", t, ">= 0")
    return (t / sample_positive_stable(alpha, gen, size)) ** alpha


# -- generalized arcsine laws ----------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by continued fraction, using the symmetry I_x(a,b) = 1 - I_{1-x}(b,a)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        a * math.log(x) + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def _check_unit(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ParameterDomainError("x", x, "[0, 1]")


def arcsine_cdf(alpha: float, x: float) -> float:
    """sin(alpha pi)/pi * int_0^x y^(alpha-1) (1-y)^(-alpha) dy = I_x(alpha, 1-alpha)."""
    if not (0.0 < alpha < 1.0):
        raise ParameterDomainError("alpha", alpha, "(0, 1)")
    _check_unit(x)
    return regularized_beta(alpha, 1.0 - alpha, x)


def arcsine_cdf_quad(alpha: float, x: float) -> float:
    """Same law as :func:`arcsine_cdf`, by algebraic-weight quadrature."""
    _check_unit(x)
    c = math.sin(alpha * math.pi) / math.pi
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x <= 0.5:
        val, _ = integrate.quad(lambda y: (1.0 - y) ** -alpha, 0.0, x, weight="alg",
                                wvar=(alpha - 1.0, 0.0), epsabs=1e-14, epsrel=1e-13, limit=200)
        return c * val
    val, _ = integrate.quad(lambda y: y ** (alpha - 1.0), x, 1.0, weight="alg",
                            wvar=(0.0, -alpha), epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 - c * val


def undershoot_cdf(alpha: float, x: float) -> float:
    """CDF of the renewal undershoot fraction, density prop. to x^-alpha (1-x)^(alpha-1)."""
    _check_unit(x)
    return regularized_beta(1.0 - alpha, alpha, x)


def _overshoot_mass(alpha: float, x: float) -> float:
    """int_0^x dy / (y^alpha (1+y)) without the normalizing constant."""
    if x == 0.0:
        return 0.0

    def head(b):
        val, _ = integrate.quad(lambda y: 1.0 / (1.0 + y), 0.0, b, weight="alg",
                                wvar=(-alpha, 0.0), epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def tail(b):
        # y -> 1/y maps (1/b, inf) ... onto (0, b): int_0^b y^(alpha-1) / (1+y) dy
        val, _ = integrate.quad(lambda y: 1.0 / (1.0 + y), 0.0, b, weight="alg",
                                wvar=(alpha - 1.0, 0.0), epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    if x <= 1.0:
        return head(x)
    total = head(1.0) + tail(1.0)
    if math.isinf(x):
        return total
    return total - tail(1.0 / x)


def overshoot_cdf(alpha: float, x1: float, x2: float) -> float:
    """sin(alpha pi)/pi * int_{x1}^{x2} dx / (x^alpha (1+x)); ``x2`` may be inf."""
    if not (0.0 < alpha < 1.0):
        raise ParameterDomainError("alpha", alpha, "(0, 1)")
    if not (0.0 <= x1 <= x2):
        raise ParameterDomainError("x1, x2", (x1, x2), "0 <= x1 <= x2")
    if x1 == x2:
        return 0.0
    c = math.sin(alpha * math.pi) / math.pi
    return c * (_overshoot_mass(alpha, x2) - _overshoot_mass(alpha, x1))


def parse_grid(spec: str) -> np.ndarray:
    """``"start:stop:step"`` (inclusive of stop) or a comma list."""
    if ":" in spec:
        a, b, s = (float(v) for v in spec.split(":"))
        n = int(round((b - a) / s))
        return np.array([a + i * s for i in range(n + 1)])
    return np.array([float(v) for v in spec.split(",")])


def arcsine_table(alpha: float, xs) -> list[tuple[float, float, float]]:
    return [(alpha, float(x), arcsine_cdf(alpha, float(x))) for x in xs]


def write_arcsine_table(path, alpha: float, xs) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["alpha", "x", "arcsine_cdf"])
        for row in arcsine_table(alpha, xs):
            w.writerow([repr(v) for v in row])
    return path
