"""Model parameters, the heavy-tailed trap environment and deep-trap scales."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .errors import HorizonTooSmallError, ParameterDomainError

DEFAULT_KAPPA = 0.25
DEFAULT_GAMMA = 0.5


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    epsilon: float
    p: float
    q: float
    r: float
    v: float
    v_sharp: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha", "epsilon", "p", "q", "r", "v", "v_sharp")}


def check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterDomainError("alpha", alpha, "(0, 1)")


def make_params(alpha: float, epsilon: float) -> ModelParams:
    """Build :class:`ModelParams` for tail exponent ``alpha`` and drift ``epsilon``."""
    check_alpha(alpha)
    if not (0.0 < epsilon <= 0.5):
        raise ParameterDomainError("epsilon", epsilon, "(0, 1/2]")
    p = 0.5 + epsilon
    q = 0.5 - epsilon
    v = 2.0 * epsilon
    v_sharp = math.sin(alpha * math.pi) / (alpha * math.pi) * v**alpha
    return ModelParams(alpha=alpha, epsilon=epsilon, p=p, q=q, r=q / p, v=v, v_sharp=v_sharp)


# -- depth laws --------------------------------------------------------------


class ParetoLaw:
    """Exact Pareto on [1, inf): P(tau >= u) = u^-alpha."""

    tag = "pareto"

    def from_uniforms(self, u1, u2, alpha):
        return kernels.pareto_quantile_array(np.asarray(u1, dtype=float), 1.0 / alpha)

    def tail(self, u, alpha):
        return min(1.0, u**-alpha) if u >= 1.0 else 1.0

    def to_dict(self):
        return {"tag": self.tag}


@dataclass(frozen=True)
class TailEquivalentLaw:
    """Pareto tail mixed with a bounded component.

    With probability ``weight`` the depth is uniform on ``[1, cap]``; otherwise
    it is ``c * U^(-1/alpha)`` with ``c = (1 - weight)^(-1/alpha)``, so that
    ``u^alpha P(tau >= u) = 1`` for all ``u >= max(cap, c)``.
    """

    weight: float = 0.3
    cap: float = 10.0
    tag = "tail-equivalent"

    def from_uniforms(self, u1, u2, alpha):
        c = (1.0 - self.weight) ** (-1.0 / alpha)
        return np.where(u2 < self.weight, 1.0 + (self.cap - 1.0) * u1, c * u1 ** (-1.0 / alpha))

    def tail(self, u, alpha):
        c = (1.0 - self.weight) ** (-1.0 / alpha)
        bounded = self.weight * min(1.0, max(0.0, (self.cap - u) / (self.cap - 1.0)))
        pareto = (1.0 - self.weight) * (1.0 if u <= c else (u / c) ** -alpha)
        return bounded + pareto

    def to_dict(self):
        return {"tag": self.tag, "weight": self.weight, "cap": self.cap}


@dataclass(frozen=True)
class ConstantLaw:
    """Degenerate law, every site has the same depth. Used for engineered environments."""

    value: float = 1.0
    tag = "constant"

    def from_uniforms(self, u1, u2, alpha):
        return np.full(np.shape(u1), float(self.value))

    def tail(self, u, alpha):
        return 1.0 if u <= self.value else 0.0

    def to_dict(self):
        return {"tag": self.tag, "value": self.value}


PARETO = ParetoLaw()


def sample_depth(env_seed: int, x: int, alpha: float) -> float:
    """Pareto depth at site ``x``; a pure function of ``(env_seed, x)``."""
    check_alpha(alpha)
    return float(kernels.pareto_depth(np.uint64(rng.subkey(env_seed, 0)), x, 1.0 / alpha))


@dataclass
class Environment:
    """Random environment of traps, evaluated lazily on finite windows.

    ``overrides`` pins individual sites to fixed depths (engineered test
    environments); every other site draws from ``law`` through the
    counter-based generator keyed on ``env_seed``.
    """

    alpha: float
    env_seed: int = 0
    law: object = PARETO
    overrides: dict = field(default_factory=dict)
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        check_alpha(self.alpha)
        self._k1 = rng.subkey(self.env_seed, 0)
        self._k2 = rng.subkey(self.env_seed, 1)

    def _fresh(self, lo: int, hi: int) -> np.ndarray:
        if isinstance(self.law, ParetoLaw):
            d = kernels.pareto_window(np.uint64(self._k1), lo, hi, 1.0 / self.alpha)
        else:
            xs = np.arange(lo, hi + 1, dtype=np.int64)
            u1 = rng.uniform_closed_array(self._k1, xs)
            u2 = rng.uniform_closed_array(self._k2, xs)
            d = np.asarray(self.law.from_uniforms(u1, u2, self.alpha), dtype=np.float64)
        for x, val in self.overrides.items():
            if lo <= x <= hi:
                d[x - lo] = val
        return d

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Depths of sites ``lo..hi`` inclusive (a fresh array)."""
        if hi < lo:
            return np.empty(0)
        c = self._cache
        if c is not None and c[0] <= lo and hi <= c[1]:
            return c[2][lo - c[0] : hi - c[0] + 1].copy()
        d = self._fresh(lo, hi)
        if c is None or hi - lo >= c[1] - c[0]:
            self._cache = (lo, hi, d)
        return d.copy()

    def depth(self, x: int) -> float:
        return float(self.window(x, x)[0])

    def tail(self, u: float) -> float:
        """P(tau >= u) under the environment law (overrides ignored)."""
        return self.law.tail(u, self.alpha)

    def describe(self) -> dict:
        return {
            "alpha": self.alpha,
            "env_seed": self.env_seed,
            "law": self.law.to_dict(),
            "overrides": {str(k): v for k, v in sorted(self.overrides.items())},
        }


# -- deep-trap scales ----------------------------------------------------------


def critical_depth(n: float, alpha: float) -> float:
    """g(n) = n^(1/alpha) / (log n)^(2/(1-alpha))."""
    if n < 2:
        raise HorizonTooSmallError(n)
    check_alpha(alpha)
    return n ** (1.0 / alpha) / math.log(n) ** (2.0 / (1.0 - alpha))


def deep_probability(n: float, alpha: float, law=PARETO) -> float:
    return law.tail(critical_depth(n, alpha), alpha)


def nu_scale(n: float, gamma: float = DEFAULT_GAMMA) -> int:
    """nu(n) = floor((log n)^(1+gamma))."""
    if n < 2:
        raise HorizonTooSmallError(n)
    return int(math.floor(math.log(n) ** (1.0 + gamma)))


def rho_scale(n: float, kappa: float = DEFAULT_KAPPA) -> float:
    return float(n) ** kappa


def _check_scales(kappa: float, gamma: float) -> None:
    if not (0.0 < kappa < 1.0 / 3.0):
        raise ParameterDomainError("kappa", kappa, "(0, 1/3)")
    if not (0.0 < gamma < 1.0):
        raise ParameterDomainError("gamma", gamma, "(0, 1)")


@dataclass(frozen=True)
class DeepTrapIndex:
    n: int
    g: float
    phi: float
    nu: int
    rho: float
    kappa: float
    gamma: float
    deltas: np.ndarray
    star_deltas: np.ndarray
    e1: bool
    e2: bool
    e3: bool

    @property
    def theta(self) -> int:
        return int(len(self.deltas))

    @property
    def star_theta(self) -> int:
        return int(len(self.star_deltas))

    @property
    def e_star(self) -> bool:
        return self.theta == self.star_theta

    @property
    def e(self) -> bool:
        return self.e1 and self.e2 and self.e3

    def delta(self, j: int) -> int:
        """delta_j with the convention delta_0 = 0."""
        return 0 if j == 0 else int(self.deltas[j - 1])

    def flags(self) -> dict:
        return {"e1": self.e1, "e2": self.e2, "e3": self.e3, "e_star": self.e_star}


def star_subsequence(deltas: np.ndarray, nu: int) -> np.ndarray:
    """Greedy *-deep subsequence: first delta >= nu, then gaps strictly > 2 nu."""
    out = []
    last = None
    for d in deltas:
        d = int(d)
        if last is None:
            if d >= nu:
                out.append(d)
                last = d
        elif d > last + 2 * nu:
            out.append(d)
            last = d
    return np.asarray(out, dtype=np.int64)


def index_deep_traps(
    env: Environment, n: int, kappa: float = DEFAULT_KAPPA, gamma: float = DEFAULT_GAMMA
) -> DeepTrapIndex:
    """Locate the deep traps among sites 0..n and evaluate the environment events."""
    if n < 2:
        raise HorizonTooSmallError(n)
    _check_scales(kappa, gamma)
    n = int(n)
    g = critical_depth(n, env.alpha)
    phi = env.tail(g)
    nu = nu_scale(n, gamma)
    rho = rho_scale(n, kappa)

    depths = env.window(-nu, n)
    deltas = np.flatnonzero(depths[nu:] >= g).astype(np.int64)
    star = star_subsequence(deltas, nu)

    theta = len(deltas)
    slack = 1.0 / math.log(n)
    e1 = n * phi * (1.0 - slack) <= theta <= n * phi * (1.0 + slack)
    if theta == 0:
        e2 = True
    else:
        gaps = np.diff(deltas)
        smallest = min(int(deltas[0]), int(gaps.min()) if gaps.size else int(deltas[0]))
        e2 = smallest >= rho
    e3 = bool(depths[: nu + 1].max() < g)
    return DeepTrapIndex(
        n=n, g=g, phi=phi, nu=nu, rho=rho, kappa=kappa, gamma=gamma,
        deltas=deltas, star_deltas=star, e1=bool(e1), e2=bool(e2), e3=e3,
    )


def d_event(env: Environment, index: DeepTrapIndex, beta_exp: float) -> bool:
    """Every deep trap's nu-neighbourhood (minus the trap) stays below (log n)^beta."""
    if index.theta == 0:
        return True
    cap = math.log(index.n) ** beta_exp
    nu = index.nu
    lo = int(index.deltas[0]) - nu
    depths = env.window(lo, int(index.deltas[-1]) + nu)
    for d in index.deltas:
        w = depths[d - nu - lo : d + nu - lo + 1].copy()
        w[nu] = -np.inf
        if w.max() >= cap:
            return False
    return True
