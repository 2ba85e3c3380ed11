"""Small statistical toolkit: ECDFs, KS distances, Wilson intervals, chi-square GOF."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

from .errors import DataInsufficientError, ParameterDomainError


@dataclass(frozen=True)
class Ecdf:
    values: np.ndarray

    @classmethod
    def of(cls, sample) -> "Ecdf":
        v = np.sort(np.asarray(sample, dtype=float))
        if v.size == 0:
            raise ParameterDomainError("sample", "empty", "nonempty")
        return cls(v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __call__(self, x):
        """Right-continuous: F(x) = #{v <= x} / n."""
        return np.searchsorted(self.values, x, side="right") / self.n


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lower: float
    upper: float
    level: float
    n: int

    def to_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper, "level": self.level, "n": self.n}


def ks_two_sample(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| by a merge scan over the pooled sample."""
    fa, fb = Ecdf.of(a), Ecdf.of(b)
    pooled = np.concatenate((fa.values, fb.values))
    return float(np.abs(fa(pooled) - fb(pooled)).max())


def ks_one_sample(sample, cdf) -> float:
    """sup distance between the ECDF of ``sample`` and a continuous ``cdf`` (vectorized callable)."""
    f = Ecdf.of(sample)
    c = np.asarray(cdf(f.values), dtype=float)
    n = f.n
    i = np.arange(1, n + 1)
    return float(max((i / n - c).max(), (c - (i - 1) / n).max()))


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> IntervalEstimate:
    if trials < 1:
        raise ParameterDomainError("trials", trials, ">= 1")
    if not (0 <= successes <= trials):
        raise ParameterDomainError("successes", successes, f"[0, {trials}]")
    if not (0.0 < level < 1.0):
        raise ParameterDomainError("level", level, "(0, 1)")
    z = float(_st.norm.ppf(0.5 + level / 2.0))
    n = trials
    ph = successes / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return IntervalEstimate(point=ph, lower=lo, upper=hi, level=level, n=n)


def merge_tail_cells(observed, expected_probs, n: int, min_expected: float = 5.0):
    """Fold right-hand cells into their left neighbour until every expected count >= ``min_expected``."""
    obs = [float(o) for o in observed]
    exp = [float(p) * n for p in expected_probs]
    while len(exp) > 1 and exp[-1] < min_expected:
        e, o = exp.pop(), obs.pop()
        exp[-1] += e
        obs[-1] += o
    return np.asarray(obs), np.asarray(exp)


def chi_square_gof(observed, expected, merge_tail: bool = True) -> tuple[float, float]:
    """Pearson statistic and upper-tail p-value with k-1 degrees of freedom."""
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected, dtype=float)
    if obs.shape != probs.shape:
        raise ParameterDomainError("expected", probs.shape, f"same shape as observed {obs.shape}")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ParameterDomainError("expected", probs.sum(), "probabilities summing to 1")
    n = obs.sum()
    if merge_tail:
        obs, exp = merge_tail_cells(obs, probs, n)
    else:
        exp = probs * n
    if exp.size < 2 or exp.min() < 5.0:
        raise DataInsufficientError("expected counts below 5 after merging")
    stat = float(((obs - exp) ** 2 / exp).sum())
    return stat, float(_st.chi2.sf(stat, exp.size - 1))


def chi2_sf(x: float, df: int) -> float:
    return float(_st.chi2.sf(x, df))


class RunningMoments:
    """Mean and variance accumulated in a fixed order (Welford)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self._m2 += d * (x - self.mean)

    def extend(self, xs) -> "RunningMoments":
        for x in xs:
            self.push(float(x))
        return self

    @property
    def variance(self) -> float:
        return self._m2 / (self.n - 1) if self.n > 1 else float("nan")

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else float("nan")


def mean_stderr(xs) -> tuple[float, float]:
    m = RunningMoments().extend(np.asarray(xs, dtype=float).ravel())
    return m.mean, m.stderr
