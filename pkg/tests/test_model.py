import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from traplab import kernels
from traplab.errors import HorizonTooSmallError, ParameterDomainError
from traplab.model import (
    PARETO,
    ConstantLaw,
    Environment,
    TailEquivalentLaw,
    critical_depth,
    d_event,
    deep_probability,
    index_deep_traps,
    make_params,
    nu_scale,
    rho_scale,
    sample_depth,
    star_subsequence,
)


def test_make_params_examples():
    p = make_params(0.5, 0.25)
    assert (p.v, p.r, p.p, p.q) == (0.5, pytest.approx(1 / 3, abs=1e-16), 0.75, 0.25)
    assert p.v_sharp == pytest.approx(2 / math.pi * math.sqrt(0.5), rel=1e-15)
    assert p.v_sharp == pytest.approx(0.45016, abs=1e-5)
    d = make_params(0.5, 0.5)
    assert d.q == 0.0 and d.r == 0.0


@given(st.floats(0.01, 0.99), st.floats(0.001, 0.5))
def test_params_invariants(alpha, eps):
    p = make_params(alpha, eps)
    assert p.p + p.q == pytest.approx(1.0, abs=1e-15)
    assert 0.0 <= p.r < 1.0
    assert p.v == pytest.approx(p.p - p.q, abs=1e-15)
    assert p.v_sharp == math.sin(alpha * math.pi) / (alpha * math.pi) * p.v**alpha


@pytest.mark.parametrize("alpha,eps,field", [(0.0, 0.2, "alpha"), (1.0, 0.2, "alpha"), (0.5, 0.0, "epsilon"),
                                             (0.5, 0.6, "epsilon"), (float("nan"), 0.2, "alpha")])
def test_make_params_names_the_bad_field(alpha, eps, field):
    with pytest.raises(ParameterDomainError) as info:
        make_params(alpha, eps)
    assert info.value.field == field


def test_pareto_quantile_examples():
    assert kernels.pareto_quantile(1.0, 2.0) == 1.0
    assert kernels.pareto_quantile(0.25, 2.0) == 16.0
    assert kernels.pareto_quantile(0.25, 1 / 0.3) == pytest.approx(0.25 ** (-1 / 0.3), rel=1e-15)


def test_sample_depth_matches_environment_windows():
    env = Environment(0.5, 11)
    full = env.window(-1000, 1000)
    again = Environment(0.5, 11).window(-1000, 1000)
    order = np.random.default_rng(0).permutation(np.arange(-1000, 1001))
    scattered = np.array([sample_depth(11, int(x), 0.5) for x in order])
    assert np.array_equal(full, again)
    assert np.array_equal(scattered, full[order + 1000])
    assert full.min() >= 1.0


@given(st.integers(-10**6, 10**6), st.integers(0, 300), st.integers(0, 2**64 - 1))
def test_windows_are_order_independent(lo, width, seed):
    env = Environment(0.3, seed)
    big = env.window(lo - 50, lo + width + 50)
    assert np.array_equal(Environment(0.3, seed).window(lo, lo + width), big[50:-50])
    assert env.depth(lo) == big[50]


@pytest.mark.parametrize("u", [2.0, 10.0, 100.0])
def test_pareto_tail(u):
    d = Environment(0.5, 5).window(0, 10**6 - 1)
    frac = float((d >= u).mean())
    target = u**-0.5
    assert abs(frac - target) <= 4 * math.sqrt(target * (1 - target) / d.size)


def test_tail_equivalent_law_tail():
    law = TailEquivalentLaw()
    env = Environment(0.5, 9, law)
    d = env.window(0, 10**6 - 1)
    for u in (2.0, 5.0, 50.0, 1000.0):
        target = law.tail(u, 0.5)
        assert abs((d >= u).mean() - target) <= 4 * math.sqrt(target * (1 - target) / d.size)
    assert law.tail(1000.0, 0.5) * 1000.0**0.5 == pytest.approx(1.0, rel=1e-12)


def test_critical_depth_examples():
    assert critical_depth(10**4, 0.5) == pytest.approx(13896.2391600003339, rel=1e-13)
    assert critical_depth(10**6, 0.5) == pytest.approx(27449361.3037043633, rel=1e-13)
    assert deep_probability(10**4, 0.5) == pytest.approx(8.48e-3, abs=1e-5)
    assert critical_depth(10**6, 0.5) > critical_depth(10**4, 0.5)
    with pytest.raises(HorizonTooSmallError):
        critical_depth(1, 0.5)


def test_scales():
    assert nu_scale(10**6) == 51
    assert nu_scale(10) == 3
    assert rho_scale(10**4) == pytest.approx(10.0)
    with pytest.raises(ParameterDomainError):
        index_deep_traps(Environment(0.5, 1), 100, kappa=0.4)


def test_empty_index():
    env = Environment(0.5, 0, ConstantLaw(1.0))
    idx = index_deep_traps(env, 10**4)
    assert idx.theta == 0 and idx.e2 and idx.e3 and idx.e_star


def test_crafted_window():
    n = 10
    g = critical_depth(n, 0.5)
    env = Environment(0.5, 0, ConstantLaw(1.0), {5: g + 1, 7: g + 1})
    idx = index_deep_traps(env, n)
    assert idx.nu == 3
    assert idx.deltas.tolist() == [5, 7]
    assert idx.star_deltas.tolist() == [5]
    assert not idx.e_star


def test_engineered_events():
    env = Environment(0.5, 0, ConstantLaw(1.0), {100: 1e6, 105: 1e6, -3: 1e6})
    idx = index_deep_traps(env, 10**4)
    assert idx.deltas.tolist() == [100, 105]
    assert not idx.e2 and not idx.e3
    assert idx.delta(0) == 0 and idx.delta(2) == 105
    idx = index_deep_traps(Environment(0.5, 0, ConstantLaw(1.0), {5000: 1e6}), 10**4)
    assert idx.e2 and idx.e3 and idx.theta == 1


def test_d_event():
    env = Environment(0.5, 0, ConstantLaw(1.0), {500: 1e6})
    idx = index_deep_traps(env, 10**4)
    cap = math.log(10**4) ** 3.0
    assert d_event(env, idx, 3.0)
    env2 = Environment(0.5, 0, ConstantLaw(1.0), {500: 1e6, 510: cap})
    assert not d_event(env2, index_deep_traps(env2, 10**4), 3.0)


@given(st.lists(st.integers(0, 2000), max_size=40, unique=True), st.integers(1, 60))
def test_star_subsequence_properties(deltas, nu):
    deltas = np.array(sorted(deltas), dtype=np.int64)
    star = star_subsequence(deltas, nu)
    assert set(star.tolist()) <= set(deltas.tolist())
    if star.size:
        assert star[0] >= nu
        assert np.all(np.diff(star) > 2 * nu)


def test_index_invariants_on_random_environments():
    for seed in range(20):
        env = Environment(0.5, seed)
        idx = index_deep_traps(env, 10**5)
        d = env.window(0, 10**5)
        assert np.all(d[idx.deltas] >= idx.g) and np.all(idx.deltas <= 10**5)
        assert idx.theta == int((d >= idx.g).sum())
        assert set(idx.star_deltas.tolist()) <= set(idx.deltas.tolist())
        assert np.all(np.diff(idx.star_deltas) > 2 * idx.nu)
        assert idx.e_star == (idx.theta == idx.star_theta)


def test_deep_trap_count_mean():
    n = 10**6
    thetas = [index_deep_traps(Environment(0.5, 1000 + s), n).theta for s in range(60)]
    expected = n * critical_depth(n, 0.5) ** -0.5
    assert abs(np.mean(thetas) / expected - 1.0) < 0.05


def test_law_descriptions():
    assert Environment(0.5, 1).describe()["law"] == {"tag": "pareto"}
    assert PARETO.tail(0.5, 0.5) == 1.0
