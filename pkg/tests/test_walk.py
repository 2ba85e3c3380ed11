import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from traplab import walk
from traplab.errors import ParameterDomainError, RunawaySimulationError, TrajectoryExhaustedError
from traplab.model import ConstantLaw, Environment, make_params
from traplab.stats import chi_square_gof
from traplab.walk import (
    OccupationRecord,
    check_detailed_balance,
    expected_visits,
    hitting_probability_psi,
    max_backtrack,
    occupation_times,
    position_at_time,
    reflected_time_fractions,
    return_probability,
    reversible_measure,
    simulate_to_site,
    simulate_to_time,
)

P25 = make_params(0.5, 0.25)
DIRECTED = make_params(0.5, 0.5)


def test_directed_walk():
    traj = simulate_to_site(Environment(0.5, 1), DIRECTED, 5, 2)
    assert traj.positions().tolist() == [0, 1, 2, 3, 4, 5]
    assert traj.steps == 5 and traj.hitting_step(5) == 5


def test_unit_depths_clock_mean():
    env = Environment(0.5, 0, ConstantLaw(1.0))
    s100 = np.array([simulate_to_site(env, P25, 100, seed).clock(100, 101)[0] for seed in range(10_000)])
    assert abs(s100.mean() - 100.0) <= 4 * s100.std() / math.sqrt(s100.size)


def test_hitting_step_law_of_large_numbers():
    zeta = [simulate_to_site(Environment(0.5, s), P25, 10_000, 100 + s).steps for s in range(100)]
    assert abs(np.mean(zeta) / 10_000 - 1 / P25.v) <= 0.05 * (1 / P25.v)


def test_path_and_clock_invariants():
    traj = simulate_to_site(Environment(0.5, 3), P25, 300, 4)
    pos = traj.positions()
    clock = traj.clock()
    assert pos[0] == 0 and clock[0] == 0.0
    assert np.all(np.abs(np.diff(pos)) == 1)
    assert np.all(np.diff(clock) > 0)
    assert np.allclose(traj.holds(), np.diff(clock), rtol=1e-9)


def test_reproducible_bitwise():
    a = simulate_to_site(Environment(0.5, 9), P25, 2000, 10)
    b = simulate_to_site(Environment(0.5, 9), P25, 2000, 10)
    assert np.array_equal(a.positions(), b.positions())
    assert np.array_equal(a.clock(), b.clock())


def test_long_trajectory_checkpoints():
    traj = simulate_to_site(Environment(0.5, 5), P25, 100_000, 6)
    assert traj.steps > 2 * walk.CHECKPOINT_EVERY
    full = traj.clock()
    k = walk.CHECKPOINT_EVERY + 17
    assert np.array_equal(traj.clock(k, k + 100), full[k : k + 100])
    assert np.array_equal(traj.positions(k, k + 100), traj.positions()[k : k + 100])
    assert full[-1] == traj.final_clock


def test_position_at_time_examples():
    traj = simulate_to_site(Environment(0.5, 7), P25, 50, 8)
    s = traj.clock()
    assert position_at_time(traj, 0.0) == 0
    mid = 0.5 * (s[1] + s[2])
    assert position_at_time(traj, mid) == traj.positions()[1]
    assert position_at_time(traj, s[1]) == traj.positions()[1]  # right-continuous
    with pytest.raises(TrajectoryExhaustedError):
        position_at_time(traj, traj.final_clock)


def test_position_at_time_matches_linear_scan():
    gen = np.random.default_rng(0)
    for seed in range(10):
        traj = simulate_to_site(Environment(0.5, seed), P25, 500, seed + 50)
        pos, clock = traj.positions(), traj.clock()
        for t in gen.uniform(0, traj.final_clock, 1000):
            k = 0
            while k + 1 < clock.size and clock[k + 1] <= t:
                k += 1
            assert position_at_time(traj, t) == pos[k]


def test_simulate_to_time_matches_site_run():
    env = Environment(0.5, 21)
    by_time = simulate_to_time(env, P25, 1e5, 22)
    by_site = simulate_to_site(env, P25, by_time.final_position + 1, 22)
    k = by_time.steps
    assert by_time.final_clock <= 1e5 < by_site.clock(k + 1, k + 2)[0]
    assert np.array_equal(by_site.positions(0, k + 1), by_time.positions())
    assert np.array_equal(by_site.clock(0, k + 1), by_time.clock())


def test_budget_guard(monkeypatch):
    monkeypatch.setattr(walk, "BUDGET_FACTOR", 0.01)
    with pytest.raises(RunawaySimulationError):
        simulate_to_site(Environment(0.5, 1), P25, 1000, 1)
    with pytest.raises(ParameterDomainError):
        simulate_to_site(Environment(0.5, 1), P25, 0, 1)


def psi_oracle(p, x, n):
    """P(walk from x+1 hits x before n) by first-step analysis and a linear solve."""
    m = n - x - 1  # interior sites x+1 .. n-1
    a = np.eye(m)
    b = np.zeros(m)
    for i in range(m):
        if i + 1 < m:
            a[i, i + 1] -= p
        if i - 1 >= 0:
            a[i, i - 1] -= 1 - p
        else:
            b[i] += 1 - p
    return float(np.linalg.solve(a, b)[0])


@pytest.mark.parametrize("eps", [0.1, 0.25, 0.4])
def test_psi_matches_linear_solve(eps):
    params = make_params(0.5, eps)
    for x in range(0, 3):
        for n in range(x + 2, x + 9):
            assert abs(hitting_probability_psi(params, x, n) - psi_oracle(params.p, x, n)) <= 1e-12


def test_psi_examples():
    assert hitting_probability_psi(P25, 0, 2) == pytest.approx(0.25, abs=1e-15)
    assert hitting_probability_psi(DIRECTED, 0, 7) == 0.0
    assert abs(hitting_probability_psi(P25, 0, 50) - 1 / 3) < 1e-20
    with pytest.raises(ParameterDomainError):
        hitting_probability_psi(P25, 5, 5)


def test_expected_visits_examples():
    assert expected_visits(DIRECTED, 0, 4) == 1.0
    assert expected_visits(P25, 0, 200) == pytest.approx(2.0, abs=1e-12)
    assert expected_visits(P25, 0, 2) == pytest.approx(16 / 9, abs=1e-14)


def _visit_counts(p, x, n, trials, seed):
    gen = np.random.default_rng(seed)
    out = np.empty(trials, dtype=np.int64)
    for j in range(trials):
        y, visits = x, 1
        while y != n:
            y += 1 if gen.random() < p else -1
            visits += y == x
        out[j] = visits
    return out


def test_expected_visits_monte_carlo():
    v = _visit_counts(P25.p, 0, 2, 100_000, 1)
    assert abs(v.mean() - 16 / 9) <= 3 * v.std() / math.sqrt(v.size)


def test_visit_counts_are_geometric():
    x, n = 0, 3
    v = _visit_counts(P25.p, x, n, 100_000, 2)
    s = return_probability(P25, x, n)
    kmax = 8
    probs = [(1 - s) * s ** (k - 1) for k in range(1, kmax)]
    probs.append(1 - sum(probs))
    observed = [int((v == k).sum()) for k in range(1, kmax)] + [int((v >= kmax).sum())]
    _, pval = chi_square_gof(observed, probs)
    assert pval > 0.001


def test_max_backtrack():
    assert max_backtrack(np.array([0, 1, 0, -1, 0, 1, 2])) == 2
    assert max_backtrack(simulate_to_site(Environment(0.5, 1), DIRECTED, 20, 1)) == 0


def test_backtrack_below_nu_with_high_probability():
    nu = int(math.log(1e5) ** 1.5)
    ok = sum(max_backtrack(simulate_to_site(Environment(0.5, s), P25, 10**5, 500 + s)) < nu for s in range(200))
    assert ok / 200 >= 0.99


def test_occupation_directed_is_exponential():
    env = Environment(0.5, 0, ConstantLaw(1.0), {3: 40.0})
    t = np.array([occupation_times(simulate_to_site(env, DIRECTED, 8, s), 3, 5, 2).t_x for s in range(10_000)])
    assert abs(t.mean() - 40.0) <= 4 * t.std() / math.sqrt(t.size)


def test_occupation_wald_identity_and_ordering():
    x, nu = 3, 5
    env = Environment(0.5, 0, ConstantLaw(1.0), {x: 1000.0})
    recs = [occupation_times(simulate_to_site(env, P25, x + nu, s), x, nu, 2) for s in range(10_000)]
    t = np.array([r.t_x for r in recs])
    assert abs(t.mean() / (1000.0 * expected_visits(P25, x, x + nu)) - 1.0) <= 0.05
    assert all(0.0 <= r.t_x <= r.t_bar_x for r in recs)


def test_occupation_on_random_environment():
    traj = simulate_to_site(Environment(0.5, 4), P25, 2000, 5)
    rec = occupation_times(traj, 100, 20, 4)
    pos, h = traj.positions(), traj.holds()
    z = int(np.flatnonzero(pos == 120)[0])
    assert rec.t_x == pytest.approx(h[:z][pos[:z] == 100].sum(), rel=1e-12)
    assert rec.t_x <= rec.t_bar_x
    with pytest.raises(TrajectoryExhaustedError):
        occupation_times(traj, 1990, 20, 4)


def test_occupation_record_json(tmp_path):
    rec = OccupationRecord(3, 5, 2, 1.0, 2.0, 1.5)
    data = json.loads(rec.to_json(tmp_path / "o.json"))
    assert data["schema_version"] == 1 and data["t_bar_x"] == 2.0
    assert json.loads((tmp_path / "o.json").read_text()) == data


def test_trajectory_csv(tmp_path):
    traj = simulate_to_site(Environment(0.5, 1), DIRECTED, 10, 1)
    raw = traj.to_csv(tmp_path / "t.csv").read_bytes()
    lines = raw.decode().split("\r\n")
    assert lines[0] == "step,position,clock"
    assert [int(r.split(",")[1]) for r in lines[1:-1]] == list(range(11))
    traj.to_csv(tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_bytes() == raw


@given(st.integers(0, 2**63), st.floats(0.3, 0.7), st.floats(0.05, 0.45), st.integers(1, 30), st.integers(1, 10))
def test_detailed_balance(seed, alpha, eps, nu, nu_bar):
    env = Environment(alpha, seed)
    params = make_params(alpha, eps)
    assert check_detailed_balance(env, params, 100, nu, nu_bar) <= 1e-12
    assert reversible_measure(env, params, 100, nu, nu_bar)[nu] == 1.0


def test_reversible_measure_needs_left_jumps():
    with pytest.raises(ParameterDomainError):
        reversible_measure(Environment(0.5, 1), DIRECTED, 10, 3, 2)


def test_reflected_chain_stationarity():
    env = Environment(0.5, 0, ConstantLaw(1.0), {3: 5.0, 1: 2.0})
    mu = reversible_measure(env, P25, 3, 3, 3)
    frac = reflected_time_fractions(env, P25, 0, 6, 10**7, 1)
    assert np.max(np.abs(frac / (mu / mu.sum()) - 1.0)) < 0.02
