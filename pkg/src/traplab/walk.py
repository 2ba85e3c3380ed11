"""Embedded biased walk, exponential clock and the time-changed trap process."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels, rng
from .errors import ParameterDomainError, RunawaySimulationError, TrajectoryExhaustedError
from .model import Environment, ModelParams

CHECKPOINT_EVERY = 1 << 16
BUDGET_FACTOR = 100


def noise_keys(noise_seed: int) -> tuple[np.uint64, np.uint64]:
    """(direction key, mark key) for a noise seed."""
    return np.uint64(rng.subkey(noise_seed, 10)), np.uint64(rng.subkey(noise_seed, 11))


def step_budget(params: ModelParams, target: int) -> int:
    return int(math.ceil(BUDGET_FACTOR * max(target, 1) / params.v))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Embedded-walk path Y_0..Y_K (K = steps) with its clock S.

    Steps are stored as packed up/down bits; the clock is kept at checkpoints
    every ``CHECKPOINT_EVERY`` steps and rebuilt on demand from the
    counter-based marks.
    """

    params: ModelParams
    env: Environment
    noise_seed: int
    steps: int
    up_bits: np.ndarray
    low: int
    high: int
    cp_clock: np.ndarray
    cp_pos: np.ndarray

    @property
    def final_clock(self) -> float:
        return float(self.cp_clock[-1])

    @property
    def final_position(self) -> int:
        return int(self.cp_pos[-1])

    def _depths(self) -> np.ndarray:
        return self.env.window(self.low, self.high)

    def positions(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Y_start .. Y_{stop-1}; ``stop`` defaults to K + 1 (all positions)."""
        stop = self.steps + 1 if stop is None else min(stop, self.steps + 1)
        if stop <= start:
            return np.empty(0, dtype=np.int64)
        block = start // CHECKPOINT_EVERY
        base = block * CHECKPOINT_EVERY
        moves = np.unpackbits(self.up_bits[base // 8 : (stop + 6) // 8])[: stop - 1 - base].astype(np.int64)
        path = np.empty(stop - base, dtype=np.int64)
        path[0] = self.cp_pos[block]
        np.cumsum(2 * moves - 1, out=path[1:])
        path[1:] += self.cp_pos[block]
        return path[start - base :]

    def holds(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Holding times tau_{Y_k} e_k for steps start <= k < stop (stop <= K)."""
        stop = self.steps if stop is None else min(stop, self.steps)
        if stop <= start:
            return np.empty(0)
        _, mark_key = noise_keys(self.noise_seed)
        return kernels.clock_blocks(self._depths(), self.low, self.positions(start, stop), mark_key, start)

    def clock(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """S(start) .. S(stop-1); ``stop`` defaults to K + 1."""
        stop = self.steps + 1 if stop is None else min(stop, self.steps + 1)
        block = start // CHECKPOINT_EVERY
        base = block * CHECKPOINT_EVERY
        h = self.holds(base, stop - 1)
        s = np.empty(stop - base)
        s[0] = self.cp_clock[block]
        s[1:] = h
        np.cumsum(s, out=s)
        return s[start - base :]

    def hitting_step(self, site: int) -> int:
        """zeta_site: first step index k with Y_k = site."""
        pos = self.positions()
        hit = np.flatnonzero(pos == site)
        if hit.size == 0:
            raise TrajectoryExhaustedError(f"site {site} not reached within {self.steps} steps")
        return int(hit[0])

    def to_csv(self, path, stride: int = 1) -> Path:
        path = Path(path)
        ks = np.arange(0, self.steps + 1, stride)
        pos = self.positions()[ks]
        clk = self.clock()[ks]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["step", "position", "clock"])
            for k, y, s in zip(ks.tolist(), pos.tolist(), clk.tolist()):
                w.writerow([k, y, repr(s)])
        return path


def simulate_to_site(env: Environment, params: ModelParams, target: int, noise_seed: int) -> Trajectory:
    """Simulate the embedded walk from 0 until its first visit to ``target``."""
    if target < 1:
        raise ParameterDomainError("target", target, ">= 1")
    dir_key, _ = noise_keys(noise_seed)
    budget = step_budget(params, target)
    steps, low = kernels.hitting_steps(params.p, dir_key, int(target), budget)
    if steps < 0:
        raise RunawaySimulationError(f"target {target} not reached in {budget} steps")
    return _build(env, params, noise_seed, int(steps), int(low), int(target))


def simulate_to_time(env: Environment, params: ModelParams, t: float, noise_seed: int,
                     max_steps: int = 1 << 40) -> Trajectory:
    """Simulate up to the step K with S(K) <= t < S(K + 1), so that X_t = Y_K.

    :func:`position_at_time` on the result answers queries below S(K).
    """
    if not t >= 0:
        raise ParameterDomainError("t", t, ">= 0")
    dir_key, mark_key = noise_keys(noise_seed)
    lo, hi = -64, 1024
    empty = np.empty(0)
    while True:
        depth = env.window(lo, hi)
        status, pos, k, _, _, _, _ = kernels.walk_stream(
            depth, lo, params.p, dir_key, mark_key, 1 << 62, float(t), max_steps, empty,
            np.empty(0, dtype=np.int64), np.empty(depth.size), np.empty(depth.size, dtype=np.int64), 0.0,
        )
        if status == kernels.LEFT_WINDOW:
            lo *= 2
        elif status == kernels.RIGHT_WINDOW:
            hi *= 2
        elif status == kernels.BUDGET:
            raise RunawaySimulationError(f"clock did not pass {t} within {max_steps} steps")
        else:
            break
    ups = rng.uniform_open_array(int(dir_key), np.arange(k)) < params.p
    path = np.concatenate(([0], np.cumsum(2 * ups.astype(np.int64) - 1)))
    return _build(env, params, noise_seed, int(k), int(min(path.min(), 0)), int(max(path.max(), 1)), ups)


def _build(env, params, noise_seed, steps, low, high, ups=None) -> Trajectory:
    dir_key, mark_key = noise_keys(noise_seed)
    if ups is None:
        ups = rng.uniform_open_array(int(dir_key), np.arange(steps)) < params.p
    depths = env.window(low, high)
    cp_clock = [0.0]
    cp_pos = [0]
    pos, clock = 0, 0.0
    for base in range(0, steps, CHECKPOINT_EVERY):
        moves = ups[base : base + CHECKPOINT_EVERY]
        path = pos + np.concatenate(([0], np.cumsum(2 * moves.astype(np.int64) - 1)))
        h = kernels.clock_blocks(depths, low, path[:-1], mark_key, base)
        clock = float(np.cumsum(np.concatenate(([clock], h)))[-1])
        pos = int(path[-1])
        cp_clock.append(clock)
        cp_pos.append(pos)
    # last entry is (S(K), Y_K); interior entries sit on block boundaries
    return Trajectory(
        params=params, env=env, noise_seed=noise_seed, steps=steps,
        up_bits=np.packbits(ups), low=low, high=high,
        cp_clock=np.asarray(cp_clock), cp_pos=np.asarray(cp_pos, dtype=np.int64),
    )


def position_at_time(traj: Trajectory, t: float) -> int:
    """X_t = Y_{S^-1(t)}: the position at step k with S(k) <= t < S(k+1)."""
    if t < 0:
        raise ParameterDomainError("t", t, ">= 0")
    if t >= traj.final_clock:
        raise TrajectoryExhaustedError(f"t={t} beyond covered horizon {traj.final_clock}")
    block = int(np.searchsorted(traj.cp_clock[:-1], t, side="right")) - 1
    start = block * CHECKPOINT_EVERY
    stop = min(start + CHECKPOINT_EVERY + 1, traj.steps + 1)
    s = traj.clock(start, stop)
    k = start + int(np.searchsorted(s, t, side="right")) - 1
    return int(traj.positions(k, k + 1)[0])


# -- closed-form walk analytics ---------------------------------------------------


def hitting_probability_psi(params: ModelParams, x: int, n: int) -> float:
    """P(walk started at x+1 hits x before n) = r (1 - r^(n-x-1)) / (1 - r^(n-x))."""
    if x >= n:
        raise ParameterDomainError("x", x, f"< n={n}")
    r = params.r
    if r == 0.0:
        return 0.0
    m = n - x
    return r * (1.0 - r ** (m - 1)) / (1.0 - r**m)


def expected_visits(params: ModelParams, x: int, n: int) -> float:
    """1 + G(x, n): mean number of visits to x before hitting n, for a walk at x."""
    return 1.0 / (params.p * (1.0 - hitting_probability_psi(params, x, n)))


def return_probability(params: ModelParams, x: int, n: int) -> float:
    """Probability that a walk at x comes back to x before hitting n."""
    return params.q + params.p * hitting_probability_psi(params, x, n)


# -- occupation times ----------------------------------------------------------


@dataclass(frozen=True)
class OccupationRecord:
    center: int
    nu: int
    nu_bar: int
    t_x: float
    t_bar_x: float
    t_star_x: float

    def to_json(self, path=None) -> str:
        text = json.dumps({"schema_version": 1, **asdict(self)}, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text


def occupation_times(traj: Trajectory, x: int, nu: int, nu_bar: int) -> OccupationRecord:
    """Time at x and in its neighbourhoods before the walk first reaches x+nu / x+nu_bar."""
    pos = traj.positions()
    z_nu = _first_hit(pos, x + nu)
    z_bar = _first_hit(pos, x + nu_bar)
    stop = max(z_nu, z_bar)
    h = traj.holds(0, stop)
    p = pos[:stop]
    t_x = float(h[:z_nu][p[:z_nu] == x].sum())
    inside = (p[:z_nu] >= x - nu) & (p[:z_nu] <= x + nu)
    t_bar = float(h[:z_nu][inside].sum())
    star = (p[:z_bar] >= x - nu) & (p[:z_bar] <= x + nu_bar)
    t_star = float(h[:z_bar][star].sum())
    return OccupationRecord(center=x, nu=nu, nu_bar=nu_bar, t_x=t_x, t_bar_x=t_bar, t_star_x=t_star)


def _first_hit(pos: np.ndarray, site: int) -> int:
    hit = np.flatnonzero(pos == site)
    if hit.size == 0:
        raise TrajectoryExhaustedError(f"trajectory never reaches site {site}")
    return int(hit[0])


def max_backtrack(traj_or_positions) -> int:
    """-min_{i<j} (Y_j - Y_i), via the running maximum."""
    pos = traj_or_positions.positions() if isinstance(traj_or_positions, Trajectory) else np.asarray(traj_or_positions)
    if pos.size == 0:
        raise ParameterDomainError("trajectory", "empty", "nonempty")
    return int((np.maximum.accumulate(pos) - pos).max())


# -- reflected chain ---------------------------------------------------------------


def reversible_measure(env: Environment, params: ModelParams, delta: int, nu: int, nu_bar: int) -> np.ndarray:
    """Reversible measure of the chain on [delta-nu, delta+nu_bar], reflected at both ends.

    Interior sites carry r^(delta-x) tau_x / tau_delta. A reflecting end jumps
    to its only neighbour at its full rate 1/tau, which multiplies the end
    weights by p (left end) and q (right end) relative to that formula.
    """
    if params.q == 0.0:
        raise ParameterDomainError("epsilon", params.epsilon, "< 1/2 (reflected chain needs left jumps)")
    lo, hi = delta - nu, delta + nu_bar
    tau = env.window(lo, hi)
    xs = np.arange(lo, hi + 1)
    mu = params.r ** (delta - xs).astype(float) * tau / tau[delta - lo]
    mu[0] *= params.p
    mu[-1] *= params.q
    return mu


def reflected_rates(env: Environment, params: ModelParams, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    """(right rates, left rates) per site of the chain reflected at lo and hi."""
    tau = env.window(lo, hi)
    up = params.p / tau
    down = params.q / tau
    up[0], down[0] = 1.0 / tau[0], 0.0
    up[-1], down[-1] = 0.0, 1.0 / tau[-1]
    return up, down


def check_detailed_balance(env: Environment, params: ModelParams, delta: int, nu: int, nu_bar: int) -> float:
    """Largest relative violation of mu(x) c(x,x+1) = mu(x+1) c(x+1,x) over all bonds."""
    mu = reversible_measure(env, params, delta, nu, nu_bar)
    up, down = reflected_rates(env, params, delta - nu, delta + nu_bar)
    a = mu[:-1] * up[:-1]
    b = mu[1:] * down[1:]
    return float((np.abs(a - b) / np.maximum(np.abs(a), np.abs(b))).max())


def reflected_time_fractions(
    env: Environment, params: ModelParams, lo: int, hi: int, n_steps: int, noise_seed: int, start: int | None = None
) -> np.ndarray:
    """Long-run fraction of time the doubly reflected chain spends at each site of [lo, hi]."""
    dir_key, mark_key = noise_keys(noise_seed)
    depth = env.window(lo, hi)
    s = (hi - lo) // 2 if start is None else start - lo
    occ = kernels.reflected_occupation(depth, params.p, dir_key, mark_key, s, int(n_steps))
    return occ / occ.sum()
