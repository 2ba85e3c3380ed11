"""Monte Carlo experiments that confront the simulator with the limit theorems.

Every experiment runs independent trials. Trial ``i`` draws its environment
and walk noise from keys derived from ``(master_seed, purpose, i)``, so a
report is a pure function of its inputs and seed. Trials may be fanned out
to worker processes; results are always reduced in trial-index order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import kernels, rng, stable, stats
from .errors import (
    ParameterDomainError,
    PartialResultError,
    RunawaySimulationError,
    TrajectoryExhaustedError,
)
from .model import (
    DEFAULT_GAMMA,
    DEFAULT_KAPPA,
    PARETO,
    ConstantLaw,
    Environment,
    ModelParams,
    TailEquivalentLaw,
    critical_depth,
    index_deep_traps,
    nu_scale,
)
from .walk import Trajectory, max_backtrack, noise_keys, step_budget

SCHEMA_VERSION = 1
NO_TARGET = 1 << 62
Z95 = 1.959963984540054

# -- aging scales ------------------------------------------------------------------


def min_c_prime(params: ModelParams) -> float:
    """Lower bound -2 alpha / ((1 - alpha) log r) on the exit-distance constant."""
    if params.r == 0.0:
        return 0.0
    return -2.0 * params.alpha / ((1.0 - params.alpha) * math.log(params.r))


def default_c_prime(params: ModelParams) -> int:
    return int(math.ceil(min_c_prime(params))) + 1


def min_beta_exp(alpha: float, gamma: float = DEFAULT_GAMMA) -> float:
    return (2.0 * alpha / (1.0 - alpha) + 1.0 + gamma) / alpha


def default_beta_exp(alpha: float, gamma: float = DEFAULT_GAMMA) -> float:
    return min_beta_exp(alpha, gamma) + 0.5


def aging_horizon(t: float, alpha: float) -> int:
    """n_t = floor(t^alpha log log t), clamped to >= 2."""
    if t < 16:
        raise ParameterDomainError("t", t, ">= 16")
    return max(2, int(math.floor(t**alpha * math.log(math.log(t)))))


def exit_distance(n: float, params: ModelParams, c_prime: float | None = None) -> int:
    """nu_bar = floor(C' log log n); a directed walk (epsilon = 1/2) only needs 1."""
    if params.r == 0.0:
        return 1
    c = default_c_prime(params) if c_prime is None else c_prime
    if n < 16:
        raise ParameterDomainError("n", n, ">= 16")
    return max(1, int(math.floor(c * math.log(math.log(n)))))


@dataclass(frozen=True)
class AgingScales:
    t: float
    n_t: int
    c_prime: float
    nu_bar: int
    beta_exp: float
    gamma: float
    g: float
    nu: int

    @classmethod
    def build(cls, params: ModelParams, t: float, c_prime: float | None = None,
              beta_exp: float | None = None, gamma: float = DEFAULT_GAMMA) -> "AgingScales":
        n_t = aging_horizon(t, params.alpha)
        c = float(default_c_prime(params) if c_prime is None else c_prime)
        if params.r > 0.0 and not c > min_c_prime(params):
            raise ParameterDomainError("c_prime", c, f"> {min_c_prime(params):.6g}")
        b = default_beta_exp(params.alpha, gamma) if beta_exp is None else float(beta_exp)
        if not b > min_beta_exp(params.alpha, gamma):
            raise ParameterDomainError("beta_exp", b, f"> {min_beta_exp(params.alpha, gamma):.6g}")
        return cls(
            t=float(t), n_t=n_t, c_prime=c, nu_bar=exit_distance(max(n_t, 16), params, c),
            beta_exp=b, gamma=gamma, g=critical_depth(n_t, params.alpha), nu=nu_scale(n_t, gamma),
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# -- reports -----------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    point: float
    lower: float
    upper: float
    target: float
    n: int
    level: float = 0.95

    @property
    def error(self) -> float:
        return abs(self.point - self.target)

    @classmethod
    def proportion(cls, successes: int, trials: int, target: float) -> "Estimate":
        iv = stats.wilson_interval(int(successes), int(trials))
        return cls(iv.point, iv.lower, iv.upper, float(target), iv.n, iv.level)

    @classmethod
    def mean(cls, values, target: float, scale: float = 1.0) -> "Estimate":
        m, se = stats.mean_stderr(values)
        m, se = scale * m, scale * se
        return cls(m, m - Z95 * se, m + Z95 * se, float(target), int(np.size(values)))


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class ExperimentReport:
    """Estimates with CIs and targets, distances, pass flags and per-trial observables."""

    experiment: str
    parameters: dict
    master_seed: int
    trials: int
    estimates: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    tolerance: float | None = None
    checks: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool | None:
        return all(self.checks.values()) if self.checks else None

    def summary(self) -> dict:
        """Flat, snake_case view used for JSON output."""
        out = {"schema_version": SCHEMA_VERSION, "experiment": self.experiment,
               "master_seed": self.master_seed, "trials": self.trials}
        for k, v in self.parameters.items():
            out[k] = _clean(v)
        for name, e in self.estimates.items():
            out[f"{name}"] = e.point
            out[f"{name}_ci_lower"] = e.lower
            out[f"{name}_ci_upper"] = e.upper
            out[f"{name}_ci_level"] = e.level
            out[f"{name}_target"] = e.target
            out[f"{name}_abs_error"] = e.error
        for k, v in self.distances.items():
            out[k] = _clean(v)
        for k, v in self.extras.items():
            out[k] = _clean(v)
        out["tolerance"] = self.tolerance
        for k, v in self.checks.items():
            out[f"pass_{k}"] = bool(v)
        out["passed"] = self.passed
        return {k: _clean(v) for k, v in out.items()}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), sort_keys=True, allow_nan=False)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def write_csv(self, path) -> Path:
        path = Path(path)
        names = list(self.columns)
        cols = [np.asarray(self.columns[k]) for k in names]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["trial", *names])
            for i in range(self.trials):
                w.writerow([i, *(_fmt(c[i]) for c in cols)])
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


# -- trial plumbing ----------------------------------------------------------------


def trial_seeds(master_seed: int, purpose: str, index: int) -> tuple[int, int]:
    """(environment seed, noise seed) for one trial."""
    return (rng.derive_key(master_seed, purpose + "/env", index),
            rng.derive_key(master_seed, purpose + "/noise", index))


def run_trials(fn, trials: int, workers: int = 1) -> list:
    """``[fn(0), ..., fn(trials - 1)]``, optionally on worker processes; order is fixed."""
    if trials < 1:
        raise ParameterDomainError("trials", trials, ">= 1")
    if workers < 1:
        raise ParameterDomainError("workers", workers, ">= 1")
    if workers == 1 or trials == 1:
        return [fn(i) for i in range(trials)]
    chunk = max(1, trials // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), chunksize=chunk))


def _law_from_dict(spec: dict | None):
    if spec is None or spec.get("tag") == "pareto":
        return PARETO
    if spec["tag"] == "constant":
        return ConstantLaw(spec.get("value", 1.0))
    if spec["tag"] == "tail-equivalent":
        return TailEquivalentLaw(spec.get("weight", 0.3), spec.get("cap", 10.0))
    raise ParameterDomainError("law", spec, "pareto | constant | tail-equivalent")


def _make_env(alpha: float, env_seed: int, law=None, overrides=None) -> Environment:
    return Environment(alpha, env_seed, _law_from_dict(law), dict(overrides or {}))


# -- walk driver -------------------------------------------------------------------


@dataclass(frozen=True)
class WalkRun:
    """Outcome of one streamed walk (no per-step storage)."""

    status: int
    position: int
    steps: int
    clock: float
    shallow_time: float
    run_max: int
    lo: int
    depth: np.ndarray
    grid_positions: np.ndarray
    grid_filled: int
    hit_time: np.ndarray
    seg_min: np.ndarray

    def first_hit(self, x: int) -> float:
        """H_x for 0 <= x <= run_max (exact), +inf beyond."""
        if x > self.run_max:
            return math.inf
        return float(self.hit_time[x - self.lo])

    @property
    def max_backtrack(self) -> int:
        xs = np.arange(0, self.run_max + 1)
        return int((xs - self.seg_min[xs - self.lo]).max())


def run_walk(env: Environment, params: ModelParams, noise_seed: int, *, target: int = NO_TARGET,
             t_stop: float = math.inf, grid=(), shallow_below: float = 0.0,
             max_steps: int | None = None, lo: int = -64, hi: int = 1024) -> WalkRun:
    """Stream the walk from 0 until it hits ``target`` or its clock passes ``t_stop``.

    The environment window starts at ``[lo, hi]`` and doubles whenever the walk
    leaves it; the counter-based noise makes each rerun retrace the same path.
    A step budget overrun is returned with status ``BUDGET`` for the caller to judge.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0 or np.any(np.diff(grid) < 0)):
        raise ParameterDomainError("grid", "unsorted or negative", "nondecreasing times >= 0")
    if target != NO_TARGET:
        if target < 1:
            raise ParameterDomainError("target", target, ">= 1")
        hi = int(target)
        if max_steps is None:
            max_steps = step_budget(params, target)
    if max_steps is None:
        max_steps = NO_TARGET
    dir_key, mark_key = noise_keys(noise_seed)
    lo, hi = min(int(lo), -1), max(int(hi), 1)
    while True:
        depth = env.window(lo, hi)
        hit = np.full(depth.size, np.nan)
        seg = np.zeros(depth.size, dtype=np.int64)
        gpos = np.zeros(grid.size, dtype=np.int64)
        status, pos, k, clock, shallow, run_max, gi = kernels.walk_stream(
            depth, lo, params.p, dir_key, mark_key, int(target), float(t_stop), int(max_steps),
            grid, gpos, hit, seg, float(shallow_below),
        )
        if status == kernels.LEFT_WINDOW:
            lo *= 2
        elif status == kernels.RIGHT_WINDOW:
            hi *= 2
        else:
            return WalkRun(int(status), int(pos), int(k), float(clock), float(shallow), int(run_max),
                           lo, depth, gpos, int(gi), hit, seg)


# -- scaling -----------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledPath:
    times: np.ndarray
    values: np.ndarray
    scale: float


def scaled_path(env: Environment, params: ModelParams, scale: float, horizon: float, grid,
                noise_seed: int, max_steps: int | None = None) -> ScaledPath:
    """X^(N)_t = X_{tN} / N^alpha on a grid of rescaled times in [0, horizon]."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0 or grid.max() > horizon):
        raise ParameterDomainError("grid", "outside [0, T]", f"[0, {horizon}]")
    run = run_walk(env, params, noise_seed, t_stop=horizon * scale, grid=grid * scale,
                   max_steps=max_steps, hi=4 * int(scale**params.alpha) + 64)
    values = run.grid_positions / scale**params.alpha
    if run.status == kernels.BUDGET:
        prefix = ScaledPath(grid[: run.grid_filled], values[: run.grid_filled], scale)
        raise PartialResultError(f"step budget exhausted before time {horizon * scale}", prefix)
    return ScaledPath(grid, values, scale)


def sup_gap_running_max(traj: Trajectory, scale: float, horizon: float) -> float:
    """sup_t |X^(N)_t - running max| over [0, horizon]: max backtrack / N^alpha.

    Only steps whose jump time S(k) is at most horizon * N count.
    """
    clock = traj.clock()
    covered = int(np.searchsorted(clock, horizon * scale, side="right"))
    if covered == 0:
        return 0.0
    return max_backtrack(traj.positions(0, covered)) / scale**traj.params.alpha


def _scaling_trial(cfg: dict, i: int):
    env_seed, noise_seed = trial_seeds(cfg["seed"], cfg["purpose"], i)
    params: ModelParams = cfg["params"]
    env = _make_env(params.alpha, env_seed, cfg.get("law"))
    n = cfg["scale"]
    grid = np.asarray(cfg["grid"]) * n
    run = run_walk(env, params, noise_seed, t_stop=grid[-1], grid=grid, hi=4 * int(n**params.alpha) + 64)
    if run.status == kernels.BUDGET:
        raise RunawaySimulationError("scaling trial exceeded its step budget")
    vals = run.grid_positions / n**params.alpha
    return float(vals[-1]), float(vals.min()), run.max_backtrack / n**params.alpha


def scaling_samples(params: ModelParams, scale: float, trials: int, seed: int, workers: int = 1,
                    grid=(1.0,), law=None) -> dict:
    """Per-trial X^(N)_T (last grid time), min over the grid and max backtrack / N^alpha."""
    cfg = {"params": params, "seed": seed, "purpose": f"scaling/{scale:.17g}", "scale": float(scale),
           "grid": tuple(float(g) for g in grid), "law": law}
    rows = run_trials(partial(_scaling_trial, cfg), trials, workers)
    a = np.asarray(rows, dtype=float).reshape(-1, 3)
    return {"x": a[:, 0], "grid_min": a[:, 1], "gap": a[:, 2]}


def limit_samples(params: ModelParams, size: int, seed: int, time: float = 1.0) -> np.ndarray:
    """v# V^-1(time): the scaling limit of X^(N)_time."""
    gen = np.random.Generator(np.random.PCG64(rng.derive_key(seed, "scaling/limit", 0)))
    return params.v_sharp * stable.sample_inverse(params.alpha, time, gen, int(size))


def scaling_check(params: ModelParams, scales, trials: int, seed: int, reference_size: int = 100_000,
                  workers: int = 1, tolerance: float = 0.05) -> ExperimentReport:
    """Two-sample KS between X^(N)_1 and v# V^-1(1) for each N in ``scales``."""
    ref = limit_samples(params, reference_size, seed)
    rep = ExperimentReport("scaling", {**params.to_dict(), "reference_size": reference_size},
                           seed, trials, tolerance=tolerance)
    kss = []
    for n in scales:
        s = scaling_samples(params, n, trials, seed, workers)
        ks = stats.ks_two_sample(s["x"], ref)
        kss.append(ks)
        tag = f"n_{n:.0e}".replace("+", "")
        rep.distances[f"ks_{tag}"] = ks
        rep.columns[f"x_{tag}"] = s["x"]
        rep.estimates[f"mean_x_{tag}"] = Estimate.mean(s["x"], params.v_sharp / math.gamma(1.0 + params.alpha))
    rep.checks["ks_largest_scale"] = kss[-1] <= tolerance
    rep.checks["ks_trend"] = kss[-1] <= kss[0] + 0.01
    return rep


def gap_exceedance(params: ModelParams, scale: float, threshold: float, trials: int, seed: int,
                   workers: int = 1) -> Estimate:
    """P(sup gap to the running max over [0, 1] > threshold), gap in rescaled units."""
    s = scaling_samples(params, scale, trials, seed, workers)
    return Estimate.proportion(int((s["gap"] > threshold).sum()), trials, 0.0)


# -- hitting-time Laplace transform ------------------------------------------------


def hitting_laplace_target(params: ModelParams, u: float, beta: float) -> float:
    a = params.alpha
    return math.exp(-(a * math.pi / math.sin(a * math.pi)) * params.v**-a * beta**a * u)


def _hitting_trial(cfg: dict, i: int):
    env_seed, noise_seed = trial_seeds(cfg["seed"], cfg["purpose"], i)
    params: ModelParams = cfg["params"]
    env = _make_env(params.alpha, env_seed, cfg.get("law"))
    run = run_walk(env, params, noise_seed, target=cfg["target"])
    if run.status != kernels.REACHED:
        raise RunawaySimulationError(f"site {cfg['target']} not reached within the step budget")
    return run.clock


def hitting_times(params: ModelParams, target: int, trials: int, seed: int, workers: int = 1,
                  law=None) -> np.ndarray:
    cfg = {"params": params, "seed": seed, "purpose": f"hitting/{target}", "target": int(target), "law": law}
    return np.asarray(run_trials(partial(_hitting_trial, cfg), trials, workers))


def hitting_laplace_check(params: ModelParams, scale: float, u: float, beta: float, trials: int, seed: int,
                          workers: int = 1, tolerance: float = 0.03, law=None) -> ExperimentReport:
    """Monte Carlo E[exp(-beta N^(-1/alpha) H_{floor(uN)})] against its stable limit."""
    if u <= 0:
        raise ParameterDomainError("u", u, "> 0")
    if beta <= 0:
        raise ParameterDomainError("beta", beta, "> 0")
    target_site = max(1, int(math.floor(u * scale)))
    h = hitting_times(params, target_site, trials, seed, workers, law)
    obs = np.exp(-beta * h / scale ** (1.0 / params.alpha))
    est = Estimate.mean(obs, hitting_laplace_target(params, u, beta))
    rep = ExperimentReport("hitting_laplace", {**params.to_dict(), "scale": scale, "u": u, "beta": beta},
                           seed, trials, estimates={"laplace": est}, tolerance=tolerance,
                           columns={"hitting_time": h, "laplace_term": obs})
    rep.checks["laplace"] = est.error <= tolerance
    return rep


# -- deep-trap occupation ----------------------------------------------------------


def trap_laplace_target(params: ModelParams, lam: float) -> float:
    a = params.alpha
    return (a * math.pi / math.sin(a * math.pi)) * params.v**-a * lam**a


def trap_occupation_samples(params: ModelParams, n: int, trials: int, seed: int, gamma: float = DEFAULT_GAMMA):
    """(tau_x, T_x, T-bar_x) for walks started on a deep site x (depth drawn conditioned >= g(n))."""
    if n < 2:
        raise ParameterDomainError("n", n, ">= 2")
    keys = np.array([[rng.derive_key(seed, f"trap/{lane}", i) for lane in ("env", "deep", "dir", "mark")]
                     for i in range(trials)], dtype=np.uint64)
    g = critical_depth(n, params.alpha)
    nu = nu_scale(n, gamma)
    budget = step_budget(params, nu)
    return kernels.trap_occupation_batch(
        keys[:, 0].copy(), keys[:, 1].copy(), keys[:, 2].copy(), keys[:, 3].copy(),
        params.p, params.alpha, g, nu, budget,
    )


def trap_laplace_check(params: ModelParams, n: int, lambdas, trials: int, seed: int, tolerance: float = 0.10,
                       use_neighbourhood: bool = False, gamma: float = DEFAULT_GAMMA) -> ExperimentReport:
    """n phi(n) E[1 - exp(-lambda n^(-1/alpha) T_x) | tau_x >= g(n)] against its limit, per lambda."""
    lambdas = [float(v) for v in np.atleast_1d(lambdas)]
    if any(v < 0 for v in lambdas):
        raise ParameterDomainError("lambda", lambdas, ">= 0")
    tau0, t_x, t_bar = trap_occupation_samples(params, n, trials, seed, gamma)
    occ = t_bar if use_neighbourhood else t_x
    phi = critical_depth(n, params.alpha) ** -params.alpha
    norm = n * phi
    rep = ExperimentReport("trap_laplace", {**params.to_dict(), "n": n, "phi": phi, "neighbourhood": use_neighbourhood},
                           seed, trials, tolerance=tolerance, columns={"tau": tau0, "t_x": t_x, "t_bar_x": t_bar})
    for lam in lambdas:
        obs = -np.expm1(-lam * occ / n ** (1.0 / params.alpha))
        est = Estimate.mean(obs, trap_laplace_target(params, lam), scale=norm)
        key = f"lambda_{lam:g}".replace(".", "p")
        rep.estimates[key] = est
        rep.checks[key] = (est.point == 0.0) if lam == 0.0 else est.error <= tolerance * est.target
    return rep


# -- environment and walk events ---------------------------------------------------


def _event_trial(cfg: dict, i: int):
    env_seed, noise_seed = trial_seeds(cfg["seed"], cfg["purpose"], i)
    params: ModelParams = cfg["params"]
    n = cfg["n"]
    env = _make_env(params.alpha, env_seed, cfg.get("law"), cfg.get("overrides"))
    idx = index_deep_traps(env, n, cfg["kappa"], cfg["gamma"])
    e = (idx.e1, idx.e2, idx.e3, idx.e_star)
    if not cfg["walk"]:
        return (*e, False, False, False, math.nan, 0, idx.theta)
    run = run_walk(env, params, noise_seed, target=n, shallow_below=idx.g, lo=-idx.nu - 1)
    if run.status != kernels.REACHED:
        raise RunawaySimulationError(f"site {n} not reached within the step budget")
    a = run.max_backtrack < idx.nu
    i_ev = run.shallow_time < n ** (1.0 / params.alpha) / math.log(n)
    nu_bar = cfg["nu_bar"]
    # B: after H_{d+nu_bar} the walk reaches d+nu before returning to d, i.e. the
    # lowest site seen while the running max lies in [d+nu_bar, d+nu) stays above d
    b = a
    for d in idx.deltas:
        d = int(d)
        top = min(d + idx.nu, n)
        if d + nu_bar >= top:
            continue
        xs = np.arange(d + nu_bar, top) - run.lo
        if run.seg_min[xs].min() <= d:
            b = False
            break
    return (*e, bool(a), bool(i_ev), bool(b), run.shallow_time, run.max_backtrack, idx.theta)


EVENT_FIELDS = ("e1", "e2", "e3", "e_star", "a", "i", "b", "shallow_time", "max_backtrack", "theta")


def event_samples(params: ModelParams, n: int, trials: int, seed: int, workers: int = 1, walk: bool = True,
                  kappa: float = DEFAULT_KAPPA, gamma: float = DEFAULT_GAMMA, c_prime: float | None = None,
                  law=None, overrides=None) -> dict:
    """Per-trial indicators of E1, E2, E3, E*, A, I, B at horizon n."""
    if n < 3:
        raise ParameterDomainError("n", n, ">= 3")
    nu_bar = exit_distance(max(n, 16), params, c_prime)
    cfg = {"params": params, "seed": seed, "purpose": f"events/{n}", "n": int(n), "kappa": kappa,
           "gamma": gamma, "nu_bar": nu_bar, "walk": walk, "law": law, "overrides": overrides}
    rows = run_trials(partial(_event_trial, cfg), trials, workers)
    cols = {f: np.asarray([r[j] for r in rows]) for j, f in enumerate(EVENT_FIELDS)}
    cols["e"] = cols["e1"] & cols["e2"] & cols["e3"]
    cols["nu_bar"] = np.full(trials, nu_bar)
    return cols


def event_frequencies(params: ModelParams, n: int, trials: int, seed: int, workers: int = 1, walk: bool = True,
                      threshold: float = 0.9, **kw) -> ExperimentReport:
    """Empirical probabilities of the high-probability events at horizon n (targets: 1)."""
    cols = event_samples(params, n, trials, seed, workers, walk, **kw)
    names = ("e1", "e2", "e3", "e", "e_star") + (("a", "i", "b") if walk else ())
    rep = ExperimentReport("events", {**params.to_dict(), "n": n, "nu_bar": int(cols["nu_bar"][0])},
                           seed, trials, tolerance=1.0 - threshold)
    for k in names:
        rep.estimates[f"p_{k}"] = Estimate.proportion(int(cols[k].sum()), trials, 1.0)
    for k in ("e",) + (("a", "i", "b") if walk else ()):
        rep.checks[f"p_{k}"] = rep.estimates[f"p_{k}"].point >= threshold
    rep.columns = {k: cols[k] for k in (*names, "theta") + (("shallow_time", "max_backtrack") if walk else ())}
    return rep


def shallow_time_check(params: ModelParams, n: int, trials: int, seed: int, workers: int = 1, law=None,
                       threshold: float = 0.9) -> Estimate:
    """P(time spent on shallow sites before hitting n < n^(1/alpha) / log n)."""
    cols = event_samples(params, n, trials, seed, workers, law=law)
    return Estimate.proportion(int(cols["i"].sum()), trials, 1.0)


def backtrack_after_exit_check(params: ModelParams, n: int, trials: int, seed: int, workers: int = 1,
                               c_prime: float | None = None, law=None) -> Estimate:
    """P(B(n)): no backtrack beyond nu_bar after leaving any deep trap."""
    cols = event_samples(params, n, trials, seed, workers, c_prime=c_prime, law=law)
    return Estimate.proportion(int(cols["b"].sum()), trials, 1.0)


# -- renewal (Dynkin) laws ---------------------------------------------------------


def _renewal_trial(cfg: dict, i: int):
    keys = [np.uint64(rng.derive_key(cfg["seed"], f"dynkin/{lane}", i)) for lane in ("env", "dir", "mark")]
    last, nxt, count, _ = kernels.renewal_trial(
        keys[0], keys[1], keys[2], cfg["p"], cfg["alpha"], cfg["g"], cfg["nu"], cfg["nu_bar"],
        cfg["t"], cfg["max_renewals"],
    )
    if math.isinf(nxt):
        raise RunawaySimulationError(f"more than {cfg['max_renewals']} renewals before t")
    return last, nxt, count


def dynkin_renewal_check(params: ModelParams, t: float, trials: int, seed: int, workers: int = 1,
                         tolerance: float = 0.05, c_prime: float | None = None,
                         max_renewals: int = 10**7) -> ExperimentReport:
    """Undershoot / overshoot of renewal sums of deep-trap passage times vs the arcsine laws."""
    sc = AgingScales.build(params, t, c_prime)
    cfg = {"seed": seed, "p": params.p, "alpha": params.alpha, "g": sc.g, "nu": sc.nu,
           "nu_bar": sc.nu_bar, "t": float(t), "max_renewals": int(max_renewals)}
    rows = np.asarray(run_trials(partial(_renewal_trial, cfg), trials, workers), dtype=float).reshape(-1, 3)
    under = (t - rows[:, 0]) / t
    over = (rows[:, 1] - t) / t
    a = params.alpha
    ks_u = stats.ks_one_sample(under, np.vectorize(lambda x: stable.undershoot_cdf(a, min(max(x, 0.0), 1.0))))
    ks_o = stats.ks_one_sample(over, np.vectorize(lambda x: stable.overshoot_cdf(a, 0.0, max(x, 0.0))))
    rep = ExperimentReport(
        "dynkin", {**params.to_dict(), **sc.to_dict()}, seed, trials, tolerance=tolerance,
        distances={"ks_undershoot": ks_u, "ks_overshoot": ks_o},
        extras={"mean_renewals": float(rows[:, 2].mean())},
        columns={"last_sum": rows[:, 0], "next_sum": rows[:, 1], "renewals": rows[:, 2].astype(np.int64),
                 "undershoot": under, "overshoot": over},
    )
    rep.estimates["p_undershoot_le_half"] = Estimate.proportion(
        int((under <= 0.5).sum()), trials, stable.undershoot_cdf(a, 0.5))
    rep.estimates["p_overshoot_ge_one"] = Estimate.proportion(
        int((over >= 1.0).sum()), trials, stable.overshoot_cdf(a, 1.0, math.inf))
    rep.checks["ks_undershoot"] = ks_u <= tolerance
    rep.checks["ks_overshoot"] = ks_o <= tolerance
    return rep


# -- trap clock, localization and aging ----------------------------------------------


@dataclass(frozen=True)
class TrapClock:
    """Hitting times of the deep traps met by one walk, observed up to time ``t``."""

    t: float
    deltas: np.ndarray
    hit_times: np.ndarray
    exit_times: np.ndarray
    position: int
    nu_bar: int

    @property
    def inter_arrivals(self) -> np.ndarray:
        """H(delta_j, delta_j + nu_bar), +inf when the exit is not observed by time t."""
        return self.exit_times - self.hit_times

    def ell(self, s: float | None = None) -> int:
        """sup{j : H_{delta_j} <= s}, 0 if no deep trap is hit (s defaults to t)."""
        s = self.t if s is None else s
        return int(np.searchsorted(self.hit_times, s, side="right"))

    def ell_star(self, s: float | None = None) -> int:
        """sup{j : sum of the first j inter-arrival times <= s}."""
        s = self.t if s is None else s
        return int(np.searchsorted(np.cumsum(self.inter_arrivals), s, side="right"))

    def delta(self, j: int) -> int:
        return 0 if j == 0 else int(self.deltas[j - 1])

    def hit(self, j: int) -> float:
        """H_{delta_j}, with H_{delta_0} = 0; +inf when unobserved."""
        if j == 0:
            return 0.0
        return float(self.hit_times[j - 1]) if j <= self.hit_times.size else math.inf


def trap_clock(run: WalkRun, g: float, t: float, nu_bar: int) -> TrapClock:
    """TrapClock from a walk stopped at time ``t``; deep traps are sites >= 0 with depth >= g."""
    if run.status not in (kernels.TIME_UP, kernels.REACHED):
        raise TrajectoryExhaustedError("walk did not cover the observation time")
    top = run.run_max
    depth = run.depth[-run.lo : top - run.lo + 1]
    deltas = np.flatnonzero(depth >= g).astype(np.int64)
    hits = run.hit_time[deltas - run.lo]
    exits = np.array([run.first_hit(int(d) + nu_bar) for d in deltas], dtype=float)
    pos = int(run.grid_positions[0]) if run.grid_filled else run.position
    return TrapClock(t=float(t), deltas=deltas, hit_times=hits, exit_times=exits, position=pos, nu_bar=nu_bar)


def _localization_trial(cfg: dict, i: int):
    env_seed, noise_seed = trial_seeds(cfg["seed"], cfg["purpose"], i)
    params: ModelParams = cfg["params"]
    env = _make_env(params.alpha, env_seed, cfg.get("law"), cfg.get("overrides"))
    t = cfg["t"]
    run = run_walk(env, params, noise_seed, t_stop=t, grid=(t,), hi=2 * cfg["n_t"] + 64)
    clock = trap_clock(run, cfg["g"], t, cfg["nu_bar"])
    ell = clock.ell()
    d = clock.delta(ell)
    localized = clock.position == d
    straddle = clock.hit(ell) <= t < run.first_hit(d + cfg["nu_bar"])
    return ell, d, clock.position, bool(localized), bool(straddle), bool(localized and not straddle)


def localization_estimate(params: ModelParams, t: float, trials: int, seed: int, workers: int = 1,
                          threshold: float = 0.8, c_prime: float | None = None, law=None,
                          overrides=None) -> ExperimentReport:
    """P(X_t = delta_{ell_t}) and the straddle frequency H_{delta_ell} <= t < H_{delta_ell + nu_bar}."""
    sc = AgingScales.build(params, t, c_prime)
    cfg = {"params": params, "seed": seed, "purpose": f"localization/{t:.17g}", "t": float(t), "n_t": sc.n_t,
           "g": sc.g, "nu_bar": sc.nu_bar, "law": law, "overrides": overrides}
    rows = run_trials(partial(_localization_trial, cfg), trials, workers)
    cols = {k: np.asarray([r[j] for r in rows]) for j, k in
            enumerate(("ell", "delta_ell", "position", "localized", "straddle", "flagged"))}
    rep = ExperimentReport("localization", {**params.to_dict(), **sc.to_dict()}, seed, trials,
                           tolerance=1.0 - threshold, columns=cols)
    for k in ("localized", "straddle"):
        rep.estimates[f"p_{k}"] = Estimate.proportion(int(cols[k].sum()), trials, 1.0)
        rep.checks[f"p_{k}"] = rep.estimates[f"p_{k}"].point >= threshold
    flagged = float(cols["flagged"].mean())
    rep.extras["flagged_fraction"] = flagged
    rep.checks["flagged_fraction"] = flagged < 0.05
    return rep


def _aging_trial(cfg: dict, i: int):
    env_seed, noise_seed = trial_seeds(cfg["seed"], cfg["purpose"], i)
    params: ModelParams = cfg["params"]
    env = _make_env(params.alpha, env_seed, cfg.get("law"))
    t = cfg["t"]
    hs = cfg["hs"]
    grid = (t, *(t * h for h in hs))
    run = run_walk(env, params, noise_seed, t_stop=grid[-1], grid=grid, hi=2 * cfg["n_t"] + 64)
    if run.status != kernels.TIME_UP:
        raise RunawaySimulationError("aging trial did not reach its final time")
    x = run.grid_positions
    return (int(x[0]), *(int(v) for v in x[1:]))


def aging_samples(params: ModelParams, t: float, hs, trials: int, seed: int, workers: int = 1, law=None) -> dict:
    """Per-trial X_t and X_{th} for every ratio h (sorted ascending, one walk per trial)."""
    hs = tuple(sorted(float(h) for h in np.atleast_1d(hs)))
    if hs[0] <= 1.0:
        raise ParameterDomainError("h", hs[0], "> 1")
    n_t = aging_horizon(t, params.alpha)
    cfg = {"params": params, "seed": seed, "purpose": f"aging/{t:.17g}", "t": float(t), "hs": hs,
           "n_t": n_t, "law": law}
    rows = np.asarray(run_trials(partial(_aging_trial, cfg), trials, workers), dtype=np.int64)
    out = {"x_t": rows[:, 0]}
    for j, h in enumerate(hs):
        out[f"x_th_{h:g}"] = rows[:, j + 1]
    return out


def aging_estimate(params: ModelParams, t: float, hs, trials: int, seed: int, workers: int = 1,
                   tolerance: float = 0.05, law=None) -> ExperimentReport:
    """P(X_{th} = X_t) with Wilson CIs against arcsine_cdf(alpha, 1/h)."""
    hs = tuple(sorted(float(h) for h in np.atleast_1d(hs)))
    s = aging_samples(params, t, hs, trials, seed, workers, law)
    rep = ExperimentReport("aging", {**params.to_dict(), "t": t, "n_t": aging_horizon(t, params.alpha)},
                           seed, trials, tolerance=tolerance, columns=dict(s))
    for h in hs:
        same = s[f"x_th_{h:g}"] == s["x_t"]
        key = f"h_{h:g}".replace(".", "p")
        rep.columns[f"same_{key}"] = same
        est = Estimate.proportion(int(same.sum()), trials, stable.arcsine_cdf(params.alpha, 1.0 / h))
        rep.estimates[f"p_same_{key}"] = est
        rep.checks[f"p_same_{key}"] = est.error <= tolerance
    return rep


# -- environment statistics ---------------------------------------------------------


def envstats(params: ModelParams, n: int, trials: int, seed: int, workers: int = 1, **kw) -> ExperimentReport:
    """Environment-only event frequencies (no walk)."""
    return event_frequencies(params, n, trials, seed, workers, walk=False, **kw)


def subordinator_laplace(alpha: float, samples: int, lam: float, seed: int, tolerance_sd: float = 4.0) -> ExperimentReport:
    """Monte Carlo E[exp(-lam S)] for the unit stable variable against exp(-lam^alpha)."""
    gen = np.random.Generator(np.random.PCG64(rng.derive_key(seed, "subordinator", 0)))
    s = stable.sample_positive_stable(alpha, gen, int(samples))
    obs = np.exp(-lam * s)
    m, se = float(obs.mean()), float(obs.std(ddof=1) / math.sqrt(obs.size))
    target = math.exp(-(lam**alpha))
    est = Estimate(m, m - Z95 * se, m + Z95 * se, target, int(samples))
    rep = ExperimentReport("subordinator", {"alpha": alpha, "lambda": lam, "samples": int(samples)}, seed, 1,
                           estimates={"laplace": est}, distances={"laplace_stderr": se}, tolerance=tolerance_sd)
    rep.checks["laplace"] = est.error <= tolerance_sd * se
    return rep
