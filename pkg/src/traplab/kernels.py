"""Numba kernels for the embedded walk and its clock.

All randomness is counter-based (see :mod:`traplab.rng`): step ``k`` moves
right iff ``uniform_open(dir_key, k) < p`` and carries the mark
``exponential(mark_key, k)``. Kernels therefore never hold generator state and
a rerun with a larger environment window retraces the same path exactly.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import exponential, uniform_closed, uniform_open

REACHED = 0
TIME_UP = 1
LEFT_WINDOW = 2
RIGHT_WINDOW = 3
BUDGET = 4


@nb.njit(cache=True)
def walk_stream(depth, lo, p, dir_key, mark_key, target, t_stop, max_steps,
                grid, grid_pos, hit_time, seg_min, shallow_below):
    """Run the walk from site 0 until it hits ``target`` or its clock passes ``t_stop``.

    ``depth[i]`` is the depth of site ``lo + i``. On exit:

    * ``grid_pos[j]`` = X at time ``grid[j]`` for every grid time covered,
    * ``hit_time[x - lo]`` = first hitting time H_x for each new maximum x,
    * ``seg_min[x - lo]`` = lowest site visited while the running max equals x.

    Returns ``(status, pos, steps, clock, shallow_time, run_max, grid_filled)``.
    ``shallow_time`` sums holding times at sites with depth < ``shallow_below``.
    """
    size = depth.shape[0]
    m = grid.shape[0]
    pos = 0
    k = 0
    clock = 0.0
    shallow = 0.0
    run_max = 0
    gi = 0
    hit_time[-lo] = 0.0
    seg_min[-lo] = 0
    status = BUDGET
    while k < max_steps:
        if pos == target:
            status = REACHED
            break
        tau = depth[pos - lo]
        hold = tau * exponential(mark_key, k)
        nxt = clock + hold
        if tau < shallow_below:
            shallow += hold
        while gi < m and grid[gi] < nxt:
            grid_pos[gi] = pos
            gi += 1
        if nxt > t_stop:
            clock = nxt
            status = TIME_UP
            break
        clock = nxt
        if uniform_open(dir_key, k) < p:
            pos += 1
        else:
            pos -= 1
        k += 1
        i = pos - lo
        if i < 0:
            status = LEFT_WINDOW
            break
        if i >= size:
            status = RIGHT_WINDOW
            break
        if pos > run_max:
            run_max = pos
            hit_time[i] = clock
            seg_min[i] = pos
        elif pos < seg_min[run_max - lo]:
            seg_min[run_max - lo] = pos
    return status, pos, k, clock, shallow, run_max, gi


@nb.njit(cache=True)
def hitting_steps(p, dir_key, target, max_steps):
    """Step index of the first visit to ``target`` (or -1), plus the lowest site seen."""
    pos = 0
    low = 0
    k = 0
    while k < max_steps:
        if pos == target:
            return k, low
        if uniform_open(dir_key, k) < p:
            pos += 1
        else:
            pos -= 1
            if pos < low:
                low = pos
        k += 1
    return -1, low


@nb.njit(cache=True)
def clock_blocks(depth, lo, positions, mark_key, step0):
    """Holding times ``tau_{Y_k} e_k`` for a block of positions starting at step ``step0``."""
    out = np.empty(positions.shape[0])
    for j in range(positions.shape[0]):
        out[j] = depth[positions[j] - lo] * exponential(mark_key, step0 + j)
    return out


@nb.njit(cache=True, inline="always")
def pareto_quantile(u, inv_alpha):
    """u^(-1/alpha); the alpha = 1/2 case avoids pow (4x faster, same value up to rounding)."""
    if inv_alpha == 2.0:
        return 1.0 / (u * u)
    return u ** (-inv_alpha)


@nb.vectorize(["float64(float64, float64)"], cache=True)
def pareto_quantile_array(u, inv_alpha):
    return pareto_quantile(u, inv_alpha)


@nb.njit(cache=True)
def pareto_depth(env_key, x, inv_alpha):
    return pareto_quantile(uniform_closed(env_key, x), inv_alpha)


@nb.njit(cache=True)
def pareto_window(env_key, lo, hi, inv_alpha):
    """Pareto depths of sites lo..hi for the environment key ``env_key``."""
    out = np.empty(hi - lo + 1)
    for i in range(hi - lo + 1):
        out[i] = pareto_depth(env_key, lo + i, inv_alpha)
    return out


@nb.njit(cache=True)
def trap_occupation_batch(env_keys, deep_keys, dir_keys, mark_keys, p, alpha, g, nu, max_steps):
    """Occupation of a conditioned deep trap at site 0 until the walk hits ``nu``.

    For each trial the trap depth is ``g * U^(-1/alpha)`` (Pareto conditioned
    on >= g); neighbours are unconditioned Pareto from ``env_keys[i]``.
    Returns arrays ``(tau0, t_x, t_bar)``: trap depth, time at 0, time in
    [-nu, nu] before the hit.
    """
    n = env_keys.shape[0]
    inv = 1.0 / alpha
    tau0 = np.empty(n)
    t_x = np.empty(n)
    t_bar = np.empty(n)
    for i in range(n):
        deep = g * pareto_quantile(uniform_closed(deep_keys[i], 0), inv)
        tau0[i] = deep
        pos = 0
        k = 0
        a = 0.0
        b = 0.0
        while pos != nu:
            if k >= max_steps:
                raise RuntimeError("step budget exceeded")
            if pos == 0:
                hold = deep * exponential(mark_keys[i], k)
                a += hold
            else:
                hold = pareto_depth(env_keys[i], pos, inv) * exponential(mark_keys[i], k)
            if pos >= -nu:
                b += hold
            if uniform_open(dir_keys[i], k) < p:
                pos += 1
            else:
                pos -= 1
            k += 1
        t_x[i] = a
        t_bar[i] = b
    return tau0, t_x, t_bar


@nb.njit(cache=True)
def reflected_passage(depth, p, dir_key, mark_key, start, target, step0):
    """Hitting time of ``target`` for the walk on sites ``0..target`` started at ``start``.

    Site 0 is reflecting: it always jumps right, after its usual holding time.
    ``depth[i]`` is the depth of window site ``i``. Returns ``(time, steps)``.
    """
    pos = start
    k = step0
    clock = 0.0
    while pos != target:
        clock += depth[pos] * exponential(mark_key, k)
        if pos == 0 or uniform_open(dir_key, k) < p:
            pos += 1
        else:
            pos -= 1
        k += 1
    return clock, k - step0


@nb.njit(cache=True)
def reflected_occupation(depth, p, dir_key, mark_key, start, n_steps):
    """Time spent at each site by the chain reflected at both ends of ``depth``."""
    last = depth.shape[0] - 1
    occ = np.zeros(depth.shape[0])
    pos = start
    for k in range(n_steps):
        occ[pos] += depth[pos] * exponential(mark_key, k)
        if pos == 0:
            pos = 1
        elif pos == last:
            pos = last - 1
        elif uniform_open(dir_key, k) < p:
            pos += 1
        else:
            pos -= 1
    return occ


@nb.njit(cache=True)
def renewal_trial(env_key, dir_key, mark_key, p, alpha, g, nu, nu_bar, t, max_renewals):
    """Renewal sums of i.i.d. deep-trap passage times T*_j until they pass ``t``.

    Each T*_j uses a fresh window: ``nu`` sites left of the trap drawn from the
    Pareto law conditioned below ``g``, the trap conditioned at or above ``g``,
    and ``nu_bar`` unconditioned sites to the right. The walk starts on the
    trap, is reflected ``nu`` sites to the left and stops on hitting
    trap + ``nu_bar``.

    Returns ``(last_sum, next_sum, count, steps)`` where ``last_sum`` is
    T*_1 + ... + T*_l (l = number of sums <= t) and ``next_sum`` adds T*_{l+1}.
    """
    inv = 1.0 / alpha
    width = nu + nu_bar + 1
    below = 1.0 - g ** (-alpha)
    window = np.empty(width)
    total = 0.0
    k = 0
    j = 0
    while True:
        base = j * width
        for i in range(nu):
            u = uniform_closed(env_key, base + i)
            window[i] = pareto_quantile(1.0 - u * below, inv)
        window[nu] = g * pareto_quantile(uniform_closed(env_key, base + nu), inv)
        for i in range(nu + 1, width):
            window[i] = pareto_quantile(uniform_closed(env_key, base + i), inv)
        dt, used = reflected_passage(window, p, dir_key, mark_key, nu, width - 1, k)
        k += used
        j += 1
        if total + dt > t:
            return total, total + dt, j - 1, k
        total += dt
        if j >= max_renewals:
            return total, np.inf, j, k
