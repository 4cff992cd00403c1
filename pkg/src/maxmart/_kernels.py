"""Numba kernels behind the three generators.

Each generator has a recording walk (returns every sample, used to build
``CadlagPath`` objects) and a summary walk (streams the per-path statistics
without storing the path).  Both consume the same counters in the same order,
so the summary of stream ``i`` is exactly what the scan of path ``i`` gives.

Counter layout for the continuous model: block ``(j, 0)`` gives the four
Gaussian increments of grid steps ``4j .. 4j + 3`` (two Box-Muller pairs);
block ``(j, 1)`` holds the bridge-maximum uniforms of the same steps, and is
only evaluated for steps that come close enough to the running sup to matter.
Jump models read exponential clocks word by word in counter order.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import philox_block, to_open_unit

_TWO_PI = 2.0 * math.pi
_TWO_M53 = 2.0**-53
_U11 = np.uint64(11)
_ZERO = np.uint64(0)
_ONE = np.uint64(1)

# ln U >= -36.74 for every U produced by to_open_unit, and the bridge from a
# to b reaches m iff ln U <= -2 (m - a)(m - b) / h; so when
# (m - a)(m - b) > 18.5 h the bridge provably stays below m.
_BRIDGE_SKIP = 18.5
# relative tie tolerance on grid paths, applied on the log scale
GRID_REL_TOL = 1e-12


@nb.njit(inline="always", cache=True)
def _half_unit(x):
    return (x >> _U11) * _TWO_M53


@nb.njit(inline="always", cache=True)
def bridge_max(a, b, h, u):
    """Maximum of a Brownian bridge from ``a`` to ``b`` with variance ``h``."""
    d = b - a
    return 0.5 * (a + b + math.sqrt(d * d - 2.0 * h * math.log(u)))


@nb.njit(inline="always", cache=True)
def _fill_normals(key0, key1, j, buf):
    w0, w1, w2, w3 = philox_block(key0, key1, np.uint64(j), _ZERO)
    r = math.sqrt(-2.0 * math.log(to_open_unit(w0)))
    th = _TWO_PI * _half_unit(w1)
    buf[0] = r * math.cos(th)
    buf[1] = r * math.sin(th)
    r = math.sqrt(-2.0 * math.log(to_open_unit(w2)))
    th = _TWO_PI * _half_unit(w3)
    buf[2] = r * math.cos(th)
    buf[3] = r * math.sin(th)


@nb.njit(inline="always", cache=True)
def _bridge_uniform(key0, key1, k):
    w = philox_block(key0, key1, np.uint64(k // 4), _ONE)
    return to_open_unit(w[k % 4])


# ---------------------------------------------------------------------------
# continuous exponential model: log L_t = sigma W_t - sigma^2 t / 2


@nb.njit(cache=True)
def contexp_record(key0, key1, x0, xstar0, sigma, dt, gap, bridge, t_max, max_steps):
    """Simulate log L on the grid until the stop rule fires or ``t_max``.

    ``x0``/``xstar0`` are the starting log value and log running sup (both 0
    for a fresh path).  Returns ``(logs, bridge_logs, stopped)``.
    """
    h = sigma * sigma * dt
    mu = -0.5 * h
    s = math.sqrt(h)
    cap = 1024
    xs = np.empty(cap)
    bm = np.empty(cap)
    xs[0] = x0
    x = x0
    xstar = xstar0
    k = 0
    stopped = False
    buf = np.empty(4)
    while k < max_steps:
        if k * dt >= t_max:
            break
        if k % 4 == 0:
            _fill_normals(key0, key1, k // 4, buf)
        xn = x + mu + s * buf[k % 4]
        if k + 1 >= cap:
            cap *= 2
            nxs = np.empty(cap)
            nxs[: k + 1] = xs[: k + 1]
            xs = nxs
            nbm = np.empty(cap)
            nbm[:k] = bm[:k]
            bm = nbm
        if bridge:
            m = bridge_max(x, xn, h, _bridge_uniform(key0, key1, k))
            bm[k] = m
            if m > xstar:
                xstar = m
        else:
            bm[k] = np.nan
        xs[k + 1] = xn
        if xn > xstar:
            xstar = xn
        x = xn
        k += 1
        if x <= xstar - gap:
            stopped = True
            break
    return xs[: k + 1].copy(), bm[:k].copy(), stopped


@nb.njit(cache=True)
def contexp_summary(key0, key1, sigma, dt, gap, bridge, log_strikes, checkpoints, max_steps,
                    tau_out, ckpt_out):
    """Streaming statistics of one fresh continuous-model path.

    Fills ``tau_out`` (grid time at the end of the step in which the refined
    path first exceeds each strike; inf if never) and ``ckpt_out`` (L at each
    checkpoint, 0 past the horizon).  Returns
    ``(rho, log_sup, log_at_rho, log_sup_before_rho, horizon, stopped)``.
    """
    h = sigma * sigma * dt
    mu = -0.5 * h
    s = math.sqrt(h)
    skip = _BRIDGE_SKIP * h
    nk = log_strikes.shape[0]
    nc = checkpoints.shape[0]
    for j in range(nk):
        tau_out[j] = np.inf
    for j in range(nc):
        ckpt_out[j] = 0.0
    ci = 0
    while ci < nc and checkpoints[ci] <= 0.0:
        ckpt_out[ci] = 1.0
        ci += 1
    x = 0.0
    xstar = 0.0
    rho = 0.0
    x_at_rho = 0.0
    x_before = 0.0
    k = 0
    stopped = False
    buf = np.empty(4)
    next_strike = 0
    while k < max_steps:
        if k % 4 == 0:
            _fill_normals(key0, key1, k // 4, buf)
        xn = x + mu + s * buf[k % 4]
        t_next = (k + 1) * dt
        if bridge:
            top = x if x > xn else xn
            if top >= xstar or (xstar - x) * (xstar - xn) <= skip:
                m = bridge_max(x, xn, h, _bridge_uniform(key0, key1, k))
                prev = xstar
                if m > xstar:
                    xstar = m
                if m >= xstar - GRID_REL_TOL:
                    rho = t_next
                    x_at_rho = m
                    x_before = prev
        prev = xstar
        if xn > xstar:
            xstar = xn
        if xn >= xstar - GRID_REL_TOL:
            rho = t_next
            x_at_rho = xn
            x_before = prev
        while next_strike < nk and xstar > log_strikes[next_strike]:
            tau_out[next_strike] = t_next
            next_strike += 1
        while ci < nc and checkpoints[ci] <= t_next:
            if checkpoints[ci] == t_next:
                ckpt_out[ci] = math.exp(xn)
            else:
                # linear interpolation between grid samples, as CadlagPath does
                w = (checkpoints[ci] - k * dt) / dt
                ckpt_out[ci] = (1.0 - w) * math.exp(x) + w * math.exp(xn)
            ci += 1
        x = xn
        k += 1
        if x <= xstar - gap:
            stopped = True
            break
    return rho, xstar, x_at_rho, x_before, k * dt, stopped


@nb.njit(cache=True)
def contexp_hits(key0, key1, x0, level, sigma, dt, gap, bridge, max_steps):
    """Continuation from log value ``x0`` below the sup ``level``.

    Returns ``(hit_ge, hit_gt)``: whether the refined future path reaches /
    strictly exceeds ``level`` before the stop rule (relative to ``level``)
    fires.
    """
    if x0 > level:
        return True, True
    h = sigma * sigma * dt
    mu = -0.5 * h
    s = math.sqrt(h)
    skip = _BRIDGE_SKIP * h
    x = x0
    hit_ge = x0 >= level
    k = 0
    buf = np.empty(4)
    while k < max_steps:
        if k % 4 == 0:
            _fill_normals(key0, key1, k // 4, buf)
        xn = x + mu + s * buf[k % 4]
        top = xn if xn > x else x
        if bridge:
            if top >= level or (level - x) * (level - xn) <= skip:
                m = bridge_max(x, xn, h, _bridge_uniform(key0, key1, k))
                if m > top:
                    top = m
        if top > level:
            return True, True
        if top >= level:
            hit_ge = True
        x = xn
        k += 1
        if x <= level - gap:
            break
    return hit_ge, False


@nb.njit(cache=True)
def contexp_future_logsup(key0, key1, x0, xstar0, sigma, dt, gap, bridge, max_steps):
    """Log of the final recorded sup of a continuation started at ``(x0, xstar0)``."""
    h = sigma * sigma * dt
    mu = -0.5 * h
    s = math.sqrt(h)
    skip = _BRIDGE_SKIP * h
    x = x0
    xstar = xstar0
    k = 0
    buf = np.empty(4)
    while k < max_steps:
        if k % 4 == 0:
            _fill_normals(key0, key1, k // 4, buf)
        xn = x + mu + s * buf[k % 4]
        if bridge:
            if x >= xstar or xn >= xstar or (xstar - x) * (xstar - xn) <= skip:
                m = bridge_max(x, xn, h, _bridge_uniform(key0, key1, k))
                if m > xstar:
                    xstar = m
        if xn > xstar:
            xstar = xn
        x = xn
        k += 1
        if x <= xstar - gap:
            break
    return xstar


# ---------------------------------------------------------------------------
# exponential clocks


@nb.njit(inline="always", cache=True)
def _word(key0, key1, i):
    w = philox_block(key0, key1, np.uint64(i // 4), _ZERO)
    return w[i % 4]


@nb.njit(cache=True)
def exp_clock(key0, key1, i, rate):
    """The ``i``-th Exponential(rate) variate of a stream."""
    return -math.log(to_open_unit(_word(key0, key1, i))) / rate


@nb.njit(cache=True)
def poisson_death_taus(master, start, stop, lam):
    out = np.empty(stop - start)
    for i in range(start, stop):
        out[i - start] = exp_clock(master, np.uint64(i), 0, lam)
    return out


# ---------------------------------------------------------------------------
# Poisson-up model: S_t = exp(-lam t) 2^{N_t}


@nb.njit(cache=True)
def poisson_up_record(key0, key1, lam, gap, t_max, max_jumps):
    """Jump times of S until the stop rule or ``t_max``.

    Returns ``(jump_times, stop_time, stopped)``; ``stop_time`` is the exact
    time S decays to ``exp(-gap) * S*`` (or ``t_max``).
    """
    times = np.empty(max_jumps)
    n = 0
    t = 0.0
    log_sup = 0.0
    i = 0
    while True:
        log_s = n * math.log(2.0) - lam * t
        t_stop = t + (log_s - (log_sup - gap)) / lam
        t_next = t + exp_clock(key0, key1, i, lam)
        i += 1
        if t_stop <= t_next and t_stop <= t_max:
            return times[:n].copy(), t_stop, True
        if t_next > t_max or n >= max_jumps:
            return times[:n].copy(), t_max, False
        t = t_next
        times[n] = t
        n += 1
        log_sn = n * math.log(2.0) - lam * t
        if log_sn > log_sup:
            log_sup = log_sn


@nb.njit(inline="always", cache=True)
def up_value(n, t, lam):
    return math.ldexp(math.exp(-lam * t), n)


@nb.njit(cache=True)
def poisson_up_summary(key0, key1, lam, gap, strikes, checkpoints, max_jumps, tau_out, val_out,
                       ckpt_out):
    """Streaming statistics of one Poisson-up path.

    Returns ``(rho, sup, left_at_rho, sup_before_rho, n_jumps, jumps_at_sup,
    jumps_below_sup, horizon)``.
    """
    nk = strikes.shape[0]
    nc = checkpoints.shape[0]
    for j in range(nk):
        tau_out[j] = np.inf
        val_out[j] = 0.0
    for j in range(nc):
        ckpt_out[j] = 0.0
    n = 0
    t = 0.0
    sup = 1.0
    log_sup = 0.0
    rho = 0.0
    left_at_rho = 1.0
    sup_before_rho = 1.0
    at_sup = 0
    below_sup = 0
    next_strike = 0
    ci = 0
    i = 0
    while True:
        log_s = n * math.log(2.0) - lam * t
        t_stop = t + (log_s - (log_sup - gap)) / lam
        t_next = t + exp_clock(key0, key1, i, lam)
        i += 1
        while ci < nc and checkpoints[ci] < t_next and checkpoints[ci] <= t_stop:
            ckpt_out[ci] = up_value(n, checkpoints[ci], lam)
            ci += 1
        if t_stop <= t_next or n >= max_jumps:
            return rho, sup, left_at_rho, sup_before_rho, n, at_sup, below_sup, t_stop
        t = t_next
        left = up_value(n, t, lam)
        n += 1
        right = up_value(n, t, lam)
        if left == sup:
            at_sup += 1
        elif left < sup:
            below_sup += 1
        if right >= sup:
            rho = t
            left_at_rho = left
            sup_before_rho = sup
            sup = right
            log_sup = math.log(sup)
        while next_strike < nk and right > strikes[next_strike]:
            tau_out[next_strike] = t
            val_out[next_strike] = right
            next_strike += 1


@nb.njit(cache=True)
def poisson_up_hits(key0, key1, s0, level, lam, gap, max_jumps):
    """Does S, restarted from ``s0`` below ``level``, reach (>=, >) ``level``?"""
    if s0 > level:
        return True, True
    hit_ge = s0 >= level
    log_level = math.log(level)
    log_s = math.log(s0)
    t = 0.0
    n = 0
    i = 0
    while n < max_jumps:
        t_stop = (log_s + n * math.log(2.0) - (log_level - gap)) / lam
        t_next = t + exp_clock(key0, key1, i, lam)
        i += 1
        if t_stop <= t_next:
            break
        t = t_next
        n += 1
        v = s0 * math.ldexp(math.exp(-lam * t), n)
        if v > level:
            return True, True
        if v >= level:
            hit_ge = True
    return hit_ge, False


@nb.njit(cache=True)
def poisson_up_future_logsup(key0, key1, s0, sup0, lam, gap, max_jumps):
    log_sup = math.log(sup0)
    log_s0 = math.log(s0)
    t = 0.0
    n = 0
    i = 0
    while n < max_jumps:
        t_stop = (log_s0 + n * math.log(2.0) - (log_sup - gap)) / lam
        t_next = t + exp_clock(key0, key1, i, lam)
        i += 1
        if t_stop <= t_next:
            break
        t = t_next
        n += 1
        lv = log_s0 + n * math.log(2.0) - lam * t
        if lv > log_sup:
            log_sup = lv
    return log_sup


# ---------------------------------------------------------------------------
# batch drivers over a range of streams


@nb.njit(cache=True)
def contexp_batch(master, start, stop, sigma, dt, gap, bridge, log_strikes, checkpoints, max_steps):
    n = stop - start
    nk = log_strikes.shape[0]
    nc = checkpoints.shape[0]
    rho = np.empty(n)
    log_sup = np.empty(n)
    log_at_rho = np.empty(n)
    log_before = np.empty(n)
    horizon = np.empty(n)
    stopped = np.empty(n, dtype=np.bool_)
    tau = np.empty((n, nk))
    ckpt = np.empty((n, nc))
    for i in range(n):
        r, xs, xr, xb, hz, st = contexp_summary(master, np.uint64(start + i), sigma, dt, gap, bridge,
                                            log_strikes, checkpoints, max_steps, tau[i], ckpt[i])
        rho[i] = r
        log_sup[i] = xs
        log_at_rho[i] = xr
        log_before[i] = xb
        horizon[i] = hz
        stopped[i] = st
    return rho, log_sup, log_at_rho, log_before, horizon, stopped, tau, ckpt


@nb.njit(cache=True)
def poisson_up_batch(master, start, stop, lam, gap, strikes, checkpoints, max_jumps):
    n = stop - start
    nk = strikes.shape[0]
    nc = checkpoints.shape[0]
    rho = np.empty(n)
    sup = np.empty(n)
    left = np.empty(n)
    sup_before = np.empty(n)
    njumps = np.empty(n, dtype=np.int64)
    at_sup = np.empty(n, dtype=np.int64)
    below = np.empty(n, dtype=np.int64)
    horizon = np.empty(n)
    tau = np.empty((n, nk))
    val = np.empty((n, nk))
    ckpt = np.empty((n, nc))
    for i in range(n):
        out = poisson_up_summary(master, np.uint64(start + i), lam, gap, strikes, checkpoints,
                                 max_jumps, tau[i], val[i], ckpt[i])
        rho[i] = out[0]
        sup[i] = out[1]
        left[i] = out[2]
        sup_before[i] = out[3]
        njumps[i] = out[4]
        at_sup[i] = out[5]
        below[i] = out[6]
        horizon[i] = out[7]
    return rho, sup, left, sup_before, njumps, at_sup, below, horizon, tau, val, ckpt


# ---------------------------------------------------------------------------
# nested continuations: stream j of ``master`` drives continuation j


@nb.njit(cache=True)
def contexp_hit_counts(master, n, x0, level, sigma, dt, gap, bridge, max_steps):
    ge = 0
    gt = 0
    for j in range(n):
        a, b = contexp_hits(master, np.uint64(j), x0, level, sigma, dt, gap, bridge, max_steps)
        ge += a
        gt += b
    return ge, gt


@nb.njit(cache=True)
def poisson_up_hit_counts(master, n, s0, level, lam, gap, max_jumps):
    ge = 0
    gt = 0
    for j in range(n):
        a, b = poisson_up_hits(master, np.uint64(j), s0, level, lam, gap, max_jumps)
        ge += a
        gt += b
    return ge, gt


@nb.njit(cache=True)
def contexp_future_logsups(master, n, x0, xstar0, sigma, dt, gap, bridge, max_steps):
    out = np.empty(n)
    for j in range(n):
        out[j] = contexp_future_logsup(master, np.uint64(j), x0, xstar0, sigma, dt, gap, bridge,
                                       max_steps)
    return out


@nb.njit(cache=True)
def poisson_up_future_logsups(master, n, s0, sup0, lam, gap, max_jumps):
    out = np.empty(n)
    for j in range(n):
        out[j] = poisson_up_future_logsup(master, np.uint64(j), s0, sup0, lam, gap, max_jumps)
    return out
