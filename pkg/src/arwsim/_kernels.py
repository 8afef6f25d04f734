"""Numba kernels for the long-trajectory Monte Carlo paths.

Everything here operates on primitive scalars and preallocated arrays so the
hot loops stay in nopython mode and release the GIL (one kernel call per
worker thread, one RNG state per call). The RNG is xoshiro256++ seeded from
``numpy.random.SeedSequence`` material (see :mod:`arwsim.streams`); the
4-word uint64 state array is mutated in place.

Particle-count stepping follows the one-step outcome law of the reduced
(X, Y) chain: with probability lam/(1+lam) an active particle falls asleep
(dY = -1); otherwise it walks, waking k sleepers before settling on an empty
vertex (dX = 0, dY = k) or leaving through the boundary (dX = -1,
dY = k - 1). Tail probabilities over k are products of per-visit ratios and
are expanded factor by factor during inverse-CDF sampling, so each step costs
O(1) expected divisions near the critical line.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _rotl(x, k):
    return U64((x << k) | (x >> U64(64 - k)))


@njit(cache=True, inline="always")
def rng_next(state):
    """xoshiro256++ next(); mutates the 4-word uint64 state in place."""
    out = U64(_rotl(state[0] + state[3], U64(23)) + state[0])
    t = U64(state[1] << U64(17))
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], U64(45))
    return out


@njit(cache=True, inline="always")
def rng_u01(state):
    return np.float64(rng_next(state) >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def rng_below(state, n):
    # floor(u * n); n is tiny compared to 2**53 so the bias is negligible
    return int(rng_u01(state) * n)


# ---------------------------------------------------------------------------
# (X, Y) particle-count chain
# ---------------------------------------------------------------------------

# outcome of one inlined step, packed as (x, y); absorption is y == 0

@njit(cache=True, inline="always")
def _step_xy(n, sleep_p, base, pi00_sub, exit_w, settle_w, x, y, state):
    """Advance (x, y) by one step; exit_w/settle_w must match the current x.

    Returns (x, y, moved_left) where moved_left flags dX = -1, telling the
    caller to refresh the cached x-dependent weights.
    """
    u = rng_u01(state)
    if u < sleep_p:
        return x, y - 1, False
    u -= sleep_p
    m = x - y
    pk = 1.0
    k = 0
    while True:
        if k < m:
            pk1 = pk * (m - k) / (n + 2.0 - y - k)
        else:
            pk1 = 0.0
        d = pk - pk1
        ek = d * exit_w
        if u < ek:
            return x - 1, y + k - 1, True
        u -= ek
        sk = d * settle_w
        if k == 0:
            sk -= pi00_sub
        if u < sk or k >= m:
            return x, y + k, False
        u -= sk
        pk = pk1
        k += 1


@njit(cache=True, nogil=True)
def cc_trajectory(n, lam, x0, y0, max_steps, state, x_out, y_out, rho_x, tau_out):
    """Record the chain until absorption or max_steps.

    x_out/y_out must have length >= max_steps + 1. rho_x holds integer
    thresholds; tau_out[i] receives the first step t with x <= rho_x[i]
    (stays -1 if never). Returns (steps, absorbed).
    """
    inv1l = 1.0 / (1.0 + lam)
    sleep_p = lam * inv1l
    base = inv1l * (n + 1.0) / n
    pi00_sub = inv1l / n
    x = x0
    y = y0
    exit_w = base / (n + 2.0 - x)
    settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
    x_out[0] = x
    y_out[0] = y
    for i in range(rho_x.shape[0]):
        tau_out[i] = 0 if x <= rho_x[i] else -1
    t = 0
    while y > 0 and t < max_steps:
        x, y, moved = _step_xy(n, sleep_p, base, pi00_sub, exit_w, settle_w, x, y, state)
        if moved:
            exit_w = base / (n + 2.0 - x)
            settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
            for i in range(rho_x.shape[0]):
                if tau_out[i] < 0 and x <= rho_x[i]:
                    tau_out[i] = t + 1
        t += 1
        x_out[t] = x
        y_out[t] = y
    return t, y == 0


@njit(cache=True, nogil=True)
def cc_hit(n, lam, x0, y0, max_steps, state):
    """Run to absorption without recording. Returns (final_x, steps, absorbed)."""
    inv1l = 1.0 / (1.0 + lam)
    sleep_p = lam * inv1l
    base = inv1l * (n + 1.0) / n
    pi00_sub = inv1l / n
    x = x0
    y = y0
    exit_w = base / (n + 2.0 - x)
    settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
    t = 0
    while y > 0 and t < max_steps:
        x, y, moved = _step_xy(n, sleep_p, base, pi00_sub, exit_w, settle_w, x, y, state)
        if moved:
            exit_w = base / (n + 2.0 - x)
            settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
        t += 1
    return x, t, y == 0


@njit(cache=True, nogil=True)
def cc_first_passage(n, lam, x0, y0, s_level, max_steps, state):
    """Steps until S = y - ((1+lam)x - lam*n) drops to <= s_level.

    Returns (steps, code): code 0 = level hit, 1 = absorbed first (y = 0),
    2 = censored at max_steps.
    """
    inv1l = 1.0 / (1.0 + lam)
    sleep_p = lam * inv1l
    base = inv1l * (n + 1.0) / n
    pi00_sub = inv1l / n
    x = x0
    y = y0
    exit_w = base / (n + 2.0 - x)
    settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
    t = 0
    s = y - ((1.0 + lam) * x - lam * n)
    if s <= s_level:
        return 0, 0
    while t < max_steps:
        x, y, moved = _step_xy(n, sleep_p, base, pi00_sub, exit_w, settle_w, x, y, state)
        if moved:
            exit_w = base / (n + 2.0 - x)
            settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
        t += 1
        s = y - ((1.0 + lam) * x - lam * n)
        if s <= s_level:
            return t, 0
        if y == 0:
            return t, 1
    return t, 2


@njit(cache=True, nogil=True)
def cc_window_moments(n, lam, x0, y0, x_floor, s_gate, max_steps, state, sums):
    """Accumulate regression sums of dS on S along one in-window trajectory.

    sums (float64[6], updated in place): count, sum S, sum S^2, sum dS,
    sum S*dS, sum dS^2. Steps with |S| > s_gate are excluded, and the walk
    stops once x drops below x_floor (or absorbs), keeping the sample inside
    the critical window. Returns steps taken.
    """
    inv1l = 1.0 / (1.0 + lam)
    sleep_p = lam * inv1l
    base = inv1l * (n + 1.0) / n
    pi00_sub = inv1l / n
    x = x0
    y = y0
    exit_w = base / (n + 2.0 - x)
    settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
    s = y - ((1.0 + lam) * x - lam * n)
    t = 0
    while y > 0 and x >= x_floor and t < max_steps:
        x, y, moved = _step_xy(n, sleep_p, base, pi00_sub, exit_w, settle_w, x, y, state)
        if moved:
            exit_w = base / (n + 2.0 - x)
            settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
        s_new = y - ((1.0 + lam) * x - lam * n)
        if abs(s) <= s_gate:
            ds = s_new - s
            sums[0] += 1.0
            sums[1] += s
            sums[2] += s * s
            sums[3] += ds
            sums[4] += s * ds
            sums[5] += ds * ds
        s = s_new
        t += 1
    return t


# ---------------------------------------------------------------------------
# Microscopic single-occupancy chain (walk-until-settle updates)
# ---------------------------------------------------------------------------

# site encoding: 0 empty, -1 sleeping, k >= 1 active particle count
ETA_SLEEP = 0
ETA_SETTLE = 1
ETA_EXIT = 2


@njit(cache=True, nogil=True)
def eta_step_kernel(n, lam, sites, state):
    """One walk-until-settle update; sites (values in {0, -1, 1}) is mutated.

    Returns (code, woken) with code ETA_SLEEP/ETA_SETTLE/ETA_EXIT.
    """
    y = 0
    for i in range(n):
        if sites[i] == 1:
            y += 1
    idx = rng_below(state, y)
    pos = -1
    c = 0
    for i in range(n):
        if sites[i] == 1:
            if c == idx:
                pos = i
                break
            c += 1
    if rng_u01(state) < lam / (1.0 + lam):
        sites[pos] = -1
        return ETA_SLEEP, 0
    # walk on the complete graph: each jump uniform over the other n vertices
    # (index n is the boundary); the origin is vacated before the first jump
    sites[pos] = 0
    woken = 0
    while True:
        t = rng_below(state, n)
        if t >= pos:
            t += 1
        if t == n:
            return ETA_EXIT, woken
        v = sites[t]
        if v == 0:
            sites[t] = 1
            return ETA_SETTLE, woken
        if v == -1:
            sites[t] = 1
            woken += 1
        pos = t


@njit(cache=True, nogil=True)
def eta_outcome_counts(n, lam, x, y, nsamples, state):
    """Empirical one-step outcome counts from the canonical (x, y) config.

    Returns (sleep_count, settle_counts, exit_counts) with the count arrays
    indexed by woken count k = 0..x-y.
    """
    m = x - y
    sites = np.zeros(n, dtype=np.int64)
    sleep_cnt = 0
    settle_cnt = np.zeros(m + 1, dtype=np.int64)
    exit_cnt = np.zeros(m + 1, dtype=np.int64)
    for _ in range(nsamples):
        for i in range(n):
            sites[i] = 0
        for i in range(y):
            sites[i] = 1
        for i in range(y, x):
            sites[i] = -1
        code, w = eta_step_kernel(n, lam, sites, state)
        if code == ETA_SLEEP:
            sleep_cnt += 1
        elif code == ETA_SETTLE:
            settle_cnt[w] += 1
        else:
            exit_cnt[w] += 1
    return sleep_cnt, settle_cnt, exit_cnt


# ---------------------------------------------------------------------------
# Driven chain (multi-occupancy stabilisation, wired boundary)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def stabilize_kernel(n, lam, sites, y_tot, priority, cap, state):
    """ARW updates until no active particle remains or cap updates are spent.

    Each update picks an active particle (uniformly, or from the lowest
    occupied site when priority is set), which sleeps with probability
    lam/(1+lam) (a no-op when it shares its site) and otherwise takes one
    uniform jump to another vertex; the boundary removes it, a sleeper at the
    target wakes. Returns (updates, exits, truncated).
    """
    sleep_p = lam / (1.0 + lam)
    updates = 0
    exits = 0
    while y_tot > 0:
        if updates >= cap:
            return updates, exits, True
        updates += 1
        j = -1
        if priority:
            for i in range(n):
                if sites[i] > 0:
                    j = i
                    break
        else:
            r = rng_below(state, y_tot)
            acc = 0
            for i in range(n):
                v = sites[i]
                if v > 0:
                    acc += v
                    if r < acc:
                        j = i
                        break
        if rng_u01(state) < sleep_p:
            if sites[j] == 1:
                sites[j] = -1
                y_tot -= 1
            continue
        t = rng_below(state, n)
        if t >= j:
            t += 1
        sites[j] -= 1
        if t == n:
            exits += 1
            y_tot -= 1
        elif sites[t] == -1:
            sites[t] = 2
            y_tot += 1
        else:
            sites[t] += 1
    return updates, exits, False


@njit(cache=True, nogil=True)
def driven_run_kernel(n, lam, sites, n_adds, cap, state, counts_out, av_out):
    """Driven chain: add a particle at a uniform site, stabilise, repeat.

    sites must be stable (no actives) on entry. counts_out/av_out (length
    >= n_adds) receive the particle count after each addition and the number
    of micro-updates the stabilisation took. Returns (adds_done, truncated).
    """
    p_tot = 0
    for i in range(n):
        if sites[i] == -1:
            p_tot += 1
        elif sites[i] > 0:
            p_tot += sites[i]
    for a in range(n_adds):
        t = rng_below(state, n)
        if sites[t] == -1:
            sites[t] = 2
            y0 = 2
        else:
            sites[t] += 1
            y0 = sites[t]
        p_tot += 1
        upd, exits, trunc = stabilize_kernel(n, lam, sites, y0, False, cap, state)
        if trunc:
            return a, True
        p_tot -= exits
        counts_out[a] = p_tot
        av_out[a] = upd
    return n_adds, False


# ---------------------------------------------------------------------------
# i.i.d. increment walk on an interval (coarse-graining checks)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def iid_walk_exits(values, cdf, lo, hi, start, nruns, state, z_final):
    """Run nruns i.i.d.-increment walks from start until leaving (lo, hi).

    Increments are drawn by inverse CDF over (values, cdf); z_final receives
    the exit positions. Returns the total number of steps taken.
    """
    total = 0
    for r in range(nruns):
        z = float(start)
        while lo < z < hi:
            u = rng_u01(state)
            k = 0
            while cdf[k] < u:
                k += 1
            z += values[k]
            total += 1
        z_final[r] = z
    return total


# ---------------------------------------------------------------------------
# Structured linear solve for the stationary-distribution slice sweep
# ---------------------------------------------------------------------------

@njit(cache=True)
def solve_upper_hessenberg(H, b):
    """Solve H v = b for upper-Hessenberg H (zero below the first subdiagonal).

    Gaussian elimination with row pivoting confined to the two candidate rows
    per column; O(n^2) total.
    """
    n_ = H.shape[0]
    A = H.copy()
    r = b.copy()
    for k in range(n_ - 1):
        if abs(A[k + 1, k]) > abs(A[k, k]):
            for j in range(k, n_):
                tmp = A[k, j]
                A[k, j] = A[k + 1, j]
                A[k + 1, j] = tmp
            tmp = r[k]
            r[k] = r[k + 1]
            r[k + 1] = tmp
        if A[k, k] != 0.0 and A[k + 1, k] != 0.0:
            mlt = A[k + 1, k] / A[k, k]
            for j in range(k + 1, n_):
                A[k + 1, j] -= mlt * A[k, j]
            r[k + 1] -= mlt * r[k]
        A[k + 1, k] = 0.0
    v = np.zeros(n_)
    for i in range(n_ - 1, -1, -1):
        s = r[i]
        for j in range(i + 1, n_):
            s -= A[i, j] * v[j]
        v[i] = s / A[i, i]
    return v
