"""Compiled inner loops for training: open-addressing Q-table and the episode loop.

Beliefs for the partially observable attributes are packed row-wise into a
``(3, P)`` array padded with zeros, where ``P`` is the largest cardinality.
Every turn consumes one row of a pre-drawn uniform array ``U``: columns 0-1
for action selection and columns 2-7 for the three window observations.
The pure-Python path in :mod:`kbpomdp.learner` consumes uniforms the same way.
"""

import numpy as np
from numba import njit

FNV_OFFSET = np.uint64(1469598103934665603)
FNV_PRIME = np.uint64(1099511628211)

U_COLS = 8
R_NEG_FLOOR = 1e-12

R_BUMP = -10.0
R_STEP = -1.0
R_GRAB = 20.0
R_DELIVER = 100.0


# -- hash table -------------------------------------------------------------

@njit(cache=True)
def key_hash(key):
    h = FNV_OFFSET
    for v in key:
        h ^= np.uint64(np.int64(v) & 0xFFFF)
        h *= FNV_PRIME
    return h


@njit(cache=True)
def find_slot(keys, occ, key):
    mask = keys.shape[0] - 1
    i = np.int64(key_hash(key) & np.uint64(mask))
    while occ[i]:
        same = True
        for j in range(key.shape[0]):
            if keys[i, j] != key[j]:
                same = False
                break
        if same:
            return i, True
        i = (i + 1) & mask
    return i, False


@njit(cache=True)
def insert_slot(keys, vals, occ, count, key):
    i, found = find_slot(keys, occ, key)
    if not found:
        keys[i, :] = key
        vals[i, :] = 0.0
        occ[i] = True
        count[0] += 1
    return i


@njit(cache=True)
def rehash(old_keys, old_vals, old_occ, keys, vals, occ):
    dummy = np.zeros(1, np.int64)
    for s in range(old_keys.shape[0]):
        if old_occ[s]:
            i = insert_slot(keys, vals, occ, dummy, old_keys[s])
            vals[i, :] = old_vals[s]


@njit(cache=True)
def max_value(keys, vals, occ, key):
    i, found = find_slot(keys, occ, key)
    if not found:
        return 0.0
    best = vals[i, 0]
    for a in range(1, vals.shape[1]):
        if vals[i, a] > best:
            best = vals[i, a]
    return best


@njit(cache=True)
def greedy(keys, vals, occ, key):
    i, found = find_slot(keys, occ, key)
    if not found:
        return 0
    best = 0
    for a in range(1, vals.shape[1]):
        if vals[i, a] > vals[i, best]:
            best = a
    return best


# -- belief revision --------------------------------------------------------

@njit(cache=True)
def np_sum(a, n):
    """Sum of a[:n] in the same order as numpy's pairwise reduction (n <= 128)."""
    if n < 8:
        s = 0.0
        for i in range(n):
            s += a[i]
        return s
    r0, r1, r2, r3 = a[0], a[1], a[2], a[3]
    r4, r5, r6, r7 = a[4], a[5], a[6], a[7]
    i = 8
    while i < n - (n % 8):
        r0 += a[i]
        r1 += a[i + 1]
        r2 += a[i + 2]
        r3 += a[i + 3]
        r4 += a[i + 4]
        r5 += a[i + 5]
        r6 += a[i + 6]
        r7 += a[i + 7]
        i += 8
    s = ((r0 + r1) + (r2 + r3)) + ((r4 + r5) + (r6 + r7))
    while i < n:
        s += a[i]
        i += 1
    return s


@njit(cache=True)
def power_mean(a, b, beta, r):
    if r == 1.0:
        return (1.0 - beta) * a + beta * b
    if r < 0:
        a = max(a, R_NEG_FLOOR)
        b = max(b, R_NEG_FLOOR)
    return ((1.0 - beta) * a**r + beta * b**r) ** (1.0 / r)


@njit(cache=True)
def revise_row(post, bias, m, do_jeffrey, do_combine, beta, r, threshold, stats):
    if do_jeffrey:
        stats[0] += 1
        i = 0
        g = abs(bias[0] - post[0])
        for j in range(1, m):
            gj = abs(bias[j] - post[j])
            if gj > g:
                g = gj
                i = j
        if g > threshold:
            stats[3] += 1
            if beta == 0.0:
                new = post[i]
            elif beta == 1.0:
                new = bias[i]
            else:
                new = power_mean(post[i], bias[i], beta, r)
            new = min(new, 1.0)
            rest = 1.0 - post[i]
            if rest > 0:
                for j in range(m):
                    post[j] = post[j] * (1.0 - new) / rest
            elif m > 1:
                for j in range(m):
                    post[j] = (1.0 - new) / (m - 1)
            post[i] = new
    if do_combine:
        stats[1] += 1
        if beta == 1.0:
            for j in range(m):
                post[j] = bias[j]
        elif beta != 0.0:
            for j in range(m):
                post[j] = power_mean(post[j], bias[j], beta, r)
            s = np_sum(post, m)
            for j in range(m):
                post[j] = post[j] / s


@njit(cache=True)
def update_belief(b, view, T, Z, sizes, obs, heading, bias, do_jeffrey, do_combine, beta, r, threshold, persist, stats):
    """Filter every packed belief row of ``b`` in place and write the revised rows to ``view``.

    ``heading < 0`` means the last action did not move the robot. With
    ``persist`` the revised rows also replace ``b``.
    """
    P = b.shape[1]
    pred = np.empty(P)
    post = np.empty(P)
    for k in range(b.shape[0]):
        m = sizes[k]
        if heading >= 0:
            for j in range(m):
                acc = 0.0
                for i in range(m):
                    acc += b[k, i] * T[heading, k, i, j]
                pred[j] = acc
        else:
            for j in range(m):
                pred[j] = b[k, j]
        o = obs[k]
        for j in range(m):
            post[j] = pred[j] * Z[k, j, o]
        tot = np_sum(post, m)
        if tot > 0:
            for j in range(m):
                post[j] = post[j] / tot
        else:
            stats[2] += 1
            for j in range(m):
                post[j] = pred[j]
        for j in range(m):
            b[k, j] = post[j]
        revise_row(post, bias[k], m, do_jeffrey, do_combine, beta, r, threshold, stats)
        for j in range(m):
            view[k, j] = post[j]
            if persist:
                b[k, j] = post[j]


@njit(cache=True)
def make_key(b, sizes, d, h, qstep, key):
    n = 0
    for k in range(b.shape[0]):
        for j in range(sizes[k]):
            key[n] = np.int16(np.floor(b[k, j] / qstep + 0.5 + 1e-9))
            n += 1
    key[n] = d
    key[n + 1] = h


# -- environment ------------------------------------------------------------

@njit(cache=True)
def sample_window(value, lo, hi, u1, u2, p):
    a = max(lo, value - 2)
    z = min(hi, value + 2)
    k = z - a + 1
    if k == 1 or u1 < p:
        return value
    idx = int(u2 * (k - 1))
    if idx > k - 2:
        idx = k - 2
    v = a + idx
    if v >= value:
        v += 1
    return v


@njit(cache=True)
def observe_into(x, y, l, u, p, his, obs):
    obs[0] = sample_window(x, 0, his[0], u[2], u[3], p)
    obs[1] = sample_window(y, 0, his[1], u[4], u[5], p)
    obs[2] = sample_window(l, 0, his[2], u[6], u[7], p)


@njit(cache=True)
def run_episode(
    areas, obj, tgt, start,
    T, Z, sizes, bias, init,
    do_jeffrey, do_combine, beta, r, threshold, persist, qstep, p_obs,
    keys, vals, occ, count,
    U, epsilon, alpha, gamma, learning, max_steps, stats,
):
    """One episode; returns ``(total_reward, steps, success)``."""
    nr, nc = areas.shape
    his = np.array([nr - 1, nc - 1, 3])
    x, y, d = start[0], start[1], start[2]
    h = 0
    b = init.copy()
    view = np.zeros_like(b)
    key_len = keys.shape[1]
    key = np.empty(key_len, np.int16)
    key2 = np.empty(key_len, np.int16)
    obs = np.empty(3, np.int64)
    n_actions = vals.shape[1]

    observe_into(x, y, areas[x, y], U[0], p_obs, his, obs)
    update_belief(b, view, T, Z, sizes, obs, -1, bias, do_jeffrey, do_combine, beta, r, threshold, persist, stats)
    make_key(view, sizes, d, h, qstep, key)

    total = 0.0
    steps = 0
    success = False
    while steps < max_steps:
        u = U[steps]
        if epsilon > 0 and u[0] < epsilon:
            a = min(int(u[1] * n_actions), n_actions - 1)
        else:
            a = greedy(keys, vals, occ, key)
        heading = d
        terminal = False
        if a == 0:
            d = (d + 3) % 4
            rew = R_STEP
        elif a == 1:
            d = (d + 1) % 4
            rew = R_STEP
        else:
            dx = -1 if d == 0 else (1 if d == 2 else 0)
            dy = 1 if d == 1 else (-1 if d == 3 else 0)
            fx = x + dx
            fy = y + dy
            if a == 3:
                if h == 0 and fx == obj[0] and fy == obj[1]:
                    h = 1
                    rew = R_GRAB
                else:
                    rew = R_STEP
            elif fx < 0 or fx >= nr or fy < 0 or fy >= nc or areas[fx, fy] < 0:
                rew = R_BUMP
            else:
                x = fx
                y = fy
                if h == 1 and x == tgt[0] and y == tgt[1]:
                    rew = R_DELIVER
                    terminal = True
                else:
                    rew = R_STEP
        total += rew
        steps += 1
        if terminal:
            if learning:
                i = insert_slot(keys, vals, occ, count, key)
                vals[i, a] = vals[i, a] + alpha * (rew - vals[i, a])
            success = True
            break
        observe_into(x, y, areas[x, y], U[steps], p_obs, his, obs)
        # a blocked Move still uses the Move transition: the robot cannot tell it was blocked
        update_belief(b, view, T, Z, sizes, obs, heading if a == 2 else -1, bias,
                      do_jeffrey, do_combine, beta, r, threshold, persist, stats)
        make_key(view, sizes, d, h, qstep, key2)
        if learning:
            target = rew + gamma * max_value(keys, vals, occ, key2)
            i = insert_slot(keys, vals, occ, count, key)
            vals[i, a] = vals[i, a] + alpha * (target - vals[i, a])
        key, key2 = key2, key
    return total, steps, success
