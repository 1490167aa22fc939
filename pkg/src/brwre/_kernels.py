"""Compiled simulation kernels.

Every kernel takes a ``numpy.random.Generator`` and consumes it sequentially,
so a kernel call is a pure function of its arguments and the generator state.
Laws are passed as padded arrays (see :mod:`brwre._packing`).
"""
import math

import numpy as np
from numba import njit

OK = 0
TRUNC_GEN = 1
TRUNC_COUNT = 2
TRUNC_WINDOW = 3
RUNAWAY = 4


@njit(cache=True)
def draw_index(rng, probs, n):
    u = rng.random()
    acc = 0.0
    for i in range(n - 1):
        acc += probs[i]
        if u < acc:
            return i
    return n - 1


@njit(cache=True)
def binom(rng, n, p):
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    return rng.binomial(n, p)


@njit(cache=True)
def offspring_total(rng, c, vals, probs, n):
    """Total number of children of ``c`` independent parents."""
    if c == 1:
        return vals[draw_index(rng, probs, n)]
    total = 0
    rem = c
    rem_p = 1.0
    for j in range(n - 1):
        if rem == 0:
            return total
        k = binom(rng, rem, probs[j] / rem_p) if rem_p > 0.0 else rem
        total += k * vals[j]
        rem -= k
        rem_p -= probs[j]
    return total + rem * vals[n - 1]


@njit(cache=True)
def _grow_int(arr, need):
    if need <= arr.shape[0]:
        return arr
    new = np.empty(max(need, 2 * arr.shape[0]), dtype=arr.dtype)
    new[: arr.shape[0]] = arr
    return new


# ---------------------------------------------------------------------------
# particle-level trees


@njit(cache=True)
def simulate_tree(rng, states, lazy, env_w, n_env, off_vals, off_probs, off_n,
                  st_vals, st_probs, max_gen, max_particles, stop_level, keep_trace):
    """Breadth-first simulation of one tree from a particle at the origin.

    ``states[g-1]`` is the offspring state used by generation ``g-1`` parents;
    with ``lazy`` set the state is drawn from ``env_w`` and written back.
    Returns ``(status, extinct_at, n_gen, pop, gmax, pos, pmax, gstart)``;
    ``pmax`` holds the maximum position over each particle's strict
    ancestors, ``gstart`` the offset of each generation in the trace.
    """
    n_steps = st_probs.shape[0]
    pop = np.zeros(max_gen + 1, dtype=np.int64)
    gmax = np.zeros(max_gen + 1, dtype=np.int64)
    pop[0] = 1
    cur_pos = np.zeros(1, dtype=np.int64)
    cur_pmax = np.full(1, -(2**62), dtype=np.int64)
    cur_n = 1
    if keep_trace:
        tr_pos = np.zeros(16, dtype=np.int64)
        tr_pmax = np.full(16, -(2**62), dtype=np.int64)
    else:
        tr_pos = np.zeros(1, dtype=np.int64)
        tr_pmax = np.zeros(1, dtype=np.int64)
    gstart = np.zeros(max_gen + 2, dtype=np.int64)
    gstart[1] = 1
    n_tr = 1
    total = 1
    extinct_at = -1
    status = OK
    g = 0
    best = 0
    while g < max_gen:
        if stop_level > 0 and best >= stop_level:
            break
        if lazy:
            states[g] = draw_index(rng, env_w, n_env)
        s = states[g]
        kids = np.empty(cur_n, dtype=np.int64)
        n_new = 0
        for i in range(cur_n):
            k = off_vals[s, draw_index(rng, off_probs[s], off_n[s])]
            kids[i] = k
            n_new += k
        g += 1
        if n_new == 0:
            extinct_at = g
            gstart[g + 1] = n_tr
            break
        if total + n_new > max_particles:
            status = TRUNC_COUNT
            g -= 1
            break
        new_pos = np.empty(n_new, dtype=np.int64)
        new_pmax = np.empty(n_new, dtype=np.int64)
        j = 0
        gm = -(2**62)
        for i in range(cur_n):
            anc = max(cur_pmax[i], cur_pos[i])
            for _ in range(kids[i]):
                y = cur_pos[i] + st_vals[draw_index(rng, st_probs, n_steps)]
                new_pos[j] = y
                new_pmax[j] = anc
                if y > gm:
                    gm = y
                j += 1
        pop[g] = n_new
        gmax[g] = gm
        if gm > best:
            best = gm
        total += n_new
        if keep_trace:
            tr_pos = _grow_int(tr_pos, n_tr + n_new)
            tr_pmax = _grow_int(tr_pmax, n_tr + n_new)
            tr_pos[n_tr : n_tr + n_new] = new_pos
            tr_pmax[n_tr : n_tr + n_new] = new_pmax
        n_tr += n_new
        gstart[g + 1] = n_tr
        cur_pos, cur_pmax, cur_n = new_pos, new_pmax, n_new
    if extinct_at < 0 and status == OK and not (stop_level > 0 and best >= stop_level):
        status = TRUNC_GEN
    return status, extinct_at, g, pop, gmax, tr_pos[:n_tr], tr_pmax[:n_tr], gstart


@njit(cache=True)
def naive_batch(rng, n, x, states_fixed, lazy, env_w, n_env, off_vals, off_probs, off_n,
                st_vals, st_probs, max_gen, max_particles, out_m, out_ext, out_status):
    """``n`` independent trees; each stops as soon as level ``x`` is reached."""
    states = np.empty(max_gen + 1, dtype=np.int64)
    if not lazy:
        states[: states_fixed.shape[0]] = states_fixed
    for r in range(n):
        status, ext, g, pop, gmax, pos, pmax, gs = simulate_tree(
            rng, states, lazy, env_w, n_env, off_vals, off_probs, off_n,
            st_vals, st_probs, max_gen, max_particles, x, False)
        best = 0
        for i in range(g + 1):
            if pop[i] > 0 and gmax[i] > best:
                best = gmax[i]
        out_m[r] = best
        out_ext[r] = ext
        out_status[r] = status


# ---------------------------------------------------------------------------
# population-count process absorbed at level 0


@njit(cache=True)
def absorb_counts(rng, tbase, root_t, root_y, span, env, S, filled, lazy, pos_w, n_env, logm,
                  off_vals, off_probs, off_n, sb_vals, sb_probs, sb_n, st_vals, st_probs,
                  ymin, max_count):
    """Branching walk below level 0 fed by spine immigrants, as position counts.

    Array slot ``i`` of ``env``/``S``/the result refers to time ``tbase + i``.
    A root at time ``root_t[r]`` and level ``root_y[r] < 0`` places ``D - 1``
    children at time ``root_t[r] + 1``, ``D`` size-biased from the state of
    that slot. Particles reaching level 0 are removed and counted.
    Returns ``(absorbed_per_slot, status, filled)``.
    """
    n_steps = st_probs.shape[0]
    width = -ymin
    cnt = np.zeros(width, dtype=np.int64)
    nxt = np.zeros(width, dtype=np.int64)
    A = np.zeros(span, dtype=np.int64)
    lo, hi = width, -1
    n_roots = root_t.shape[0]
    r = 0
    t = root_t[0]
    status = OK
    while True:
        i_next = t + 1 - tbase
        if i_next >= span:
            status = TRUNC_GEN
            break
        if i_next >= filled:
            if not lazy:
                status = TRUNC_WINDOW
                break
            s_new = draw_index(rng, pos_w, n_env)
            env[filled] = s_new
            S[filled] = S[filled - 1] + logm[s_new]
            filled += 1
        s = env[i_next]
        nlo, nhi = width, -1
        pop = 0
        while r < n_roots and root_t[r] == t:
            d = sb_vals[s, draw_index(rng, sb_probs[s], sb_n[s])]
            for _ in range(d - 1):
                y = root_y[r] + st_vals[draw_index(rng, st_probs, n_steps)]
                if y >= 0:
                    A[i_next] += 1
                else:
                    yi = y - ymin
                    nxt[yi] += 1
                    pop += 1
                    nlo = min(nlo, yi)
                    nhi = max(nhi, yi)
            r += 1
        for yi in range(lo, hi + 1):
            c = cnt[yi]
            if c == 0:
                continue
            cnt[yi] = 0
            kids = offspring_total(rng, c, off_vals[s], off_probs[s], off_n[s])
            rem = kids
            rem_p = 1.0
            for j in range(n_steps):
                if rem == 0:
                    break
                if j == n_steps - 1:
                    nj = rem
                else:
                    nj = binom(rng, rem, st_probs[j] / rem_p)
                    rem_p -= st_probs[j]
                rem -= nj
                if nj == 0:
                    continue
                y = yi + ymin + st_vals[j]
                if y >= 0:
                    A[i_next] += nj
                else:
                    yj = y - ymin
                    nxt[yj] += nj
                    pop += nj
                    nlo = min(nlo, yj)
                    nhi = max(nhi, yj)
        cnt, nxt = nxt, cnt
        lo, hi = nlo, nhi
        t += 1
        if pop == 0 and r >= n_roots:
            break
        if pop > max_count:
            status = TRUNC_COUNT
            break
    return A, status, filled


@njit(cache=True)
def log_absorbed_weight(A, tbase, S, lam_s):
    """``log sum_t A_t exp(-t*Lambda_s - S_t)``; ``-inf`` when nothing was absorbed."""
    out = -np.inf
    for i in range(A.shape[0]):
        if A[i] > 0:
            v = math.log(A[i]) - (tbase + i) * lam_s - S[i]
            if out == -np.inf:
                out = v
            elif v > out:
                out = v + math.log1p(math.exp(out - v))
            else:
                out = out + math.log1p(math.exp(v - out))
    return out


@njit(cache=True)
def log1p_exp(v):
    if v == -np.inf:
        return 0.0
    if v > 0:
        return v + math.log1p(math.exp(-v))
    return math.log1p(math.exp(v))


# ---------------------------------------------------------------------------
# spine trajectories


@njit(cache=True)
def tilted_excursion(rng, tilt_probs, st_vals, cap, buf):
    """Tilted walk from 0 to its first visit of +1, written into ``buf``.

    Returns ``(theta, buf)`` with ``buf`` possibly reallocated; ``theta = -1``
    when the walk is still below +1 after ``cap`` steps.
    """
    n_steps = tilt_probs.shape[0]
    h = 0
    j = 0
    buf[0] = 0
    while h != 1:
        if j >= cap:
            return -1, buf
        h += st_vals[draw_index(rng, tilt_probs, n_steps)]
        j += 1
        buf = _grow_int(buf, j + 1)
        buf[j] = h
    return j, buf


@njit(cache=True)
def excursion_path(rng, x, tilt_probs, st_vals, cap):
    """Concatenate ``x`` reversed excursions into ``Y[0..T]`` (``Ybar_k = Y[-k]``).

    Returns an empty array when some excursion exceeds ``cap`` steps.
    """
    Y = np.zeros(64, dtype=np.int64)
    buf = np.zeros(64, dtype=np.int64)
    T = 0
    for m in range(1, x + 1):
        th, buf = tilted_excursion(rng, tilt_probs, st_vals, cap, buf)
        if th < 0:
            return np.zeros(0, dtype=np.int64)
        Y = _grow_int(Y, T + th + 1)
        for j in range(1, th + 1):
            Y[T + j] = -(m - 1) + buf[th - j] - 1
        T += th
    return Y[: T + 1]


@njit(cache=True)
def forward_tilted_path(rng, x, tilt_probs, st_vals, cap):
    """Forward tilted walk from 0 until it first sits at ``x``; empty on runaway."""
    V = np.zeros(64, dtype=np.int64)
    h = 0
    j = 0
    n_steps = tilt_probs.shape[0]
    while h < x:
        h += st_vals[draw_index(rng, tilt_probs, n_steps)]
        j += 1
        if j > cap:
            return np.zeros(0, dtype=np.int64)
        V = _grow_int(V, j + 1)
        V[j] = h
    return V[: j + 1]


# ---------------------------------------------------------------------------
# coupled (R_x, B_x) samples


@njit(cache=True)
def coupling_batch(rng, n, x, lam, lam_s, st_vals, st_probs, tilt_probs, neg_w, pos_w, logm,
                   off_vals, off_probs, off_n, sb_vals, sb_probs, sb_n,
                   max_gen, max_count, exc_cap, out_R, out_logden, out_T, out_status):
    """Backward construction: environment on ``(-T, 0]`` from ``neg_w``, after 0 from ``pos_w``.

    ``out_logden`` receives ``log(1 + sum_k exp(J_k) Phi_k)`` so that
    ``B_x = exp(-out_logden)``.
    """
    n_env = logm.shape[0]
    min_step = st_vals[0]
    for r in range(n):
        Y = excursion_path(rng, x, tilt_probs, st_vals, exc_cap)
        if Y.shape[0] == 0:
            out_status[r] = RUNAWAY
            out_R[r] = np.nan
            out_logden[r] = np.nan
            out_T[r] = -1
            continue
        T = Y.shape[0] - 1
        span = T + max_gen + 1
        env = np.empty(span, dtype=np.int64)
        S = np.empty(span)
        env[0] = -1
        for i in range(1, T + 1):
            env[i] = draw_index(rng, neg_w, n_env)
        S[T] = 0.0
        for i in range(T, 0, -1):
            S[i - 1] = S[i] - logm[env[i]]
        root_t = np.empty(T, dtype=np.int64)
        root_y = np.empty(T, dtype=np.int64)
        ylow = 0
        for i in range(T):
            root_t[i] = -T + i
            root_y[i] = Y[T - i]
            ylow = min(ylow, root_y[i])
        ymin = ylow + (span + 1) * min_step - 1
        A, status, filled = absorb_counts(
            rng, -T, root_t, root_y, span, env, S, T + 1, True, pos_w, n_env, logm,
            off_vals, off_probs, off_n, sb_vals, sb_probs, sb_n, st_vals, st_probs, ymin, max_count)
        out_R[r] = -S[0] + T * lam_s - lam * x
        out_logden[r] = log1p_exp(log_absorbed_weight(A, -T, S, lam_s))
        out_T[r] = T
        out_status[r] = status


@njit(cache=True)
def forward_batch(rng, n, x, lam, lam_s, st_vals, st_probs, tilt_probs, seq_states, seq_S, logm,
                  off_vals, off_probs, off_n, sb_vals, sb_probs, sb_n,
                  max_gen, max_count, exc_cap, out_R, out_logden, out_T, out_status):
    """Forward spine construction in a fixed environment.

    ``seq_states[i]``/``seq_S[i]`` describe forward index ``i`` (slot 0 unused).
    """
    n_env = logm.shape[0]
    min_step = st_vals[0]
    N = seq_states.shape[0]
    dummy_w = np.ones(1)
    for r in range(n):
        V = forward_tilted_path(rng, x, tilt_probs, st_vals, exc_cap)
        tau = V.shape[0] - 1
        if V.shape[0] == 0:
            out_status[r] = RUNAWAY
            out_R[r] = np.nan
            out_logden[r] = np.nan
            out_T[r] = -1
            continue
        if tau >= N:
            out_status[r] = TRUNC_WINDOW
            out_R[r] = np.nan
            out_logden[r] = np.nan
            out_T[r] = tau
            continue
        span = min(N, tau + max_gen + 1)
        env = seq_states[:span].copy()
        S = seq_S[:span] - seq_S[tau]
        root_t = np.empty(tau, dtype=np.int64)
        root_y = np.empty(tau, dtype=np.int64)
        ylow = 0
        for j in range(tau):
            root_t[j] = j - tau
            root_y[j] = V[j] - x
            ylow = min(ylow, root_y[j])
        ymin = ylow + (span + 1) * min_step - 1
        A, status, filled = absorb_counts(
            rng, -tau, root_t, root_y, span, env, S, span, False, dummy_w, n_env, logm,
            off_vals, off_probs, off_n, sb_vals, sb_probs, sb_n, st_vals, st_probs, ymin, max_count)
        if status == TRUNC_WINDOW and span == tau + max_gen + 1:
            status = TRUNC_GEN
        out_R[r] = seq_S[tau] + tau * lam_s - lam * x
        out_logden[r] = log1p_exp(log_absorbed_weight(A, -tau, S, lam_s))
        out_T[r] = tau
        out_status[r] = status


@njit(cache=True)
def rwalk_batch(rng, n, x_max, lam, lam_s, st_vals, tilt_probs, env_w, logm, exc_cap, out_first_up, out_R1):
    """Increments of ``R`` from excursions and environment only (no subtrees).

    ``out_first_up[r]`` is the first ``j`` with ``R_j > 0`` (``x_max + 1`` if none).
    """
    n_env = logm.shape[0]
    n_steps = tilt_probs.shape[0]
    for r in range(n):
        R = 0.0
        first = x_max + 1
        for j in range(1, x_max + 1):
            h = 0
            th = 0
            while h != 1:
                h += st_vals[draw_index(rng, tilt_probs, n_steps)]
                th += 1
                if th > exc_cap:
                    break
            inc = th * lam_s - lam
            for _ in range(th):
                inc += logm[draw_index(rng, env_w, n_env)]
            R += inc
            if j == 1:
                out_R1[r] = R
            if R > 0 and first > x_max:
                first = j
        out_first_up[r] = first


@njit(cache=True)
def excursion_lengths(rng, n, x, tilt_probs, st_vals, cap, out):
    """``T_x`` as the sum of ``x`` independent excursion lengths; -1 on runaway."""
    buf = np.zeros(64, dtype=np.int64)
    for r in range(n):
        T = 0
        for m in range(x):
            th, buf = tilted_excursion(rng, tilt_probs, st_vals, cap, buf)
            if th < 0:
                T = -1
                break
            T += th
        out[r] = T


@njit(cache=True)
def passage_times(rng, n, x, tilt_probs, st_vals, cap, out):
    """First passage time of level ``x`` by the tilted walk from 0; -1 past ``cap``."""
    n_steps = tilt_probs.shape[0]
    for r in range(n):
        h = 0
        j = 0
        while h < x and j <= cap:
            h += st_vals[draw_index(rng, tilt_probs, n_steps)]
            j += 1
        out[r] = j if h >= x else -1
