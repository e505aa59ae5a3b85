"""
Compiled inner loops for the event-driven simulation.

Site selection uses either the occupied-site list (indicator rate, O(1)) or
a complete binary tree of partial sums (general rate, O(log L)).  Both are
plain arrays so they can be shared by the Python-level single-step API and
by :func:`advance`, which fuses event generation with observer updates.

Random numbers are consumed in a fixed order per event: one uniform for the
waiting time, one for the site, and one for the direction when jumps can go
left.  The waiting time is drawn right after the previous event.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_LOG_FULL = 1
STATUS_EMPTY_SITE = 2

INF = np.inf


# ---------------------------------------------------------------- rate index


@njit(cache=True)
def tree_build(tree, size, weights):
    tree[:] = 0.0
    for i in range(weights.shape[0]):
        tree[size + i] = weights[i]
    for j in range(size - 1, 0, -1):
        tree[j] = tree[2 * j] + tree[2 * j + 1]


@njit(cache=True)
def tree_set(tree, size, i, w):
    # parents are recomputed from children, so no drift accumulates
    j = size + i
    tree[j] = w
    j >>= 1
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j >>= 1


@njit(cache=True)
def tree_select(tree, size, u):
    target = u * tree[1]
    j = 1
    while j < size:
        left = tree[2 * j]
        if target < left:
            j = 2 * j
        else:
            target -= left
            j = 2 * j + 1
    i = j - size
    while tree[size + i] <= 0.0 and i > 0:
        i -= 1  # rounding pushed us onto an empty leaf
    return i


# ------------------------------------------------------------- occupied list


@njit(cache=True)
def occ_build(eta, occ, pos):
    n = 0
    for x in range(eta.shape[0]):
        if eta[x] > 0:
            occ[n] = x
            pos[x] = n
            n += 1
        else:
            pos[x] = -1
    return n


@njit(cache=True)
def occ_remove(occ, pos, nocc, x):
    i = pos[x]
    last = occ[nocc - 1]
    occ[i] = last
    pos[last] = i
    pos[x] = -1
    return nocc - 1


@njit(cache=True)
def occ_add(occ, pos, nocc, x):
    occ[nocc] = x
    pos[x] = nocc
    return nocc + 1


# ------------------------------------------------------------ single events


@njit(cache=True)
def total_rate(indicator, nocc, tree):
    if indicator:
        return float(nocc)
    return tree[1]


@njit(cache=True)
def draw_wait(rng, rate):
    if rate <= 0.0:
        return INF
    return -np.log(1.0 - rng.random()) / rate


@njit(cache=True)
def draw_site(rng, indicator, occ, nocc, tree, size):
    u = rng.random()
    if indicator:
        return occ[int(u * nocc)]
    return tree_select(tree, size, u)


@njit(cache=True)
def draw_direction(rng, p_right):
    if p_right >= 1.0:
        return 1
    if rng.random() < p_right:
        return 1
    return -1


@njit(cache=True)
def apply_jump(eta, occ, pos, counts, tree, size, gtab, indicator, x, d):
    """Move one particle from ``x`` to ``x + d``; returns the target site or -1."""
    L = eta.shape[0]
    ex = eta[x]
    if ex <= 0:
        return -1
    y = x + d
    if y == L:
        y = 0
    elif y < 0:
        y = L - 1
    ey = eta[y]
    eta[x] = ex - 1
    eta[y] = ey + 1
    if indicator:
        nocc = counts[0]
        if ex == 1:
            nocc = occ_remove(occ, pos, nocc, x)
        if ey == 0:
            nocc = occ_add(occ, pos, nocc, y)
        counts[0] = nocc
    else:
        tree_set(tree, size, x, gtab[ex - 1])
        tree_set(tree, size, y, gtab[ey + 1])
    return y


# -------------------------------------------------------------- observers


@njit(cache=True)
def functional_full(eta, fw, fstart, flen, fshift, ftab, f):
    L = eta.shape[0]
    acc = 0.0
    base = fstart[f] + fshift[f]
    for i in range(flen[f]):
        x = (base + i) % L
        acc += fw[f, i] * ftab[f, eta[x]]
    return acc


@njit(cache=True)
def functional_scale(eta, fw, fstart, flen, fshift, ftab, f):
    L = eta.shape[0]
    acc = 0.0
    base = fstart[f] + fshift[f]
    for i in range(flen[f]):
        x = (base + i) % L
        acc += abs(fw[f, i] * ftab[f, eta[x]])
    return acc


@njit(cache=True)
def _functional_delta(fS, fw, fstart, flen, fshift, ftab, L, x, e_old, e_new):
    for f in range(fS.shape[0]):
        i = (x - fstart[f] - fshift[f]) % L
        if i < flen[f]:
            fS[f] += fw[f, i] * (ftab[f, e_new] - ftab[f, e_old])


@njit(cache=True)
def _next_deterministic(cb_v, cb_shift, fv, fshift):
    t = INF
    for i in range(cb_v.shape[0]):
        if cb_v[i] > 0.0:
            ti = (cb_shift[i] + 1) / cb_v[i]
            if ti < t:
                t = ti
    for f in range(fv.shape[0]):
        if fv[f] > 0.0:
            tf = (fshift[f] + 1) / fv[f]
            if tf < t:
                t = tf
    return t


@njit(cache=True)
def advance(
    eta, occ, pos, counts, tree, size, gtab, indicator, p_right,
    clock, rng, s_target,
    bond_map, bond_J,
    cb_pos, cb_v, cb_shift, cb_J,
    fw, fstart, flen, fv, fshift, ftab, fS, fA,
    log_t, log_x, log_d,
    audit_every, audit,
):
    """Run events until microscopic time ``s_target``.

    ``clock = [s, s_next]`` holds the current time and the pending event
    time (``nan`` if none has been drawn).  ``counts = [nocc, events,
    log_n, status]``.  Bond trackers at fixed sites are looked up through
    ``bond_map``; moving (characteristic) bonds sit at ``cb_pos`` and step
    one site right at times ``(shift + 1) / v``.  Site functionals
    ``S_f = sum_x w_f(x - shift_f) * table_f[eta(x)]`` are kept current by
    delta updates and integrated exactly into ``fA`` between events.
    ``audit = [max relative functional drift, max relative rate drift]``.
    """
    L = eta.shape[0]
    F = fS.shape[0]
    M = cb_pos.shape[0]
    log_cap = log_t.shape[0]
    s = clock[0]
    s_next = clock[1]
    if np.isnan(s_next):
        s_next = s + draw_wait(rng, total_rate(indicator, counts[0], tree))
    t_det = _next_deterministic(cb_v, cb_shift, fv, fshift)
    while True:
        if t_det <= s_next and t_det <= s_target:
            dt = t_det - s
            for f in range(F):
                fA[f] += fS[f] * dt
            s = t_det
            for i in range(M):
                while cb_v[i] > 0.0 and (cb_shift[i] + 1) / cb_v[i] <= s:
                    b = cb_pos[i]
                    nb = b + 1
                    if nb == L:
                        nb = 0
                    cb_J[i] -= eta[nb]
                    cb_pos[i] = nb
                    cb_shift[i] += 1
            for f in range(F):
                moved = False
                while fv[f] > 0.0 and (fshift[f] + 1) / fv[f] <= s:
                    fshift[f] += 1
                    moved = True
                if moved:
                    fS[f] = functional_full(eta, fw, fstart, flen, fshift, ftab, f)
            t_det = _next_deterministic(cb_v, cb_shift, fv, fshift)
            continue
        if s_next > s_target:
            dt = s_target - s
            for f in range(F):
                fA[f] += fS[f] * dt
            s = s_target
            break
        dt = s_next - s
        for f in range(F):
            fA[f] += fS[f] * dt
        s = s_next

        x = draw_site(rng, indicator, occ, counts[0], tree, size)
        d = draw_direction(rng, p_right)
        ex = eta[x]
        y = apply_jump(eta, occ, pos, counts, tree, size, gtab, indicator, x, d)
        if y < 0:
            counts[3] = STATUS_EMPTY_SITE
            break
        ey = eta[y] - 1
        if F > 0:
            _functional_delta(fS, fw, fstart, flen, fshift, ftab, L, x, ex, ex - 1)
            _functional_delta(fS, fw, fstart, flen, fshift, ftab, L, y, ey, ey + 1)
        # bond (b, b+1) is crossed rightward from x=b, leftward from x=b+1
        if d == 1:
            k = bond_map[x]
            if k >= 0:
                bond_J[k] += 1
            for i in range(M):
                if cb_pos[i] == x:
                    cb_J[i] += 1
        else:
            k = bond_map[y]
            if k >= 0:
                bond_J[k] -= 1
            for i in range(M):
                if cb_pos[i] == y:
                    cb_J[i] -= 1
        if log_cap > 0:
            n = counts[2]
            if n < log_cap:
                log_t[n] = s
                log_x[n] = x
                log_d[n] = d
                counts[2] = n + 1
            else:
                counts[3] = STATUS_LOG_FULL
        counts[1] += 1
        if audit_every > 0 and counts[1] % audit_every == 0:
            for f in range(F):
                full = functional_full(eta, fw, fstart, flen, fshift, ftab, f)
                scale = functional_scale(eta, fw, fstart, flen, fshift, ftab, f)
                if scale > 0.0:
                    rel = abs(fS[f] - full) / scale
                    if rel > audit[0]:
                        audit[0] = rel
                fS[f] = full
            if indicator:
                n_occupied = 0
                for z in range(L):
                    if eta[z] > 0:
                        n_occupied += 1
                if n_occupied != counts[0]:
                    audit[1] = INF
            else:
                incremental = tree[1]
                tree_build(tree, size, gtab[eta])
                if tree[1] > 0.0:
                    rel = abs(incremental - tree[1]) / tree[1]
                    if rel > audit[1]:
                        audit[1] = rel
        s_next = s + draw_wait(rng, total_rate(indicator, counts[0], tree))
    clock[0] = s
    clock[1] = s_next
